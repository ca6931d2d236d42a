"""Rewriting a model so the intervened coordinates are the trailing ones.

The pipeline has three steps:

1. Rebase every mechanism on the first domain's, making domain 1 the identity
   (``f_d -> f_1^{-1} o f_d``, observation ``g -> g o f_1``).
2. Repeatedly swap the largest intervened coordinate below the largest
   non-intervened coordinate up into its place.  Each swap conjugates every
   mechanism with a self-inverse coordinate swap and right-composes the
   observation chain with the same swap; triangularity survives because the
   coordinates in between are non-intervened.
3. Undo the rebasing (``f_d -> f_1 o f_d``, ``g -> g o f_1^{-1}``) to restore
   a general canonical model alongside the identity-first one.

Every step preserves all domain counterfactuals, every domain's observed
distribution, and the intervention set size.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ild import ILDModel
from .mixing import Permute, Triangular
from .scm import (
    DEFAULT_INTERVENTION_TOL,
    AffineSCM,
    InterventionSet,
    NonPositiveDiagonal,
    NotLowerTriangular,
    compose,
    intervention_set,
)

# How exactly domain 1 must match the identity before a swap is allowed.
IDENTITY_TOL = 1e-9


class PreconditionViolated(ValueError):
    """A swap was requested outside the conditions that guarantee closure."""


class TriangularityBroken(RuntimeError):
    """A swap left the family non-triangular; indicates a precondition bug."""


@dataclass(frozen=True)
class CanonicalizationReport:
    """Audit trail of one canonicalization run."""

    original_intervention: InterventionSet
    final_intervention: InterventionSet
    swaps: tuple[tuple[int, int], ...]
    steps: tuple[str, ...]


def _trailing_block(m: int, k: int) -> tuple[int, ...]:
    return tuple(range(m - k + 1, m + 1))


def is_canonical(
    model: ILDModel, tol: float = DEFAULT_INTERVENTION_TOL
) -> tuple[bool, InterventionSet]:
    """Whether the intervention set is exactly the trailing block of its size."""
    iset = intervention_set(model.scms, tol)
    return iset.indices == _trailing_block(model.dim, iset.size), iset


def _is_identity(f: AffineSCM, tol: float = IDENTITY_TOL) -> bool:
    return (
        np.max(np.abs(f.L)) <= tol
        and np.max(np.abs(f.S - 1.0)) <= tol
        and np.max(np.abs(f.b)) <= tol
    )


def swap_indices(
    model: ILDModel, j: int, j_prime: int, tol: float = DEFAULT_INTERVENTION_TOL
) -> ILDModel:
    """Exchange coordinates ``j`` and ``j_prime`` (1-based) across the model.

    Requires domain 1 to be the identity, ``j < j_prime``, ``j`` intervened,
    and no intervened index in ``(j, j_prime]``; under these conditions the
    conjugated mechanisms are guaranteed to stay lower triangular and the
    intervention set becomes ``(I \\ {j}) u {j_prime}`` with all domain
    counterfactuals unchanged.
    """
    m = model.dim
    if not _is_identity(model.scms[0]):
        raise PreconditionViolated("domain 1 must be the identity mechanism")
    if not (1 <= j < j_prime <= m):
        raise PreconditionViolated(f"need 1 <= j < j' <= {m}, got j={j}, j'={j_prime}")
    iset = intervention_set(model.scms, tol)
    if j not in iset:
        raise PreconditionViolated(f"j={j} is not in the intervention set {iset.indices}")
    blocked = [t for t in range(j + 1, j_prime + 1) if t in iset]
    if blocked:
        raise PreconditionViolated(
            f"indices {blocked} in ({j}, {j_prime}] are intervened"
        )
    perm = Permute.swap(m, j, j_prime)
    idx = np.asarray(perm.pi, dtype=int) - 1
    new_scms = []
    for f in model.scms:
        F = f.matrix[np.ix_(idx, idx)]
        b = f.b[idx]
        try:
            new_scms.append(AffineSCM.from_matrix(F, b))
        except (NotLowerTriangular, NonPositiveDiagonal) as exc:
            raise TriangularityBroken(
                f"swap ({j}, {j_prime}) broke triangularity: {exc}"
            ) from exc
    return ILDModel(model.g.append_right(perm), tuple(new_scms))


def canonicalize(
    model: ILDModel, tol: float = DEFAULT_INTERVENTION_TOL
) -> tuple[ILDModel, ILDModel, CanonicalizationReport]:
    """Move the intervention set to the trailing coordinates.

    Returns ``(canonical, identity_canonical, report)``: the identity-first
    model produced after the swap phase (domain 1 is the identity mechanism)
    and the general canonical model with domain 1's original mechanism
    restored.  Both preserve counterfactuals, distributions, and the
    intervention set size; termination is guaranteed because every swap
    strictly increases the sum of intervened indices.
    """
    m = model.dim
    original = intervention_set(model.scms, tol)
    steps: list[str] = []

    f1 = model.scms[0]
    f1_inv = f1.invert()
    rebased = [AffineSCM.identity(m)]
    rebased.extend(compose(f1_inv, f) for f in model.scms[1:])
    current = ILDModel(model.g.append_right(Triangular(f1)), tuple(rebased))
    steps.append("step1: rebased all mechanisms so domain 1 is the identity")

    swaps: list[tuple[int, int]] = []
    k = original.size
    max_swaps = k * (m - k) + 1
    for _ in range(max_swaps):
        iset = intervention_set(current.scms, tol)
        free = [t for t in range(1, m + 1) if t not in iset]
        if not free:
            break
        j_prime = max(free)
        hits = [t for t in iset if t < j_prime]
        if not hits:
            break
        j = max(hits)
        current = swap_indices(current, j, j_prime, tol)
        swaps.append((j, j_prime))
        steps.append(f"step2: swapped coordinates {j} and {j_prime}")
    else:
        raise RuntimeError("swap phase failed to terminate; detection tolerance too loose?")

    identity_canonical = current

    restored = tuple(compose(f1, f) for f in current.scms)
    canonical = ILDModel(
        current.g.append_right(Triangular(f1_inv)), restored
    )
    steps.append("step3: restored domain 1's original mechanism")

    final = intervention_set(canonical.scms, tol)
    if final.size != original.size:
        raise RuntimeError(
            f"intervention size changed ({original.size} -> {final.size}); "
            "detection tolerance too loose for this model"
        )
    report = CanonicalizationReport(
        original_intervention=original,
        final_intervention=final,
        swaps=tuple(swaps),
        steps=tuple(steps),
    )
    return canonical, identity_canonical, report
