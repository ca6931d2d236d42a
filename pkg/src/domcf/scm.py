"""Triangular affine invertible causal mechanisms.

A mechanism maps exogenous noise ``eps`` to latent causal variables ``z``
through ``z = F eps + b`` with ``F = (I - L)^{-1} diag(S)``, where ``L`` is
strictly lower triangular and ``S`` is a strictly positive diagonal.  The
family is closed under composition and inversion, which is what the
canonicalization pipeline relies on.

All indices in the public API (intervention sets, coordinates) are 1-based;
internal numpy arrays are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

# Tolerance used to decide whether two inverse mechanisms differ.
DEFAULT_INTERVENTION_TOL = 1e-8

# Upper-triangular leakage above this magnitude is treated as a real violation
# rather than roundoff.
TRIANGULARITY_TOL = 1e-12


class DimensionMismatch(ValueError):
    """Operands have incompatible dimensions."""


class NotLowerTriangular(ValueError):
    """A matrix expected to be lower triangular has significant upper entries."""


class NonPositiveDiagonal(ValueError):
    """A triangular factor has a zero or negative diagonal entry."""


def _frozen_array(values, dtype=float) -> np.ndarray:
    out = np.array(values, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class AffineSCM:
    """Invertible autoregressive affine mechanism ``z = F eps + b``.

    L: (m, m) strictly lower-triangular dependency matrix.
    S: (m,) strictly positive diagonal scales.
    b: (m,) additive bias.

    ``F = (I - L)^{-1} diag(S)`` is lower triangular with ``diag(F) = S``, so
    ``det F = prod(S) > 0``.  Instances are immutable and all operations are
    pure, so they are safe to share across threads.
    """

    L: np.ndarray
    S: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        L = _frozen_array(self.L)
        S = _frozen_array(self.S)
        b = _frozen_array(self.b)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise DimensionMismatch(f"L must be square, got shape {L.shape}")
        m = L.shape[0]
        if S.shape != (m,) or b.shape != (m,):
            raise DimensionMismatch(
                f"S and b must have shape ({m},), got {S.shape} and {b.shape}"
            )
        if np.any(np.triu(L) != 0.0):
            raise NotLowerTriangular("L must be strictly lower triangular")
        if np.any(S <= 0.0):
            raise NonPositiveDiagonal("S must be strictly positive")
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.L.shape[0]

    @classmethod
    def identity(cls, m: int) -> AffineSCM:
        return cls(np.zeros((m, m)), np.ones(m), np.zeros(m))

    @classmethod
    def from_matrix(cls, A, b) -> AffineSCM:
        """Factor a lower-triangular matrix ``A`` into ``(L, S)`` with ``F = A``.

        Raises NotLowerTriangular if any upper entry of ``A`` exceeds 1e-12 in
        magnitude, NonPositiveDiagonal if any diagonal entry is <= 0.
        """
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got shape {A.shape}")
        m = A.shape[0]
        if b.shape != (m,):
            raise DimensionMismatch(f"b must have shape ({m},), got {b.shape}")
        upper = np.triu(A, k=1)
        if np.any(np.abs(upper) > TRIANGULARITY_TOL):
            raise NotLowerTriangular(
                f"upper entries up to {np.abs(upper).max():.3e} exceed {TRIANGULARITY_TOL:.0e}"
            )
        S = np.diag(A).copy()
        if np.any(S <= 0.0):
            raise NonPositiveDiagonal(f"diagonal of A must be positive, got {S}")
        A_low = np.tril(A)
        # F = (I - L)^{-1} diag(S)  =>  L = I - diag(S) A^{-1}.
        A_inv = solve_triangular(A_low, np.eye(m), lower=True, check_finite=False)
        L = np.tril(np.eye(m) - S[:, None] * A_inv, k=-1)
        return cls(L, S, b)

    @property
    def matrix(self) -> np.ndarray:
        """Dense ``F = (I - L)^{-1} diag(S)``."""
        m = self.dim
        M = np.eye(m) - self.L
        return solve_triangular(
            M, np.diag(self.S), lower=True, unit_diagonal=True, check_finite=False
        )

    @property
    def inverse_matrix(self) -> np.ndarray:
        """Dense ``F^{-1} = diag(1/S) (I - L)``."""
        M = np.eye(self.dim) - self.L
        return M / self.S[:, None]

    @property
    def inverse_offset(self) -> np.ndarray:
        """Offset of the inverse affine map: ``eps = F^{-1} z - F^{-1} b``."""
        return -self.inverse_matrix @ self.b

    def _check_vector(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim not in (1, 2) or x.shape[-1] != self.dim:
            raise DimensionMismatch(
                f"expected trailing dimension {self.dim}, got shape {x.shape}"
            )
        return x

    def forward(self, eps) -> np.ndarray:
        """Evaluate ``z = F eps + b`` by forward substitution on ``(I - L)``.

        Accepts a single vector ``(m,)`` or a batch ``(n, m)``.
        """
        eps = self._check_vector(eps)
        m = self.dim
        M = np.eye(m) - self.L
        rhs = (eps * self.S).T if eps.ndim == 2 else eps * self.S
        sol = solve_triangular(
            M, rhs, lower=True, unit_diagonal=True, check_finite=False
        )
        z = sol.T if eps.ndim == 2 else sol
        return z + self.b

    def inverse(self, z) -> np.ndarray:
        """Evaluate ``eps = diag(S)^{-1} (I - L)(z - b)`` exactly."""
        z = self._check_vector(z)
        M = np.eye(self.dim) - self.L
        return ((z - self.b) @ M.T) / self.S

    def log_abs_det(self) -> float:
        """log |det F| = sum(log S); the unit-triangular factor contributes 0."""
        return float(np.sum(np.log(self.S)))

    def invert(self) -> AffineSCM:
        """The mechanism computing ``eps = F^{-1}(z - b)`` as an AffineSCM."""
        m = self.dim
        F = self.matrix
        F_inv = solve_triangular(F, np.eye(m), lower=True, check_finite=False)
        return AffineSCM.from_matrix(F_inv, -F_inv @ self.b)

    def allclose(self, other: AffineSCM, tol: float = 1e-12) -> bool:
        """Field-level closeness of (L, S, b)."""
        return (
            self.dim == other.dim
            and np.allclose(self.L, other.L, rtol=0.0, atol=tol)
            and np.allclose(self.S, other.S, rtol=0.0, atol=tol)
            and np.allclose(self.b, other.b, rtol=0.0, atol=tol)
        )


def compose(outer: AffineSCM, inner: AffineSCM) -> AffineSCM:
    """The mechanism ``outer(inner(eps))``: ``F = F_out F_in``, ``b = F_out b_in + b_out``."""
    if outer.dim != inner.dim:
        raise DimensionMismatch(f"dims differ: {outer.dim} vs {inner.dim}")
    F_out = outer.matrix
    F = F_out @ inner.matrix
    b = F_out @ inner.b + outer.b
    return AffineSCM.from_matrix(F, b)


@dataclass(frozen=True)
class InterventionSet:
    """Sorted 1-based indices where the inverse mechanisms of a family differ."""

    indices: tuple[int, ...]
    tolerance: float

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(sorted(int(i) for i in self.indices)))

    @property
    def size(self) -> int:
        return len(self.indices)

    def __contains__(self, j: int) -> bool:
        return j in self.indices

    def __iter__(self):
        return iter(self.indices)


def intervention_set(
    scms, tol: float = DEFAULT_INTERVENTION_TOL
) -> InterventionSet:
    """Indices (1-based) where some pair of mechanisms has differing inverse rows.

    Coordinate ``j`` is intervened iff for some pair (d, d') the j-th row of
    the inverse affine maps differs:
    ``max(||row_j(F_d^-1) - row_j(F_d'^-1)||_inf, |off_j(d) - off_j(d')|) > tol``
    with ``off = -F^{-1} b``.  Comparing affine parameters is exact for this
    family; a pointwise oracle is only used in tests.
    """
    scms = list(scms)
    if len(scms) < 2:
        raise ValueError("need at least two mechanisms")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    m = scms[0].dim
    for f in scms:
        if f.dim != m:
            raise DimensionMismatch("all mechanisms must share one dimension")
    rows = np.stack([f.inverse_matrix for f in scms])
    offs = np.stack([f.inverse_offset for f in scms])
    hit = np.zeros(m, dtype=bool)
    for a in range(len(scms)):
        for c in range(a + 1, len(scms)):
            row_dev = np.max(np.abs(rows[a] - rows[c]), axis=1)
            off_dev = np.abs(offs[a] - offs[c])
            hit |= np.maximum(row_dev, off_dev) > tol
    return InterventionSet(tuple(int(j) + 1 for j in np.nonzero(hit)[0]), tol)
