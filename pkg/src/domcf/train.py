"""Sparsity-constrained maximum-likelihood estimation.

Two trainable variants share one architecture: a per-domain triangular affine
mechanism followed by a fixed slope-0.5 leaky ReLU and a dense affine output
layer.  The "can" variant stores a single copy of the first ``m - k`` rows of
the mechanism parameters (dependency rows, log-scales, biases) shared across
domains, so the estimated intervention set is confined to the trailing ``k``
coordinates by construction rather than by penalty; "dense" gives every domain
all ``m`` rows and equals "can" with ``k = m``.

Scales are parameterized as ``log S`` so positivity survives unconstrained
gradient steps.  The dense output layer is stored and optimized in the
inverse (data-to-noise) direction, ``u = W x + c`` with ``G = W^{-1}`` and
``b_g = -W^{-1} c``, the usual convention when fitting by maximum likelihood:
the whole training pass is solver-free and the gradient of the quadratic term
never passes through an inverted matrix, which keeps its variance moderate
even when the fitted mixing is badly conditioned.  Gradients are exact
reverse-mode derivations of the negative log-likelihood; the leaky-ReLU
derivative at exactly 0 uses the slope-1 branch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .ild import ILDModel, LOG_TWO_PI, as_sample_arrays
from .mixing import AffineDense, LayerChain, LeakyRelu
from .scm import AffineSCM

ADAM_EPS = 1e-8
LEAKY_SLOPE = 0.5
_MIN_ABS_DET = 1e-12
_G_GROUP = ("W", "c")
# SeedSequence tags keeping initialization and batch sampling on disjoint
# streams even when both derive from the same user-facing seed.
_INIT_STREAM = 101
_BATCH_STREAM = 102
_PARAM_FIELDS = (
    "W",
    "c",
    "shared_L",
    "shared_logS",
    "shared_b",
    "dom_L",
    "dom_logS",
    "dom_b",
)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings; defaults follow the simulated-experiment protocol."""

    learning_rate_g: float = 1e-3
    learning_rate_f: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 500
    iterations: int = 50_000
    eval_every: int = 100
    seed: int = 0

    def __post_init__(self):
        if min(self.learning_rate_g, self.learning_rate_f) <= 0:
            raise ValueError("learning rates must be positive")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.batch_size <= 0 or self.eval_every <= 0 or self.iterations < 0:
            raise ValueError("batch_size and eval_every must be positive, iterations >= 0")


@dataclass
class ParamSet:
    """All free parameter arrays of one trainable model.

    ``W`` and ``c`` parameterize the observation layer in the inverse
    direction (``u = W x + c``).
    """

    W: np.ndarray
    c: np.ndarray
    shared_L: np.ndarray
    shared_logS: np.ndarray
    shared_b: np.ndarray
    dom_L: np.ndarray
    dom_logS: np.ndarray
    dom_b: np.ndarray

    def items(self):
        for name in _PARAM_FIELDS:
            yield name, getattr(self, name)

    def copy(self) -> ParamSet:
        return ParamSet(**{name: arr.copy() for name, arr in self.items()})

    def zeros_like(self) -> ParamSet:
        return ParamSet(**{name: np.zeros_like(arr) for name, arr in self.items()})


@dataclass
class TrainableILD:
    """Parameterized model with hard row sharing across domains.

    ``domain_rows`` is the number of trailing mechanism rows that carry
    per-domain parameters: the target intervention size for "can" and the full
    dimension for "dense".
    """

    kind: str
    dim: int
    num_domains: int
    domain_rows: int
    params: ParamSet

    def __post_init__(self):
        if self.kind not in ("can", "dense"):
            raise ValueError(f"kind must be 'can' or 'dense', got {self.kind!r}")
        if not 0 <= self.domain_rows <= self.dim:
            raise ValueError("domain_rows must lie in [0, dim]")
        if self.kind == "dense" and self.domain_rows != self.dim:
            raise ValueError("dense means every row is per-domain")

    @property
    def k(self) -> int:
        return self.domain_rows

    @property
    def shared_rows(self) -> int:
        return self.dim - self.domain_rows

    @classmethod
    def initialize(
        cls,
        dim: int,
        num_domains: int,
        kind: str = "dense",
        k: int | None = None,
        seed: int = 0,
    ) -> TrainableILD:
        """Seeded initialization: mechanism entries 0.1-scaled standard normal
        with ``log S = 0``; the output layer starts at the identity with zero
        bias (``W = I``, ``c = 0``).
        """
        kk = dim if kind == "dense" else int(k if k is not None else dim)
        ns = dim - kk
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, _INIT_STREAM])))
        strict = np.tril(np.ones((dim, dim)), k=-1)
        L_all = rng.standard_normal((num_domains, dim, dim)) * 0.1 * strict
        b_all = rng.standard_normal((num_domains, dim)) * 0.1
        params = ParamSet(
            W=np.eye(dim),
            c=np.zeros(dim),
            shared_L=L_all[0, :ns].copy(),
            shared_logS=np.zeros(ns),
            shared_b=b_all[0, :ns].copy(),
            dom_L=L_all[:, ns:].copy(),
            dom_logS=np.zeros((num_domains, kk)),
            dom_b=b_all[:, ns:].copy(),
        )
        return cls(kind, dim, num_domains, kk, params)

    def copy(self) -> TrainableILD:
        return replace(self, params=self.params.copy())

    def _strict_row_mask(self) -> np.ndarray:
        return np.tril(np.ones((self.dim, self.dim)), k=-1)

    def domain_arrays(self, d0: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Full (L, logS, b) arrays for 0-based domain ``d0``."""
        p, ns = self.params, self.shared_rows
        L = np.zeros((self.dim, self.dim))
        L[:ns] = p.shared_L
        L[ns:] = p.dom_L[d0]
        L *= self._strict_row_mask()
        logS = np.concatenate([p.shared_logS, p.dom_logS[d0]])
        b = np.concatenate([p.shared_b, p.dom_b[d0]])
        return L, logS, b

    @property
    def G(self) -> np.ndarray:
        """Forward-direction mixing matrix ``W^{-1}``."""
        return np.linalg.inv(self.params.W)

    @property
    def b_g(self) -> np.ndarray:
        """Forward-direction mixing bias ``-W^{-1} c``."""
        return -np.linalg.inv(self.params.W) @ self.params.c

    def materialize(self) -> ILDModel:
        """The current parameters as an immutable model."""
        scms = []
        for d0 in range(self.num_domains):
            L, logS, b = self.domain_arrays(d0)
            scms.append(AffineSCM(L, np.exp(logS), b))
        G = np.linalg.inv(self.params.W)
        mix = LayerChain(
            self.dim,
            (LeakyRelu(LEAKY_SLOPE), AffineDense(G, -G @ self.params.c)),
        )
        return ILDModel(mix, tuple(scms))

    # Mask-aware flattening used by gradient checks and serialization of
    # optimizer state; structurally-zero dependency entries are excluded.
    def _free_masks(self) -> dict[str, np.ndarray]:
        ns, kk, m, nd = self.shared_rows, self.domain_rows, self.dim, self.num_domains
        strict = self._strict_row_mask().astype(bool)
        return {
            "W": np.ones((m, m), dtype=bool),
            "c": np.ones(m, dtype=bool),
            "shared_L": strict[:ns],
            "shared_logS": np.ones(ns, dtype=bool),
            "shared_b": np.ones(ns, dtype=bool),
            "dom_L": np.broadcast_to(strict[ns:], (nd, kk, m)),
            "dom_logS": np.ones((nd, kk), dtype=bool),
            "dom_b": np.ones((nd, kk), dtype=bool),
        }

    def free_vector(self) -> np.ndarray:
        masks = self._free_masks()
        return np.concatenate(
            [getattr(self.params, name)[masks[name]] for name in _PARAM_FIELDS]
        )

    def with_free_vector(self, vec: np.ndarray) -> TrainableILD:
        masks = self._free_masks()
        out = self.copy()
        pos = 0
        for name in _PARAM_FIELDS:
            arr = getattr(out.params, name)
            mask = masks[name]
            count = int(mask.sum())
            arr[mask] = vec[pos : pos + count]
            pos += count
        if pos != len(vec):
            raise ValueError(f"expected {pos} entries, got {len(vec)}")
        return out


def mask_gradient(trainable: TrainableILD, grads: ParamSet) -> ParamSet:
    strict = trainable._strict_row_mask()
    ns = trainable.shared_rows
    grads.shared_L *= strict[:ns]
    grads.dom_L *= strict[ns:]
    return grads


def _loss_and_grad(
    trainable: TrainableILD, X: np.ndarray, labels: np.ndarray
) -> tuple[float, ParamSet]:
    """Mean negative log-likelihood of the batch and its exact gradient.

    Works entirely in the inverse direction: ``u = W x + c``, so
    ``log |det J_fwd|`` of the dense layer contributes ``-log |det W|``.
    """
    p = trainable.params
    m, nd, ns = trainable.dim, trainable.num_domains, trainable.shared_rows
    n = X.shape[0]
    s = LEAKY_SLOPE

    sign, logabsdet_W = np.linalg.slogdet(p.W)
    if sign == 0.0:
        raise FloatingPointError("inverse mixing matrix became singular")
    U = X @ p.W.T + p.c
    Z = np.where(U >= 0.0, U, U / s)
    n_neg = np.count_nonzero(U < 0.0, axis=1)

    grads = p.zeros_like()
    dU_total = np.zeros_like(U)
    loss_sum = float(n) * (0.5 * m * LOG_TWO_PI - logabsdet_W) + float(
        n_neg.sum()
    ) * math.log(s)

    for d0 in range(nd):
        mask = labels == d0 + 1
        if not np.any(mask):
            continue
        L, logS, b = trainable.domain_arrays(d0)
        S = np.exp(logS)
        M = np.eye(m) - L
        Y = Z[mask] - b
        Eps = (Y @ M.T) / S
        loss_sum += 0.5 * float(np.sum(Eps**2)) + mask.sum() * float(np.sum(logS))

        Wgt = Eps / S
        g_logS = np.sum(1.0 - Eps**2, axis=0)
        g_L = np.tril(-(Wgt.T @ Y), k=-1)
        g_b = -(M.T @ Wgt.sum(axis=0))
        dU_total[mask] = (Wgt @ M) * np.where(U[mask] >= 0.0, 1.0, 1.0 / s)

        grads.shared_L += g_L[:ns]
        grads.shared_logS += g_logS[:ns]
        grads.shared_b += g_b[:ns]
        grads.dom_L[d0] = g_L[ns:]
        grads.dom_logS[d0] = g_logS[ns:]
        grads.dom_b[d0] = g_b[ns:]

    grads.W = dU_total.T @ X - float(n) * np.linalg.inv(p.W).T
    grads.c = dU_total.sum(axis=0)

    for name, arr in grads.items():
        arr /= n
    return loss_sum / n, mask_gradient(trainable, grads)


def nll_loss(trainable: TrainableILD, batch) -> float:
    """Mean negative log-likelihood of the batch under the materialized model.

    The domain-marginal factor of the joint density is parameter-free and
    omitted.
    """
    X, labels = as_sample_arrays(batch)
    if len(X) == 0:
        raise ValueError("batch must be non-empty")
    return dataset_nll(trainable.materialize(), X, labels)


def nll_gradient(trainable: TrainableILD, batch) -> ParamSet:
    """Exact gradient of ``nll_loss`` with respect to every free parameter."""
    X, labels = as_sample_arrays(batch)
    if len(X) == 0:
        raise ValueError("batch must be non-empty")
    _, grads = _loss_and_grad(trainable, X, labels)
    return grads


def dataset_nll(model: ILDModel, X, labels) -> float:
    """Mean negative log-likelihood of labeled observations under ``model``."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels, dtype=int)
    total = 0.0
    for d in np.unique(labels):
        mask = labels == d
        total += float(np.sum(model.log_likelihood(X[mask], int(d))))
    return -total / len(X)


class Adam:
    """Adam with bias correction and per-group learning rates.

    The observation-layer group (``W``, ``c``) uses ``learning_rate_g``; all
    mechanism parameters use ``learning_rate_f``.  If a step would make the
    observation layer numerically non-invertible (``|det W| < 1e-12``), the
    step is rejected and retried at half the learning rate; moments are
    updated once per step either way.
    """

    def __init__(self, config: TrainConfig):
        self.config = config
        self.t = 0
        self.m: ParamSet | None = None
        self.v: ParamSet | None = None

    def step(self, params: ParamSet, grads: ParamSet) -> None:
        cfg = self.config
        if self.m is None:
            self.m = grads.zeros_like()
            self.v = grads.zeros_like()
        self.t += 1
        c1 = 1.0 - cfg.beta1**self.t
        c2 = 1.0 - cfg.beta2**self.t
        deltas = {}
        for name, g in grads.items():
            m_arr = getattr(self.m, name)
            v_arr = getattr(self.v, name)
            m_arr *= cfg.beta1
            m_arr += (1.0 - cfg.beta1) * g
            v_arr *= cfg.beta2
            v_arr += (1.0 - cfg.beta2) * g**2
            lr = cfg.learning_rate_g if name in _G_GROUP else cfg.learning_rate_f
            deltas[name] = -lr * (m_arr / c1) / (np.sqrt(v_arr / c2) + ADAM_EPS)

        scale = 1.0
        for _ in range(60):
            for name, delta in deltas.items():
                getattr(params, name).__iadd__(delta * scale)
            sign, logdet = np.linalg.slogdet(params.W)
            if sign != 0.0 and logdet > math.log(_MIN_ABS_DET):
                return
            for name, delta in deltas.items():
                getattr(params, name).__isub__(delta * scale)
            scale *= 0.5
        raise RuntimeError("observation layer stayed singular after 60 step halvings")


def adam_step(state: Adam, params: ParamSet, grads: ParamSet) -> Adam:
    """Functional wrapper around Adam.step; returns the (mutated) state."""
    state.step(params, grads)
    return state


def train_with_state(
    trainable: TrainableILD, dataset, config: TrainConfig
) -> tuple[ILDModel, list[tuple[int, float, float]], TrainableILD, Adam]:
    """Like ``train`` but also returns the final parameters and optimizer state."""
    Xtr, dtr = as_sample_arrays(dataset.train)
    Xval, dval = as_sample_arrays(dataset.val)
    if len(Xtr) == 0 or len(Xval) == 0:
        raise ValueError("train and validation splits must be non-empty")

    work = trainable.copy()
    optimizer = Adam(config)
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([config.seed, _BATCH_STREAM]))
    )
    history: list[tuple[int, float, float]] = []
    best_val = math.inf
    best_params = work.params.copy()

    def record(iteration: int) -> None:
        nonlocal best_val, best_params
        model = work.materialize()
        train_nll = dataset_nll(model, Xtr, dtr)
        val_nll = dataset_nll(model, Xval, dval)
        history.append((iteration, train_nll, val_nll))
        if val_nll < best_val:
            best_val = val_nll
            best_params = work.params.copy()

    record(0)
    for it in range(1, config.iterations + 1):
        idx = rng.integers(0, len(Xtr), size=config.batch_size)
        _, grads = _loss_and_grad(work, Xtr[idx], dtr[idx])
        optimizer.step(work.params, grads)
        if it % config.eval_every == 0:
            record(it)

    best = replace(work, params=best_params)
    return best.materialize(), history, work, optimizer


def train(
    trainable: TrainableILD, dataset, config: TrainConfig
) -> tuple[ILDModel, list[tuple[int, float, float]]]:
    """Seeded minibatch Adam with validation-based checkpoint selection.

    Records (iteration, train NLL, validation NLL) at iteration 0 and then
    every ``eval_every`` iterations, both over the full splits.  Returns the
    materialized model from the recorded iteration with the lowest validation
    NLL, plus the history.  The input ``trainable`` is not mutated.  Batches
    are drawn with replacement from a PCG64 stream seeded by ``config.seed``.
    """
    model, history, _, _ = train_with_state(trainable, dataset, config)
    return model, history
