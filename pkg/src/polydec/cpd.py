"""Canonical polyadic decomposition: ALS fitting, rank-one approximation,
factor matching, and transfer of third factors between coefficient and
Jacobian tensors.
"""
from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import DimensionError, UnderSampledError
from .tensorize import SamplePlan, numerical_rank, rank_bound

__all__ = [
    "CpdFactors",
    "FactorMatch",
    "cpd_reconstruct",
    "cp_als",
    "best_rank_one",
    "match_factors",
    "transfer_third_factor",
    "inverse_transfer",
]

logger = logging.getLogger(__name__)

_LETTERS = "abcdefghijklmnopqrstuvwxyz"


@dataclass
class CpdFactors:
    """Factors of ``sum_k weights[k] * a_k ∘ b_k ∘ ...``.

    Attributes
    ----------
    factors : list of ndarray
        ``factors[p]`` has shape ``(I_p, r)``.
    weights : ndarray of shape (r,)
    fit : float
        Relative reconstruction error ``||T - T_hat|| / ||T||``.
    iterations, converged :
        Solver diagnostics.
    history : list of float
        Fit after every sweep of the chosen run.
    restart : int
        Index of the restart that produced these factors.
    """

    factors: list[np.ndarray]
    weights: np.ndarray | None = None
    fit: float = float("nan")
    iterations: int = 0
    converged: bool = False
    history: list[float] = field(default_factory=list)
    restart: int = 0

    def __post_init__(self):
        self.factors = [np.asarray(F, dtype=float) for F in self.factors]
        ranks = {F.shape[1] for F in self.factors}
        if len(ranks) > 1:
            raise DimensionError(f"factor matrices disagree on rank: {sorted(ranks)}")
        r = ranks.pop() if ranks else 0
        if self.weights is None:
            self.weights = np.ones(r)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (r,):
            raise DimensionError(f"weights have shape {self.weights.shape}, expected ({r},)")

    @property
    def rank(self) -> int:
        return self.weights.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(F.shape[0] for F in self.factors)


def cpd_reconstruct(cp: CpdFactors, dims: Sequence[int] | None = None) -> np.ndarray:
    """Full tensor of a CPD; ``dims`` is checked against the factor shapes when given."""
    shape = cp.shape
    if dims is not None and tuple(dims) != shape:
        raise DimensionError(f"factors give shape {shape}, expected {tuple(dims)}")
    if cp.rank == 0:
        return np.zeros(shape)
    order = len(cp.factors)
    subs = ",".join(f"{_LETTERS[p]}z" for p in range(order))
    return np.einsum(f"z,{subs}->{_LETTERS[:order]}", cp.weights, *cp.factors)


def _relative_error(T: np.ndarray, norm_T: float, factors: Sequence[np.ndarray]) -> float:
    R = cpd_reconstruct(CpdFactors(list(factors)))
    return float(np.linalg.norm(T - R) / norm_T)


def _mttkrp(T: np.ndarray, factors: Sequence[np.ndarray], mode: int) -> np.ndarray:
    order = T.ndim
    operands = [T]
    subs = [_LETTERS[:order]]
    for p in range(order):
        if p != mode:
            operands.append(factors[p])
            subs.append(f"{_LETTERS[p]}z")
    return np.einsum(f"{','.join(subs)}->{_LETTERS[mode]}z", *operands)


def _solve_gram(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # solves X @ gram = rhs for X
    if np.linalg.cond(gram) > 1e12:
        gram = gram + 1e-12 * np.trace(gram) * np.eye(gram.shape[0])
    return np.linalg.solve(gram.T, rhs.T).T


def _normalize(factors: list[np.ndarray]) -> list[np.ndarray]:
    # unit columns with positive largest entry in all but the last mode
    out = [F.copy() for F in factors]
    for p in range(len(out) - 1):
        F = out[p]
        norms = np.linalg.norm(F, axis=0)
        idx = np.argmax(np.abs(F), axis=0)
        signs = np.sign(F[idx, np.arange(F.shape[1])])
        signs[signs == 0] = 1.0
        scale = norms * signs
        scale[norms == 0] = 1.0
        out[p] = F / scale
        out[-1] = out[-1] * scale
    return out


def _als_run(
    T: np.ndarray,
    norm_T: float,
    factors: list[np.ndarray],
    max_iter: int,
    tol: float,
) -> tuple[list[np.ndarray], list[float], bool]:
    order = T.ndim
    history: list[float] = []
    prev = np.inf
    for _ in range(max_iter):
        for p in range(order):
            gram = np.ones((factors[0].shape[1],) * 2)
            for q in range(order):
                if q != p:
                    gram = gram * (factors[q].T @ factors[q])
            factors[p] = _solve_gram(gram, _mttkrp(T, factors, p))
        factors = _normalize(factors)
        err = _relative_error(T, norm_T, factors)
        if not np.isfinite(err):
            raise FloatingPointError("non-finite fit during ALS sweep")
        history.append(err)
        if err <= tol or (np.isfinite(prev) and abs(prev - err) <= tol * prev):
            return factors, history, True
        prev = err
    return factors, history, False


def cp_als(
    T: np.ndarray,
    rank: int,
    *,
    max_iter: int = 2000,
    tol: float = 1e-12,
    n_restarts: int = 10,
    seed: int = 0,
    init: Sequence[np.ndarray] | CpdFactors | None = None,
) -> CpdFactors:
    """Rank-``rank`` CPD by alternating least squares with random restarts.

    Each restart ``j`` draws standard-normal factors from a generator seeded
    with ``(seed, j)``; when ``init`` is given it replaces the draw of restart
    0. The run with the smallest relative error wins (lowest restart index on
    ties).

    Parameters
    ----------
    T : ndarray
        Tensor of order >= 3.
    rank : int
        Number of rank-one terms.
    max_iter : int
        Sweep budget per restart.
    tol : float
        Stop when the relative change of the fit drops below ``tol`` or the
        fit itself does.

    Returns
    -------
    CpdFactors
        Factors with unit-norm columns in all modes but the last, which
        carries the magnitudes.
    """
    T = np.asarray(T, dtype=float)
    if T.ndim < 3:
        raise DimensionError(
            "cp_als needs a tensor of order >= 3; use a matrix factorization (SVD) for matrices"
        )
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    big = sorted(T.shape)[-2:]
    if rank > big[0] * big[1]:
        warnings.warn(
            f"rank {rank} exceeds the product of the two largest dimensions {big}",
            stacklevel=2,
        )
    norm_T = float(np.linalg.norm(T))
    if norm_T == 0.0:
        zeros = [np.zeros((I, rank)) for I in T.shape]
        return CpdFactors(zeros, fit=0.0, iterations=0, converged=True)

    if isinstance(init, CpdFactors):
        init = [F.copy() for F in init.factors[:-1]] + [init.factors[-1] * init.weights]
    best: CpdFactors | None = None
    for j in range(max(1, n_restarts)):
        if j == 0 and init is not None:
            start = [np.array(F, dtype=float) for F in init]
            if [F.shape for F in start] != [(I, rank) for I in T.shape]:
                raise DimensionError("init factors do not match tensor shape and rank")
        else:
            rng = np.random.default_rng([seed, j])
            start = [rng.standard_normal((I, rank)) for I in T.shape]
        try:
            with np.errstate(all="ignore"):
                factors, history, converged = _als_run(T, norm_T, start, max_iter, tol)
        except (FloatingPointError, np.linalg.LinAlgError) as exc:
            logger.debug("restart %d abandoned: %s", j, exc)
            continue
        cand = CpdFactors(
            factors,
            fit=history[-1],
            iterations=len(history),
            converged=converged,
            history=history,
            restart=j,
        )
        logger.debug("restart %d: fit %.3e after %d sweeps", j, cand.fit, cand.iterations)
        if best is None or cand.fit < best.fit:
            best = cand
    if best is None:
        raise FloatingPointError("every ALS restart produced non-finite values")
    return best


def best_rank_one(
    T: np.ndarray, *, max_iter: int = 500, tol: float = 1e-14
) -> tuple[list[np.ndarray], float, float]:
    """Dominant rank-one approximation by higher-order power iteration.

    Each mode is seeded with the leading left singular vector of the
    corresponding unfolding.

    Returns
    -------
    vectors : list of ndarray
        Unit vectors, one per mode.
    scale : float
        ``T`` contracted with all vectors.
    residual : float
        ``||T - scale * x_1 ∘ ... ∘ x_N|| / ||T||``. The zero tensor returns
        zero vectors, scale 0 and residual 0 since it has rank at most one.
    """
    T = np.asarray(T, dtype=float)
    if T.ndim < 2:
        raise DimensionError("best_rank_one needs an order >= 2 tensor")
    norm_T = float(np.linalg.norm(T))
    if norm_T == 0.0:
        return [np.zeros(I) for I in T.shape], 0.0, 0.0
    xs = []
    for p in range(T.ndim):
        unf = np.moveaxis(T, p, 0).reshape(T.shape[p], -1)
        u, _, _ = np.linalg.svd(unf, full_matrices=False)
        xs.append(u[:, 0])
    scale = 0.0
    for _ in range(max_iter):
        for p in range(T.ndim):
            y = T
            for q in reversed(range(T.ndim)):
                if q != p:
                    y = np.tensordot(y, xs[q], axes=([q], [0]))
            nrm = np.linalg.norm(y)
            if nrm == 0.0:
                break
            xs[p] = y / nrm
        new = float(_contract_all(T, xs))
        if abs(abs(new) - abs(scale)) <= tol * norm_T:
            scale = new
            break
        scale = new
    approx = scale * _outer(xs)
    return xs, scale, float(np.linalg.norm(T - approx) / norm_T)


def _contract_all(T: np.ndarray, xs: Sequence[np.ndarray]) -> float:
    y = T
    for x in reversed(xs):
        y = np.tensordot(y, x, axes=([y.ndim - 1], [0]))
    return float(y)


def _outer(xs: Sequence[np.ndarray]) -> np.ndarray:
    out = np.asarray(xs[0])
    for x in xs[1:]:
        out = np.multiply.outer(out, x)
    return out


@dataclass(frozen=True)
class FactorMatch:
    """Alignment of two CPDs.

    ``permutation[a]`` is the column of the second CPD matched to column
    ``a`` of the first. ``scales[a][p]`` maps that column onto the first
    CPD's column in mode ``p``; the scales of one component multiply to 1.
    ``congruence`` is the mean over components of the product over modes of
    absolute column cosines.
    """

    permutation: tuple[int, ...]
    scales: np.ndarray
    congruence: float
    residual: float


def _cosines(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(A, axis=0)
    nb = np.linalg.norm(B, axis=0)
    denom = np.outer(na, nb)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.abs(A.T @ B) / denom
    cos[denom == 0] = 0.0
    return cos


def match_factors(
    F1: Sequence[np.ndarray], F2: Sequence[np.ndarray], *, exhaustive_max: int = 7
) -> FactorMatch:
    """Align the columns of ``F2`` to ``F1`` up to permutation and scaling.

    The permutation maximizes the summed absolute cosines over all modes.
    For ``r <= exhaustive_max`` all permutations are enumerated and the
    lexicographically smallest maximizer is returned; larger ranks fall
    back to the Hungarian algorithm.
    """
    F1 = [np.asarray(F, dtype=float) for F in F1]
    F2 = [np.asarray(F, dtype=float) for F in F2]
    if len(F1) != len(F2) or any(a.shape != b.shape for a, b in zip(F1, F2)):
        raise DimensionError("factor lists must have matching shapes")
    r = F1[0].shape[1]
    cos = [_cosines(a, b) for a, b in zip(F1, F2)]
    score = sum(cos)
    if r <= exhaustive_max:
        best_perm, best_val = None, 0.0
        for perm in itertools.permutations(range(r)):
            val = score[np.arange(r), perm].sum()
            if best_perm is None or val > best_val + 1e-12 * max(1.0, abs(best_val)):
                best_perm, best_val = perm, val
        perm = tuple(best_perm)
    else:
        _, cols = linear_sum_assignment(-score)
        perm = tuple(int(c) for c in cols)

    order = len(F1)
    scales = np.ones((r, order))
    residual = 0.0
    congruence = 0.0
    for a, b in enumerate(perm):
        prod_cos = 1.0
        for p in range(order):
            prod_cos *= cos[p][a, b]
        congruence += prod_cos
        for p in range(order - 1):
            y = F2[p][:, b]
            yy = y @ y
            scales[a, p] = (F1[p][:, a] @ y) / yy if yy > 0 else 0.0
        rest = np.prod(scales[a, : order - 1])
        scales[a, -1] = 1.0 / rest if rest != 0 else 0.0
        for p in range(order):
            x = F1[p][:, a]
            diff = np.linalg.norm(x - scales[a, p] * F2[p][:, b])
            nx = np.linalg.norm(x)
            residual = max(residual, diff / nx if nx > 0 else diff)
    return FactorMatch(perm, scales, congruence / r if r else 1.0, float(residual))


def transfer_third_factor(qcpd: CpdFactors, plan: SamplePlan) -> CpdFactors:
    """Turn a CPD of the coefficient tensor into one of the Jacobian tensor (``H = A^T Z``)."""
    if len(qcpd.factors) != 3:
        raise DimensionError("expected a third-order CPD")
    Z = qcpd.factors[2]
    if Z.shape[0] != plan.A.shape[0]:
        raise DimensionError(
            f"third factor has {Z.shape[0]} rows, plan expects {plan.A.shape[0]}"
        )
    return replace(
        qcpd,
        factors=[qcpd.factors[0], qcpd.factors[1], plan.A.T @ Z],
        history=list(qcpd.history),
    )


def inverse_transfer(jcpd: CpdFactors, plan: SamplePlan) -> CpdFactors:
    """Map a CPD of the Jacobian tensor back to the coefficient tensor.

    The third factor becomes ``pinv(A)^T H``. This is only an inverse of
    :func:`transfer_third_factor` when ``rank(A)`` reaches its bound, so
    under-sampled plans are refused.
    """
    if len(jcpd.factors) != 3:
        raise DimensionError("expected a third-order CPD")
    H = jcpd.factors[2]
    if H.shape[0] != plan.N:
        raise DimensionError(f"third factor has {H.shape[0]} rows, plan has {plan.N} points")
    M = rank_bound(plan.m, plan.d)
    rank_A = numerical_rank(plan.A)
    if rank_A < M:
        raise UnderSampledError(
            f"under-sampled plan: rank(A) = {rank_A} < {M}; add sampling points"
        )
    Z = np.linalg.pinv(plan.A).T @ H
    return replace(
        jcpd,
        factors=[jcpd.factors[0], jcpd.factors[1], Z],
        history=list(jcpd.history),
    )
