"""Coefficient and Jacobian tensorizations of polynomial maps.

Tensors are plain :class:`numpy.ndarray` objects. Vectorization is
column-major (first index fastest), so ``vec(a b^T) = kron(b, a)`` and row
``i`` of the first-mode unfolding is the vectorized slice ``T[i, ...]``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import DimensionError
from .polymap import DecoupledModel, PolyMap, branch_derivative, jacobian, to_graded

__all__ = [
    "SamplePlan",
    "vec",
    "unvec",
    "kron_power",
    "mode_n_product",
    "unfold_mode1",
    "psi_matrix",
    "delta",
    "rank_bound",
    "build_Q",
    "build_sample_plan",
    "default_points",
    "numerical_rank",
    "build_J",
    "z_factors",
    "h_factors",
    "build_Ts",
    "reshape_Ts_12",
    "stack_Q_from_Ts",
    "structure_violation",
]


def vec(T: np.ndarray) -> np.ndarray:
    """Column-major vectorization."""
    return np.asarray(T).ravel(order="F")


def unvec(x: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return np.asarray(x).reshape(tuple(dims), order="F")


def kron_power(v: np.ndarray, s: int) -> np.ndarray:
    """``v ⊗ ... ⊗ v`` (``s`` factors); ``s = 0`` gives ``[1.]``."""
    out = np.ones(1)
    for _ in range(s):
        out = np.kron(out, v)
    return out


def delta(m: int, d: int) -> int:
    """Length of the third mode of the coefficient tensor, ``sum_{k=1..d} m^(k-1)``."""
    return sum(m ** (k - 1) for k in range(1, d + 1))


def rank_bound(m: int, d: int) -> int:
    """Maximal rank of the Vandermonde-like matrix, ``binom(m+d-1, d-1)``.

    Cross-checked against the dimension count of symmetric tensors of
    order ``0..d-1``.
    """
    closed = math.comb(m + d - 1, d - 1)
    summed = sum(math.comb(m + s - 1, s) for s in range(d))
    assert closed == summed, (closed, summed)
    return closed


def mode_n_product(T: np.ndarray, M: np.ndarray, n: int) -> np.ndarray:
    """Contract mode ``n`` of ``T`` with the columns of ``M`` (shape ``J x I_n``).

    ``(T x_n M)[i_1, .., j, .., i_N] = sum_{i_n} T[i_1, .., i_n, .., i_N] M[j, i_n]``.
    A 1-D ``M`` is treated as a ``1 x I_n`` matrix.
    """
    T = np.asarray(T, dtype=float)
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[None, :]
    if not 0 <= n < T.ndim:
        raise DimensionError(f"mode {n} out of range for order-{T.ndim} tensor")
    if M.ndim != 2 or M.shape[1] != T.shape[n]:
        raise DimensionError(
            f"matrix of shape {M.shape} cannot contract mode {n} of size {T.shape[n]}"
        )
    out = np.tensordot(T, M, axes=([n], [1]))
    return np.moveaxis(out, -1, n)


def unfold_mode1(T: np.ndarray) -> np.ndarray:
    """First-mode unfolding, shape ``I_1 x (I_2 ... I_N)``."""
    T = np.asarray(T)
    if T.ndim < 1:
        raise DimensionError("cannot unfold a scalar")
    if T.ndim == 1:
        raise DimensionError("first-mode unfolding needs an order >= 2 tensor")
    return T.reshape(T.shape[0], -1, order="F")


def _psi_from_blocks(blocks: Sequence[np.ndarray]) -> np.ndarray:
    cols = [blocks[0][:, None]]
    cols.extend(unfold_mode1(b) for b in blocks[1:])
    return np.hstack(cols)


def psi_matrix(f: PolyMap, i: int = 0, d: int | None = None) -> np.ndarray:
    """Structured ``m x delta`` coefficient matrix of output ``i`` of ``f``.

    Columns are the degree-1 vector, the degree-2 matrix and the first-mode
    unfoldings of the higher-degree symmetric tensors. ``d`` defaults to
    ``f.d``; a smaller ``d`` than the realized degree is an error.
    """
    d = f.d if d is None else d
    if d < f.max_degree:
        raise ValueError(f"polynomial has degree {f.max_degree} > d={d}")
    if not 0 <= i < f.n:
        raise DimensionError(f"output index {i} out of range for n={f.n}")
    g = to_graded(PolyMap(f.m, f.n, d, f.terms))
    return _psi_from_blocks(g.blocks[i])


def build_Q(f: PolyMap) -> np.ndarray:
    """Coefficient tensor of shape ``n x m x delta``; slice ``i`` is ``psi_matrix(f, i)``."""
    g = to_graded(f)
    return np.stack([_psi_from_blocks(g.blocks[i]) for i in range(f.n)])


@dataclass(frozen=True)
class SamplePlan:
    """Sampling points together with the Vandermonde-like matrix ``A``.

    ``points`` has shape ``(N, m)`` and ``A`` has shape ``(delta, N)``.
    """

    points: np.ndarray
    d: int
    A: np.ndarray

    @property
    def m(self) -> int:
        return self.points.shape[1]

    @property
    def N(self) -> int:
        return self.points.shape[0]

    def rank(self) -> int:
        return numerical_rank(self.A)


def _vandermonde_column(u: np.ndarray, d: int) -> np.ndarray:
    return np.concatenate([(s + 1) * kron_power(u, s) for s in range(d)])


def build_sample_plan(points, m: int, d: int) -> SamplePlan:
    """Assemble ``A`` column by column: ``[1, 2u, 3 u⊗u, ..., d u⊗...⊗u]``."""
    pts = np.array(points, dtype=float)
    if pts.ndim == 1 and pts.size == m and m > 0:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != m:
        raise DimensionError(f"points must have shape (N, {m}), got {pts.shape}")
    if pts.shape[0] < 1:
        raise ValueError("a sample plan needs at least one point")
    if d < 1:
        raise ValueError(f"d must be positive, got {d}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("sampling points must be finite")
    A = np.column_stack([_vandermonde_column(u, d) for u in pts])
    pts.setflags(write=False)
    A.setflags(write=False)
    return SamplePlan(pts, d, A)


def default_points(m: int, d: int, N: int | None = None, seed: int = 0) -> np.ndarray:
    """``N`` i.i.d. standard-normal points; ``N`` defaults to :func:`rank_bound`."""
    if N is None:
        N = rank_bound(m, d)
    if N < 1:
        raise ValueError(f"N must be positive, got {N}")
    return np.random.default_rng(seed).standard_normal((N, m))


def numerical_rank(A: np.ndarray, safety: float = 64.0) -> int:
    """Rank with cutoff ``sigma_1 * max(A.shape) * eps * safety``."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    tol = sv[0] * max(A.shape) * np.finfo(float).eps * safety
    return int(np.sum(sv > tol))


def build_J(f: PolyMap, plan: SamplePlan) -> np.ndarray:
    """Jacobian tensor of shape ``n x m x N``; slice ``[:, :, k]`` is the Jacobian at point ``k``."""
    if plan.m != f.m:
        raise DimensionError(f"plan has m={plan.m}, polynomial has m={f.m}")
    return np.moveaxis(jacobian(f, plan.points), 0, 2)


def z_factors(model: DecoupledModel) -> np.ndarray:
    """``delta x r`` matrix with columns ``[c_1, c_2 v, c_3 v⊗v, ..., c_d v⊗..⊗v]``."""
    cols = []
    for k in range(model.r):
        v = model.V[:, k]
        cols.append(
            np.concatenate(
                [model.C[k, s] * kron_power(v, s) for s in range(model.d)]
            )
        )
    return np.column_stack(cols)


def h_factors(model: DecoupledModel, plan: SamplePlan) -> np.ndarray:
    """``N x r`` matrix of branch derivatives ``g_k'(v_k^T u_j)``."""
    if plan.m != model.m:
        raise DimensionError(f"plan has m={plan.m}, model has m={model.m}")
    return branch_derivative(model.C, plan.points @ model.V)


def build_Ts(f: PolyMap, s: int) -> np.ndarray:
    """Stack the degree-``s`` symmetric blocks: shape ``n x m x ... x m`` (order ``s + 1``)."""
    if not 1 <= s <= f.d:
        raise ValueError(f"degree {s} out of range [1, {f.d}]")
    g = to_graded(f)
    return np.stack([g.blocks[i][s - 1] for i in range(f.n)])


def reshape_Ts_12(T: np.ndarray) -> np.ndarray:
    """(1,2)-reshaping: tube ``(i, j, :)`` is ``vec(T[i, j, ...])``; shape ``n x m x m^(s-1)``."""
    T = np.asarray(T)
    if T.ndim < 2:
        raise DimensionError("(1,2)-reshaping needs an order >= 2 tensor")
    return T.reshape(T.shape[0], T.shape[1], -1, order="F")


def stack_Q_from_Ts(reshaped: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate reshaped ``T^1 .. T^d`` along the third mode."""
    if len(reshaped) == 0:
        raise ValueError("need at least the degree-1 tensor")
    n, m = reshaped[0].shape[:2]
    for s, T in enumerate(reshaped, start=1):
        expected = (n, m, m ** (s - 1))
        if T.shape != expected:
            raise DimensionError(
                f"degree-{s} reshaping has shape {T.shape}, expected {expected}; "
                "degrees must be given in order 1..d"
            )
    return np.concatenate(reshaped, axis=2)


def structure_violation(x: np.ndarray, m: int, d: int) -> float:
    """Largest deviation of ``x`` (length ``delta``) from the symmetric-block structure.

    Block ``s`` (length ``m^s``, ``s = 0..d-1``) must be the vectorization of a
    symmetric order-``s`` tensor; the return value is the largest absolute
    difference between entries that share an index multiset.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (delta(m, d),):
        raise DimensionError(f"expected length {delta(m, d)}, got {x.shape}")
    worst = 0.0
    start = 1
    for s in range(1, d):
        size = m**s
        block = unvec(x[start:start + size], (m,) * s)
        for perm in itertools.permutations(range(s)):
            worst = max(worst, float(np.max(np.abs(block - block.transpose(perm)))))
        start += size
    return worst
