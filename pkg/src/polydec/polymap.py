"""Polynomial vector maps, their graded symmetric form, and decoupled models.

A :class:`PolyMap` stores ``n`` polynomials in ``m`` variables as a sparse
map ``(output, exponent) -> coefficient``. Constant terms are not allowed.
A :class:`DecoupledModel` stores the factors of ``f(u) = W g(V^T u)`` where
every branch ``g_k(t) = c_{k,1} t + ... + c_{k,d} t^d``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import DimensionError

__all__ = [
    "PolyMap",
    "GradedSymmetric",
    "DecoupledModel",
    "monomials",
    "multinomial",
    "polymap_from_terms",
    "to_graded",
    "from_graded",
    "eval_polymap",
    "eval_decoupled",
    "expand_decoupled",
    "jacobian",
    "jacobian_decoupled",
    "branch_derivative",
    "normalize_model",
    "map_residual",
    "report_compression",
]

Exponent = tuple[int, ...]


def multinomial(alpha: Sequence[int]) -> int:
    """Number of distinct index orderings with multiset ``alpha``."""
    out = math.factorial(sum(alpha))
    for a in alpha:
        out //= math.factorial(a)
    return out


@lru_cache(maxsize=None)
def monomials(m: int, d: int, min_degree: int = 1) -> tuple[Exponent, ...]:
    """Exponent tuples of all monomials of degree ``min_degree..d`` in ``m`` variables.

    Graded order: by total degree, then by the sorted variable-index tuple.
    """
    out = []
    for s in range(min_degree, d + 1):
        for idx in itertools.combinations_with_replacement(range(m), s):
            alpha = [0] * m
            for j in idx:
                alpha[j] += 1
            out.append(tuple(alpha))
    return tuple(out)


def _exponent_matrix(m: int, d: int) -> np.ndarray:
    return np.array(monomials(m, d), dtype=int).reshape(-1, m)


def _monomial_values(points: np.ndarray, exps: np.ndarray) -> np.ndarray:
    # points (N, m), exps (L, m) -> (N, L)
    return np.prod(points[:, None, :] ** exps[None, :, :], axis=2)


@dataclass(frozen=True)
class PolyMap:
    """Polynomial map ``R^m -> R^n`` of degree at most ``d`` without constant terms.

    Use :func:`polymap_from_terms` to build one; the constructor assumes
    canonical, validated input. ``terms`` maps ``(i, alpha)`` with 0-based
    output index ``i`` to a nonzero coefficient.
    """

    m: int
    n: int
    d: int
    terms: Mapping[tuple[int, Exponent], float]

    def coefficients(self) -> np.ndarray:
        """Dense ``n x L`` coefficient array over :func:`monomials` ``(m, d)``."""
        mons = monomials(self.m, self.d)
        pos = {a: k for k, a in enumerate(mons)}
        out = np.zeros((self.n, len(mons)))
        for (i, alpha), c in self.terms.items():
            out[i, pos[alpha]] = c
        return out

    @classmethod
    def from_coefficients(cls, m: int, d: int, coeffs: np.ndarray) -> "PolyMap":
        """Inverse of :meth:`coefficients`."""
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
        mons = monomials(m, d)
        if coeffs.shape[1] != len(mons):
            raise DimensionError(
                f"expected {len(mons)} coefficient columns, got {coeffs.shape[1]}"
            )
        terms = [
            (i, mons[k], coeffs[i, k])
            for i, k in zip(*np.nonzero(coeffs))
        ]
        return polymap_from_terms(m, coeffs.shape[0], d, terms)

    @property
    def max_degree(self) -> int:
        return max((sum(a) for _, a in self.terms), default=0)

    def __len__(self) -> int:
        return len(self.terms)


def polymap_from_terms(
    m: int,
    n: int,
    d: int,
    terms: Iterable[tuple[int, Sequence[int], float]],
) -> PolyMap:
    """Build a canonical :class:`PolyMap` from ``(i, alpha, coeff)`` triples.

    Output indices are 0-based. Duplicate monomials are summed and zero
    coefficients are dropped.

    Raises
    ------
    ValueError
        On a constant term, a nonfinite coefficient, a negative exponent,
        an output index out of range or a degree above ``d``.
    DimensionError
        If an exponent does not have length ``m``.
    """
    if m < 1 or n < 1 or d < 1:
        raise ValueError(f"m, n, d must be positive, got {(m, n, d)}")
    acc: dict[tuple[int, Exponent], float] = {}
    for i, alpha, coeff in terms:
        i = int(i)
        alpha = tuple(int(a) for a in alpha)
        coeff = float(coeff)
        if not 0 <= i < n:
            raise ValueError(f"output index {i} out of range [0, {n})")
        if len(alpha) != m:
            raise DimensionError(f"exponent {alpha} has length {len(alpha)}, expected {m}")
        if any(a < 0 for a in alpha):
            raise ValueError(f"negative exponent in {alpha}")
        s = sum(alpha)
        if s == 0:
            raise ValueError(
                f"constant term for output {i}: constant terms are not supported"
            )
        if s > d:
            raise ValueError(f"term {alpha} has degree {s} > d={d}")
        if not math.isfinite(coeff):
            raise ValueError(f"nonfinite coefficient {coeff} for term {alpha}")
        acc[(i, alpha)] = acc.get((i, alpha), 0.0) + coeff
    canon = {k: acc[k] for k in sorted(acc) if acc[k] != 0.0}
    return PolyMap(m, n, d, MappingProxyType(canon))


@dataclass(frozen=True)
class GradedSymmetric:
    """Per-output symmetric coefficient tensors of degree 1..d.

    ``blocks[i][s - 1]`` has shape ``(m,) * s``.
    """

    m: int
    n: int
    d: int
    blocks: tuple[tuple[np.ndarray, ...], ...]

    def block(self, i: int, s: int) -> np.ndarray:
        return self.blocks[i][s - 1]


def _multiset(index: tuple[int, ...], m: int) -> Exponent:
    alpha = [0] * m
    for j in index:
        alpha[j] += 1
    return tuple(alpha)


def _symmetric_block(coeff_of: Mapping[Exponent, float], m: int, s: int) -> np.ndarray:
    block = np.zeros((m,) * s)
    for index in np.ndindex(*block.shape):
        alpha = _multiset(index, m)
        c = coeff_of.get(alpha)
        if c is not None:
            block[index] = c / multinomial(alpha)
    return block


def to_graded(f: PolyMap) -> GradedSymmetric:
    """Symmetric tensor form: entry with index multiset ``alpha`` is ``coeff / multinomial``."""
    per_output: list[dict[Exponent, float]] = [{} for _ in range(f.n)]
    for (i, alpha), c in f.terms.items():
        per_output[i][alpha] = c
    blocks = []
    for i in range(f.n):
        row = []
        for s in range(1, f.d + 1):
            b = _symmetric_block(per_output[i], f.m, s)
            b.setflags(write=False)
            row.append(b)
        blocks.append(tuple(row))
    return GradedSymmetric(f.m, f.n, f.d, tuple(blocks))


def _is_symmetric(block: np.ndarray) -> bool:
    for perm in itertools.permutations(range(block.ndim)):
        if not np.array_equal(block, block.transpose(perm)):
            return False
    return True


def from_graded(g: GradedSymmetric) -> PolyMap:
    """Inverse of :func:`to_graded`. Blocks must be exactly symmetric."""
    terms = []
    for i in range(g.n):
        if len(g.blocks[i]) != g.d:
            raise DimensionError(f"output {i} has {len(g.blocks[i])} blocks, expected {g.d}")
        for s in range(1, g.d + 1):
            block = np.asarray(g.blocks[i][s - 1], dtype=float)
            if block.shape != (g.m,) * s:
                raise DimensionError(
                    f"degree-{s} block of output {i} has shape {block.shape}"
                )
            if not _is_symmetric(block):
                raise ValueError(f"degree-{s} block of output {i} is not symmetric")
            for alpha in monomials(g.m, s, s):
                index = tuple(j for j, a in enumerate(alpha) for _ in range(a))
                c = block[index]
                if c != 0.0:
                    terms.append((i, alpha, multinomial(alpha) * c))
    return polymap_from_terms(g.m, g.n, g.d, terms)


def _as_points(u, m: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(u, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.ndim != 2 or arr.shape[1] != m:
        raise DimensionError(f"expected points of length {m}, got shape {np.shape(u)}")
    return arr, single


def eval_polymap(f: PolyMap, u) -> np.ndarray:
    """Evaluate ``f`` at one point (shape ``(m,)``) or a batch (shape ``(N, m)``)."""
    pts, single = _as_points(u, f.m)
    exps = _exponent_matrix(f.m, f.d)
    out = _monomial_values(pts, exps) @ f.coefficients().T
    return out[0] if single else out


def jacobian(f: PolyMap, u) -> np.ndarray:
    """Jacobian ``df_i/du_j`` at ``u``; returns ``(n, m)`` or ``(N, n, m)`` for a batch."""
    pts, single = _as_points(u, f.m)
    out = np.zeros((pts.shape[0], f.n, f.m))
    for (i, alpha), c in f.terms.items():
        for j in range(f.m):
            a_j = alpha[j]
            if a_j == 0:
                continue
            lowered = np.array(alpha)
            lowered[j] -= 1
            out[:, i, j] += c * a_j * np.prod(pts**lowered, axis=1)
    return out[0] if single else out


@dataclass(frozen=True)
class DecoupledModel:
    """Factors of ``f(u) = W g(V^T u)``.

    Parameters
    ----------
    W : ndarray of shape (n, r)
        Mixing matrix.
    V : ndarray of shape (m, r)
        Directions of the branch inputs.
    C : ndarray of shape (r, d)
        Row ``k`` holds the coefficients of ``g_k`` for degrees 1..d.
    """

    W: np.ndarray
    V: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        mats = []
        for name in ("W", "V", "C"):
            a = np.array(getattr(self, name), dtype=float)
            if a.ndim != 2:
                raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} has nonfinite entries")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
            mats.append(a)
        W, V, C = mats
        if not (W.shape[1] == V.shape[1] == C.shape[0]):
            raise DimensionError(
                f"inconsistent branch counts: W {W.shape}, V {V.shape}, C {C.shape}"
            )
        if W.shape[1] < 1 or C.shape[1] < 1:
            raise DimensionError("model needs r >= 1 and d >= 1")

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def m(self) -> int:
        return self.V.shape[0]

    @property
    def r(self) -> int:
        return self.W.shape[1]

    @property
    def d(self) -> int:
        return self.C.shape[1]


def _branch_values(C: np.ndarray, t: np.ndarray) -> np.ndarray:
    # t (N, r) -> g_k(t_k) (N, r)
    powers = t[:, :, None] ** np.arange(1, C.shape[1] + 1)
    return np.einsum("nks,ks->nk", powers, C)


def branch_derivative(C: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``g_k'(t[:, k])`` for every branch; ``t`` has shape ``(N, r)``."""
    C = np.asarray(C, dtype=float)
    t = np.atleast_2d(np.asarray(t, dtype=float))
    s = np.arange(1, C.shape[1] + 1)
    powers = t[:, :, None] ** (s - 1)
    return np.einsum("nks,ks->nk", powers, C * s)


def eval_decoupled(model: DecoupledModel, u) -> np.ndarray:
    """Evaluate ``W g(V^T u)`` at one point or a batch of points."""
    pts, single = _as_points(u, model.m)
    out = _branch_values(model.C, pts @ model.V) @ model.W.T
    return out[0] if single else out


def jacobian_decoupled(model: DecoupledModel, u) -> np.ndarray:
    """``W diag(g'(V^T u)) V^T`` at one point or a batch of points."""
    pts, single = _as_points(u, model.m)
    gp = branch_derivative(model.C, pts @ model.V)
    out = np.einsum("ik,nk,jk->nij", model.W, gp, model.V)
    return out[0] if single else out


def expand_decoupled(model: DecoupledModel) -> PolyMap:
    """Expand ``sum_k w_k g_k(v_k^T u)`` into monomial form."""
    mons = monomials(model.m, model.d)
    exps = np.array(mons, dtype=int)
    degree = exps.sum(axis=1)
    weight = np.array([multinomial(a) for a in mons], dtype=float)
    # (v_k^T u)^s = sum_{|alpha|=s} multinomial(alpha) v_k^alpha u^alpha
    vpow = _monomial_values(model.V.T, exps) * weight  # (r, L)
    branch = model.C[:, degree - 1] * vpow
    return PolyMap.from_coefficients(model.m, model.d, model.W @ branch)


def normalize_model(model: DecoupledModel) -> DecoupledModel:
    """Rescale every ``v_k`` to unit norm with its largest-magnitude entry positive.

    ``c_{k,s}`` is multiplied by ``norm**s`` (with sign) so that the map is
    unchanged. Zero directions are left alone.
    """
    V = model.V.copy()
    C = model.C.copy()
    s = np.arange(1, model.d + 1)
    for k in range(model.r):
        v = V[:, k]
        nrm = np.linalg.norm(v)
        if nrm == 0.0:
            continue
        alpha = nrm * np.sign(v[np.argmax(np.abs(v))])
        V[:, k] = v / alpha
        C[k] = C[k] * alpha**s
    return DecoupledModel(model.W, V, C)


def map_residual(f: PolyMap, model: DecoupledModel) -> float:
    """Relative coefficient error ``||coef(f) - coef(model)|| / ||coef(f)||``.

    Falls back to the absolute error when ``f`` is zero.
    """
    if (model.m, model.n) != (f.m, f.n):
        raise DimensionError(
            f"model maps R^{model.m} -> R^{model.n}, polynomial maps R^{f.m} -> R^{f.n}"
        )
    d = max(f.d, model.d)
    ref = PolyMap(f.m, f.n, d, f.terms).coefficients()
    g = expand_decoupled(model)
    got = PolyMap(g.m, g.n, d, g.terms).coefficients()
    scale = np.linalg.norm(ref)
    err = np.linalg.norm(ref - got)
    return float(err / scale) if scale > 0 else float(err)


def report_compression(
    m: int, n: int, d: int, r: int, include_constants: bool = False
) -> tuple[int, int]:
    """Parameter counts ``(coupled, decoupled)`` for the two representations.

    By default constant terms are excluded: ``n (binom(m+d, d) - 1)`` and
    ``r (m + n + d)``. With ``include_constants`` each output polynomial and
    each branch also carries a constant, giving ``n binom(m+d, d)`` and
    ``r (m + n + d + 1)``.
    """
    for name, val in zip("mndr", (m, n, d, r)):
        if int(val) < 1:
            raise ValueError(f"{name} must be a positive integer, got {val}")
    extra = 1 if include_constants else 0
    return n * (math.comb(m + d, d) - 1 + extra), r * (m + n + d + extra)
