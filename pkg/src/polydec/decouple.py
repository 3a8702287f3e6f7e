"""Decoupling pipelines.

Three routes produce a :class:`~polydec.polymap.DecoupledModel`:

* ``decouple_via_J``: unstructured CPD of the Jacobian tensor, then a
  univariate least-squares fit of every branch derivative;
* ``decouple_via_Q``: unstructured CPD of the coefficient tensor, then a
  read-off of the branch coefficients from the third factor;
* ``coupled_psym_cpd``: joint partially symmetric CPD of the per-degree
  coefficient tensors with shared ``W`` and ``V``.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .cpd import best_rank_one, cp_als, cpd_reconstruct, CpdFactors
from .exceptions import DegenerateSamplingError, DimensionError
from .polymap import (
    DecoupledModel,
    PolyMap,
    map_residual,
    monomials,
    multinomial,
)
from .tensorize import (
    SamplePlan,
    build_J,
    build_Q,
    build_sample_plan,
    default_points,
    delta,
    h_factors,
    kron_power,
    mode_n_product,
    numerical_rank,
    rank_bound,
    structure_violation,
    z_factors,
)

__all__ = [
    "DecoupleReport",
    "VerificationRecord",
    "fit_g_from_h",
    "decouple_via_J",
    "decouple_via_Q",
    "coupled_psym_cpd",
    "rank_one_extract",
    "verify_relations",
]

logger = logging.getLogger(__name__)

METHODS = ("jacobian-cpd", "coefficient-cpd", "coupled-structured")
RANK_ONE_TOL = 1e-8
BLOCK_ITER = 50


@dataclass
class DecoupleReport:
    """Outcome of a decoupling run.

    ``tensor_fit`` is the relative error of the decomposition of the tensor
    the method works on; ``map_residual`` compares the coefficients of the
    input map with those of the expanded model; ``structure_residual`` is
    the relative distance of the fitted third factor from the form it must
    have for a decoupled model (zero for the coupled solver).
    """

    model: DecoupledModel
    method: str
    tensor_fit: float
    map_residual: float
    structure_residual: float
    converged: bool
    iterations: int
    restarts: int
    seed: int
    history: list[float] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        out = {
            k: v for k, v in asdict(self).items() if k not in ("model", "history")
        }
        out["rank"] = self.model.r
        return out


def _rel(ref: np.ndarray, other: np.ndarray) -> float:
    scale = np.linalg.norm(ref)
    err = np.linalg.norm(ref - other)
    return float(err / scale) if scale > 0 else float(err)


def _unit_direction(v: np.ndarray) -> float:
    # signed norm that maps v to unit length with a positive largest entry
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        return 0.0
    return float(nrm * np.sign(v[np.argmax(np.abs(v))]))


def fit_g_from_h(v: np.ndarray, h: np.ndarray, plan: SamplePlan, d: int) -> np.ndarray:
    """Coefficients ``c_1..c_d`` of ``g`` from samples ``h_j ≈ g'(v^T u_j)``.

    Solves the least-squares problem in the basis ``1, 2t, 3t^2, ..., d t^(d-1)``.

    Raises
    ------
    DegenerateSamplingError
        If the points ``t_j = v^T u_j`` cannot determine a degree-``d`` branch.
    """
    v = np.asarray(v, dtype=float)
    h = np.asarray(h, dtype=float)
    if v.shape != (plan.m,) or h.shape != (plan.N,):
        raise DimensionError(
            f"expected v of length {plan.m} and h of length {plan.N}, got {v.shape}, {h.shape}"
        )
    if not np.any(h):
        return np.zeros(d)
    t = plan.points @ v
    s = np.arange(1, d + 1)
    basis = s * t[:, None] ** (s - 1)
    if plan.N < d or numerical_rank(basis) < d:
        raise DegenerateSamplingError(
            "degenerate sampling for branch: the projected points do not determine "
            f"a degree-{d} polynomial"
        )
    c, *_ = np.linalg.lstsq(basis, h, rcond=None)
    return c


def decouple_via_J(
    f: PolyMap,
    plan: SamplePlan,
    rank: int,
    *,
    max_iter: int = 2000,
    tol: float = 1e-12,
    n_restarts: int = 10,
    seed: int = 0,
    resample: bool = True,
) -> DecoupleReport:
    """Decouple ``f`` through an unstructured CPD of its Jacobian tensor.

    When a branch turns out degenerate for ``plan`` and ``resample`` is set,
    the pipeline draws a fresh plan of the same size (seed ``seed + 1``)
    once before giving up.
    """
    if plan.m != f.m:
        raise DimensionError(f"plan has m={plan.m}, polynomial has m={f.m}")
    J = build_J(f, plan)
    cp = cp_als(J, rank, max_iter=max_iter, tol=tol, n_restarts=n_restarts, seed=seed)
    W, V, H = (F.copy() for F in cp.factors)
    for k in range(rank):
        alpha = _unit_direction(V[:, k])
        if alpha != 0.0:
            V[:, k] /= alpha
            H[:, k] *= alpha
    try:
        C = np.array([fit_g_from_h(V[:, k], H[:, k], plan, f.d) for k in range(rank)])
    except DegenerateSamplingError:
        if not resample:
            raise
        logger.info("degenerate branch; resampling the plan once")
        fresh = build_sample_plan(default_points(f.m, f.d, plan.N, seed + 1), f.m, f.d)
        return decouple_via_J(
            f, fresh, rank, max_iter=max_iter, tol=tol,
            n_restarts=n_restarts, seed=seed, resample=False,
        )
    model = DecoupledModel(W, V, C)
    H_fit = h_factors(model, plan)
    return DecoupleReport(
        model=model,
        method="jacobian-cpd",
        tensor_fit=cp.fit,
        map_residual=map_residual(f, model),
        structure_residual=_rel(H, H_fit),
        converged=cp.converged,
        iterations=cp.iterations,
        restarts=n_restarts,
        seed=seed,
        history=list(cp.history),
    )


def _read_off_coefficients(
    W: np.ndarray, V: np.ndarray, Z: np.ndarray, d: int
) -> tuple[DecoupledModel, float]:
    # v_k -> unit, z_k absorbs the scale; c_{k,s} = <z_k block s, v_k^{⊗(s-1)}>
    V = V.copy()
    Z = Z.copy()
    m, r = V.shape
    C = np.zeros((r, d))
    for k in range(r):
        alpha = _unit_direction(V[:, k])
        if alpha == 0.0:
            continue
        V[:, k] /= alpha
        Z[:, k] *= alpha
        start = 0
        for s in range(d):
            kp = kron_power(V[:, k], s)
            C[k, s] = Z[start:start + kp.size, k] @ kp / (kp @ kp)
            start += kp.size
    model = DecoupledModel(W, V, C)
    return model, _rel(Z, z_factors(model))


def decouple_via_Q(
    f: PolyMap,
    rank: int,
    *,
    max_iter: int = 2000,
    tol: float = 1e-12,
    n_restarts: int = 10,
    seed: int = 0,
    init=None,
) -> DecoupleReport:
    """Decouple ``f`` through an unstructured CPD of its coefficient tensor.

    ``init`` may be a list of factor matrices or a :class:`CpdFactors`; it
    is used as the starting point of the first restart.
    """
    Q = build_Q(f)
    cp = cp_als(
        Q, rank, max_iter=max_iter, tol=tol, n_restarts=n_restarts, seed=seed, init=init
    )
    W, V, Z = cp.factors
    model, struct = _read_off_coefficients(W, V, Z * cp.weights, f.d)
    return DecoupleReport(
        model=model,
        method="coefficient-cpd",
        tensor_fit=cp.fit,
        map_residual=map_residual(f, model),
        structure_residual=struct,
        converged=cp.converged,
        iterations=cp.iterations,
        restarts=n_restarts,
        seed=seed,
        history=list(cp.history),
    )


class _CoupledProblem:
    """Least-squares objective of the coupled partially symmetric CPD.

    Works on unique monomials: the squared Frobenius norm of a symmetric
    block equals the sum over monomials of ``coeff^2 / multinomial``, so
    every coefficient is divided by ``sqrt(multinomial)``.
    """

    def __init__(self, f: PolyMap):
        self.m, self.n, self.d = f.m, f.n, f.d
        mons = monomials(f.m, f.d)
        self.exps = np.array(mons, dtype=int)
        self.deg = self.exps.sum(axis=1)
        self.weight = np.sqrt([float(multinomial(a)) for a in mons])
        self.Y = f.coefficients() / self.weight
        self.norm2 = float(np.sum(self.Y**2))

    def powers(self, V: np.ndarray) -> np.ndarray:
        # (r, L): sqrt(multinomial) * v_k^alpha
        return np.prod(V.T[:, None, :] ** self.exps[None], axis=2) * self.weight

    def design(self, V: np.ndarray, C: np.ndarray) -> np.ndarray:
        return C[:, self.deg - 1] * self.powers(V)

    def objective(self, W, V, C) -> float:
        return float(np.sum((self.Y - W @ self.design(V, C)) ** 2))

    def update_W(self, V, C) -> np.ndarray:
        B = self.design(V, C)
        W, *_ = np.linalg.lstsq(B.T, self.Y.T, rcond=None)
        return W.T

    def update_C(self, W, V) -> np.ndarray:
        P = self.powers(V)
        r = W.shape[1]
        C = np.zeros((r, self.d))
        for s in range(1, self.d + 1):
            cols = self.deg == s
            # columns: vec(w_k p_{k,s}^T)
            A = np.einsum("ik,kl->ilk", W, P[:, cols]).reshape(-1, r)
            C[:, s - 1], *_ = np.linalg.lstsq(A, self.Y[:, cols].ravel(), rcond=None)
        return C

    def jacobian_V(self, W, V, C) -> np.ndarray:
        # d(model)/dV[j, k] for model = W @ design; shape (n*L, m*r), column j*r + k
        m, r = V.shape
        L = self.exps.shape[0]
        coef = C[:, self.deg - 1] * self.weight  # (r, L)
        out = np.zeros((self.n, L, m, r))
        for j in range(m):
            lowered = self.exps.copy()
            lowered[:, j] = np.maximum(lowered[:, j] - 1, 0)
            dpow = self.exps[:, j] * np.prod(V.T[:, None, :] ** lowered[None], axis=2)
            out[:, :, j, :] = np.einsum("ik,kl->ilk", W, coef * dpow)
        return out.reshape(self.n * L, m * r)

    def jacobian(self, W, V, C) -> np.ndarray:
        """Derivative of the model with respect to ``(vec W, vec V, vec C)``, row-major."""
        n, r = W.shape
        L = self.exps.shape[0]
        JW = np.einsum("ab,kl->albk", np.eye(n), self.design(V, C)).reshape(n * L, n * r)
        P = self.powers(V)
        JC = np.zeros((n, L, r, self.d))
        for s in range(1, self.d + 1):
            JC[..., s - 1] = np.einsum("ik,kl->ilk", W, P * (self.deg == s))
        return np.hstack([JW, self.jacobian_V(W, V, C), JC.reshape(n * L, r * self.d)])

    def step_V(self, W, V, C, phi: float, lam: float, max_tries: int = 40):
        """One damped Gauss-Newton step in ``V``; returns (V, phi, lam, accepted)."""
        R = (self.Y - W @ self.design(V, C)).ravel()
        Jm = self.jacobian_V(W, V, C)
        for _ in range(max_tries):
            step = _damped_solve(Jm, R, lam)
            if step is not None:
                V_new = V + step.reshape(V.shape)
                phi_new = self.objective(W, V_new, C)
                if phi_new < phi:
                    return V_new, phi_new, max(lam * 0.5, 1e-12), True
            lam *= 4.0
        return V, phi, lam, False

    def step_joint(self, W, V, C, phi: float, lam: float, max_tries: int = 40):
        """One damped Gauss-Newton step in all of ``(W, V, C)``."""
        R = (self.Y - W @ self.design(V, C)).ravel()
        Jm = self.jacobian(W, V, C)
        cuts = np.cumsum([W.size, V.size])
        for _ in range(max_tries):
            step = _damped_solve(Jm, R, lam)
            if step is not None:
                dW, dV, dC = np.split(step, cuts)
                new = (W + dW.reshape(W.shape), V + dV.reshape(V.shape), C + dC.reshape(C.shape))
                phi_new = self.objective(*new)
                if phi_new < phi:
                    return (*new, phi_new, max(lam * 0.5, 1e-12), True)
            lam *= 4.0
        return W, V, C, phi, lam, False


def _damped_solve(Jm: np.ndarray, R: np.ndarray, lam: float) -> np.ndarray | None:
    # Levenberg-Marquardt step, damping scaled by the curvature of each parameter
    JtJ = Jm.T @ Jm
    diag = np.diag(JtJ).copy()
    diag = np.maximum(diag, 1e-12 * max(float(diag.max()), np.finfo(float).tiny))
    try:
        return np.linalg.solve(JtJ + lam * np.diag(diag), Jm.T @ R)
    except np.linalg.LinAlgError:
        return None


def _normalize_columns(V: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    V = V.copy()
    C = C.copy()
    s = np.arange(1, C.shape[1] + 1)
    for k in range(V.shape[1]):
        alpha = _unit_direction(V[:, k])
        if alpha != 0.0:
            V[:, k] /= alpha
            C[k] *= alpha**s
    return V, C


def _coupled_run(
    problem: _CoupledProblem, W, V, C, max_iter: int, tol: float, block_iter: int = BLOCK_ITER
):
    # block-coordinate sweeps first, then joint damped Gauss-Newton steps
    V, C = _normalize_columns(V, C)
    if W is None:
        W = problem.update_W(V, C)
    phi = problem.objective(W, V, C)
    history = [phi]
    lam = 1e-3
    floor = (tol**2) * problem.norm2
    converged = phi <= floor
    it = 0
    while not converged and it < max_iter:
        it += 1
        if it <= block_iter:
            W = problem.update_W(V, C)
            C = problem.update_C(W, V)
            phi_lin = problem.objective(W, V, C)
            V, phi_new, lam, accepted = problem.step_V(W, V, C, phi_lin, lam)
            if it == block_iter:
                lam = 1e-3
        else:
            W, V, C, phi_new, lam, accepted = problem.step_joint(W, V, C, phi, lam)
        V, C = _normalize_columns(V, C)
        history.append(phi_new)
        if phi_new <= floor or (it > block_iter and not accepted):
            converged = True
        elif (phi - phi_new) <= tol * phi and it > block_iter:
            converged = True
        phi = phi_new
    return W, V, C, history, converged, it


def coupled_psym_cpd(
    f: PolyMap,
    rank: int,
    *,
    max_iter: int = 500,
    tol: float = 1e-12,
    n_restarts: int = 10,
    seed: int = 0,
    plan: SamplePlan | None = None,
    init: DecoupledModel | None = None,
    seed_from_jacobian: bool = True,
    stop_below: float = 1e-12,
) -> DecoupleReport:
    """Coupled partially symmetric CPD of the per-degree coefficient tensors.

    Minimizes ``sum_s ||T^s - [[W, V, ..., V, c_s^T]]||_F^2`` by block
    coordinate descent: linear least squares for ``W`` and ``C``, a damped
    Gauss-Newton step for ``V``, then ``||v_k|| = 1`` with the compensating
    ``c_{k,s} *= alpha^s``. After ``BLOCK_ITER`` sweeps the remaining budget
    goes to damped Gauss-Newton steps in all factors at once, which escape
    the slow swamps that block updates are prone to. Every accepted step
    lowers the objective.

    Restart 0 starts from ``init`` or, if ``seed_from_jacobian``, from the
    model of :func:`decouple_via_J` on ``plan`` (default: ``M`` random
    points). Other restarts draw ``V`` and ``C`` from a normal generator
    seeded with ``(seed, j)``. The restart with the smallest map residual
    is returned; the loop stops early once one drops below ``stop_below``.
    Running out of budget is reported through ``converged=False``.
    """
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    problem = _CoupledProblem(f)
    if problem.norm2 == 0.0:
        zero = DecoupledModel(np.zeros((f.n, rank)), np.zeros((f.m, rank)), np.zeros((rank, f.d)))
        return DecoupleReport(zero, "coupled-structured", 0.0, 0.0, 0.0, True, 0, 0, seed)

    starts: list[tuple[Any, Any, Any] | None] = []
    if init is not None:
        if (init.m, init.n, init.r) != (f.m, f.n, rank):
            raise DimensionError("init model does not match the polynomial and rank")
        C0 = np.zeros((rank, f.d))
        C0[:, : min(f.d, init.d)] = init.C[:, : f.d]
        starts.append((init.W, init.V, C0))
    elif seed_from_jacobian:
        try:
            if plan is None:
                plan = build_sample_plan(default_points(f.m, f.d, seed=seed), f.m, f.d)
            rep = decouple_via_J(f, plan, rank, n_restarts=2, max_iter=500, seed=seed)
            starts.append((rep.model.W, rep.model.V, rep.model.C))
        except (DegenerateSamplingError, FloatingPointError, np.linalg.LinAlgError) as exc:
            logger.debug("jacobian seed unavailable: %s", exc)
            starts.append(None)
    while len(starts) < max(1, n_restarts):
        starts.append(None)

    best = None
    used = 0
    for j, start in enumerate(starts):
        used = j + 1
        if start is None:
            rng = np.random.default_rng([seed, j])
            W0 = None
            V0 = rng.standard_normal((f.m, rank))
            C0 = rng.standard_normal((rank, f.d))
        else:
            W0, V0, C0 = (np.array(a, dtype=float) for a in start)
        with np.errstate(all="ignore"):
            W, V, C, history, converged, it = _coupled_run(problem, W0, V0, C0, max_iter, tol)
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(V)) and np.all(np.isfinite(C))):
            logger.debug("restart %d diverged", j)
            continue
        model = DecoupledModel(W, V, C)
        res = map_residual(f, model)
        logger.debug("restart %d: map residual %.3e after %d iterations", j, res, it)
        if best is None or res < best[0]:
            best = (res, model, history, converged, it)
        if res <= stop_below:
            break
    if best is None:
        raise FloatingPointError("every coupled restart produced non-finite values")
    res, model, history, converged, it = best
    return DecoupleReport(
        model=model,
        method="coupled-structured",
        tensor_fit=float(np.sqrt(max(history[-1], 0.0) / problem.norm2)),
        map_residual=res,
        structure_residual=0.0,
        converged=converged,
        iterations=it,
        restarts=used,
        seed=seed,
        history=history,
    )


def rank_one_extract(f: PolyMap, tol: float = RANK_ONE_TOL) -> DecoupledModel | None:
    """Return ``f`` as a single branch ``w g(v^T u)``, or ``None`` if it is not rank one.

    The zero map counts as rank one and yields an all-zero model.
    """
    Q = build_Q(f)
    (a, b, y), scale, residual = best_rank_one(Q)
    if residual > tol:
        return None
    model, _ = _read_off_coefficients(
        (scale * a)[:, None], b[:, None], y[:, None], f.d
    )
    if map_residual(f, model) > tol:
        return None
    return model


@dataclass(frozen=True)
class VerificationRecord:
    """Numerical checks of the relations between ``Q``, ``J`` and ``A``."""

    identity_residual: float
    structure_violation: float
    rank_A: int
    rank_bound: int
    transfer_residual: float | None = None
    coefficient_cpd_residual: float | None = None
    jacobian_cpd_residual: float | None = None

    def residuals(self) -> dict[str, float]:
        names = (
            "identity_residual",
            "structure_violation",
            "transfer_residual",
            "coefficient_cpd_residual",
            "jacobian_cpd_residual",
        )
        return {k: getattr(self, k) for k in names if getattr(self, k) is not None}

    def passed(self, tol: float = 1e-8) -> bool:
        return all(v <= tol for v in self.residuals().values())

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def verify_relations(
    f: PolyMap, plan: SamplePlan, model: DecoupledModel | None = None
) -> VerificationRecord:
    """Check ``J = Q x_3 A^T``, tube structure of ``Q`` and the rank of ``A``.

    With a model, also check ``H = A^T Z`` and the CPD reconstructions of
    ``Q`` and ``J`` from the model's factors.
    """
    if plan.m != f.m or plan.A.shape[0] != delta(f.m, f.d):
        raise DimensionError("plan does not match the polynomial's m and d")
    Q = build_Q(f)
    J = build_J(f, plan)
    viol = max(
        (structure_violation(Q[i, j], f.m, f.d) for i in range(f.n) for j in range(f.m)),
        default=0.0,
    )
    fields: dict[str, Any] = dict(
        identity_residual=_rel(J, mode_n_product(Q, plan.A.T, 2)),
        structure_violation=viol,
        rank_A=numerical_rank(plan.A),
        rank_bound=rank_bound(f.m, f.d),
    )
    if model is not None:
        if (model.m, model.n) != (f.m, f.n) or model.d > f.d:
            raise DimensionError("model does not match the polynomial's dimensions")
        padded = model
        if model.d < f.d:
            C = np.zeros((model.r, f.d))
            C[:, : model.d] = model.C
            padded = DecoupledModel(model.W, model.V, C)
        Z = z_factors(padded)
        H = h_factors(padded, plan)
        fields.update(
            transfer_residual=_rel(H, plan.A.T @ Z),
            coefficient_cpd_residual=_rel(Q, cpd_reconstruct(CpdFactors([padded.W, padded.V, Z]))),
            jacobian_cpd_residual=_rel(
                J, cpd_reconstruct(CpdFactors([padded.W, padded.V, H]))
            ),
        )
    return VerificationRecord(**fields)

