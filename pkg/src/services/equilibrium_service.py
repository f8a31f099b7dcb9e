"""
Equilibrium service - Boundary and interior equilibria of the CLF-CBF closed loop.

Boundary equilibria of barrier i are the zeros of

    f_i(x, lam) = f(x) + lam G(x) grad h_i(x) - p G(x) grad Vbar(x),  lam >= 0,

on the barrier boundary. For quadratic CLF and barrier data the zeros follow
from the pencil P(lam) = lam M - N: with nu = x - c_i, P(lam) nu = w and the
boundary condition nu^T H_h nu = 1 reduce to the scalar Q-function
q(lam) = n(lam) / det P(lam)^2 = 1.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import root

from src.algebra.pencils import (
    Pencil,
    SignIntervals,
    definiteness_intervals,
    pencil_adjugate,
    pencil_det,
    pointwise_complement,
    poly_nullspace,
)
from src.algebra.polynomials import MatrixPoly, ScalarPoly, real_roots
from src.config import CLEARANCE_TOL, COMPAT_EPSILON, DEFINITENESS_GRID, MARGINAL_TOL, PSD_TOL
from src.models.functions import QuadraticFn, TransformedCLF
from src.models.plant import DRIFTLESS, Plant
from src.services.assumptions import check_assumption3
from src.services.qp_controller import ControllerConfig, QPInfeasibleError, solve_qp

logger = logging.getLogger(__name__)

STABLE = "Stable"
UNSTABLE = "Unstable"
MARGINAL = "Marginal"

FIELD_TOL = 1e-6
BOUNDARY_TOL = 1e-6
_FD_STEP = 1e-6


class UnsupportedDegenerateError(Exception):
    """Raised when L_g h vanishes at a boundary point."""
    pass


# ==================== Equilibrium manifold ====================

def equilibrium_field(x, lam: float, plant: Plant, clf: TransformedCLF, barrier: QuadraticFn, p: float) -> np.ndarray:
    """f_i(x, lam) = f + lam G grad h - p G grad Vbar."""
    x = np.asarray(x, dtype=float)
    G = plant.input_gram(x)
    return plant.drift(x) + G @ (lam * barrier.gradient(x) - p * clf.gradient(x))


def _gram_product_jacobian(plant: Plant, x: np.ndarray, vec: np.ndarray, hessian: np.ndarray) -> np.ndarray:
    """Jacobian of x -> G(x) v(x) given v(x) and its Jacobian."""
    J = plant.input_gram(x) @ hessian
    if not plant.constant_input:
        dG = plant.input_gram_derivatives(x)
        J = J + np.stack([dG[k] @ vec for k in range(plant.state_dim)], axis=1)
    return J


def equilibrium_jacobian(x, lam: float, plant: Plant, clf: TransformedCLF, barrier: QuadraticFn, p: float) -> np.ndarray:
    """Jacobian of f_i with respect to x."""
    x = np.asarray(x, dtype=float)
    return (
        plant.drift_jacobian(x)
        + lam * _gram_product_jacobian(plant, x, barrier.gradient(x), barrier.hessian)
        - p * _gram_product_jacobian(plant, x, clf.gradient(x), clf.hessian)
    )


# ==================== Pencil and Q-function ====================

@dataclass(frozen=True, eq=False)
class PencilSystem:
    """Pencil P(lam) = lam M - N and offset w for one barrier, in coordinates nu = x - c."""
    pencil: Pencil
    w: np.ndarray
    barrier_idx: int
    case: str
    center: np.ndarray

    def nu(self, lam: float) -> np.ndarray:
        return np.linalg.solve(self.pencil(lam), self.w)

    def point(self, lam: float) -> np.ndarray:
        return self.nu(lam) + self.center


def build_pencil(plant: Plant, clf: TransformedCLF, barrier: QuadraticFn, p: float, barrier_idx: int = 0) -> PencilSystem:
    """
    Construct the pencil of barrier ``barrier_idx``.

    Driftless: M = H_h, N = p H_Vbar. LTI: M = G H_h, N = p G H_Vbar - A.

    Raises:
        ValueError: If the plant has a state-dependent input map
        DegeneratePencilError: If the pencil is not regular
    """
    if not plant.constant_input:
        raise ValueError("Pencil construction needs a constant input map")
    c = barrier.center
    x0 = clf.center
    H_h, H_v = barrier.hessian, clf.hessian

    if plant.kind == DRIFTLESS:
        M = H_h
        N = p * H_v
        w = N @ (c - x0)
    else:
        G = plant.input_gram(c)
        M = G @ H_h
        N = p * G @ H_v - plant.A
        w = p * G @ H_v @ (c - x0) - plant.A @ (c - plant.origin)

    return PencilSystem(pencil=Pencil(M, N), w=w, barrier_idx=barrier_idx, case=plant.kind, center=c)


@dataclass(frozen=True, eq=False)
class QFunction:
    """q(lam) = n(lam) / d(lam) with d = det P^2 and z = n - d."""
    n_poly: ScalarPoly
    d_poly: ScalarPoly
    z_poly: ScalarPoly
    det_poly: ScalarPoly
    spectrum: np.ndarray
    proper: bool

    def evaluate(self, lam: float) -> float:
        return float(self.n_poly(lam) / self.d_poly(lam))


def q_function(ps: PencilSystem, barrier: QuadraticFn) -> QFunction:
    """Build the Q-function of a pencil system with exact polynomial arithmetic."""
    adj = pencil_adjugate(ps.pencil)
    adj_w = adj @ ps.w.reshape(-1, 1)
    n_poly = (adj_w.T @ barrier.hessian @ adj_w).entry(0, 0)
    det = pencil_det(ps.pencil)
    d_poly = det * det
    spectrum = real_roots(det) if det.degree >= 1 else np.zeros(0)
    return QFunction(
        n_poly=n_poly,
        d_poly=d_poly,
        z_poly=n_poly - d_poly,
        det_poly=det,
        spectrum=spectrum,
        proper=n_poly.degree < d_poly.degree,
    )


# ==================== Stability polynomial ====================

def _gradient_poly(ps: PencilSystem, barrier: QuadraticFn) -> MatrixPoly:
    """v(lam) = H_h Adj(P(lam)) w, the barrier normal scaled by det P."""
    return barrier.hessian @ (pencil_adjugate(ps.pencil) @ ps.w.reshape(-1, 1))


def stability_basis(ps: PencilSystem, barrier: QuadraticFn) -> MatrixPoly:
    """Polynomial basis R(lam) of the tangent space of the barrier along nu(lam)."""
    return poly_nullspace(_gradient_poly(ps, barrier))


def stability_polynomial(ps: PencilSystem, barrier: QuadraticFn, basis: Optional[MatrixPoly] = None) -> MatrixPoly:
    """
    S(lam) = R^T (P + P^T) R.

    Raises:
        ValueError: If the state dimension is below 2
        NullspaceDegreeExceededError: If no polynomial basis is found
    """
    if ps.pencil.n < 2:
        raise ValueError("Stability polynomial needs a state dimension of at least 2")
    R = stability_basis(ps, barrier) if basis is None else basis
    P = ps.pencil.as_matrix_poly()
    return (R.T @ (P + P.T) @ R).symmetrized()


def stability_matrix_at(ps: PencilSystem, barrier: QuadraticFn, S: MatrixPoly, R: MatrixPoly, lam: float) -> np.ndarray:
    """
    S evaluated at lam, falling back to a pointwise tangent basis where R drops rank.

    The verdict is invariant under a change of tangent basis, so the fallback
    gives the same classification.
    """
    n = ps.pencil.n
    R_at = R(lam)
    if np.linalg.matrix_rank(R_at, tol=1e-9 * max(1.0, np.max(np.abs(R_at)))) == n - 1:
        return S(lam)
    logger.debug(f"Tangent basis drops rank at lam={lam:.6g}, using pointwise complement")
    P = ps.pencil(lam)
    T = pointwise_complement(barrier.hessian @ ps.nu(lam))
    return T.T @ (P + P.T) @ T


def classify_equilibrium(lam_e: float, S, tol: float = MARGINAL_TOL) -> str:
    """
    Classify from the largest eigenvalue of S(lam_e).

    Args:
        lam_e: Multiplier of the equilibrium
        S: Stability polynomial or its value at lam_e
        tol: Relative marginal band, scaled by the Frobenius norm of S(lam_e)

    Returns:
        STABLE, UNSTABLE or MARGINAL
    """
    mat = S(lam_e) if isinstance(S, MatrixPoly) else np.atleast_2d(np.asarray(S, dtype=float))
    mat = 0.5 * (mat + mat.T)
    top = float(np.max(np.linalg.eigvalsh(mat)))
    band = tol * np.linalg.norm(mat, "fro")
    if top > band:
        return UNSTABLE
    if top < -band:
        return STABLE
    return MARGINAL


# ==================== Equilibrium points ====================

@dataclass
class EquilibriumPoint:
    """Closed-loop equilibrium with its verdict and diagnostics."""
    x_e: np.ndarray
    lambda_e: float
    barrier_idx: Optional[int]
    verdict: str
    field_residual: float = math.nan
    h_residual: float = 0.0
    s_min_eig: float = math.nan
    s_max_eig: float = math.nan
    jac_max_real: float = math.nan
    multiplier_gap: float = math.nan
    verified: bool = False

    @property
    def is_boundary(self) -> bool:
        return self.barrier_idx is not None


def _closed_loop_residual(x, plant, clf, barriers, cfg) -> Tuple[float, float, np.ndarray]:
    """Field norm, CLF multiplier gap lambda_0 - p gamma(V), and the field itself."""
    outcome = solve_qp(x, plant, clf, barriers, cfg)
    field_value = plant.open_loop(x, outcome.u)
    gap = float(outcome.lambdas[0] - cfg.p * cfg.gamma(outcome.clf_value))
    return float(np.linalg.norm(field_value)), gap, field_value


def closed_loop_jacobian_fd(x, plant, clf, barriers, cfg) -> np.ndarray:
    """Central finite-difference Jacobian of the closed-loop field."""
    x = np.asarray(x, dtype=float)
    n = x.size
    J = np.zeros((n, n))
    for k in range(n):
        h = _FD_STEP * (1.0 + abs(x[k]))
        e = np.zeros(n)
        e[k] = h
        f_plus = plant.open_loop(x + e, solve_qp(x + e, plant, clf, barriers, cfg).u)
        f_minus = plant.open_loop(x - e, solve_qp(x - e, plant, clf, barriers, cfg).u)
        J[:, k] = (f_plus - f_minus) / (2.0 * h)
    return J


def degenerate_roots(ps: PencilSystem, qf: QFunction, clearance: float = CLEARANCE_TOL) -> List[float]:
    """Nonnegative roots of z that sit on the pencil spectrum."""
    out = []
    for lam in _nonnegative_roots(qf):
        if _near_spectrum(lam, qf.spectrum, clearance):
            out.append(lam)
    return out


def _nonnegative_roots(qf: QFunction) -> List[float]:
    if qf.z_poly.is_zero or qf.z_poly.degree < 1:
        return []
    roots = [float(r) for r in real_roots(qf.z_poly) if r >= -1e-12]
    deduped = []
    for r in roots:
        if not deduped or abs(r - deduped[-1]) > 1e-7 * (1.0 + abs(r)):
            deduped.append(max(r, 0.0))
    return deduped


def _near_spectrum(lam: float, spectrum: np.ndarray, clearance: float) -> bool:
    return bool(np.any(np.abs(spectrum - lam) <= clearance * (1.0 + abs(lam))))


def boundary_equilibria(
    ps: PencilSystem,
    barrier: QuadraticFn,
    clf: TransformedCLF,
    plant: Plant,
    cfg: ControllerConfig,
    qf: Optional[QFunction] = None,
    barriers: Optional[Sequence[QuadraticFn]] = None,
    clearance: float = CLEARANCE_TOL,
) -> List[EquilibriumPoint]:
    """
    Boundary equilibria of one barrier with their stability verdicts.

    Each admissible root of z gives x_e = P(lam_e)^-1 w + c. The point is then
    checked against the actual controller: the closed-loop field must vanish
    and x_e must lie on the barrier boundary. Points failing the check stay in
    the list with ``verified=False``.

    Args:
        ps: Pencil system of the barrier
        barrier: The barrier
        clf: Transformed CLF
        plant: Plant
        cfg: Controller configuration
        qf: Precomputed Q-function
        barriers: Barrier set used by the verifying controller (defaults to this barrier)
        clearance: Relative distance below which a root counts as on the spectrum

    Returns:
        List of EquilibriumPoint sorted by lam_e
    """
    qf = q_function(ps, barrier) if qf is None else qf
    barriers = [barrier] if barriers is None else list(barriers)

    S = R = None
    if ps.pencil.n >= 2:
        R = stability_basis(ps, barrier)
        S = stability_polynomial(ps, barrier, basis=R)

    points = []
    for lam in _nonnegative_roots(qf):
        if _near_spectrum(lam, qf.spectrum, clearance):
            logger.warning(f"⚠️ Barrier {ps.barrier_idx + 1}: root lam={lam:.6g} lies on the pencil spectrum, skipped")
            continue

        x_e = ps.point(lam)
        if S is not None:
            S_at = stability_matrix_at(ps, barrier, S, R, lam)
            eig = np.linalg.eigvalsh(0.5 * (S_at + S_at.T))
            verdict = classify_equilibrium(lam, S_at)
        else:
            # scalar state: the barrier boundary is a point, nothing tangent to move along
            eig = np.zeros(1)
            verdict = MARGINAL

        point = EquilibriumPoint(
            x_e=x_e,
            lambda_e=lam,
            barrier_idx=ps.barrier_idx,
            verdict=verdict,
            h_residual=abs(barrier.value(x_e)),
            s_min_eig=float(eig[0]),
            s_max_eig=float(eig[-1]),
        )
        _verify_point(point, plant, clf, barriers, cfg)
        points.append(point)

    return sorted(points, key=lambda pt: pt.lambda_e)


def _verify_point(point: EquilibriumPoint, plant, clf, barriers, cfg) -> None:
    x_e = point.x_e
    try:
        residual, gap, _ = _closed_loop_residual(x_e, plant, clf, barriers, cfg)
    except QPInfeasibleError:
        logger.warning(f"⚠️ QP infeasible at candidate equilibrium {x_e.tolist()}")
        return
    scale = 1.0 + np.linalg.norm(cfg.p * plant.input_gram(x_e) @ clf.gradient(x_e))
    point.field_residual = residual
    point.multiplier_gap = gap
    point.verified = residual <= FIELD_TOL * scale and point.h_residual <= BOUNDARY_TOL
    try:
        J = closed_loop_jacobian_fd(x_e, plant, clf, barriers, cfg)
        point.jac_max_real = float(np.max(np.linalg.eigvals(J).real))
    except QPInfeasibleError:
        pass
    if not point.verified:
        logger.warning(f"⚠️ Candidate equilibrium {x_e.tolist()} failed verification (residual {residual:.3e})")


# ==================== Boundary Jacobian ====================

@dataclass(frozen=True, eq=False)
class BoundaryFrame:
    """G-orthogonal frame of a boundary point and the pieces of its Jacobian."""
    z1: np.ndarray
    z2: np.ndarray
    eta: float
    Z: np.ndarray
    N1: np.ndarray
    Psi: np.ndarray
    J_i: np.ndarray


def _g_inner(a: np.ndarray, b: np.ndarray, G: np.ndarray) -> float:
    return float(a @ G @ b)


def boundary_frame(x_e, lam_e: float, plant: Plant, clf: TransformedCLF, barrier: QuadraticFn, cfg: ControllerConfig) -> BoundaryFrame:
    """
    Frame z1, z2, eta and the matrices N1, Psi, J_i at a boundary point.

    Raises:
        UnsupportedDegenerateError: If L_g h vanishes at x_e
    """
    x_e = np.asarray(x_e, dtype=float)
    g = plant.input_matrix(x_e)
    G = g @ g.T
    p = cfg.p
    grad_h = barrier.gradient(x_e)
    if np.linalg.norm(g.T @ grad_h) <= 1e-8:
        raise UnsupportedDegenerateError(f"L_g h vanishes at {x_e.tolist()}")

    V, grad_v = clf.recover(x_e)
    z1 = grad_h / math.sqrt(_g_inner(grad_h, grad_h, G))
    kappa = _g_inner(grad_v, z1, G)
    z2 = grad_v - kappa * z1
    eta = 1.0 / (1.0 + p * _g_inner(z2, z2, G))

    gamma_v = cfg.gamma(V)
    gamma_prime = cfg.gamma.derivative(V)
    alpha_prime = cfg.alpha.derivative(barrier.value(x_e))
    Psi = np.array([[alpha_prime, 0.0], [kappa * (gamma_prime - alpha_prime), gamma_prime]])

    J_i = (
        plant.drift_jacobian(x_e)
        + lam_e * _gram_product_jacobian(plant, x_e, grad_h, barrier.hessian)
        - p * gamma_v * _gram_product_jacobian(plant, x_e, grad_v, clf.recovered_hessian(x_e))
    )
    return BoundaryFrame(
        z1=z1,
        z2=z2,
        eta=eta,
        Z=np.column_stack([z1, z2]),
        N1=np.diag([1.0, p * eta]),
        Psi=Psi,
        J_i=J_i,
    )


def boundary_jacobian(x_e, lam_e: float, plant: Plant, clf: TransformedCLF, barrier: QuadraticFn, cfg: ControllerConfig) -> Tuple[np.ndarray, BoundaryFrame]:
    """Closed-loop Jacobian (I - G Z N1 Z^T) J_i - G Z N1 Psi Z^T at a boundary equilibrium."""
    frame = boundary_frame(x_e, lam_e, plant, clf, barrier, cfg)
    G = plant.input_gram(x_e)
    GZN = G @ frame.Z @ frame.N1
    J_cl = (np.eye(frame.Z.shape[0]) - GZN @ frame.Z.T) @ frame.J_i - GZN @ frame.Psi @ frame.Z.T
    return J_cl, frame


# ==================== Interior equilibria ====================

def interior_equilibria(
    plant: Plant,
    clf: TransformedCLF,
    cfg: ControllerConfig,
    barriers: Sequence[QuadraticFn] = (),
    bounds: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
    grid: int = 25,
    dedup: float = 1e-5,
) -> List[EquilibriumPoint]:
    """
    Zeros of f(x) - p G(x) grad Vbar(x) inside the safe set.

    Seeds are a grid over ``bounds`` restricted to the safe set; each seed runs
    a Levenberg-Marquardt root search. The CLF minimum is always a solution.
    """
    n = plant.state_dim
    x0 = clf.center
    if bounds is None:
        span = 10.0 * (1.0 + np.max(np.abs(x0)))
        bounds = (x0 - span, x0 + span)
    lower, upper = (np.asarray(b, dtype=float) for b in bounds)

    def residual(x):
        return plant.drift(x) - cfg.p * plant.input_gram(x) @ clf.gradient(x)

    def jacobian(x):
        return plant.drift_jacobian(x) - cfg.p * _gram_product_jacobian(plant, x, clf.gradient(x), clf.hessian)

    axes = [np.linspace(lo, hi, grid) for lo, hi in zip(lower, upper)]
    seeds = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)

    found: List[np.ndarray] = [np.array(x0)]
    for seed in seeds:
        if any(b.value(seed) < 0 for b in barriers):
            continue
        sol = root(residual, seed, jac=jacobian, method="lm")
        x = sol.x
        scale = 1.0 + np.linalg.norm(x)
        if np.linalg.norm(residual(x)) > 1e-9 * scale:
            continue
        if any(b.value(x) < 0 for b in barriers):
            continue
        if all(np.linalg.norm(x - y) > dedup for y in found):
            found.append(x)

    points = []
    for x in found:
        J = jacobian(x)
        top = float(np.max(np.linalg.eigvals(J).real))
        verdict = STABLE if top < -MARGINAL_TOL else UNSTABLE if top > MARGINAL_TOL else MARGINAL
        points.append(EquilibriumPoint(
            x_e=x,
            lambda_e=0.0,
            barrier_idx=None,
            verdict=verdict,
            field_residual=float(np.linalg.norm(residual(x))),
            jac_max_real=top,
            verified=True,
        ))
    if len(points) > 1:
        logger.warning(f"⚠️ {len(points) - 1} interior equilibria besides the CLF minimum")
    return points


# ==================== Compatibility ====================

@dataclass(frozen=True)
class CompatibilityBarrier:
    """Barrier certificate of compatibility: value >= 0 certifies it."""
    value: float
    scaled: float
    sigma_minus: float
    monotone_ok: bool
    intervals: SignIntervals = field(repr=False)


def default_lambda_max(qf: QFunction) -> float:
    """2 (1 + max |spectrum| + max |roots of z|)."""
    reach = 0.0
    if qf.spectrum.size:
        reach = max(reach, float(np.max(np.abs(qf.spectrum))))
    if not qf.z_poly.is_zero and qf.z_poly.degree >= 1:
        zr = real_roots(qf.z_poly)
        if zr.size:
            reach = max(reach, float(np.max(np.abs(zr))))
    return 2.0 * (1.0 + reach)


def _monotone(S: MatrixPoly, lam_max: float, grid: int) -> bool:
    dS = S.derivative()
    lead = dS.leading_coefficient()
    lead = 0.5 * (lead + lead.T)
    if np.min(np.linalg.eigvalsh(lead)) < -PSD_TOL * max(1.0, np.max(np.abs(lead))):
        return False
    for lam in np.linspace(0.0, lam_max, grid):
        mat = dS(lam)
        mat = 0.5 * (mat + mat.T)
        if np.min(np.linalg.eigvalsh(mat)) < -PSD_TOL * max(1.0, np.linalg.norm(mat, "fro")):
            return False
    return True


def compatibility_barrier(
    ps: PencilSystem,
    barrier: QuadraticFn,
    epsilon: float = COMPAT_EPSILON,
    qf: Optional[QFunction] = None,
    S: Optional[MatrixPoly] = None,
    lam_max: Optional[float] = None,
    grid: int = DEFINITENESS_GRID,
) -> CompatibilityBarrier:
    """
    Minimum of n(lam) - epsilon d(lam) over the nonnegative part of the first NSD interval of S.

    Args:
        ps: Pencil system
        barrier: The barrier
        epsilon: Margin, must exceed 1
        qf: Precomputed Q-function
        S: Precomputed stability polynomial
        lam_max: Window for sampling (default from the pencil and z roots)
        grid: Number of samples

    Returns:
        CompatibilityBarrier, value +inf when the interval is empty

    Raises:
        ValueError: If epsilon <= 1
    """
    if not epsilon > 1.0:
        raise ValueError(f"epsilon must exceed 1, got {epsilon}")
    qf = q_function(ps, barrier) if qf is None else qf
    S = stability_polynomial(ps, barrier) if S is None else S
    lam_max = default_lambda_max(qf) if lam_max is None else lam_max

    intervals = definiteness_intervals(S, lam_max, grid=grid)
    sigma_minus = intervals.sigma_minus
    monotone_ok = _monotone(S, lam_max, grid)

    if sigma_minus < 0:
        return CompatibilityBarrier(math.inf, math.inf, sigma_minus, monotone_ok, intervals)

    upper = lam_max if math.isinf(sigma_minus) else sigma_minus
    b_poly = qf.n_poly - epsilon * qf.d_poly
    candidates = [0.0, upper]
    if not b_poly.is_zero and b_poly.degree >= 2:
        candidates += [float(r) for r in real_roots(b_poly.derivative()) if 0.0 <= r <= upper]
    value = float(min(b_poly(lam) for lam in candidates))
    scale = max(1.0, float(np.max(np.abs(qf.d_poly.coeffs))))
    return CompatibilityBarrier(value, value / scale, sigma_minus, monotone_ok, intervals)


@dataclass
class CompatibilityEvidence:
    """Outcome of the exact compatibility check for one barrier."""
    compatible: bool
    points: List[EquilibriumPoint] = field(default_factory=list)
    interior: List[EquilibriumPoint] = field(default_factory=list)
    degenerate: List[float] = field(default_factory=list)


def is_compatible(
    plant: Plant,
    clf: TransformedCLF,
    barrier: QuadraticFn,
    cfg: ControllerConfig,
    barrier_idx: int = 0,
    interior_bounds=None,
) -> CompatibilityEvidence:
    """
    True iff every verified boundary equilibrium is unstable and the CLF minimum is the only interior one.

    When the CLF condition holds on the drift (always for driftless plants),
    the interior set is taken to be the CLF minimum without searching.
    """
    ps = build_pencil(plant, clf, barrier, cfg.p, barrier_idx)
    qf = q_function(ps, barrier)
    points = boundary_equilibria(ps, barrier, clf, plant, cfg, qf=qf)

    if check_assumption3(plant, clf):
        interior = [EquilibriumPoint(x_e=np.array(clf.center), lambda_e=0.0, barrier_idx=None, verdict=STABLE, verified=True)]
    else:
        interior = interior_equilibria(plant, clf, cfg, [barrier], bounds=interior_bounds)

    boundary_ok = all(pt.verdict == UNSTABLE for pt in points if pt.verified)
    compatible = boundary_ok and len(interior) == 1
    return CompatibilityEvidence(
        compatible=compatible,
        points=points,
        interior=interior,
        degenerate=degenerate_roots(ps, qf),
    )


__all__ = [
    "STABLE",
    "UNSTABLE",
    "MARGINAL",
    "UnsupportedDegenerateError",
    "equilibrium_field",
    "equilibrium_jacobian",
    "PencilSystem",
    "build_pencil",
    "QFunction",
    "q_function",
    "stability_basis",
    "stability_polynomial",
    "stability_matrix_at",
    "classify_equilibrium",
    "EquilibriumPoint",
    "closed_loop_jacobian_fd",
    "degenerate_roots",
    "boundary_equilibria",
    "BoundaryFrame",
    "boundary_frame",
    "boundary_jacobian",
    "interior_equilibria",
    "CompatibilityBarrier",
    "default_lambda_max",
    "compatibility_barrier",
    "CompatibilityEvidence",
    "is_compatible",
]
