"""
Compatibilization service - Nearest CLF Hessian that makes a barrier compatible.

Solves

    min |H - H_ref|_F^2
    s.t. H A + A^T H <= 0              (LTI plants)
         B(q) >= 0                     (compatibility barrier)
         S'(lam) >= 0                  (monotone stability polynomial)

over the lower-triangular factor of H with an exterior penalty sequence and a
BFGS inner loop on finite-difference gradients. Every constraint is rebuilt
from scratch at each evaluation since the pencil depends on H.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import minimize

from src.algebra.pencils import DegeneratePencilError, NullspaceDegreeExceededError
from src.config import COMPAT_EPSILON, COMPAT_ROUNDS, DEFINITENESS_GRID, PSD_TOL, SHAPE_PD_FLOOR
from src.models.functions import QuadraticFn, TransformedCLF
from src.models.plant import Plant
from src.services.equilibrium_service import (
    build_pencil,
    compatibility_barrier,
    default_lambda_max,
    is_compatible,
    q_function,
    stability_polynomial,
)
from src.services.qp_controller import ControllerConfig
from src.services.shape_controller import hessian_from_shape, shape_from_hessian

logger = logging.getLogger(__name__)

CERT_TOL = 1e-8
PENALTY_START = 1e2
PENALTY_GROWTH = 10.0
PENALTY_MARGIN = 1e-4
_FAILED = 1e3
# coarser definiteness sampling inside the optimizer loop
OPT_GRID = 100

REFERENCE = "reference"
CERTIFICATE_ONLY = "certificate_only"
COMPATIBILIZED = "compatibilized"


class CompatibilizationFailedError(Exception):
    """Raised when no penalty round produces a compatible Hessian."""

    def __init__(self, message: str, best_hessian: Optional[np.ndarray] = None, violation: float = math.inf):
        super().__init__(message)
        self.best_hessian = best_hessian
        self.violation = violation


@dataclass
class CompatCertificate:
    """Constraint values of a candidate Hessian."""
    barrier: float
    barrier_raw: float
    sigma_minus: float
    monotone_ok: bool
    lmi_max_eig: float
    monotone_violation: float = 0.0
    exact: Optional[bool] = None

    @property
    def satisfied(self) -> bool:
        return self.barrier >= -CERT_TOL and self.monotone_ok and self.lmi_max_eig <= CERT_TOL


@dataclass
class CompatSolution:
    """Compatible Hessian with its certificate and optimizer statistics."""
    H: np.ndarray
    objective: float
    cert: CompatCertificate
    iterations: int = 0
    converged: bool = True
    round_objectives: List[float] = field(default_factory=list)
    # REFERENCE, CERTIFICATE_ONLY or COMPATIBILIZED
    status: str = COMPATIBILIZED


def eccentricity(H) -> float:
    """Eccentricity of the 2-D level ellipses of a PD quadratic form."""
    eig = np.linalg.eigvalsh(np.asarray(H, dtype=float))
    return math.sqrt(max(0.0, 1.0 - eig[0] / eig[-1]))


def lmi_max_eig(plant: Plant, H: np.ndarray) -> float:
    """Largest eigenvalue of H A + A^T H; zero for driftless plants."""
    if not plant.is_lti:
        return 0.0
    lyap = H @ plant.A + plant.A.T @ H
    return float(np.max(np.linalg.eigvalsh(0.5 * (lyap + lyap.T))))


def _monotone_violation(S, lam_max: float, grid: int) -> float:
    dS = S.derivative()
    worst = 0.0
    for lam in np.linspace(0.0, lam_max, grid):
        mat = dS(lam)
        mat = 0.5 * (mat + mat.T)
        scale = max(1.0, np.linalg.norm(mat, "fro"))
        worst = max(worst, -float(np.min(np.linalg.eigvalsh(mat))) / scale)
    return worst


def evaluate_certificate(
    H,
    plant: Plant,
    clf: TransformedCLF,
    barrier: QuadraticFn,
    cfg: ControllerConfig,
    epsilon: float = COMPAT_EPSILON,
    grid: int = DEFINITENESS_GRID,
) -> CompatCertificate:
    """Compute B(q), sigma_minus, the monotonicity check and the drift LMI for a candidate Hessian."""
    H = np.asarray(H, dtype=float)
    lmi = lmi_max_eig(plant, H)
    try:
        candidate = clf.with_hessian(H)
        ps = build_pencil(plant, candidate, barrier, cfg.p)
        qf = q_function(ps, barrier)
        S = stability_polynomial(ps, barrier)
        lam_max = default_lambda_max(qf)
        cb = compatibility_barrier(ps, barrier, epsilon, qf=qf, S=S, lam_max=lam_max, grid=grid)
        mono = 0.0 if cb.monotone_ok else max(_monotone_violation(S, lam_max, grid), PSD_TOL)
    except (DegeneratePencilError, NullspaceDegreeExceededError, np.linalg.LinAlgError, ValueError) as e:
        logger.debug(f"Certificate evaluation failed: {e}")
        return CompatCertificate(-_FAILED, -_FAILED, math.nan, False, lmi, monotone_violation=_FAILED)
    return CompatCertificate(
        barrier=cb.scaled,
        barrier_raw=cb.value,
        sigma_minus=cb.sigma_minus,
        monotone_ok=cb.monotone_ok,
        lmi_max_eig=lmi,
        monotone_violation=mono,
    )


def _violation(cert: CompatCertificate, H: np.ndarray, margin: float) -> float:
    barrier = min(cert.barrier, _FAILED)
    terms = [
        max(0.0, margin - barrier),
        max(0.0, cert.lmi_max_eig + margin),
        cert.monotone_violation,
        max(0.0, 10.0 * SHAPE_PD_FLOOR - float(np.linalg.eigvalsh(H)[0])),
    ]
    return float(sum(t * t for t in terms))


def _fd_gradient(fn, theta: np.ndarray) -> np.ndarray:
    base = fn(theta)
    grad = np.zeros_like(theta)
    for k in range(theta.size):
        h = 1e-6 * (1.0 + abs(theta[k]))
        step = theta.copy()
        step[k] += h
        grad[k] = (fn(step) - base) / h
    return grad


def compatibilize(
    H_ref,
    plant: Plant,
    clf: TransformedCLF,
    barrier: QuadraticFn,
    cfg: ControllerConfig,
    epsilon: float = COMPAT_EPSILON,
    rounds: int = COMPAT_ROUNDS,
    barrier_idx: int = 0,
) -> CompatSolution:
    """
    Nearest Hessian (Frobenius) satisfying the drift LMI, B(q) >= 0 and S' >= 0.

    Args:
        H_ref: Reference CLF Hessian, positive definite
        plant: Plant
        clf: Reference transformed CLF (center and gain are kept)
        barrier: Barrier to make compatible
        cfg: Controller configuration
        epsilon: Margin of the compatibility barrier
        rounds: Maximum number of penalty rounds
        barrier_idx: Index used in log messages

    Returns:
        CompatSolution; H_ref itself when it already satisfies every constraint,
        with status CERTIFICATE_ONLY if the exact compatibility check disagrees

    Raises:
        ValueError: If H_ref is not positive definite
        CompatibilizationFailedError: If no round yields a verified compatible Hessian
    """
    H_ref = np.asarray(H_ref, dtype=float)
    if np.linalg.eigvalsh(0.5 * (H_ref + H_ref.T))[0] <= 0:
        raise ValueError("Reference Hessian must be positive definite")
    label = barrier.name or f"h{barrier_idx + 1}"

    ref_cert = evaluate_certificate(H_ref, plant, clf, barrier, cfg, epsilon)
    if ref_cert.satisfied:
        ref_cert.exact = is_compatible(plant, clf.with_hessian(H_ref), barrier, cfg, barrier_idx).compatible
        if ref_cert.exact:
            logger.info(f"✅ Reference CLF already compatible with {label}")
            status = REFERENCE
        else:
            logger.warning(f"⚠️ Reference CLF satisfies the certificate for {label} but fails the exact check")
            status = CERTIFICATE_ONLY
        return CompatSolution(H=H_ref, objective=0.0, cert=ref_cert, round_objectives=[0.0], status=status)

    def objective(theta):
        H = hessian_from_shape(theta)
        return float(np.sum((H - H_ref) ** 2))

    state = {"rho": PENALTY_START, "candidate": None, "candidate_obj": math.inf}

    def penalized(theta):
        H = hessian_from_shape(theta)
        cert = evaluate_certificate(H, plant, clf, barrier, cfg, epsilon, grid=OPT_GRID)
        obj = float(np.sum((H - H_ref) ** 2))
        if cert.satisfied and obj < state["candidate_obj"]:
            state["candidate"], state["candidate_obj"] = theta.copy(), obj
        return obj + state["rho"] * _violation(cert, H, PENALTY_MARGIN)

    theta = shape_from_hessian(H_ref)
    best: Optional[CompatSolution] = None
    iterations = 0
    round_objectives: List[float] = []
    last_violation = math.inf

    for k in range(rounds):
        res = minimize(
            penalized,
            theta,
            jac=lambda t: _fd_gradient(penalized, t),
            method="BFGS",
            options={"maxiter": 100, "gtol": 1e-9},
        )
        theta = res.x
        iterations += int(res.nit)
        H_round = hessian_from_shape(theta)
        last_violation = _violation(
            evaluate_certificate(H_round, plant, clf, barrier, cfg, epsilon, grid=OPT_GRID), H_round, 0.0
        )
        logger.debug(f"Round {k + 1}: rho={state['rho']:.1e} objective={objective(theta):.6g} violation={last_violation:.3e}")

        if state["candidate"] is not None and (best is None or state["candidate_obj"] < best.objective):
            H_cand = hessian_from_shape(state["candidate"])
            evidence = is_compatible(plant, clf.with_hessian(H_cand), barrier, cfg, barrier_idx)
            if evidence.compatible:
                cert = evaluate_certificate(H_cand, plant, clf, barrier, cfg, epsilon)
                cert.exact = True
                best = CompatSolution(H=H_cand, objective=state["candidate_obj"], cert=cert)
            else:
                logger.warning(f"⚠️ Certified candidate for {label} failed the exact check")
        if best is not None:
            round_objectives.append(best.objective)
            if last_violation == 0.0:
                break
        state["rho"] *= PENALTY_GROWTH

    if best is None:
        raise CompatibilizationFailedError(
            f"No compatible Hessian found for {label} after {rounds} rounds",
            best_hessian=hessian_from_shape(theta),
            violation=last_violation,
        )

    best.iterations = iterations
    best.converged = last_violation == 0.0
    best.round_objectives = round_objectives
    logger.info(
        f"✅ Compatible Hessian for {label}: objective {best.objective:.4g}, "
        f"eigenvalues {np.round(np.linalg.eigvalsh(best.H), 4).tolist()}"
    )
    return best


__all__ = [
    "CERT_TOL",
    "REFERENCE",
    "CERTIFICATE_ONLY",
    "COMPATIBILIZED",
    "CompatibilizationFailedError",
    "CompatCertificate",
    "CompatSolution",
    "eccentricity",
    "lmi_max_eig",
    "evaluate_certificate",
    "compatibilize",
]
