"""
Assumption service - Validate the standing assumptions on CLF, barriers and plant.
"""

import logging
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from src.config import PSD_TOL
from src.models.functions import QuadraticFn, TransformedCLF
from src.models.plant import Plant

logger = logging.getLogger(__name__)

ANGULAR_SAMPLES = 720
SEPARATION_MARGIN = 1e-6


class UnsupportedGeometryError(Exception):
    """Raised when a barrier has an unbounded unsafe set."""
    pass


def check_assumption1(clf_center, barriers: Sequence[QuadraticFn]) -> bool:
    """True iff the CLF minimum lies in the safe set of every barrier."""
    x0 = np.asarray(clf_center, dtype=float)
    for b in barriers:
        if b.value(x0) < 0:
            logger.warning(f"⚠️ CLF minimum lies inside unsafe set of barrier '{b.name}'")
            return False
    return True


def _ellipsoid_factor(b: QuadraticFn) -> np.ndarray:
    """Matrix T with D^T H D = 1 on the boundary for D = T s, |s| = 1."""
    eigvals, eigvecs = np.linalg.eigh(b.hessian)
    if eigvals[0] <= PSD_TOL * max(1.0, eigvals[-1]):
        raise UnsupportedGeometryError(f"Barrier '{b.name}' has an unbounded unsafe set")
    return eigvecs @ np.diag(1.0 / np.sqrt(eigvals))


def _min_over_boundary(b_i: QuadraticFn, b_j: QuadraticFn, seed: int = 0) -> float:
    """Smallest value of h_j on the boundary ellipsoid of barrier i."""
    T = _ellipsoid_factor(b_i)
    n = b_i.dim

    if n == 2:
        theta = np.linspace(0.0, 2.0 * np.pi, ANGULAR_SAMPLES, endpoint=False)
        circle = np.stack([np.cos(theta), np.sin(theta)])
        points = b_i.center[:, None] + T @ circle
        return float(min(b_j.value(points[:, k]) for k in range(points.shape[1])))

    # BFGS over s / |s|, multiple starts
    rng = np.random.default_rng(seed)
    starts = rng.normal(size=(8 * n, n))

    def objective(s):
        s = s / np.linalg.norm(s)
        return b_j.value(b_i.center + T @ s)

    best = np.inf
    for s0 in starts:
        res = minimize(objective, s0, method="BFGS")
        best = min(best, float(res.fun))
    return best


def check_assumption2(barriers: Sequence[QuadraticFn], seed: int = 0) -> bool:
    """
    Pairwise disjointness of the barrier unsafe sets.

    Sampling-based sufficient test: the boundary of each unsafe set must keep
    every other barrier strictly positive. ``seed`` drives the multistart search
    in three or more dimensions.

    Raises:
        UnsupportedGeometryError: If a barrier Hessian is singular
    """
    for b in barriers:
        _ellipsoid_factor(b)
    for i, b_i in enumerate(barriers):
        for j, b_j in enumerate(barriers):
            if i == j:
                continue
            # center of j inside i also counts as overlap
            if b_i.value(b_j.center) <= 0:
                return False
            if _min_over_boundary(b_i, b_j, seed=seed) <= SEPARATION_MARGIN:
                logger.warning(f"⚠️ Barriers '{b_i.name}' and '{b_j.name}' overlap")
                return False
    return True


def check_assumption3(plant: Plant, clf: TransformedCLF) -> bool:
    """
    CLF condition on the drift.

    LTI plants need H A + A^T H to be negative semidefinite; driftless plants
    satisfy it trivially.
    """
    if not plant.is_lti:
        return True
    H = clf.hessian
    lyap = H @ plant.A + plant.A.T @ H
    top = float(np.max(np.linalg.eigvalsh(0.5 * (lyap + lyap.T))))
    ok = top <= PSD_TOL * np.linalg.norm(H, 2) * max(1.0, np.linalg.norm(plant.A, 2))
    if not ok:
        logger.warning(f"⚠️ CLF condition fails on the drift: max eigenvalue {top:.3e}")
    return ok


__all__ = [
    "UnsupportedGeometryError",
    "check_assumption1",
    "check_assumption2",
    "check_assumption3",
]
