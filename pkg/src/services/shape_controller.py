"""
Shape controller service - Adaptive CLF geometry driven by a secondary QP.

The CLF Hessian is parametrized as H(pi) = L(pi)^T L(pi) with L lower
triangular and pi its row-major lower-triangle entries. The shape state
follows pi' = u_pi, where u_pi solves a one-constraint QP that decreases
V_pi = 0.5 |H(pi) - H_sel|_F^2 towards the target selected by the region
of the state.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from src.config import REGION_HYSTERESIS, SHAPE_GAMMA, SHAPE_P, SHAPE_PD_FLOOR
from src.models.functions import QuadraticFn, TransformedCLF
from src.models.plant import Plant
from src.services.qp_controller import (
    INTERIOR,
    SINGLE,
    ClosedLoop,
    ControllerConfig,
    QPOutcome,
    Region,
    region_of,
    solve_active_set,
    solve_qp,
)

logger = logging.getLogger(__name__)


class ShapeDegenerateError(Exception):
    """Raised when H(pi) falls below the curvature floor."""
    pass


# ==================== Parametrization ====================

def shape_size(n: int) -> int:
    return n * (n + 1) // 2


def shape_dim(size: int) -> int:
    """State dimension n with n(n+1)/2 == size."""
    n = int(round((math.sqrt(8 * size + 1) - 1) / 2))
    if shape_size(n) != size:
        raise ValueError(f"{size} is not a triangular number")
    return n


def factor_from_shape(pi) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    n = shape_dim(pi.size)
    L = np.zeros((n, n))
    L[np.tril_indices(n)] = pi
    return L


def hessian_from_shape(pi) -> np.ndarray:
    """H(pi) = L(pi)^T L(pi)."""
    L = factor_from_shape(pi)
    return L.T @ L


def shape_from_hessian(H, tol: float = 1e-12) -> np.ndarray:
    """
    Lower-triangular factor entries of a PSD matrix, with nonnegative diagonal.

    Raises:
        ValueError: If H has a negative eigenvalue
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    H = 0.5 * (H + H.T)
    n = H.shape[0]
    s, V = np.linalg.eigh(H)
    if s[0] < -tol * max(1.0, abs(s[-1])):
        raise ValueError(f"Hessian has a negative eigenvalue {s[0]:.3e}")
    F = np.diag(np.sqrt(np.clip(s, 0.0, None))) @ V.T
    J = np.eye(n)[::-1]
    _, R = np.linalg.qr(F @ J)
    L = J @ R @ J
    signs = np.where(np.diag(L) < 0, -1.0, 1.0)
    L = signs[:, None] * L
    return L[np.tril_indices(n)]


def shape_lyapunov(pi, H_target) -> Tuple[float, np.ndarray]:
    """
    V_pi = 0.5 |H(pi) - H_target|_F^2 and its gradient over pi.

    dV/dL = 2 L (H - H_target), read off at the lower-triangle entries.
    """
    L = factor_from_shape(pi)
    E = L.T @ L - np.asarray(H_target, dtype=float)
    value = 0.5 * float(np.sum(E * E))
    grad = 2.0 * L @ E
    return value, grad[np.tril_indices(L.shape[0])]


# ==================== Shape QP ====================

@dataclass(frozen=True)
class ShapeStep:
    u: np.ndarray
    delta: float
    target: int
    value: float


def select_target(region: Region) -> int:
    """Index into [H_ref, H_1, ..., H_N]: H_i inside S_i, H_ref elsewhere."""
    if region.kind == SINGLE:
        return region.barriers[0] + 1
    return 0


def shape_qp_step(
    pi,
    region: Region,
    targets: Sequence[np.ndarray],
    p_shape: float = SHAPE_P,
    gamma_shape: float = SHAPE_GAMMA,
) -> ShapeStep:
    """
    Solve min |u|^2 + p delta^2 s.t. grad V_pi^T u + gamma V_pi <= delta for the selected target.

    Args:
        pi: Current shape state
        region: Region of the plant state
        targets: Hessians [H_ref, H_1, ..., H_N]
        p_shape: Slack penalty
        gamma_shape: Decay gain

    Returns:
        ShapeStep with the shape input, slack and selected target
    """
    pi = np.asarray(pi, dtype=float)
    idx = select_target(region)
    value, grad = shape_lyapunov(pi, targets[idx])
    sol = solve_active_set(
        np.concatenate([np.ones(pi.size), [p_shape]]),
        np.concatenate([grad, [-1.0]]).reshape(1, -1),
        np.array([-gamma_shape * value]),
    )
    return ShapeStep(u=sol.z[: pi.size], delta=float(sol.z[-1]), target=idx, value=value)


class RegionFilter:
    """
    Hysteresis on region switches.

    A new target region must be observed for ``hysteresis`` consecutive
    updates before it replaces the current one. Only single-barrier regions
    select a target; everything else counts as interior.
    """

    def __init__(self, hysteresis: int = REGION_HYSTERESIS):
        self.hysteresis = hysteresis
        self.current = Region(INTERIOR)
        self._candidate: Optional[Region] = None
        self._count = 0

    def update(self, region: Region) -> Region:
        target = region if region.kind == SINGLE else Region(INTERIOR)
        if target == self.current:
            self._candidate, self._count = None, 0
            return self.current
        if target == self._candidate:
            self._count += 1
        else:
            self._candidate, self._count = target, 1
        if self._count >= self.hysteresis:
            logger.debug(f"Region switch {self.current.label} -> {target.label}")
            self.current = target
            self._candidate, self._count = None, 0
        return self.current


# ==================== Adaptive closed loop ====================

class AdaptiveLoop:
    """Plant state and shape state integrated together under both QPs."""

    def __init__(
        self,
        loop: ClosedLoop,
        targets: Sequence[np.ndarray],
        p_shape: float = SHAPE_P,
        gamma_shape: float = SHAPE_GAMMA,
        pd_floor: float = SHAPE_PD_FLOOR,
        hysteresis: int = REGION_HYSTERESIS,
    ):
        if len(targets) != len(loop.barriers) + 1:
            raise ValueError(f"Expected {len(loop.barriers) + 1} target Hessians, got {len(targets)}")
        self.loop = loop
        self.targets = [np.asarray(H, dtype=float) for H in targets]
        self.p_shape = p_shape
        self.gamma_shape = gamma_shape
        self.pd_floor = pd_floor
        self.filter = RegionFilter(hysteresis)
        self.n = loop.plant.state_dim

    @property
    def plant(self) -> Plant:
        return self.loop.plant

    @property
    def barriers(self) -> Tuple[QuadraticFn, ...]:
        return self.loop.barriers

    @property
    def cfg(self) -> ControllerConfig:
        return self.loop.cfg

    def initial_shape(self) -> np.ndarray:
        return shape_from_hessian(self.targets[0])

    def clf_at(self, pi) -> TransformedCLF:
        """
        CLF with the current shape.

        Raises:
            ShapeDegenerateError: If H(pi) is below the curvature floor
        """
        H = hessian_from_shape(pi)
        low = float(np.linalg.eigvalsh(H)[0])
        if low <= self.pd_floor:
            raise ShapeDegenerateError(f"H(pi) lost curvature: smallest eigenvalue {low:.3e}")
        return self.loop.clf.with_hessian(H)

    def split(self, state) -> Tuple[np.ndarray, np.ndarray]:
        state = np.asarray(state, dtype=float)
        return state[: self.n], state[self.n:]

    def solve(self, state) -> QPOutcome:
        x, pi = self.split(state)
        return solve_qp(x, self.plant, self.clf_at(pi), self.barriers, self.cfg)

    def observe(self, state) -> Region:
        """Advance the hysteresis filter with the region at the current state."""
        return self.filter.update(region_of(self.solve(state), self.cfg))

    def field(self, state, region: Optional[Region] = None) -> np.ndarray:
        x, pi = self.split(state)
        dx, dpi = adaptive_closed_loop(x, pi, self, region=region)
        return np.concatenate([dx, dpi])


def adaptive_closed_loop(x, pi, adaptive: AdaptiveLoop, region: Optional[Region] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    State and shape derivatives of the adaptive closed loop.

    Without an explicit region the instantaneous region of x is used.

    Raises:
        ShapeDegenerateError: If H(pi) is below the curvature floor
        QPInfeasibleError: If the state QP is infeasible
    """
    x = np.asarray(x, dtype=float)
    clf = adaptive.clf_at(pi)
    outcome = solve_qp(x, adaptive.plant, clf, adaptive.barriers, adaptive.cfg)
    if region is None:
        region = region_of(outcome, adaptive.cfg)
    step = shape_qp_step(pi, region, adaptive.targets, adaptive.p_shape, adaptive.gamma_shape)
    return adaptive.plant.open_loop(x, outcome.u), step.u


__all__ = [
    "ShapeDegenerateError",
    "shape_size",
    "shape_dim",
    "factor_from_shape",
    "hessian_from_shape",
    "shape_from_hessian",
    "shape_lyapunov",
    "ShapeStep",
    "select_target",
    "shape_qp_step",
    "RegionFilter",
    "AdaptiveLoop",
    "adaptive_closed_loop",
]
