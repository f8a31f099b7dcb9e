"""
Simulation service - Fixed-step closed-loop trajectories.

Integration is classical fourth-order Runge-Kutta with a constant step.
Controller failures do not raise out of a run: they end it and are recorded
as the termination status of the trajectory.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from src.config import CONV_TOL, SHAPE_CONV_TOL, SIM_DT, SIM_HORIZON, STALL_STEPS, STALL_TOL, WORKERS
from src.models.functions import QuadraticFn
from src.services.equilibrium_service import STABLE, UNSTABLE, EquilibriumPoint
from src.services.qp_controller import ClosedLoop, QPInfeasibleError, region_of
from src.services.shape_controller import AdaptiveLoop, ShapeDegenerateError, hessian_from_shape

logger = logging.getLogger(__name__)

CONVERGED = "Converged"
CONVERGED_OTHER = "ConvergedOther"
HORIZON = "HorizonReached"
INFEASIBLE = "Infeasible"
SHAPE_DEGENERATE = "ShapeDegenerate"

_FAILURES = {
    QPInfeasibleError: INFEASIBLE,
    ShapeDegenerateError: SHAPE_DEGENERATE,
}


@dataclass
class Trajectory:
    """One closed-loop run. Every per-step array has one row per entry of ``times``."""
    times: np.ndarray
    states: np.ndarray
    termination: str
    controls: Optional[np.ndarray] = None
    deltas: Optional[np.ndarray] = None
    multipliers: Optional[np.ndarray] = None
    regions: List[str] = field(default_factory=list)
    h_values: Optional[np.ndarray] = None
    vbar_values: Optional[np.ndarray] = None
    shapes: Optional[np.ndarray] = None
    equilibrium: Optional[np.ndarray] = None

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def min_barrier(self) -> float:
        """Smallest barrier value along the run, +inf without barriers."""
        if self.h_values is None or self.h_values.size == 0:
            return math.inf
        return float(np.nanmin(self.h_values))


# ==================== Integrator ====================

def rk4_step(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, dt: float) -> np.ndarray:
    k1 = fn(x)
    k2 = fn(x + 0.5 * dt * k1)
    k3 = fn(x + 0.5 * dt * k2)
    k4 = fn(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(
    fn: Callable[[np.ndarray], np.ndarray],
    x_init,
    horizon: float = SIM_HORIZON,
    dt: float = SIM_DT,
    on_state: Optional[Callable[[float, np.ndarray], None]] = None,
    stop: Optional[Callable[[float, np.ndarray, float], Optional[str]]] = None,
) -> Trajectory:
    """
    Integrate x' = fn(x) with fixed-step RK4.

    Args:
        fn: Vector field
        x_init: Initial state
        horizon: Final time T
        dt: Step size
        on_state: Called with (t, x) at every stored state before anything else
            looks at it; used to record diagnostics and advance filters
        stop: Called with (t, x, speed) at every stored state; a non-None
            return ends the run with that termination

    Returns:
        Trajectory with times k*dt and the stored states

    Raises:
        ValueError: If dt <= 0 or horizon < dt
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if horizon < dt:
        raise ValueError(f"horizon {horizon} is shorter than one step {dt}")

    steps = max(1, int(round(horizon / dt)))
    x = np.array(x_init, dtype=float)
    states = [x]
    termination = HORIZON
    speed = math.inf

    for k in range(steps + 1):
        t = k * dt
        try:
            if on_state is not None:
                on_state(t, x)
            reason = stop(t, x, speed) if stop is not None else None
            if reason is not None:
                termination = reason
                break
            if k == steps:
                break
            x_next = rk4_step(fn, x, dt)
        except tuple(_FAILURES) as e:
            termination = next(v for cls, v in _FAILURES.items() if isinstance(e, cls))
            logger.warning(f"⚠️ Run stopped at t={t:.4g}: {termination} ({e})")
            break
        speed = float(np.linalg.norm(x_next - x)) / dt
        x = x_next
        states.append(x)

    states_arr = np.array(states)
    times = dt * np.arange(len(states_arr))
    return Trajectory(times=times, states=states_arr, termination=termination)


def _stop_rule(
    target,
    conv_tol: float,
    stall_tol: float,
    stall_steps: int,
    dim: Optional[int] = None,
    settled: Optional[Callable[[np.ndarray], bool]] = None,
):
    """Convergence to target (and ``settled`` on the full state, when given), or a stall away from it."""
    target = np.asarray(target, dtype=float)
    counter = {"slow": 0}

    def stop(t, x, speed):
        xs = x if dim is None else x[:dim]
        if np.linalg.norm(xs - target) <= conv_tol and (settled is None or settled(x)):
            return CONVERGED
        counter["slow"] = counter["slow"] + 1 if speed < stall_tol else 0
        if counter["slow"] >= stall_steps:
            return CONVERGED_OTHER
        return None

    return stop


def _nearest(x: np.ndarray, equilibria: Sequence[np.ndarray]) -> np.ndarray:
    if not len(equilibria):
        return np.array(x)
    pts = [np.asarray(e, dtype=float) for e in equilibria]
    return pts[int(np.argmin([np.linalg.norm(x - p) for p in pts]))]


class _Recorder:
    """Per-state controller diagnostics, NaN rows where the program failed."""

    def __init__(self, m: int, n_barriers: int):
        self.m = m
        self.n_barriers = n_barriers
        self.controls, self.deltas, self.multipliers = [], [], []
        self.regions, self.h_values, self.vbar_values, self.shapes = [], [], [], []

    def failed(self, vbar: float = math.nan):
        self.controls.append(np.full(self.m, math.nan))
        self.deltas.append(math.nan)
        self.multipliers.append(np.full(self.n_barriers + 1, math.nan))
        self.regions.append("")
        self.h_values.append(np.full(self.n_barriers, math.nan))
        self.vbar_values.append(vbar)

    def record(self, outcome, region, vbar: float):
        self.controls.append(outcome.u)
        self.deltas.append(outcome.delta)
        self.multipliers.append(outcome.lambdas)
        self.regions.append(region.label)
        self.h_values.append(outcome.barrier_values)
        self.vbar_values.append(vbar)

    def fill(self, traj: Trajectory) -> Trajectory:
        rows = len(traj.times)
        traj.controls = np.array(self.controls[:rows]).reshape(rows, self.m)
        traj.deltas = np.array(self.deltas[:rows], dtype=float)
        traj.multipliers = np.array(self.multipliers[:rows]).reshape(rows, self.n_barriers + 1)
        traj.regions = list(self.regions[:rows])
        traj.h_values = np.array(self.h_values[:rows]).reshape(rows, self.n_barriers)
        traj.vbar_values = np.array(self.vbar_values[:rows], dtype=float)
        if self.shapes:
            traj.shapes = np.array(self.shapes[:rows])
        return traj


# ==================== Closed-loop runs ====================

def simulate(
    loop: ClosedLoop,
    x_init,
    horizon: float = SIM_HORIZON,
    dt: float = SIM_DT,
    conv_tol: float = CONV_TOL,
    equilibria: Sequence[np.ndarray] = (),
    stall_tol: float = STALL_TOL,
    stall_steps: int = STALL_STEPS,
) -> Trajectory:
    """
    Run the static CLF-CBF closed loop from x_init.

    Args:
        loop: Closed loop (owned by this run, it memoizes solves)
        x_init: Initial state
        horizon: Final time
        dt: Step size
        conv_tol: Distance to the CLF minimum counted as converged
        equilibria: Known equilibria, attached to stalled runs
        stall_tol: Speed below which a step counts as stalled
        stall_steps: Consecutive stalled steps that end the run

    Returns:
        Trajectory with controller diagnostics at every stored state
    """
    rec = _Recorder(loop.plant.input_dim, len(loop.barriers))

    def on_state(t, x):
        try:
            outcome = loop.solve(x)
        except QPInfeasibleError:
            rec.failed(loop.clf.value(x))
            raise
        rec.record(outcome, region_of(outcome, loop.cfg), loop.clf.value(x))

    stop = _stop_rule(loop.clf.center, conv_tol, stall_tol, stall_steps)
    traj = integrate(loop.field, x_init, horizon, dt, on_state=on_state, stop=stop)
    rec.fill(traj)
    if traj.termination == CONVERGED_OTHER:
        traj.equilibrium = _nearest(traj.final_state, equilibria)
    return traj


def simulate_adaptive(
    adaptive: AdaptiveLoop,
    x_init,
    horizon: float = SIM_HORIZON,
    dt: float = SIM_DT,
    conv_tol: float = CONV_TOL,
    equilibria: Sequence[np.ndarray] = (),
    stall_tol: float = STALL_TOL,
    stall_steps: int = STALL_STEPS,
    shape_tol: float = SHAPE_CONV_TOL,
) -> Trajectory:
    """
    Run plant and shape state together under the adaptive controller.

    The region seen by the shape QP is the filtered region of the stored
    state; it stays fixed across the Runge-Kutta stages of a step. The
    returned ``states`` hold the plant state only, the shape history goes to
    ``shapes``. A run counts as converged once x is within ``conv_tol`` of the
    CLF minimum and H(pi) is within ``shape_tol`` of H_ref (Frobenius).
    """
    n = adaptive.n
    rec = _Recorder(adaptive.plant.input_dim, len(adaptive.barriers))

    def on_state(t, s):
        x, pi = adaptive.split(s)
        rec.shapes.append(np.array(pi))
        try:
            clf = adaptive.clf_at(pi)
        except ShapeDegenerateError:
            rec.failed()
            raise
        try:
            outcome = adaptive.solve(s)
        except QPInfeasibleError:
            rec.failed(clf.value(x))
            raise
        raw = region_of(outcome, adaptive.cfg)
        adaptive.filter.update(raw)
        rec.record(outcome, raw, clf.value(x))

    def fn(s):
        return adaptive.field(s, region=adaptive.filter.current)

    s0 = np.concatenate([np.asarray(x_init, dtype=float), adaptive.initial_shape()])
    H_ref = adaptive.targets[0]

    def settled(s):
        return np.linalg.norm(hessian_from_shape(s[n:]) - H_ref, "fro") <= shape_tol

    stop = _stop_rule(adaptive.loop.clf.center, conv_tol, stall_tol, stall_steps, dim=n, settled=settled)
    traj = integrate(fn, s0, horizon, dt, on_state=on_state, stop=stop)
    traj.states = traj.states[:, :n]
    rec.fill(traj)
    if traj.termination == CONVERGED_OTHER:
        traj.equilibrium = _nearest(traj.final_state, equilibria)
    return traj


def simulate_batch(run: Callable[[np.ndarray], Trajectory], starts: Sequence[np.ndarray], workers: int = WORKERS) -> List[Trajectory]:
    """
    Run one trajectory per start, in start order.

    ``run`` must build its own closed loop per call: loops memoize solves and
    the adaptive loop carries filter state.
    """
    starts = [np.asarray(s, dtype=float) for s in starts]
    if workers <= 1 or len(starts) <= 1:
        return [run(s) for s in starts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, starts))


# ==================== Equilibrium probes ====================

@dataclass
class ProbeResult:
    """Perturbed starts around one equilibrium and how many stayed or left."""
    starts: int
    attracted: int
    escaped: int
    verdict: str

    @property
    def consistent(self) -> bool:
        if self.verdict == STABLE:
            return self.attracted == self.starts
        if self.verdict == UNSTABLE:
            return self.escaped >= 1
        return True


def _probe_directions(n: int, count: int, seed: int) -> np.ndarray:
    if n == 2:
        angles = 2.0 * math.pi * np.arange(count) / count
        return np.column_stack([np.cos(angles), np.sin(angles)])
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((count, n))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def probe_equilibrium(
    loop: ClosedLoop,
    point: EquilibriumPoint,
    barrier: Optional[QuadraticFn] = None,
    radius: float = 1e-3,
    count: int = 8,
    horizon: float = 10.0,
    dt: float = 1e-2,
    seed: int = 0,
) -> ProbeResult:
    """
    Simulate from ``count`` starts at distance ``radius`` around an equilibrium.

    Starts that would land inside the obstacle are reflected across the
    tangent plane of the barrier. A start is attracted when it ends within
    half the radius and escaped when it gets farther than 100 radii.
    """
    x_e = np.asarray(point.x_e, dtype=float)
    normal = None
    if barrier is not None:
        grad = barrier.gradient(x_e)
        if np.linalg.norm(grad) > 0:
            normal = grad / np.linalg.norm(grad)

    attracted = escaped = 0
    directions = _probe_directions(x_e.size, count, seed)
    for d in directions:
        if normal is not None and barrier.value(x_e + radius * d) < 0:
            d = d - 2.0 * (d @ normal) * normal
        run_loop = loop.with_clf(loop.clf)
        traj = simulate(run_loop, x_e + radius * d, horizon=horizon, dt=dt, conv_tol=CONV_TOL)
        dist = np.linalg.norm(traj.states - x_e, axis=1)
        if dist.max() > 100.0 * radius:
            escaped += 1
        elif dist[-1] <= 0.5 * radius:
            attracted += 1

    result = ProbeResult(starts=len(directions), attracted=attracted, escaped=escaped, verdict=point.verdict)
    if not result.consistent:
        logger.warning(f"⚠️ Probe disagrees with verdict {point.verdict} at {x_e.tolist()}: {attracted} attracted, {escaped} escaped")
    return result


__all__ = [
    "CONVERGED",
    "CONVERGED_OTHER",
    "HORIZON",
    "INFEASIBLE",
    "SHAPE_DEGENERATE",
    "Trajectory",
    "rk4_step",
    "integrate",
    "simulate",
    "simulate_adaptive",
    "simulate_batch",
    "ProbeResult",
    "probe_equilibrium",
]
