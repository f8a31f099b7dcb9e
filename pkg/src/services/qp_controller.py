"""
QP controller service - Min-norm CLF-CBF quadratic program and its closed loop.

The program is solved in (u, delta) jointly:

    min 0.5 |u|^2 + 0.5 p delta^2
    s.t. L_f V + L_g V u + gamma(V) <= delta
         L_f h_i + L_g h_i u >= -alpha(h_i)

Candidate active sets are enumerated by size and then lexicographically; each
one gives an equality-constrained KKT system. For a strictly convex program the
first candidate that is primal feasible with nonnegative multipliers is the
unique optimum, so the enumeration stops there.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.config import MULTIPLIER_TOL
from src.models.functions import ClassK, QuadraticFn, TransformedCLF, barrier_eval
from src.models.plant import Plant

logger = logging.getLogger(__name__)

MAX_BARRIERS = 16
INTERIOR = "interior"
SINGLE = "single"
MULTI = "multi"

_COND_LIMIT = 1e12


class QPInfeasibleError(Exception):
    """Raised when no candidate active set yields a feasible KKT point."""

    def __init__(self, message: str, violated: Tuple[int, ...] = ()):
        super().__init__(message)
        self.violated = violated


@dataclass(frozen=True)
class ControllerConfig:
    """Slack penalty, class-K gains and the multiplier activity threshold."""
    p: float = 1.0
    gamma: ClassK = field(default_factory=ClassK)
    alpha: ClassK = field(default_factory=ClassK)
    multiplier_tol: float = MULTIPLIER_TOL

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError(f"Slack penalty p must be positive, got {self.p}")


@dataclass(frozen=True, eq=False)
class QPOutcome:
    """
    Solution of the CLF-CBF program at one state.

    ``lambdas[0]`` belongs to the CLF constraint and ``lambdas[j + 1]`` to
    barrier j. ``active`` holds the same indices.
    """
    u: np.ndarray
    delta: float
    lambdas: np.ndarray
    active: Tuple[int, ...]
    objective: float
    clf_value: float
    clf_gradient: np.ndarray = field(repr=False)
    barrier_values: np.ndarray = field(repr=False)
    barrier_gradients: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class ActiveSetSolution:
    z: np.ndarray
    multipliers: np.ndarray
    active: Tuple[int, ...]
    objective: float


def solve_active_set(weights, C, d, tol: float = 1e-9) -> ActiveSetSolution:
    """
    Solve min 0.5 z^T diag(weights) z s.t. C z <= d by active-set enumeration.

    Args:
        weights: Positive diagonal of the objective
        C: Constraint matrix, one row per inequality
        d: Right-hand side
        tol: Feasibility and multiplier-sign tolerance

    Returns:
        ActiveSetSolution for the first valid candidate

    Raises:
        QPInfeasibleError: If no candidate is valid
    """
    w = np.asarray(weights, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    d = np.asarray(d, dtype=float).reshape(-1)
    q_inv = 1.0 / w
    rows = C.shape[0]
    feas_tol = tol * (1.0 + np.max(np.abs(d), initial=0.0))

    best_violation, best_violated = np.inf, tuple(range(rows))
    for size in range(rows + 1):
        for subset in itertools.combinations(range(rows), size):
            mu = np.zeros(rows)
            if size:
                Cw = C[list(subset)]
                K = (Cw * q_inv) @ Cw.T
                try:
                    if np.linalg.cond(K) > _COND_LIMIT:
                        continue
                    mu_w = -np.linalg.solve(K, d[list(subset)])
                except np.linalg.LinAlgError:
                    continue
                if np.any(mu_w < -tol * (1.0 + np.max(np.abs(mu_w)))):
                    continue
                mu[list(subset)] = np.maximum(mu_w, 0.0)
                z = -q_inv * (Cw.T @ mu_w)
            else:
                z = np.zeros(C.shape[1])

            slack = C @ z - d
            violation = float(np.max(slack, initial=-np.inf))
            if violation <= feas_tol:
                return ActiveSetSolution(
                    z=z,
                    multipliers=mu,
                    active=tuple(subset),
                    objective=0.5 * float(z @ (w * z)),
                )
            if violation < best_violation:
                best_violation = violation
                best_violated = tuple(int(k) for k in np.flatnonzero(slack > feas_tol))

    raise QPInfeasibleError(f"QP infeasible, violated constraints {best_violated}", best_violated)


def solve_qp(
    x,
    plant: Plant,
    clf: TransformedCLF,
    barriers: Sequence[QuadraticFn],
    cfg: ControllerConfig,
) -> QPOutcome:
    """
    Evaluate the CLF-CBF controller at x.

    Raises:
        ValueError: If x is not finite or there are too many barriers
        QPInfeasibleError: If the barrier constraints admit no input
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"State must be finite, got {x.tolist()}")
    if len(barriers) > MAX_BARRIERS:
        raise ValueError(f"At most {MAX_BARRIERS} barriers are supported, got {len(barriers)}")

    g = plant.input_matrix(x)
    f = plant.drift(x)
    m = plant.input_dim
    V, grad_v = clf.recover(x)

    rows = [np.concatenate([g.T @ grad_v, [-1.0]])]
    rhs = [-(grad_v @ f + cfg.gamma(V))]
    h_values, h_grads = [], []
    for b in barriers:
        h, grad_h = barrier_eval(b, x)
        h_values.append(h)
        h_grads.append(grad_h)
        rows.append(np.concatenate([-(g.T @ grad_h), [0.0]]))
        rhs.append(grad_h @ f + cfg.alpha(h))

    weights = np.concatenate([np.ones(m), [cfg.p]])
    try:
        sol = solve_active_set(weights, np.vstack(rows), np.array(rhs))
    except QPInfeasibleError as e:
        logger.debug(f"QP infeasible at x={x.tolist()}: {e}")
        raise

    return QPOutcome(
        u=sol.z[:m],
        delta=float(sol.z[m]),
        lambdas=sol.multipliers,
        active=sol.active,
        objective=sol.objective,
        clf_value=V,
        clf_gradient=grad_v,
        barrier_values=np.array(h_values),
        barrier_gradients=np.array(h_grads).reshape(len(barriers), plant.state_dim),
    )


def closed_loop_field(x, plant, clf, barriers, cfg) -> np.ndarray:
    """f(x) + g(x) u*(x)."""
    outcome = solve_qp(x, plant, clf, barriers, cfg)
    return plant.open_loop(x, outcome.u)


def multiplier_field(x, outcome: QPOutcome, plant: Plant) -> np.ndarray:
    """Closed loop in multiplier form f + G(-lambda_0 grad V + sum lambda_i grad h_i)."""
    direction = -outcome.lambdas[0] * outcome.clf_gradient
    if outcome.barrier_gradients.size:
        direction = direction + outcome.lambdas[1:] @ outcome.barrier_gradients
    return plant.drift(x) + plant.input_gram(x) @ direction


@dataclass(frozen=True)
class Region:
    """Active-constraint region: interior, a single barrier region S_i, or anything else."""
    kind: str
    barriers: Tuple[int, ...] = ()

    @property
    def label(self) -> str:
        if self.kind == INTERIOR:
            return "interior"
        if self.kind == SINGLE:
            return f"S{self.barriers[0] + 1}"
        return "multi:" + ",".join(str(i + 1) for i in self.barriers)

    @property
    def barrier(self) -> Optional[int]:
        return self.barriers[0] if self.kind == SINGLE else None


def region_of(outcome: QPOutcome, cfg: ControllerConfig) -> Region:
    """Classify the multipliers of a solved program."""
    # threshold scales with |grad Vbar| = gamma(V) |grad V|
    tol = cfg.multiplier_tol * (1.0 + cfg.gamma(outcome.clf_value) * np.linalg.norm(outcome.clf_gradient))
    active_barriers = tuple(int(j) for j in np.flatnonzero(outcome.lambdas[1:] > tol))
    if not active_barriers:
        return Region(INTERIOR)
    if len(active_barriers) == 1 and outcome.lambdas[0] > tol:
        return Region(SINGLE, active_barriers)
    return Region(MULTI, active_barriers)


def active_region(x, plant, clf, barriers, cfg) -> Region:
    """Region tag of the state x."""
    return region_of(solve_qp(x, plant, clf, barriers, cfg), cfg)


class ClosedLoop:
    """Controller bound to one plant, CLF and barrier set, memoizing the last solve."""

    def __init__(self, plant: Plant, clf: TransformedCLF, barriers: Sequence[QuadraticFn], cfg: ControllerConfig):
        self.plant = plant
        self.clf = clf
        self.barriers = tuple(barriers)
        self.cfg = cfg
        self._last_key: Optional[bytes] = None
        self._last: Optional[QPOutcome] = None

    def solve(self, x) -> QPOutcome:
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        if key != self._last_key:
            self._last = solve_qp(x, self.plant, self.clf, self.barriers, self.cfg)
            self._last_key = key
        return self._last

    def field(self, x) -> np.ndarray:
        return self.plant.open_loop(x, self.solve(x).u)

    def region(self, x) -> Region:
        return region_of(self.solve(x), self.cfg)

    def with_clf(self, clf: TransformedCLF) -> "ClosedLoop":
        return ClosedLoop(self.plant, clf, self.barriers, self.cfg)


@dataclass
class FeasibilityReport:
    """Outcome of a feasibility sweep over the safe set."""
    covered: bool
    checked: int = 0
    infeasible: List[List[float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.infeasible


def check_feasibility_theorem(
    plant: Plant,
    clf: TransformedCLF,
    barriers: Sequence[QuadraticFn],
    cfg: ControllerConfig,
    lower,
    upper,
    count: int = 50,
    extra_states=(),
) -> FeasibilityReport:
    """
    Sweep a grid over the safe set plus any extra states and record every infeasible QP.

    The guarantee covers a single barrier or a driftless plant; other cases are
    reported with ``covered=False`` and are informational.
    """
    covered = len(barriers) <= 1 or not plant.is_lti
    report = FeasibilityReport(covered=covered)
    axes = [np.linspace(lo, hi, count) for lo, hi in zip(lower, upper)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))

    states = list(grid) + [np.asarray(s, dtype=float) for s in extra_states]
    for x in states:
        if any(b.value(x) < 0 for b in barriers):
            continue
        report.checked += 1
        try:
            solve_qp(x, plant, clf, barriers, cfg)
        except QPInfeasibleError:
            report.infeasible.append([float(v) for v in x])

    if report.infeasible:
        level = logging.WARNING if covered else logging.INFO
        logger.log(level, f"{len(report.infeasible)} infeasible states out of {report.checked}")
    else:
        logger.info(f"✅ QP feasible at all {report.checked} checked states")
    return report


__all__ = [
    "MAX_BARRIERS",
    "INTERIOR",
    "SINGLE",
    "MULTI",
    "QPInfeasibleError",
    "ControllerConfig",
    "QPOutcome",
    "ActiveSetSolution",
    "solve_active_set",
    "solve_qp",
    "closed_loop_field",
    "multiplier_field",
    "Region",
    "region_of",
    "active_region",
    "ClosedLoop",
    "FeasibilityReport",
    "check_feasibility_theorem",
]
