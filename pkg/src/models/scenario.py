"""
Scenario schema - TOML scenario files validated with pydantic.

Matrices are written row-major as nested lists. See docs/scenario-format.md.
"""

import logging
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.config import (
    CONV_TOL,
    COMPAT_EPSILON,
    MULTIPLIER_TOL,
    REGION_HYSTERESIS,
    SHAPE_CONV_TOL,
    SHAPE_GAMMA,
    SHAPE_P,
    SHAPE_PD_FLOOR,
    SIM_DT,
    SIM_HORIZON,
    WORKERS,
)
from src.models.functions import ClassK, QuadraticFn, TransformedCLF
from src.models.plant import LTI, Plant
from src.services.assumptions import UnsupportedGeometryError, check_assumption1, check_assumption2, check_assumption3
from src.services.qp_controller import ControllerConfig

logger = logging.getLogger(__name__)

Matrix = List[List[float]]
Vector = List[float]


class ScenarioValidationError(Exception):
    """Raised when a scenario file is malformed or violates a standing assumption."""
    pass


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _square(mat: Matrix, name: str) -> Matrix:
    if not mat or any(len(row) != len(mat) for row in mat):
        raise ValueError(f"{name} must be a non-empty square matrix")
    return mat


class PlantSpec(_Spec):
    kind: Literal["lti", "driftless"]
    drift: Optional[Matrix] = None
    input: Optional[Matrix] = None
    input_map: Optional[Matrix] = None
    origin: Optional[Vector] = None

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind == LTI:
            if self.drift is None or self.input is None:
                raise ValueError("LTI plants need 'drift' (A) and 'input' (B)")
            _square(self.drift, "drift")
            if len(self.input) != len(self.drift):
                raise ValueError("'input' must have as many rows as 'drift'")
        else:
            if self.input_map is None:
                raise ValueError("Driftless plants need a constant 'input_map'")
        return self

    @property
    def dim(self) -> int:
        return len(self.drift) if self.kind == LTI else len(self.input_map)


class ClfSpec(_Spec):
    hessian: Matrix
    center: Vector
    gamma: float = Field(default=1.0, gt=0)
    interpretation: Literal["transformed", "lyapunov"] = "transformed"

    @field_validator("hessian")
    @classmethod
    def _square_hessian(cls, v):
        return _square(v, "clf.hessian")

    @field_validator("interpretation")
    @classmethod
    def _only_transformed(cls, v):
        if v == "lyapunov":
            raise ValueError(
                "interpretation 'lyapunov' makes the transformed CLF quartic, "
                "which the quadratic analysis does not cover"
            )
        return v


class ControllerSpec(_Spec):
    p: float = Field(default=1.0, gt=0)
    alpha: float = Field(default=1.0, gt=0)
    multiplier_tol: float = Field(default=MULTIPLIER_TOL, gt=0)


class BarrierSpec(_Spec):
    name: str = ""
    hessian: Matrix
    center: Vector

    @field_validator("hessian")
    @classmethod
    def _square_hessian(cls, v):
        return _square(v, "barrier.hessian")


class AnalysisSpec(_Spec):
    epsilon: float = Field(default=COMPAT_EPSILON, gt=1)
    interior_grid: int = Field(default=25, ge=2)
    feasibility_grid: int = Field(default=50, ge=2)
    lower: Optional[Vector] = None
    upper: Optional[Vector] = None
    # require the CLF condition on the drift at load time
    static_claims: bool = True


class AdaptationSpec(_Spec):
    enabled: bool = False
    p_shape: float = Field(default=SHAPE_P, gt=0)
    gamma_shape: float = Field(default=SHAPE_GAMMA, gt=0)
    hysteresis: int = Field(default=REGION_HYSTERESIS, ge=1)
    pd_floor: float = Field(default=SHAPE_PD_FLOOR, gt=0)
    shape_tol: float = Field(default=SHAPE_CONV_TOL, gt=0)


class RingSpec(_Spec):
    center: Vector
    radius: float = Field(gt=0)
    count: int = Field(ge=1)
    phase: float = 0.0  # degrees


class GridSpec(_Spec):
    lower: Vector
    upper: Vector
    count: int = Field(ge=2)


class InitialStatesSpec(_Spec):
    points: Optional[Matrix] = None
    grid: Optional[GridSpec] = None
    ring: Optional[RingSpec] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        given = [s for s in (self.points, self.grid, self.ring) if s is not None]
        if len(given) != 1:
            raise ValueError("initial_states needs exactly one of 'points', 'grid' or 'ring'")
        return self

    def states(self) -> List[np.ndarray]:
        if self.points is not None:
            return [np.asarray(p, dtype=float) for p in self.points]
        if self.grid is not None:
            axes = [np.linspace(lo, hi, self.grid.count) for lo, hi in zip(self.grid.lower, self.grid.upper)]
            mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
            return [row for row in mesh]
        ring = self.ring
        if len(ring.center) != 2:
            raise ValueError("ring initial states are only defined in two dimensions")
        center = np.asarray(ring.center, dtype=float)
        out = []
        for k in range(ring.count):
            angle = math.radians(ring.phase) + 2.0 * math.pi * k / ring.count
            # exact axis points for angles that are multiples of 90 degrees
            c, s = round(math.cos(angle), 15), round(math.sin(angle), 15)
            out.append(center + ring.radius * np.array([c, s]))
        return out


class SimulationSpec(_Spec):
    horizon: float = Field(default=SIM_HORIZON, gt=0)
    dt: float = Field(default=SIM_DT, gt=0)
    conv_tol: float = Field(default=CONV_TOL, gt=0)
    workers: int = Field(default=WORKERS, ge=1)
    initial_states: Optional[InitialStatesSpec] = None

    @model_validator(mode="after")
    def _horizon_covers_step(self):
        if self.horizon < self.dt:
            raise ValueError("simulation.horizon must be at least one step")
        return self


class Scenario(_Spec):
    """A complete scenario: plant, CLF, barriers, controller and run settings."""
    name: str
    description: str = ""
    seed: int = 0
    plant: PlantSpec
    clf: ClfSpec
    controller: ControllerSpec = ControllerSpec()
    barriers: List[BarrierSpec] = Field(default_factory=list)
    analysis: AnalysisSpec = AnalysisSpec()
    adaptation: AdaptationSpec = AdaptationSpec()
    simulation: SimulationSpec = SimulationSpec()

    @model_validator(mode="after")
    def _dimensions(self):
        n = self.plant.dim
        if len(self.clf.hessian) != n or len(self.clf.center) != n:
            raise ValueError(f"CLF dimensions do not match the state dimension {n}")
        for b in self.barriers:
            if len(b.hessian) != n or len(b.center) != n:
                raise ValueError(f"Barrier '{b.name}' dimensions do not match the state dimension {n}")
        for bound in (self.analysis.lower, self.analysis.upper):
            if bound is not None and len(bound) != n:
                raise ValueError("analysis bounds must match the state dimension")
        return self

    @property
    def dim(self) -> int:
        return self.plant.dim

    def build_plant(self) -> Plant:
        if self.plant.kind == LTI:
            return Plant.lti(self.plant.drift, self.plant.input, self.plant.origin)
        return Plant.driftless(self.plant.input_map)

    def build_clf(self) -> TransformedCLF:
        return TransformedCLF.quadratic(self.clf.hessian, self.clf.center, self.clf.gamma)

    def build_barriers(self) -> List[QuadraticFn]:
        return [
            QuadraticFn.barrier(b.hessian, b.center, name=b.name or f"h{i + 1}")
            for i, b in enumerate(self.barriers)
        ]

    def controller_config(self) -> ControllerConfig:
        return ControllerConfig(
            p=self.controller.p,
            gamma=ClassK(self.clf.gamma),
            alpha=ClassK(self.controller.alpha),
            multiplier_tol=self.controller.multiplier_tol,
        )

    def bounds(self):
        """Analysis box, defaulting to a box around the CLF minimum and every barrier."""
        if self.analysis.lower is not None and self.analysis.upper is not None:
            return np.asarray(self.analysis.lower, dtype=float), np.asarray(self.analysis.upper, dtype=float)
        pts = [np.asarray(self.clf.center, dtype=float)] + [np.asarray(b.center, dtype=float) for b in self.barriers]
        pts = np.array(pts)
        span = 2.0 + 1.5 * np.max(np.abs(pts - pts.mean(axis=0)))
        return pts.mean(axis=0) - span, pts.mean(axis=0) + span

    def initial_states(self) -> List[np.ndarray]:
        if self.simulation.initial_states is None:
            return []
        return self.simulation.initial_states.states()


def parse_scenario(data: dict) -> Scenario:
    """Validate a decoded scenario table and check the standing assumptions on it."""
    try:
        scenario = Scenario.model_validate(data)
        clf = scenario.build_clf()
        barriers = scenario.build_barriers()
        plant = scenario.build_plant()
    except ValidationError as e:
        raise ScenarioValidationError(f"Invalid scenario: {e}") from e
    except ValueError as e:
        raise ScenarioValidationError(str(e)) from e

    if not check_assumption1(clf.center, barriers):
        raise ScenarioValidationError("CLF minimum must lie in the safe set of every barrier")
    try:
        if not check_assumption2(barriers, seed=scenario.seed):
            raise ScenarioValidationError("Barrier unsafe sets must be pairwise disjoint")
    except UnsupportedGeometryError as e:
        raise ScenarioValidationError(str(e)) from e
    if scenario.analysis.static_claims and not check_assumption3(plant, clf):
        raise ScenarioValidationError(
            "CLF condition fails on the drift (H A + A^T H is not negative semidefinite); "
            "set analysis.static_claims = false to search interior equilibria numerically"
        )
    return scenario


def load_scenario(path) -> Scenario:
    """
    Load and validate a TOML scenario file.

    Raises:
        ScenarioValidationError: If the file cannot be parsed or fails validation
    """
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as e:
        raise ScenarioValidationError(f"Scenario file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ScenarioValidationError(f"Cannot parse {path}: {e}") from e
    scenario = parse_scenario(data)
    logger.info(f"Loaded scenario '{scenario.name}' from {path}")
    return scenario


__all__ = [
    "ScenarioValidationError",
    "PlantSpec",
    "ClfSpec",
    "ControllerSpec",
    "BarrierSpec",
    "AnalysisSpec",
    "AdaptationSpec",
    "RingSpec",
    "GridSpec",
    "InitialStatesSpec",
    "SimulationSpec",
    "Scenario",
    "parse_scenario",
    "load_scenario",
]
