"""Shared fixtures: bundled scenarios and the closed-form radial case."""

from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from src.models.scenario import load_scenario, parse_scenario

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"


def _bundle(scenario):
    barriers = scenario.build_barriers()
    return SimpleNamespace(
        scenario=scenario,
        plant=scenario.build_plant(),
        clf=scenario.build_clf(),
        barriers=barriers,
        barrier=barriers[0] if barriers else None,
        cfg=scenario.controller_config(),
    )


def radial_data(**simulation):
    data = {
        "name": "radial",
        "plant": {"kind": "driftless", "input_map": [[1.0, 0.0], [0.0, 1.0]]},
        "clf": {"hessian": [[1.0, 0.0], [0.0, 1.0]], "center": [0.0, 0.0]},
        "barriers": [{"name": "h1", "hessian": [[1.0, 0.0], [0.0, 1.0]], "center": [3.0, 0.0]}],
    }
    if simulation:
        data["simulation"] = simulation
    return data


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def radial():
    """x' = u, Vbar = |x|^2/2, unit circle at (3, 0); saddle at (4, 0) with lam = 4."""
    return _bundle(parse_scenario(radial_data()))


@pytest.fixture
def fig2():
    return _bundle(load_scenario(SCENARIO_DIR / "fig2_scenario.toml"))


@pytest.fixture
def fig1():
    return _bundle(load_scenario(SCENARIO_DIR / "fig1_scenario.toml"))


@pytest.fixture
def make_radial():
    """Radial scenario with custom simulation settings."""
    def factory(**simulation):
        return parse_scenario(radial_data(**simulation))
    return factory
