import numpy as np
import pytest

from src.models.functions import ClassK, QuadraticFn, TransformedCLF
from src.models.plant import Plant
from src.models.scenario import load_scenario
from src.services.qp_controller import (
    INTERIOR,
    MULTI,
    SINGLE,
    ClosedLoop,
    ControllerConfig,
    QPInfeasibleError,
    Region,
    active_region,
    check_feasibility_theorem,
    closed_loop_field,
    multiplier_field,
    region_of,
    solve_active_set,
    solve_qp,
)
from src.services.simulation_service import simulate

from conftest import SCENARIO_DIR


# ==================== Active-set solver ====================

def test_unconstrained_optimum_is_zero():
    sol = solve_active_set([1.0, 2.0], [[1.0, 0.0]], [3.0])
    assert np.allclose(sol.z, 0.0)
    assert sol.active == ()
    assert sol.objective == 0.0


def test_single_active_constraint():
    sol = solve_active_set([1.0], [[1.0]], [-2.0])
    assert sol.z[0] == pytest.approx(-2.0)
    assert sol.multipliers[0] == pytest.approx(2.0)
    assert sol.active == (0,)


def test_weighted_projection():
    # min 0.5 (a^2 + 4 b^2) s.t. -a - b <= -1: a = 4/5, b = 1/5
    sol = solve_active_set([1.0, 4.0], [[-1.0, -1.0]], [-1.0])
    assert np.allclose(sol.z, [0.8, 0.2])


def test_infeasible_program_names_the_constraints():
    with pytest.raises(QPInfeasibleError) as exc:
        solve_active_set([1.0], [[1.0], [-1.0]], [-1.0, -1.0])
    assert set(exc.value.violated) <= {0, 1}
    assert exc.value.violated


# ==================== CLF-CBF program ====================

def test_clf_only_active_far_from_the_obstacle(radial):
    out = solve_qp([-5.0, 0.0], radial.plant, radial.clf, radial.barriers, radial.cfg)
    # V = |x| = 5, so delta = 5 - u and the optimum splits it evenly
    assert out.u == pytest.approx([2.5, 0.0])
    assert out.delta == pytest.approx(2.5)
    assert out.lambdas[0] == pytest.approx(2.5)
    assert out.active == (0,)
    assert region_of(out, radial.cfg) == Region(INTERIOR)


def test_barrier_becomes_active_behind_the_obstacle(radial):
    out = solve_qp([8.0, 0.0], radial.plant, radial.clf, radial.barriers, radial.cfg)
    assert out.active == (0, 1)
    assert out.u == pytest.approx([-2.4, 0.0])
    assert out.delta == pytest.approx(5.6)
    assert out.lambdas == pytest.approx([5.6, 0.64])
    region = region_of(out, radial.cfg)
    assert region.kind == SINGLE
    assert region.label == "S1"
    assert region.barrier == 0


def test_origin_needs_no_input(radial):
    out = solve_qp([0.0, 0.0], radial.plant, radial.clf, radial.barriers, radial.cfg)
    assert np.allclose(out.u, 0.0)
    assert out.delta == 0.0


def test_non_finite_state_is_rejected(radial):
    with pytest.raises(ValueError):
        solve_qp([np.nan, 0.0], radial.plant, radial.clf, radial.barriers, radial.cfg)


def test_multiplier_form_matches_the_field(radial, fig2):
    for bundle, x in ((radial, [8.0, 0.5]), (radial, [-2.0, 3.0]), (fig2, [6.5, 0.3]), (fig2, [-1.0, 6.0])):
        out = solve_qp(x, bundle.plant, bundle.clf, bundle.barriers, bundle.cfg)
        expected = closed_loop_field(x, bundle.plant, bundle.clf, bundle.barriers, bundle.cfg)
        assert np.allclose(multiplier_field(np.asarray(x), out, bundle.plant), expected, atol=1e-9)


def test_safety_constraint_holds_at_the_solution(fig2):
    cfg = fig2.cfg
    for x in ([6.2, 0.1], [-5.5, 0.0], [0.3, 5.4]):
        out = solve_qp(x, fig2.plant, fig2.clf, fig2.barriers, cfg)
        xdot = fig2.plant.open_loop(np.asarray(x), out.u)
        for b in fig2.barriers:
            assert b.gradient(x) @ xdot >= -cfg.alpha(b.value(x)) - 1e-8


def test_multi_region_label():
    assert Region(MULTI, (0, 2)).label == "multi:1,3"
    assert Region(MULTI, (0, 2)).barrier is None


def test_active_region_matches_region_of(radial):
    assert active_region([8.0, 0.0], radial.plant, radial.clf, radial.barriers, radial.cfg).label == "S1"


def test_penalty_must_be_positive():
    with pytest.raises(ValueError):
        ControllerConfig(p=0.0)


def test_closed_loop_memoizes_the_last_solve(radial):
    loop = ClosedLoop(radial.plant, radial.clf, radial.barriers, radial.cfg)
    first = loop.solve([8.0, 0.0])
    assert loop.solve(np.array([8.0, 0.0])) is first
    assert loop.solve([7.0, 0.0]) is not first
    assert loop.field([8.0, 0.0]) == pytest.approx([-2.4, 0.0])


def test_with_clf_keeps_the_barriers(radial):
    loop = ClosedLoop(radial.plant, radial.clf, radial.barriers, radial.cfg)
    other = loop.with_clf(radial.clf.with_hessian(np.diag([1.0, 2.0])))
    assert other.barriers == loop.barriers
    assert other.clf.hessian[1, 1] == 2.0


def test_feasibility_sweep_on_three_driftless_barriers():
    scenario = load_scenario(SCENARIO_DIR / "driftless_three.toml")
    lower, upper = scenario.bounds()
    report = check_feasibility_theorem(
        scenario.build_plant(),
        scenario.build_clf(),
        scenario.build_barriers(),
        scenario.controller_config(),
        lower,
        upper,
        count=15,
    )
    assert report.covered
    assert report.checked > 100
    assert report.ok


def test_no_input_authority_inside_the_obstacle_is_infeasible():
    plant = Plant.lti([[0.0]], [[0.0]])
    clf = TransformedCLF.quadratic([[1.0]], [0.0])
    barrier = QuadraticFn.barrier([[1.0]], [3.0])
    with pytest.raises(QPInfeasibleError):
        solve_qp([2.5], plant, clf, [barrier], ControllerConfig(alpha=ClassK(1.0)))


@pytest.mark.slow
def test_single_barrier_lti_plant_is_feasible_everywhere(fig1):
    loop = ClosedLoop(fig1.plant, fig1.clf, fig1.barriers, fig1.cfg)
    angles = 2.0 * np.pi * np.arange(12) / 12
    starts = [10.0 * np.array([np.cos(a), np.sin(a)]) + np.array([6.0, 0.0]) for a in angles]
    visited = np.vstack([simulate(loop, x0, horizon=10.0, dt=0.02).states for x0 in starts])

    lower, upper = fig1.scenario.bounds()
    report = check_feasibility_theorem(
        fig1.plant, fig1.clf, fig1.barriers, fig1.cfg, lower, upper, count=50, extra_states=visited
    )
    assert report.covered
    assert report.checked > 2000 + len(starts)
    assert report.infeasible == []
