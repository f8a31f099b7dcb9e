import math

import numpy as np
import pytest

from src.models.functions import QuadraticFn, TransformedCLF
from src.models.plant import Plant
from src.services.equilibrium_service import (
    STABLE,
    UNSTABLE,
    MARGINAL,
    boundary_equilibria,
    boundary_jacobian,
    build_pencil,
    classify_equilibrium,
    closed_loop_jacobian_fd,
    compatibility_barrier,
    default_lambda_max,
    degenerate_roots,
    equilibrium_field,
    equilibrium_jacobian,
    interior_equilibria,
    is_compatible,
    q_function,
    stability_basis,
    stability_polynomial,
)
from src.services.qp_controller import ControllerConfig
from src.services.selftest import random_instance


def _by_name(bundle, name):
    return next(b for b in bundle.barriers if b.name == name)


# ==================== Radial closed form ====================

def test_radial_pencil_and_q_function(radial):
    ps = build_pencil(radial.plant, radial.clf, radial.barrier, radial.cfg.p)
    assert np.allclose(ps.pencil.M, np.eye(2))
    assert np.allclose(ps.pencil.N, np.eye(2))
    assert np.allclose(ps.w, [3.0, 0.0])

    qf = q_function(ps, radial.barrier)
    assert qf.proper
    assert qf.spectrum.size >= 1
    assert np.allclose(qf.spectrum, 1.0, atol=1e-6)
    # q = 9 / (lam - 1)^2
    for lam in (0.0, 2.5, 4.0, 7.0):
        assert qf.evaluate(lam) == pytest.approx(9.0 / (lam - 1.0) ** 2)
    assert qf.z_poly(4.0) == pytest.approx(0.0, abs=1e-9)
    assert qf.z_poly(-2.0) == pytest.approx(0.0, abs=1e-9)
    assert default_lambda_max(qf) == pytest.approx(10.0)


def test_radial_saddle_on_the_far_side(radial):
    ps = build_pencil(radial.plant, radial.clf, radial.barrier, radial.cfg.p)
    points = boundary_equilibria(ps, radial.barrier, radial.clf, radial.plant, radial.cfg)
    assert len(points) == 1
    pt = points[0]
    assert pt.lambda_e == pytest.approx(4.0)
    assert pt.x_e == pytest.approx([4.0, 0.0])
    assert pt.verdict == UNSTABLE
    assert pt.verified
    assert pt.s_max_eig > 0
    assert pt.jac_max_real == pytest.approx(3.0, abs=1e-4)
    assert np.linalg.norm(equilibrium_field(pt.x_e, pt.lambda_e, radial.plant, radial.clf, radial.barrier, radial.cfg.p)) < 1e-9


def test_radial_root_on_the_spectrum_is_degenerate(radial):
    ps = build_pencil(radial.plant, radial.clf, radial.barrier, radial.cfg.p)
    roots = degenerate_roots(ps, q_function(ps, radial.barrier))
    assert roots
    assert all(abs(r - 1.0) < 1e-5 for r in roots)


def test_radial_boundary_jacobian(radial):
    J_cl, frame = boundary_jacobian([4.0, 0.0], 4.0, radial.plant, radial.clf, radial.barrier, radial.cfg)
    assert frame.J_i == pytest.approx(np.diag([4.0, 3.0]))
    assert J_cl == pytest.approx(np.diag([-1.0, 3.0]), abs=1e-9)
    fd = closed_loop_jacobian_fd([4.0, 0.0], radial.plant, radial.clf, radial.barriers, radial.cfg)
    assert np.allclose(J_cl, fd, atol=1e-4)


def test_radial_is_compatible(radial):
    ps = build_pencil(radial.plant, radial.clf, radial.barrier, radial.cfg.p)
    cb = compatibility_barrier(ps, radial.barrier, epsilon=2.0)
    assert cb.sigma_minus == pytest.approx(1.0, abs=1e-6)
    assert cb.value == pytest.approx(0.0, abs=1e-8)
    assert cb.monotone_ok
    evidence = is_compatible(radial.plant, radial.clf, radial.barrier, radial.cfg)
    assert evidence.compatible
    assert len(evidence.interior) == 1


def test_epsilon_must_exceed_one(radial):
    ps = build_pencil(radial.plant, radial.clf, radial.barrier, radial.cfg.p)
    with pytest.raises(ValueError):
        compatibility_barrier(ps, radial.barrier, epsilon=1.0)


# ==================== LTI closed forms ====================

def test_right_circle_has_a_stable_equilibrium(fig2):
    right = _by_name(fig2, "right")
    ps = build_pencil(fig2.plant, fig2.clf, right, fig2.cfg.p)
    assert np.allclose(ps.pencil.N, np.diag([12.0, 42.0]))
    assert np.allclose(ps.w, [48.0, 0.0])

    points = boundary_equilibria(ps, right, fig2.clf, fig2.plant, fig2.cfg)
    assert [pt.lambda_e for pt in points] == pytest.approx([144.0])
    pt = points[0]
    assert pt.x_e == pytest.approx([6.0, 0.0])
    assert pt.verdict == STABLE
    assert pt.verified

    J_cl, frame = boundary_jacobian(pt.x_e, pt.lambda_e, fig2.plant, fig2.clf, right, fig2.cfg)
    assert frame.J_i == pytest.approx(np.diag([34.0, -6.0]))
    assert J_cl == pytest.approx(np.diag([-1.0, -6.0]), abs=1e-8)
    fd = closed_loop_jacobian_fd(pt.x_e, fig2.plant, fig2.clf, [right], fig2.cfg)
    assert np.allclose(J_cl, fd, atol=1e-3)

    assert not is_compatible(fig2.plant, fig2.clf, right, fig2.cfg).compatible


@pytest.mark.parametrize("name, lam, x_e", [("left", 60.0, [-5.0, 0.0]), ("top", 210.0, [0.0, 5.0])])
def test_small_circles_have_saddles(fig2, name, lam, x_e):
    barrier = _by_name(fig2, name)
    ps = build_pencil(fig2.plant, fig2.clf, barrier, fig2.cfg.p)
    points = boundary_equilibria(ps, barrier, fig2.clf, fig2.plant, fig2.cfg)
    assert len(points) == 1
    assert points[0].lambda_e == pytest.approx(lam)
    assert points[0].x_e == pytest.approx(x_e)
    assert points[0].verdict == UNSTABLE


def test_reshaped_clf_turns_the_right_equilibrium_unstable(fig2):
    right = _by_name(fig2, "right")
    clf = fig2.clf.with_hessian(np.diag([1.6, 3.7]))
    ps = build_pencil(fig2.plant, clf, right, fig2.cfg.p)
    points = boundary_equilibria(ps, right, clf, fig2.plant, fig2.cfg)
    assert [pt.verdict for pt in points] == [UNSTABLE]
    assert points[0].lambda_e == pytest.approx(216.0)


def test_tilted_ellipse_q_at_zero(fig1):
    ps = build_pencil(fig1.plant, fig1.clf, fig1.barrier, fig1.cfg.p)
    qf = q_function(ps, fig1.barrier)
    assert qf.evaluate(0.0) == pytest.approx(140.4)
    points = boundary_equilibria(ps, fig1.barrier, fig1.clf, fig1.plant, fig1.cfg)
    assert len(points) == 1
    assert points[0].lambda_e == pytest.approx(35.3169, abs=1e-3)
    assert points[0].verdict == UNSTABLE


def test_q_function_matches_direct_solve(fig1, rng):
    ps = build_pencil(fig1.plant, fig1.clf, fig1.barrier, fig1.cfg.p)
    qf = q_function(ps, fig1.barrier)
    for lam in rng.uniform(0.0, 60.0, 10):
        nu = ps.nu(lam)
        assert qf.evaluate(lam) == pytest.approx(nu @ fig1.barrier.hessian @ nu, rel=1e-9)


def test_equilibrium_jacobian_matches_finite_differences(fig1):
    x = np.array([7.5, 0.4])
    lam = 12.0
    J = equilibrium_jacobian(x, lam, fig1.plant, fig1.clf, fig1.barrier, fig1.cfg.p)
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        col = (
            equilibrium_field(x + e, lam, fig1.plant, fig1.clf, fig1.barrier, fig1.cfg.p)
            - equilibrium_field(x - e, lam, fig1.plant, fig1.clf, fig1.barrier, fig1.cfg.p)
        ) / (2 * h)
        assert np.allclose(J[:, k], col, atol=1e-6)


# ==================== Verdicts and interior points ====================

def test_classification_band():
    assert classify_equilibrium(1.0, np.array([[-1.0]])) == STABLE
    assert classify_equilibrium(1.0, np.array([[2.0]])) == UNSTABLE
    assert classify_equilibrium(1.0, np.zeros((1, 1))) == MARGINAL


def test_stability_polynomial_sign_change(radial):
    ps = build_pencil(radial.plant, radial.clf, radial.barrier, radial.cfg.p)
    S = stability_polynomial(ps, radial.barrier)
    assert classify_equilibrium(0.5, S) == STABLE
    assert classify_equilibrium(4.0, S) == UNSTABLE


def test_only_the_clf_minimum_is_an_interior_equilibrium(fig2):
    points = interior_equilibria(fig2.plant, fig2.clf, fig2.cfg, fig2.barriers, bounds=([-8.0, -8.0], [8.0, 8.0]), grid=6)
    assert len(points) == 1
    assert points[0].x_e == pytest.approx([0.0, 0.0], abs=1e-8)
    assert points[0].verdict == STABLE


def test_sphere_on_the_clf_axis_in_three_dimensions():
    plant = Plant.driftless(np.eye(3))
    clf = TransformedCLF.quadratic(np.eye(3), np.zeros(3))
    barrier = QuadraticFn.barrier(np.eye(3), [3.0, 0.0, 0.0])
    ps = build_pencil(plant, clf, barrier, 1.0)
    points = boundary_equilibria(ps, barrier, clf, plant, ControllerConfig())
    assert len(points) == 1
    assert points[0].x_e == pytest.approx([4.0, 0.0, 0.0])
    assert points[0].verdict == UNSTABLE
    assert not math.isnan(points[0].s_max_eig)


# ==================== Basis and coordinate changes ====================

def _inertia(mat, tol=1e-9):
    eig = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    scale = max(1.0, np.max(np.abs(eig)))
    return int(np.sum(eig > tol * scale)), int(np.sum(eig < -tol * scale))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_definiteness_ignores_the_tangent_basis(seed):
    rng = np.random.default_rng(seed)
    plant, clf, barrier, p = random_instance(rng, 3, lti=True)
    ps = build_pencil(plant, clf, barrier, p)
    R = stability_basis(ps, barrier)
    T = rng.standard_normal((2, 2)) + 3.0 * np.eye(2)
    S = stability_polynomial(ps, barrier)
    S_T = stability_polynomial(ps, barrier, basis=R @ T)
    for lam in rng.uniform(0.0, 20.0, 15):
        assert _inertia(S(lam)) == _inertia(S_T(lam))
        assert np.allclose(S_T(lam), T.T @ S(lam) @ T, rtol=1e-8, atol=1e-8 * np.linalg.norm(T) ** 2 * max(1.0, np.max(np.abs(S(lam)))))


def test_verdict_ignores_the_tangent_basis(fig2):
    right = _by_name(fig2, "right")
    ps = build_pencil(fig2.plant, fig2.clf, right, fig2.cfg.p)
    R = stability_basis(ps, right)
    for scale in (1.0, -2.5, 0.1):
        S = stability_polynomial(ps, right, basis=R @ np.array([[scale]]))
        assert classify_equilibrium(144.0, S) == STABLE


def test_equilibria_follow_a_linear_change_of_coordinates(fig2):
    # scaled rotation: the pencil transforms by similarity and its symmetric part by congruence
    c, s = math.cos(0.4), math.sin(0.4)
    T = 1.5 * np.array([[c, -s], [s, c]])
    T_inv = np.linalg.inv(T)
    plant = Plant.lti(T_inv @ fig2.plant.A @ T, T_inv @ fig2.plant.B, T_inv @ fig2.plant.origin)
    clf = TransformedCLF.quadratic(T.T @ fig2.clf.hessian @ T, T_inv @ fig2.clf.center, fig2.clf.gamma.gain)

    for barrier in fig2.barriers:
        moved = QuadraticFn.barrier(T.T @ barrier.hessian @ T, T_inv @ barrier.center, name=barrier.name)
        ps = build_pencil(fig2.plant, fig2.clf, barrier, fig2.cfg.p)
        ps_y = build_pencil(plant, clf, moved, fig2.cfg.p)
        qf, qf_y = q_function(ps, barrier), q_function(ps_y, moved)
        for lam in (0.0, 7.5, 33.0, 150.0):
            assert qf_y.evaluate(lam) == pytest.approx(qf.evaluate(lam), rel=1e-8)

        points = boundary_equilibria(ps, barrier, fig2.clf, fig2.plant, fig2.cfg)
        points_y = boundary_equilibria(ps_y, moved, clf, plant, fig2.cfg)
        assert [pt.lambda_e for pt in points_y] == pytest.approx([pt.lambda_e for pt in points], rel=1e-7)
        for pt, pt_y in zip(points, points_y):
            assert pt_y.x_e == pytest.approx(T_inv @ pt.x_e, abs=1e-7)
            assert pt_y.verdict == pt.verdict
            J, _ = boundary_jacobian(pt.x_e, pt.lambda_e, fig2.plant, fig2.clf, barrier, fig2.cfg)
            J_y, _ = boundary_jacobian(pt_y.x_e, pt_y.lambda_e, plant, clf, moved, fig2.cfg)
            assert np.sort_complex(np.linalg.eigvals(J_y)) == pytest.approx(np.sort_complex(np.linalg.eigvals(J)), abs=1e-6)
