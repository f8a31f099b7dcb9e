import numpy as np
import pytest

from src.services.qp_controller import INTERIOR, MULTI, SINGLE, ClosedLoop, Region
from src.services.shape_controller import (
    AdaptiveLoop,
    RegionFilter,
    ShapeDegenerateError,
    adaptive_closed_loop,
    factor_from_shape,
    hessian_from_shape,
    select_target,
    shape_dim,
    shape_from_hessian,
    shape_lyapunov,
    shape_qp_step,
    shape_size,
)


def test_shape_sizes():
    assert shape_size(2) == 3
    assert shape_size(3) == 6
    assert shape_dim(6) == 3
    with pytest.raises(ValueError):
        shape_dim(4)


def test_factor_is_lower_triangular():
    L = factor_from_shape([1.0, 2.0, 3.0])
    assert np.array_equal(L, [[1.0, 0.0], [2.0, 3.0]])
    assert np.allclose(hessian_from_shape([1.0, 2.0, 3.0]), L.T @ L)


def test_shape_recovers_the_hessian(rng):
    for n in (2, 3):
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        H = Q @ np.diag(rng.uniform(0.5, 3.0, n)) @ Q.T
        pi = shape_from_hessian(H)
        assert np.allclose(hessian_from_shape(pi), H, atol=1e-10)
        assert np.all(np.diag(factor_from_shape(pi)) >= 0)


def test_indefinite_hessian_has_no_shape():
    with pytest.raises(ValueError):
        shape_from_hessian(np.diag([1.0, -1.0]))


def test_shape_gradient_matches_finite_differences(rng):
    pi = rng.uniform(0.5, 1.5, 3)
    target = np.diag([1.0, 4.0])
    value, grad = shape_lyapunov(pi, target)
    assert value > 0
    h = 1e-6
    for k in range(pi.size):
        e = np.zeros(pi.size)
        e[k] = h
        fd = (shape_lyapunov(pi + e, target)[0] - shape_lyapunov(pi - e, target)[0]) / (2 * h)
        assert grad[k] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_target_selection():
    assert select_target(Region(INTERIOR)) == 0
    assert select_target(Region(SINGLE, (2,))) == 3
    assert select_target(Region(MULTI, (0, 1))) == 0


def test_shape_step_decreases_the_distance():
    targets = [np.eye(2), np.diag([1.6, 3.7])]
    pi = shape_from_hessian(np.diag([1.0, 4.0]))
    step = shape_qp_step(pi, Region(SINGLE, (0,)), targets, p_shape=100.0, gamma_shape=5.0)
    value, grad = shape_lyapunov(pi, targets[1])
    assert step.target == 1
    assert step.value == pytest.approx(value)
    assert grad @ step.u < 0
    assert grad @ step.u + 5.0 * value <= step.delta + 1e-9


def test_shape_at_target_does_not_move():
    pi = shape_from_hessian(np.diag([1.0, 4.0]))
    step = shape_qp_step(pi, Region(INTERIOR), [np.diag([1.0, 4.0])])
    assert np.allclose(step.u, 0.0)
    assert step.delta == 0.0


def test_region_filter_needs_consecutive_observations():
    f = RegionFilter(hysteresis=3)
    s1 = Region(SINGLE, (0,))
    assert f.update(s1).kind == INTERIOR
    assert f.update(s1).kind == INTERIOR
    assert f.update(s1) == s1
    # a two-step excursion does not switch back
    f.update(Region(INTERIOR))
    f.update(Region(MULTI, (0, 1)))
    assert f.update(s1) == s1
    assert f.current == s1


def test_region_filter_restarts_on_a_different_candidate():
    f = RegionFilter(hysteresis=2)
    f.update(Region(SINGLE, (0,)))
    f.update(Region(SINGLE, (1,)))
    assert f.current.kind == INTERIOR
    assert f.update(Region(SINGLE, (1,))) == Region(SINGLE, (1,))


def _adaptive(bundle, targets=None):
    loop = ClosedLoop(bundle.plant, bundle.clf, bundle.barriers, bundle.cfg)
    if targets is None:
        targets = [bundle.clf.hessian] * (len(bundle.barriers) + 1)
    return AdaptiveLoop(loop, targets, p_shape=100.0)


def test_adaptive_loop_checks_the_target_count(fig2):
    loop = ClosedLoop(fig2.plant, fig2.clf, fig2.barriers, fig2.cfg)
    with pytest.raises(ValueError):
        AdaptiveLoop(loop, [np.eye(2)])


def test_degenerate_shape_is_reported(fig2):
    adaptive = _adaptive(fig2)
    with pytest.raises(ShapeDegenerateError):
        adaptive.clf_at(np.zeros(3))


def test_adaptive_field_with_reference_targets_matches_the_static_loop(fig2):
    adaptive = _adaptive(fig2)
    pi = adaptive.initial_shape()
    assert np.allclose(hessian_from_shape(pi), fig2.clf.hessian)
    x = np.array([7.0, 1.0])
    dx, dpi = adaptive_closed_loop(x, pi, adaptive)
    assert np.allclose(dx, adaptive.loop.field(x))
    assert np.allclose(dpi, 0.0, atol=1e-12)
    state = np.concatenate([x, pi])
    assert adaptive.field(state).shape == (5,)


def test_observe_advances_the_filter(fig2):
    targets = [fig2.clf.hessian] * 3 + [np.diag([1.6, 3.7])]
    adaptive = AdaptiveLoop(ClosedLoop(fig2.plant, fig2.clf, fig2.barriers, fig2.cfg), targets, hysteresis=1)
    state = np.concatenate([[6.5, 0.2], adaptive.initial_shape()])
    region = adaptive.observe(state)
    assert region == Region(SINGLE, (2,))
    _, dpi = adaptive_closed_loop(state[:2], state[2:], adaptive, region=region)
    assert np.linalg.norm(dpi) > 0
