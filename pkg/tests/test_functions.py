import numpy as np
import pytest

from src.models.functions import ClassK, QuadraticFn, TransformedCLF, barrier_eval, clf_recover


def test_barrier_is_zero_on_the_ellipse():
    h = QuadraticFn.barrier(np.diag([0.25, 0.25]), [4.0, 0.0])
    assert h.value([6.0, 0.0]) == pytest.approx(0.0)
    assert h.value([4.0, 0.0]) == pytest.approx(-0.5)
    value, grad = barrier_eval(h, [6.0, 0.0])
    assert np.allclose(grad, [0.5, 0.0])


def test_asymmetric_hessian_is_rejected():
    with pytest.raises(ValueError, match="symmetric"):
        QuadraticFn(hessian=[[1.0, 0.2], [0.0, 1.0]], center=[0.0, 0.0])


def test_class_k_integral_inverts():
    k = ClassK(5.0)
    assert k(2.0) == 10.0
    assert k.derivative(3.0) == 5.0
    assert k.inverse_integral(k.integral(1.7)) == pytest.approx(1.7, rel=1e-12)
    with pytest.raises(ValueError):
        ClassK(0.0)
    with pytest.raises(ValueError):
        ClassK(1.0, kind="quadratic")


def test_transformed_clf_requires_positive_definite_hessian():
    with pytest.raises(ValueError):
        TransformedCLF.quadratic([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0])


def test_recovery_satisfies_gradient_relation():
    clf = TransformedCLF.quadratic([[1.0, 0.0], [0.0, 4.0]], [0.0, 0.0], gain=5.0)
    x = np.array([6.0, 0.0])
    V, grad_v = clf_recover(clf, x)
    assert V == pytest.approx(np.sqrt(2.0 * 18.0 / 5.0))
    assert np.allclose(clf.gradient(x), clf.gamma(V) * grad_v)
    V0, grad0 = clf.recover(clf.center)
    assert V0 == 0.0
    assert not np.any(grad0)


def test_recovered_hessian_matches_finite_differences():
    clf = TransformedCLF.quadratic([[2.0, 0.3], [0.3, 1.0]], [0.5, -0.5], gain=2.0)
    x = np.array([1.3, 0.4])
    h = 1e-6
    fd = np.column_stack([
        (clf.recover(x + h * e)[1] - clf.recover(x - h * e)[1]) / (2 * h) for e in np.eye(2)
    ])
    assert np.allclose(clf.recovered_hessian(x), fd, atol=1e-6)
    with pytest.raises(ValueError):
        clf.recovered_hessian(clf.center)


def test_radial_recovery_is_the_euclidean_norm():
    clf = TransformedCLF.quadratic(np.eye(2), [0.0, 0.0])
    V, grad_v = clf.recover([4.0, 0.0])
    assert V == pytest.approx(4.0)
    assert np.allclose(grad_v, [1.0, 0.0])
    assert np.allclose(clf.recovered_hessian([4.0, 0.0]), np.diag([0.0, 0.25]))
