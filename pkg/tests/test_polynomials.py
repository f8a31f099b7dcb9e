import math

import numpy as np
import pytest

from src.algebra.polynomials import (
    DegenerateInputError,
    MatrixPoly,
    ScalarPoly,
    interpolate_scalar,
    poly_roots,
    real_roots,
)


def test_scalar_arithmetic_matches_numpy():
    p = ScalarPoly([1.0, -2.0, 3.0])  # 1 - 2 lam + 3 lam^2
    q = ScalarPoly([0.0, 1.0])

    assert (p + q).allclose(ScalarPoly([1.0, -1.0, 3.0]))
    assert (p * q).allclose(ScalarPoly([0.0, 1.0, -2.0, 3.0]))
    assert (2.0 - q).allclose(ScalarPoly([2.0, -1.0]))
    assert (q ** 3).allclose(ScalarPoly([0.0, 0.0, 0.0, 1.0]))
    assert p.derivative().allclose(ScalarPoly([-2.0, 6.0]))
    assert p(2.0) == pytest.approx(9.0)


def test_numpy_scalar_on_the_left_stays_a_polynomial():
    q = ScalarPoly([0.0, 1.0])
    out = np.float64(3.0) * q
    assert isinstance(out, ScalarPoly)
    assert out.allclose(ScalarPoly([0.0, 3.0]))


def test_zero_polynomial_has_negative_infinite_degree():
    z = ScalarPoly([0.0, 0.0])
    assert z.is_zero
    assert z.degree == -math.inf
    assert ScalarPoly([5.0]).degree == 0


def test_roots_of_known_cubic():
    # (lam - 1)(lam - 2)(lam + 3)
    p = ScalarPoly([1.0, -1.0]) * ScalarPoly([-2.0, 1.0]) * ScalarPoly([3.0, 1.0])
    roots = poly_roots(p)
    assert np.allclose(roots.imag, 0.0)
    assert np.allclose(roots.real, [-3.0, 1.0, 2.0])
    assert np.allclose(real_roots(p), [-3.0, 1.0, 2.0], atol=1e-12)


def test_complex_pair_is_not_reported_as_real():
    p = ScalarPoly([1.0, 0.0, 1.0]) * ScalarPoly([-4.0, 1.0])  # (lam^2 + 1)(lam - 4)
    assert np.allclose(real_roots(p), [4.0])
    assert len(poly_roots(p)) == 3


def test_constant_has_no_roots_and_zero_raises():
    assert poly_roots(ScalarPoly([2.0])).size == 0
    with pytest.raises(DegenerateInputError):
        poly_roots(ScalarPoly([0.0]))


def test_matrix_poly_products_and_evaluation():
    A = MatrixPoly(np.stack([np.eye(2), np.array([[0.0, 1.0], [0.0, 0.0]])]))  # I + lam E12
    B = A @ A
    lam = 1.7
    assert np.allclose(B(lam), A(lam) @ A(lam))
    assert B.degree == 1  # E12 @ E12 == 0
    assert np.allclose((A * ScalarPoly([0.0, 2.0]))(lam), 2.0 * lam * A(lam))
    assert np.allclose((np.eye(2) @ A)(lam), A(lam))


def test_matrix_poly_determinant_and_derivative():
    S = MatrixPoly(np.stack([np.diag([-1.0, -2.0]), np.eye(2)]))  # diag(lam - 1, lam - 2)
    assert S.determinant().allclose(ScalarPoly([2.0, -3.0, 1.0]), atol=1e-10)
    assert np.allclose(S.derivative()(3.0), np.eye(2))
    assert S.is_symmetric()


def test_interpolation_recovers_coefficients():
    p = interpolate_scalar(lambda x: 2.0 - x + 0.5 * x ** 3, 3)
    assert p.allclose(ScalarPoly([2.0, -1.0, 0.0, 0.5]), atol=1e-12)


def test_roots_of_the_small_wilkinson_product():
    # (lam - 1)(lam - 2)...(lam - 6)
    p = ScalarPoly([1.0])
    for j in range(1, 7):
        p = p * ScalarPoly([-float(j), 1.0])
    roots = poly_roots(p)
    assert np.max(np.abs(roots.imag)) <= 1e-6
    assert np.max(np.abs(np.sort(roots.real) - np.arange(1.0, 7.0))) <= 1e-6
    assert np.max(np.abs(real_roots(p) - np.arange(1.0, 7.0))) <= 1e-6
