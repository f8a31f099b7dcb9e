"""
Polynomial arithmetic - Scalar and matrix polynomials with dense coefficients.

Coefficients are stored in ascending degree, so ``c[k]`` multiplies ``lam**k``.
Scalar arithmetic goes through ``numpy.polynomial.polynomial``; roots come from
the eigenvalues of the companion matrix.
"""

import logging
import math
from typing import Union

import numpy as np
from numpy.polynomial import polynomial as P

from src.config import REAL_ROOT_TOL

logger = logging.getLogger(__name__)

Number = Union[int, float, complex]


class DegenerateInputError(Exception):
    """Raised when a polynomial operation receives the zero polynomial."""
    pass


class ScalarPoly:
    """Real scalar polynomial, coefficients in ascending degree."""

    # Make numpy scalars and arrays defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, coeffs):
        c = np.atleast_1d(np.asarray(coeffs, dtype=float)).ravel()
        if c.size == 0:
            c = np.zeros(1)
        c = P.polytrim(c)
        c.setflags(write=False)
        self._coeffs = c

    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs

    @property
    def is_zero(self) -> bool:
        return not np.any(self._coeffs)

    @property
    def degree(self) -> float:
        """Degree of the polynomial; the zero polynomial has degree -inf."""
        if self.is_zero:
            return -math.inf
        return len(self._coeffs) - 1

    @property
    def leading(self) -> float:
        return float(self._coeffs[-1])

    def __call__(self, lam):
        return P.polyval(lam, self._coeffs)

    def _coerce(self, other) -> "ScalarPoly":
        if isinstance(other, ScalarPoly):
            return other
        if np.isscalar(other):
            return ScalarPoly([float(other)])
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return ScalarPoly(P.polyadd(self._coeffs, other._coeffs))

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return ScalarPoly(P.polysub(self._coeffs, other._coeffs))

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other - self

    def __neg__(self):
        return ScalarPoly(-self._coeffs)

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return ScalarPoly(P.polymul(self._coeffs, other._coeffs))

    __rmul__ = __mul__

    def __pow__(self, k: int):
        return ScalarPoly(P.polypow(self._coeffs, k))

    def derivative(self) -> "ScalarPoly":
        return ScalarPoly(P.polyder(self._coeffs))

    def trimmed(self, rel_tol: float) -> "ScalarPoly":
        """Drop trailing coefficients below ``rel_tol`` times the largest one."""
        if self.is_zero:
            return self
        scale = np.max(np.abs(self._coeffs))
        return ScalarPoly(P.polytrim(self._coeffs, tol=rel_tol * scale))

    def allclose(self, other: "ScalarPoly", atol: float = 1e-12) -> bool:
        a, b = self._coeffs, other.coeffs
        size = max(len(a), len(b))
        a = np.pad(a, (0, size - len(a)))
        b = np.pad(b, (0, size - len(b)))
        return bool(np.allclose(a, b, rtol=0.0, atol=atol))

    def __repr__(self):
        return f"ScalarPoly({self._coeffs.tolist()})"


def poly_roots(p: ScalarPoly, tol: float = REAL_ROOT_TOL, trim_tol: float = 1e-13) -> np.ndarray:
    """
    Roots of a scalar polynomial via companion-matrix eigenvalues.

    Roots with ``|imag| <= tol * (1 + |real|)`` are snapped onto the real axis.
    A nonzero constant has no roots and yields an empty array.

    Args:
        p: Polynomial to solve
        tol: Real-root acceptance tolerance
        trim_tol: Relative size below which trailing coefficients are dropped

    Returns:
        Complex array of deg(p) roots sorted by real then imaginary part

    Raises:
        DegenerateInputError: If p is the zero polynomial
    """
    q = p.trimmed(trim_tol)
    if q.is_zero:
        raise DegenerateInputError("Zero polynomial has no well-defined roots")
    if q.degree < 1:
        return np.zeros(0, dtype=complex)

    monic = q.coeffs / q.coeffs[-1]
    # Rotated companion matrix, same choice as numpy.polyroots
    companion = P.polycompanion(monic)[::-1, ::-1]
    roots = np.linalg.eigvals(companion).astype(complex)

    snap = np.abs(roots.imag) <= tol * (1.0 + np.abs(roots.real))
    roots[snap] = roots[snap].real
    order = np.lexsort((roots.imag, roots.real))
    return roots[order]


def real_roots(p: ScalarPoly, tol: float = REAL_ROOT_TOL, polish: bool = True) -> np.ndarray:
    """Sorted real roots of p, optionally refined with a few Newton steps."""
    roots = poly_roots(p, tol=tol)
    reals = np.sort(roots[roots.imag == 0].real)
    if not polish or reals.size == 0:
        return reals

    dp = p.derivative()
    polished = []
    for r in reals:
        x = r
        for _ in range(3):
            slope = dp(x)
            if slope == 0:
                break
            step = p(x) / slope
            candidate = x - step
            if abs(p(candidate)) >= abs(p(x)):
                break
            x = candidate
        polished.append(x)
    return np.sort(np.array(polished, dtype=float))


class MatrixPoly:
    """Real matrix polynomial sum_k C_k lam**k with r x c coefficient matrices."""

    __array_ufunc__ = None

    def __init__(self, coeff_mats):
        arr = np.asarray(coeff_mats, dtype=float)
        if arr.ndim == 2:
            arr = arr[None, :, :]
        if arr.ndim != 3:
            raise ValueError(f"Expected a stack of matrices, got shape {arr.shape}")
        nonzero = [k for k in range(arr.shape[0]) if np.any(arr[k])]
        arr = arr[: nonzero[-1] + 1].copy() if nonzero else np.zeros((1,) + arr.shape[1:])
        arr.setflags(write=False)
        self._coeffs = arr

    @classmethod
    def constant(cls, mat) -> "MatrixPoly":
        return cls(np.atleast_2d(np.asarray(mat, dtype=float)))

    @classmethod
    def from_scalar(cls, p: ScalarPoly) -> "MatrixPoly":
        return cls(p.coeffs.reshape(-1, 1, 1))

    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs

    @property
    def rows(self) -> int:
        return self._coeffs.shape[1]

    @property
    def cols(self) -> int:
        return self._coeffs.shape[2]

    @property
    def shape(self):
        return self._coeffs.shape[1:]

    @property
    def is_zero(self) -> bool:
        return not np.any(self._coeffs)

    @property
    def degree(self) -> float:
        if self.is_zero:
            return -math.inf
        return self._coeffs.shape[0] - 1

    @property
    def T(self) -> "MatrixPoly":
        return MatrixPoly(np.transpose(self._coeffs, (0, 2, 1)))

    def __call__(self, lam) -> np.ndarray:
        # Horner evaluation, complex lam allowed
        out = np.zeros(self.shape, dtype=np.result_type(lam, float))
        for C in self._coeffs[::-1]:
            out = out * lam + C
        return out

    def entry(self, i: int, j: int) -> ScalarPoly:
        return ScalarPoly(self._coeffs[:, i, j])

    def _pad_to(self, length: int) -> np.ndarray:
        pad = length - self._coeffs.shape[0]
        return np.concatenate([self._coeffs, np.zeros((pad,) + self.shape)]) if pad > 0 else self._coeffs

    def _coerce(self, other):
        if isinstance(other, MatrixPoly):
            return other
        if isinstance(other, np.ndarray) and other.ndim == 2:
            return MatrixPoly.constant(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if other.shape != self.shape:
            raise ValueError(f"Shape mismatch: {self.shape} vs {other.shape}")
        length = max(self._coeffs.shape[0], other.coeffs.shape[0])
        return MatrixPoly(self._pad_to(length) + other._pad_to(length))

    __radd__ = __add__

    def __neg__(self):
        return MatrixPoly(-self._coeffs)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other - self

    def __matmul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.cols != other.rows:
            raise ValueError(f"Cannot multiply {self.shape} by {other.shape}")
        a, b = self._coeffs, other.coeffs
        out = np.zeros((a.shape[0] + b.shape[0] - 1, self.rows, other.cols))
        for i, Ai in enumerate(a):
            for j, Bj in enumerate(b):
                out[i + j] += Ai @ Bj
        return MatrixPoly(out)

    def __rmatmul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other @ self

    def __mul__(self, other):
        """Entrywise scaling by a real number or a scalar polynomial."""
        if isinstance(other, ScalarPoly):
            c = other.coeffs
            out = np.zeros((self._coeffs.shape[0] + len(c) - 1,) + self.shape)
            for i, Ci in enumerate(self._coeffs):
                for j, cj in enumerate(c):
                    out[i + j] += cj * Ci
            return MatrixPoly(out)
        if np.isscalar(other):
            return MatrixPoly(float(other) * self._coeffs)
        return NotImplemented

    __rmul__ = __mul__

    def derivative(self) -> "MatrixPoly":
        if self._coeffs.shape[0] == 1:
            return MatrixPoly(np.zeros((1,) + self.shape))
        k = np.arange(1, self._coeffs.shape[0]).reshape(-1, 1, 1)
        return MatrixPoly(k * self._coeffs[1:])

    def leading_coefficient(self) -> np.ndarray:
        return np.array(self._coeffs[-1])

    def max_abs_coefficient(self) -> float:
        return float(np.max(np.abs(self._coeffs)))

    def is_symmetric(self, tol: float = 1e-9) -> bool:
        if self.rows != self.cols:
            return False
        scale = max(1.0, self.max_abs_coefficient())
        return bool(np.max(np.abs(self._coeffs - np.transpose(self._coeffs, (0, 2, 1)))) <= tol * scale)

    def symmetrized(self) -> "MatrixPoly":
        return MatrixPoly(0.5 * (self._coeffs + np.transpose(self._coeffs, (0, 2, 1))))

    def trimmed(self, rel_tol: float) -> "MatrixPoly":
        """Drop trailing coefficient matrices below ``rel_tol`` times the largest entry."""
        if self.is_zero:
            return self
        cutoff = rel_tol * self.max_abs_coefficient()
        keep = [k for k in range(self._coeffs.shape[0]) if np.max(np.abs(self._coeffs[k])) > cutoff]
        return MatrixPoly(self._coeffs[: keep[-1] + 1])

    def determinant(self) -> ScalarPoly:
        """
        Determinant of a square matrix polynomial.

        1x1 polynomials are read off directly; larger ones are interpolated
        through Chebyshev points, since the degree is bounded by rows * deg.
        """
        if self.rows != self.cols:
            raise ValueError(f"Determinant needs a square polynomial, got {self.shape}")
        if self.rows == 1:
            return self.entry(0, 0)
        if self.is_zero:
            return ScalarPoly([0.0])
        bound = int(self.rows * self.degree)
        return interpolate_scalar(lambda lam: np.linalg.det(self(lam)), bound)

    def __repr__(self):
        return f"MatrixPoly(shape={self.shape}, degree={self.degree})"


def interpolate_scalar(fn, degree: int) -> ScalarPoly:
    """Recover the coefficients of a polynomial of known degree from point values."""
    if degree <= 0:
        return ScalarPoly([fn(0.0)])
    k = np.arange(degree + 1)
    nodes = np.cos(np.pi * (k + 0.5) / (degree + 1))
    values = np.array([fn(x) for x in nodes], dtype=float)
    vander = P.polyvander(nodes, degree)
    return ScalarPoly(np.linalg.solve(vander, values))


__all__ = [
    "DegenerateInputError",
    "ScalarPoly",
    "MatrixPoly",
    "poly_roots",
    "real_roots",
    "interpolate_scalar",
]
