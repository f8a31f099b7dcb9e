"""
Quadratic functions - CLF and CBF objects, class-K gains and the transformed CLF.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

logger = logging.getLogger(__name__)

LINEAR = "linear"


@dataclass(frozen=True, eq=False)
class QuadraticFn:
    """
    Quadratic form 0.5 * (x - c)^T H (x - c) + offset.

    CLFs use offset 0; barriers use offset -0.5 so that h = 0.5 * (D^T H D - 1).
    """
    hessian: np.ndarray
    center: np.ndarray
    offset: float = 0.0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.hessian, dtype=float)).copy()
        c = np.asarray(self.center, dtype=float).reshape(-1).copy()
        if H.shape != (c.size, c.size):
            raise ValueError(f"Hessian shape {H.shape} does not match center of size {c.size}")
        if np.max(np.abs(H - H.T)) > 1e-12 * max(1.0, np.max(np.abs(H))):
            raise ValueError("Hessian must be symmetric")
        H = 0.5 * (H + H.T)
        H.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "hessian", H)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def barrier(cls, hessian, center, name: str = "") -> "QuadraticFn":
        return cls(hessian=hessian, center=center, offset=-0.5, name=name)

    @property
    def dim(self) -> int:
        return self.center.size

    def value(self, x) -> float:
        d = np.asarray(x, dtype=float) - self.center
        return 0.5 * float(d @ self.hessian @ d) + self.offset

    def gradient(self, x) -> np.ndarray:
        return self.hessian @ (np.asarray(x, dtype=float) - self.center)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.hessian)[0])

    def is_positive_definite(self, tol: float = 0.0) -> bool:
        return self.min_eigenvalue() > tol

    def with_hessian(self, hessian) -> "QuadraticFn":
        return QuadraticFn(hessian=hessian, center=self.center, offset=self.offset, name=self.name)


def barrier_eval(b: QuadraticFn, x) -> Tuple[float, np.ndarray]:
    """Barrier value and gradient at x."""
    return b.value(x), b.gradient(x)


@dataclass(frozen=True)
class ClassK:
    """Class-K function; only the linear shape s -> gain * s is implemented."""
    gain: float = 1.0
    kind: str = LINEAR

    def __post_init__(self):
        if self.kind != LINEAR:
            raise ValueError(f"Unsupported class-K shape: {self.kind}")
        if not self.gain > 0:
            raise ValueError(f"Class-K gain must be positive, got {self.gain}")

    def __call__(self, s: float) -> float:
        return self.gain * s

    def derivative(self, s: float) -> float:
        return self.gain

    def integral(self, s: float) -> float:
        """Integral of the function from 0 to s."""
        return 0.5 * self.gain * s * s

    def inverse_integral(self, v: float) -> float:
        """The s >= 0 whose integral equals v."""
        return math.sqrt(2.0 * max(v, 0.0) / self.gain)


@dataclass(frozen=True, eq=False)
class TransformedCLF:
    """
    Quadratic transformed CLF Vbar with its class-K gain.

    Vbar is the integral of gamma along V, so V, grad V and the Hessian of V
    are recovered pointwise from the quadratic Vbar.
    """
    vbar: QuadraticFn
    gamma: ClassK = field(default_factory=ClassK)

    def __post_init__(self):
        if not self.vbar.is_positive_definite():
            raise ValueError("Transformed CLF Hessian must be positive definite")
        if abs(self.vbar.offset) > 0:
            raise ValueError("Transformed CLF must vanish at its center")

    @classmethod
    def quadratic(cls, hessian, center, gain: float = 1.0) -> "TransformedCLF":
        return cls(vbar=QuadraticFn(hessian=hessian, center=center), gamma=ClassK(gain))

    @property
    def center(self) -> np.ndarray:
        return self.vbar.center

    @property
    def hessian(self) -> np.ndarray:
        return self.vbar.hessian

    @property
    def dim(self) -> int:
        return self.vbar.dim

    def value(self, x) -> float:
        return self.vbar.value(x)

    def gradient(self, x) -> np.ndarray:
        return self.vbar.gradient(x)

    def recover(self, x) -> Tuple[float, np.ndarray]:
        """V(x) and grad V(x); both vanish at the center."""
        vb = self.vbar.value(x)
        if vb <= 0.0:
            return 0.0, np.zeros(self.dim)
        V = self.gamma.inverse_integral(vb)
        return V, self.vbar.gradient(x) / self.gamma(V)

    def recovered_hessian(self, x) -> np.ndarray:
        """Hessian of V from H_Vbar = gamma(V) H_V + gamma'(V) grad V grad V^T."""
        V, grad = self.recover(x)
        if V == 0.0:
            raise ValueError("Hessian of V is undefined at the CLF minimum")
        return (self.hessian - self.gamma.derivative(V) * np.outer(grad, grad)) / self.gamma(V)

    def with_hessian(self, hessian) -> "TransformedCLF":
        return TransformedCLF(vbar=self.vbar.with_hessian(hessian), gamma=self.gamma)


def clf_recover(t: TransformedCLF, x) -> Tuple[float, np.ndarray]:
    """Recover (V, grad V) from the transformed CLF."""
    return t.recover(x)


__all__ = [
    "LINEAR",
    "QuadraticFn",
    "barrier_eval",
    "ClassK",
    "TransformedCLF",
    "clf_recover",
]
