"""
Plant models - Control-affine dynamics x' = f(x) + g(x) u.

Two classes are supported: LTI pairs (A, B) with drift A(x - origin), and
driftless systems whose input map g(x) has full row rank.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

logger = logging.getLogger(__name__)

LTI = "lti"
DRIFTLESS = "driftless"

# Relative step of the central differences used for dG/dx when no Jacobian is given
_FD_STEP = 1e-6


@dataclass(frozen=True, eq=False)
class Plant:
    """
    Control-affine plant.

    For driftless plants either a constant input matrix (stored in B) or a
    callable input map is given; ``input_map_jacobian`` returns the stack
    dg/dx_k with shape (n, n, m) when available.
    """
    kind: str
    state_dim: int
    input_dim: int
    A: Optional[np.ndarray] = field(default=None, repr=False)
    B: Optional[np.ndarray] = field(default=None, repr=False)
    origin: Optional[np.ndarray] = field(default=None, repr=False)
    input_map: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    input_map_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    @classmethod
    def lti(cls, A, B, origin=None) -> "Plant":
        """LTI plant x' = A(x - origin) + B u."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.asarray(B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n:
            raise ValueError(f"Incompatible LTI shapes A={A.shape}, B={B.shape}")
        origin = np.zeros(n) if origin is None else np.asarray(origin, dtype=float).reshape(n)
        for arr in (A, B, origin):
            arr.setflags(write=False)
        return cls(kind=LTI, state_dim=n, input_dim=B.shape[1], A=A, B=B, origin=origin)

    @classmethod
    def driftless(cls, g, jacobian=None, state_dim: Optional[int] = None, input_dim: Optional[int] = None) -> "Plant":
        """
        Driftless plant x' = g(x) u.

        Args:
            g: Constant n x m matrix or callable x -> n x m matrix
            jacobian: Optional callable x -> (n, n, m) stack of dg/dx_k
            state_dim: Required when g is callable
            input_dim: Required when g is callable

        Raises:
            ValueError: If a constant g does not have full row rank
        """
        if callable(g):
            if state_dim is None or input_dim is None:
                raise ValueError("state_dim and input_dim are required for a callable input map")
            if input_dim < state_dim:
                raise ValueError(f"Driftless plants need m >= n, got m={input_dim}, n={state_dim}")
            return cls(
                kind=DRIFTLESS,
                state_dim=state_dim,
                input_dim=input_dim,
                input_map=g,
                input_map_jacobian=jacobian,
            )

        B = np.atleast_2d(np.asarray(g, dtype=float))
        n, m = B.shape
        if np.linalg.matrix_rank(B) < n:
            raise ValueError(f"Driftless input map must have rank {n}, got rank {np.linalg.matrix_rank(B)}")
        B.setflags(write=False)
        return cls(kind=DRIFTLESS, state_dim=n, input_dim=m, B=B)

    @property
    def is_lti(self) -> bool:
        return self.kind == LTI

    @property
    def constant_input(self) -> bool:
        return self.input_map is None

    def drift(self, x: np.ndarray) -> np.ndarray:
        if self.is_lti:
            return self.A @ (np.asarray(x, dtype=float) - self.origin)
        return np.zeros(self.state_dim)

    def drift_jacobian(self, x: np.ndarray) -> np.ndarray:
        if self.is_lti:
            return np.array(self.A)
        return np.zeros((self.state_dim, self.state_dim))

    def input_matrix(self, x: np.ndarray) -> np.ndarray:
        if self.constant_input:
            return np.array(self.B)
        g = np.atleast_2d(np.asarray(self.input_map(np.asarray(x, dtype=float)), dtype=float))
        if g.shape != (self.state_dim, self.input_dim):
            raise ValueError(f"Input map returned shape {g.shape}, expected {(self.state_dim, self.input_dim)}")
        if np.linalg.matrix_rank(g) < self.state_dim:
            raise ValueError(f"Input map loses rank at x={np.asarray(x).tolist()}")
        return g

    def input_gram(self, x: np.ndarray) -> np.ndarray:
        """G(x) = g(x) g(x)^T."""
        g = self.input_matrix(x)
        return g @ g.T

    def input_map_derivatives(self, x: np.ndarray) -> np.ndarray:
        """Stack of dg/dx_k, shape (n, n, m)."""
        n, m = self.state_dim, self.input_dim
        if self.constant_input:
            return np.zeros((n, n, m))
        x = np.asarray(x, dtype=float)
        if self.input_map_jacobian is not None:
            return np.asarray(self.input_map_jacobian(x), dtype=float).reshape(n, n, m)

        out = np.zeros((n, n, m))
        for k in range(n):
            h = _FD_STEP * (1.0 + abs(x[k]))
            e = np.zeros(n)
            e[k] = h
            out[k] = (self.input_matrix(x + e) - self.input_matrix(x - e)) / (2.0 * h)
        return out

    def input_gram_derivatives(self, x: np.ndarray) -> np.ndarray:
        """Stack of dG/dx_k, shape (n, n, n)."""
        n = self.state_dim
        if self.constant_input:
            return np.zeros((n, n, n))
        g = self.input_matrix(x)
        dg = self.input_map_derivatives(x)
        return np.stack([dg[k] @ g.T + g @ dg[k].T for k in range(n)])

    def open_loop(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Open-loop vector field f(x) + g(x) u."""
        return self.drift(x) + self.input_matrix(x) @ np.asarray(u, dtype=float)


__all__ = [
    "LTI",
    "DRIFTLESS",
    "Plant",
]
