"""
Oblique projections - Projections under the semi-inner product induced by a PSD matrix G.

For Z with pairwise G-orthogonal columns and a diagonal N1 > 0 the operator
P_Z = I - G Z N1 Z^T satisfies (P_Z)^k = I - G Z N_k Z^T with the diagonal
sequence N_{k+1} = N_k + N1 - N_k D N1, D = Z^T G Z.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

logger = logging.getLogger(__name__)


def _as_inputs(Z, G, N1):
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z.reshape(-1, 1)
    G = np.atleast_2d(np.asarray(G, dtype=float))
    N1 = np.atleast_2d(np.asarray(N1, dtype=float))
    n, r = Z.shape
    if G.shape != (n, n):
        raise ValueError(f"G must be {n}x{n}, got {G.shape}")
    if N1.shape != (r, r):
        raise ValueError(f"N1 must be {r}x{r}, got {N1.shape}")
    return Z, G, N1


def _check_inputs(Z: np.ndarray, G: np.ndarray, N1: np.ndarray, tol: float) -> np.ndarray:
    if not np.allclose(G, G.T, rtol=0.0, atol=tol * max(1.0, np.max(np.abs(G)))):
        raise ValueError("G must be symmetric")

    D = Z.T @ G @ Z
    off = D - np.diag(np.diag(D))
    if off.size and np.max(np.abs(off)) > tol * max(1.0, np.max(np.abs(D))):
        raise ValueError("Columns of Z are not pairwise G-orthogonal")

    n1_off = N1 - np.diag(np.diag(N1))
    if np.any(np.abs(n1_off) > tol) or np.any(np.diag(N1) <= 0):
        raise ValueError("N1 must be diagonal with a positive diagonal")
    return D


def oblique_projection(Z, G, N1, tol: float = 1e-10) -> np.ndarray:
    """
    Build P_Z = I - G Z N1 Z^T.

    Args:
        Z: n x r matrix with pairwise G-orthogonal columns
        G: Symmetric PSD n x n matrix
        N1: Diagonal positive definite r x r matrix
        tol: Orthogonality tolerance

    Returns:
        n x n projection matrix

    Raises:
        ValueError: If the columns of Z are not G-orthogonal or N1 is not diagonal PD
    """
    Z, G, N1 = _as_inputs(Z, G, N1)
    _check_inputs(Z, G, N1, tol)
    return np.eye(Z.shape[0]) - G @ Z @ N1 @ Z.T


@dataclass(frozen=True)
class ProjectionSequence:
    """Diagonal matrices N_1..N_k describing the powers of P_Z."""
    matrices: Tuple[np.ndarray, ...]
    generalized: bool

    @property
    def last(self) -> np.ndarray:
        return self.matrices[-1]

    def power(self, k: int, Z, G) -> np.ndarray:
        """(P_Z)^k rebuilt from N_k."""
        Z = np.asarray(Z, dtype=float).reshape(np.shape(Z)[0], -1)
        return np.eye(Z.shape[0]) - np.asarray(G) @ Z @ self.matrices[k - 1] @ Z.T


def projection_sequence(N1, Z, G, k: int, tol: float = 1e-10) -> ProjectionSequence:
    """
    Compute N_1..N_k for the powers of the oblique projection.

    The projection is "generalized" when every N_j stays positive definite.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    Z, G, N1 = _as_inputs(Z, G, N1)
    D = _check_inputs(Z, G, N1, tol)
    D = np.diag(np.diag(D))

    matrices = [N1.copy()]
    for _ in range(k - 1):
        Nk = matrices[-1]
        matrices.append(Nk + N1 - Nk @ D @ N1)

    generalized = all(np.all(np.diag(Nj) > 0) for Nj in matrices)
    if not generalized:
        logger.warning("⚠️ Projection sequence lost positive definiteness")
    return ProjectionSequence(matrices=tuple(matrices), generalized=generalized)


__all__ = [
    "oblique_projection",
    "ProjectionSequence",
    "projection_sequence",
]
