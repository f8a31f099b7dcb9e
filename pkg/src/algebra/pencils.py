"""
Pencil algebra - Linear matrix pencils, adjugates, polynomial null spaces and
definiteness intervals of symmetric matrix polynomials.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from numpy.polynomial import polynomial as P

from src.algebra.polynomials import MatrixPoly, ScalarPoly, interpolate_scalar, real_roots
from src.config import DEFINITENESS_GRID, PSD_TOL

logger = logging.getLogger(__name__)

NSD = "nsd"
PSD = "psd"
INDEFINITE = "indefinite"

# Fixed generic points used to certify the rank of a polynomial basis
_RANK_PROBES = (0.5377, -1.3077)


class DegeneratePencilError(Exception):
    """Raised when det(lam*M - N) is identically zero."""
    pass


class NullspaceDegreeExceededError(Exception):
    """Raised when no full-rank polynomial null-space basis exists up to the degree bound."""
    pass


def _permutation_sign(perm) -> int:
    sign = 1
    seen = list(perm)
    for i in range(len(seen)):
        while seen[i] != i:
            j = seen[i]
            seen[i], seen[j] = seen[j], seen[i]
            sign = -sign
    return sign


def _det_poly(M: np.ndarray, N: np.ndarray) -> ScalarPoly:
    """det(lam*M - N) without any regularity check."""
    n = M.shape[0]
    if n == 0:
        return ScalarPoly([1.0])
    if n <= 4:
        total = np.zeros(1)
        for perm in itertools.permutations(range(n)):
            term = np.array([float(_permutation_sign(perm))])
            for i, j in enumerate(perm):
                term = P.polymul(term, [-N[i, j], M[i, j]])
            total = P.polyadd(total, term)
        return ScalarPoly(total)
    return interpolate_scalar(lambda lam: np.linalg.det(lam * M - N), n)


class Pencil:
    """Regular linear pencil P(lam) = lam*M - N."""

    def __init__(self, M, N, tol: float = 1e-12):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        N = np.atleast_2d(np.asarray(N, dtype=float))
        if M.shape != N.shape or M.shape[0] != M.shape[1]:
            raise ValueError(f"Pencil needs square matrices of equal size, got {M.shape} and {N.shape}")
        M.setflags(write=False)
        N.setflags(write=False)
        self.M = M
        self.N = N

        det = _det_poly(M, N)
        scale = max(1.0, np.max(np.abs(M)), np.max(np.abs(N))) ** M.shape[0]
        if det.is_zero or np.max(np.abs(det.coeffs)) <= tol * scale:
            raise DegeneratePencilError("Pencil is not regular: det(lam*M - N) vanishes identically")
        self._det = det

    @property
    def n(self) -> int:
        return self.M.shape[0]

    def __call__(self, lam) -> np.ndarray:
        return lam * self.M - self.N

    def as_matrix_poly(self) -> MatrixPoly:
        return MatrixPoly(np.stack([-self.N, self.M]))

    def __repr__(self):
        return f"Pencil(n={self.n})"


def pencil_det(pencil: Pencil) -> ScalarPoly:
    """Return det(lam*M - N) with exact coefficients."""
    return pencil._det


def pencil_adjugate(pencil: Pencil) -> MatrixPoly:
    """
    Adjugate of the pencil as a matrix polynomial of degree at most n-1.

    Entry (i, j) is the signed cofactor of entry (j, i).
    """
    n = pencil.n
    if n == 1:
        return MatrixPoly(np.ones((1, 1, 1)))

    coeffs = np.zeros((n, n, n))
    for i in range(n):
        for j in range(n):
            keep_rows = [k for k in range(n) if k != j]
            keep_cols = [k for k in range(n) if k != i]
            minor = _det_poly(
                pencil.M[np.ix_(keep_rows, keep_cols)],
                pencil.N[np.ix_(keep_rows, keep_cols)],
            )
            c = ((-1) ** (i + j)) * minor.coeffs
            coeffs[: len(c), i, j] = c
    return MatrixPoly(coeffs)


def adjugate_residual(pencil: Pencil) -> float:
    """Largest coefficient of P*Adj - det*I, relative to the largest coefficient involved."""
    adj = pencil_adjugate(pencil)
    det = pencil_det(pencil)
    identity_det = MatrixPoly.constant(np.eye(pencil.n)) * det
    residual = pencil.as_matrix_poly() @ adj - identity_det
    scale = max(1.0, identity_det.max_abs_coefficient())
    return residual.max_abs_coefficient() / scale


def generalized_eigenvalues(pencil: Pencil) -> np.ndarray:
    """
    Finite eigenvalues of the pencil, i.e. roots of det(lam*M - N).

    Real eigenvalues are snapped onto the real axis. Infinite eigenvalues from
    a singular M are dropped.
    """
    values = scipy.linalg.eigvals(pencil.N, pencil.M)
    values = values[np.isfinite(values)]
    snap = np.abs(values.imag) <= 1e-9 * (1.0 + np.abs(values.real))
    values = values.astype(complex)
    values[snap] = values[snap].real
    order = np.lexsort((values.imag, values.real))
    return values[order]


def _numeric_rank(mat: np.ndarray, tol: float) -> int:
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def _select_basis(candidates, target: int, tol: float) -> Optional[list]:
    """Greedily keep candidate columns that raise the rank at the first probe point."""
    lam = _RANK_PROBES[0]
    chosen, values = [], []
    for cand in candidates:
        trial = values + [cand(lam)[:, 0]]
        if _numeric_rank(np.column_stack(trial), tol) == len(trial):
            chosen.append(cand)
            values = trial
        if len(chosen) == target:
            break
    if len(chosen) < target:
        return None
    # second probe guards against an accidental rank drop at the first one
    check = np.column_stack([c(_RANK_PROBES[1])[:, 0] for c in chosen])
    if _numeric_rank(check, tol) < target:
        return None
    return chosen


def poly_nullspace(v: MatrixPoly, max_deg: Optional[int] = None, tol: float = 1e-10) -> MatrixPoly:
    """
    Minimal-degree polynomial basis of the orthogonal complement of v(lam).

    For d = 0, 1, ... the coefficients of r(lam) = sum_j r_j lam**j with
    r(lam)^T v(lam) == 0 span the kernel of a convolution matrix; the first
    degree that yields n-1 independent columns wins.

    Args:
        v: n x 1 vector polynomial
        max_deg: Degree bound for the search (defaults to n-1)
        tol: Relative singular-value cutoff for kernels and ranks

    Returns:
        n x (n-1) matrix polynomial R with R^T v == 0

    Raises:
        ValueError: If v is not a nonzero column with n >= 2
        NullspaceDegreeExceededError: If no basis exists up to max_deg
    """
    if v.cols != 1:
        raise ValueError(f"Expected an n x 1 vector polynomial, got shape {v.shape}")
    n = v.rows
    if n < 2:
        raise ValueError("Null space of a scalar polynomial is trivial")
    if v.is_zero:
        raise ValueError("Zero vector polynomial has no proper null space")
    if max_deg is None:
        max_deg = n - 1

    vc = v.coeffs[:, :, 0] / v.max_abs_coefficient()
    ell = vc.shape[0] - 1

    for d in range(max_deg + 1):
        conv = np.zeros((ell + d + 1, (d + 1) * n))
        for j in range(d + 1):
            for k in range(ell + 1):
                conv[j + k, j * n:(j + 1) * n] = vc[k]
        kernel = scipy.linalg.null_space(conv, rcond=tol)
        if kernel.shape[1] < n - 1:
            continue

        candidates = [
            MatrixPoly(kernel[:, col].reshape(d + 1, n)[:, :, None])
            for col in range(kernel.shape[1])
        ]
        chosen = _select_basis(candidates, n - 1, tol)
        if chosen is None:
            continue
        logger.debug(f"Null-space basis found at degree {d}")
        length = d + 1
        stacked = np.concatenate([c._pad_to(length) for c in chosen], axis=2)
        return MatrixPoly(stacked)

    raise NullspaceDegreeExceededError(f"No rank-{n - 1} null-space basis up to degree {max_deg}")


def pointwise_complement(vec: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of a single vector."""
    vec = np.asarray(vec, dtype=float).reshape(1, -1)
    return scipy.linalg.null_space(vec)


@dataclass(frozen=True)
class SignIntervals:
    """Definiteness classification of a symmetric matrix polynomial along the real line."""
    breakpoints: Tuple[float, ...]
    verdicts: Tuple[str, ...]
    sigma_minus: float
    sigma_plus: float
    nsd_count: int

    def verdict_at(self, lam: float) -> str:
        idx = int(np.searchsorted(np.asarray(self.breakpoints), lam))
        return self.verdicts[idx]


def _interval_midpoint(lo: float, hi: float) -> float:
    if math.isinf(lo) and math.isinf(hi):
        return 0.0
    if math.isinf(lo):
        return hi - 1.0 - abs(hi)
    if math.isinf(hi):
        return lo + 1.0 + abs(lo)
    return 0.5 * (lo + hi)


def _classify_points(S: MatrixPoly, points, tol: float) -> str:
    nsd = psd = True
    for lam in points:
        mat = S(lam)
        mat = 0.5 * (mat + mat.T)
        eig = np.linalg.eigvalsh(mat)
        cutoff = tol * max(np.linalg.norm(mat, "fro"), 1e-300)
        nsd = nsd and bool(np.all(eig <= cutoff))
        psd = psd and bool(np.all(eig >= -cutoff))
    if nsd:
        return NSD
    if psd:
        return PSD
    return INDEFINITE


def _dedupe(values, rel: float = 1e-9):
    out = []
    for v in values:
        if not out or abs(v - out[-1]) > rel * (1.0 + abs(v)):
            out.append(float(v))
    return out


def definiteness_intervals(
    S: MatrixPoly,
    lam_max: float,
    grid: int = DEFINITENESS_GRID,
    tol: float = PSD_TOL,
) -> SignIntervals:
    """
    Split the real line at the real roots of det S and classify each piece.

    Each open interval is classified from its midpoint and every grid sample
    in [-lam_max, lam_max] that falls inside it. sigma_minus closes the run of
    NSD intervals that starts at -inf (-inf when there is none); sigma_plus
    opens the run of PSD intervals that ends at +inf (+inf when there is none).

    Args:
        S: Symmetric-valued square matrix polynomial
        lam_max: Half-width of the sampling window
        grid: Number of samples in the window (at least 100)
        tol: Eigenvalues within tol * ||S(lam)||_F count as zero

    Returns:
        SignIntervals

    Raises:
        ValueError: If S is not symmetric or grid < 100
    """
    if not S.is_symmetric():
        raise ValueError("definiteness_intervals needs a symmetric matrix polynomial")
    if grid < 100:
        raise ValueError(f"grid must be at least 100, got {grid}")

    det = S.determinant()
    if det.is_zero or det.degree < 1:
        breakpoints = []
    else:
        breakpoints = _dedupe(real_roots(det))

    edges = [-math.inf] + breakpoints + [math.inf]
    samples = np.linspace(-abs(lam_max), abs(lam_max), grid)
    verdicts = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        points = [_interval_midpoint(lo, hi)] + [s for s in samples if lo < s < hi]
        verdicts.append(_classify_points(S, points, tol))

    sigma_minus = -math.inf
    if verdicts[0] == NSD:
        k = 0
        while k + 1 < len(verdicts) and verdicts[k + 1] == NSD:
            k += 1
        sigma_minus = edges[k + 1]

    sigma_plus = math.inf
    if verdicts[-1] == PSD:
        k = len(verdicts) - 1
        while k - 1 >= 0 and verdicts[k - 1] == PSD:
            k -= 1
        sigma_plus = edges[k]

    nsd_count = sum(
        1 for k, v in enumerate(verdicts) if v == NSD and (k == 0 or verdicts[k - 1] != NSD)
    )
    if nsd_count > S.rows + 1:
        logger.warning(f"⚠️ {nsd_count} NSD intervals found for a {S.rows}x{S.rows} polynomial")

    return SignIntervals(
        breakpoints=tuple(breakpoints),
        verdicts=tuple(verdicts),
        sigma_minus=sigma_minus,
        sigma_plus=sigma_plus,
        nsd_count=nsd_count,
    )


__all__ = [
    "NSD",
    "PSD",
    "INDEFINITE",
    "DegeneratePencilError",
    "NullspaceDegreeExceededError",
    "Pencil",
    "pencil_det",
    "pencil_adjugate",
    "adjugate_residual",
    "generalized_eigenvalues",
    "poly_nullspace",
    "pointwise_complement",
    "SignIntervals",
    "definiteness_intervals",
]
