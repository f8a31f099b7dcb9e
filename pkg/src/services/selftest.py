"""
Self-test service - Seeded invariant suites behind the ``selftest`` command.

Each suite draws random instances from a fixed seed, checks one family of
identities and returns a SuiteResult. By default the suites run reduced
instance counts so that ``selftest`` finishes in seconds; ``full=True`` runs
the acceptance sizes in FULL_SIZES.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np

from src.algebra.pencils import adjugate_residual
from src.algebra.projections import oblique_projection, projection_sequence
from src.models.functions import ClassK, QuadraticFn, TransformedCLF
from src.models.plant import Plant
from src.models.scenario import parse_scenario
from src.services.equilibrium_service import UNSTABLE, boundary_equilibria, build_pencil, q_function

logger = logging.getLogger(__name__)


@dataclass
class SuiteResult:
    name: str
    checked: int = 0
    failures: List[str] = field(default_factory=list)
    seconds: float = 0.0
    stats: Dict[str, int] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.checked > 0 and not self.failures

    def fail(self, message: str) -> None:
        if len(self.failures) < 20:
            self.failures.append(message)
        else:
            self.failures[-1] = "... more failures omitted"


# ==================== Random instances ====================

def random_pd(rng: np.random.Generator, n: int, low: float = 0.5, high: float = 2.0) -> np.ndarray:
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return Q @ np.diag(rng.uniform(low, high, n)) @ Q.T


def random_instance(rng: np.random.Generator, n: int, lti: bool, p: float = 1.0):
    """Plant, transformed CLF and barrier with the plant origin at the CLF minimum."""
    x0 = rng.uniform(-1.0, 1.0, n)
    if lti:
        A = rng.standard_normal((n, n)) - 2.0 * np.eye(n)
        B = rng.standard_normal((n, n)) + 2.0 * np.eye(n)
        plant = Plant.lti(A, B, origin=x0)
    else:
        plant = Plant.driftless(rng.standard_normal((n, n)) + 2.0 * np.eye(n))
    clf = TransformedCLF.quadratic(random_pd(rng, n), x0, gain=rng.uniform(0.5, 2.0))
    direction = rng.standard_normal(n)
    c = x0 + rng.uniform(0.0, 2.5) * direction / np.linalg.norm(direction)
    barrier = QuadraticFn.barrier(random_pd(rng, n), c)
    return plant, clf, barrier, p


# ==================== Suites ====================

def suite_qfunction(seed: int = 0, count_2d: int = 40, count_3d: int = 10, samples: int = 20) -> SuiteResult:
    """q = n / d agrees with nu^T H nu and Adj P P = det P I, on both plant classes."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("qfunction")
    for n, count in ((2, count_2d), (3, count_3d)):
        for k in range(count):
            plant, clf, barrier, p = random_instance(rng, n, lti=bool(k % 2))
            ps = build_pencil(plant, clf, barrier, p)
            qf = q_function(ps, barrier)
            residual = adjugate_residual(ps.pencil)
            scale = max(1.0, float(np.max(np.abs(qf.det_poly.coeffs))))
            res.checked += 1
            if residual > 1e-9 * scale:
                res.fail(f"n={n} #{k}: adjugate residual {residual:.3e}")
            for lam in rng.uniform(0.0, 10.0, samples):
                P = ps.pencil(lam)
                if abs(np.linalg.det(P)) < 1e-6 * max(1.0, np.linalg.norm(P) ** n):
                    continue
                nu = np.linalg.solve(P, ps.w)
                direct = float(nu @ barrier.hessian @ nu)
                res.checked += 1
                if abs(qf.evaluate(lam) - direct) > 1e-8 * max(1.0, abs(direct)):
                    res.fail(f"n={n} #{k} lam={lam:.4g}: q={qf.evaluate(lam):.12g} direct={direct:.12g}")
    return res


def suite_radial(seed: int = 0) -> SuiteResult:
    """Closed-form driftless case: one boundary equilibrium at (4, 0) with lam = 4, unstable."""
    res = SuiteResult("radial")
    scenario = parse_scenario({
        "name": "radial-selftest",
        "plant": {"kind": "driftless", "input_map": [[1.0, 0.0], [0.0, 1.0]]},
        "clf": {"hessian": [[1.0, 0.0], [0.0, 1.0]], "center": [0.0, 0.0]},
        "barriers": [{"hessian": [[1.0, 0.0], [0.0, 1.0]], "center": [3.0, 0.0]}],
    })
    plant, clf, cfg = scenario.build_plant(), scenario.build_clf(), scenario.controller_config()
    barrier = scenario.build_barriers()[0]
    ps = build_pencil(plant, clf, barrier, cfg.p)
    points = boundary_equilibria(ps, barrier, clf, plant, cfg)
    res.checked = 1
    if len(points) != 1:
        res.fail(f"expected one boundary equilibrium, found {len(points)}")
        return res
    pt = points[0]
    if abs(pt.lambda_e - 4.0) > 1e-8:
        res.fail(f"lambda_e = {pt.lambda_e:.12g}")
    if np.max(np.abs(pt.x_e - np.array([4.0, 0.0]))) > 1e-6:
        res.fail(f"x_e = {pt.x_e.tolist()}")
    if pt.verdict != UNSTABLE:
        res.fail(f"verdict {pt.verdict}")
    return res


def suite_origin_test(seed: int = 0, count: int = 200) -> SuiteResult:
    """q(0) >= 1 exactly when the CLF minimum is safe for the barrier."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("origin")
    res.stats = {"safe": 0, "unsafe": 0}
    for k in range(count):
        plant, clf, barrier, p = random_instance(rng, 2, lti=bool(k % 2))
        q0 = q_function(build_pencil(plant, clf, barrier, p), barrier).evaluate(0.0)
        h0 = barrier.value(clf.center)
        if abs(q0 - 1.0) < 1e-9:
            continue
        res.checked += 1
        res.stats["safe" if h0 >= 0 else "unsafe"] += 1
        if (q0 >= 1.0) != (h0 >= 0.0):
            res.fail(f"#{k}: q(0)={q0:.12g} h(x0)={h0:.12g}")
    for key, hits in res.stats.items():
        if hits < count // 10:
            res.fail(f"only {hits} {key} instances drawn")
    return res


def _g_orthogonal(rng: np.random.Generator, G: np.ndarray, r: int) -> np.ndarray:
    cols = []
    for _ in range(r):
        z = rng.standard_normal(G.shape[0])
        for y in cols:
            z = z - (y @ G @ z) / (y @ G @ y) * y
        cols.append(z / np.sqrt(max(z @ G @ z, 1e-12)))
    return np.column_stack(cols)


def suite_projections(seed: int = 0, count: int = 50, k_max: int = 5, tol: float = 1e-10) -> SuiteResult:
    """Power, right, left and invariance identities of the oblique projection."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("projections")
    for trial in range(count):
        n, r = 4, 2
        F = rng.standard_normal((n, n - 1))
        G = F @ F.T
        Z = _g_orthogonal(rng, G, r)
        N1 = np.diag(rng.uniform(0.1, 1.0, r))
        D = Z.T @ G @ Z
        P_Z = oblique_projection(Z, G, N1)
        seq = projection_sequence(N1, Z, G, k_max)
        power = np.eye(n)
        for k in range(1, k_max + 1):
            power = power @ P_Z
            Nk = seq.matrices[k - 1]
            checks = {
                "power": np.max(np.abs(power - seq.power(k, Z, G))),
                "right": np.max(np.abs(power @ G @ Z - G @ Z @ (np.eye(r) - Nk @ D))),
                "left": np.max(np.abs(Z.T @ power - (np.eye(r) - D @ Nk) @ Z.T)),
            }
            for name, err in checks.items():
                res.checked += 1
                if err > tol:
                    res.fail(f"#{trial} k={k} {name}: {err:.3e}")
        w = rng.standard_normal(n)
        w = w - Z @ np.linalg.solve(D, Z.T @ G @ w)
        res.checked += 2
        if np.max(np.abs(P_Z @ G @ w - G @ w)) > tol:
            res.fail(f"#{trial}: P_Z G w != G w")
        if np.max(np.abs(w @ P_Z - w)) > tol:
            res.fail(f"#{trial}: w^T P_Z != w^T")
    return res


def suite_transformed_clf(seed: int = 0, count: int = 100) -> SuiteResult:
    """Positivity, inversion, shared level sets and grad Vbar = gamma(V) grad V."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("transformed_clf")
    for trial in range(5):
        n = 2 + trial % 2
        gamma = ClassK(rng.uniform(0.5, 5.0))
        clf = TransformedCLF(vbar=QuadraticFn(hessian=random_pd(rng, n), center=rng.uniform(-1, 1, n)), gamma=gamma)
        res.checked += 1
        if clf.value(clf.center) != 0.0:
            res.fail(f"#{trial}: Vbar(x0) = {clf.value(clf.center)}")
        for _ in range(count // 5):
            x = clf.center + rng.uniform(-3.0, 3.0, n)
            vb = clf.value(x)
            V, grad_v = clf.recover(x)
            res.checked += 4
            if not vb > 0:
                res.fail(f"#{trial}: Vbar not positive at {x.tolist()}")
            if abs(gamma.integral(V) - vb) > 1e-10 * vb:
                res.fail(f"#{trial}: inversion error {abs(gamma.integral(V) - vb):.3e}")
            if np.max(np.abs(clf.gradient(x) - gamma(V) * grad_v)) > 1e-9 * np.linalg.norm(clf.gradient(x)):
                res.fail(f"#{trial}: gradient relation broken at {x.tolist()}")
            d = rng.standard_normal(n)
            y = clf.center + np.sqrt(2.0 * vb / (d @ clf.hessian @ d)) * d
            if abs(clf.recover(y)[0] - V) > 1e-9 * V:
                res.fail(f"#{trial}: level set not shared, V(x)={V:.12g} V(y)={clf.recover(y)[0]:.12g}")
    return res


SUITES: Dict[str, Callable[..., SuiteResult]] = {
    "qfunction": suite_qfunction,
    "radial": suite_radial,
    "origin": suite_origin_test,
    "projections": suite_projections,
    "transformed_clf": suite_transformed_clf,
}


FULL_SIZES: Dict[str, Dict[str, int]] = {
    "qfunction": {"count_2d": 200, "count_3d": 50},
    "origin": {"count": 500},
}


def run_selftest(seed: int = 0, full: bool = False) -> List[SuiteResult]:
    """Run every suite and log a one-line verdict for each; ``full`` uses FULL_SIZES."""
    results = []
    for name, suite in SUITES.items():
        sizes = FULL_SIZES.get(name, {}) if full else {}
        start = time.perf_counter()
        res = suite(seed=seed, **sizes)
        res.seconds = time.perf_counter() - start
        mark = "✅" if res.passed else "❌"
        logger.info(f"{mark} {name}: {res.checked} checks, {len(res.failures)} failures, {res.seconds:.2f}s")
        for msg in res.failures:
            logger.error(f"   {name}: {msg}")
        results.append(res)
    return results


__all__ = [
    "SuiteResult",
    "random_pd",
    "random_instance",
    "suite_qfunction",
    "suite_radial",
    "suite_origin_test",
    "suite_projections",
    "suite_transformed_clf",
    "SUITES",
    "FULL_SIZES",
    "run_selftest",
]
