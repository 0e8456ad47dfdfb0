"""Session fixtures for the benchmark runs shared by the acceptance tests.

The heavy runs take several minutes on one core. Setting ``PATCHDD_TEST_CACHE``
to a directory stores their results there and reuses them on later sessions.
"""
import os
import pickle
from dataclasses import dataclass
from pathlib import Path

import pytest

from patchdd.global_local import Relaxation, iterate
from patchdd.problem import GlobalProblem, ProblemSpec
from patchdd.reference import solve_reference
from patchdd.sparse_poly import AdaptiveParams

REF_EPS = 1e-6
SEED = 0


@dataclass
class Run:
    history: list
    U: object
    w: list
    lam: list
    factorizations: int
    newton: list
    converged: bool


def _cached(name, build):
    root = os.environ.get("PATCHDD_TEST_CACHE")
    if not root:
        return build()
    path = Path(root) / f"{name}.pkl"
    if path.exists():
        return pickle.loads(path.read_bytes())
    obj = build()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(pickle.dumps(obj))
    return obj


def _run(gp, ref, eps_cv, k_max, relaxation):
    r = iterate(gp, k_max=k_max, relaxation=relaxation, params=AdaptiveParams(eps_cv=eps_cv),
                seed=SEED, reference=ref)
    return Run(r.history, r.state.U, r.state.w, r.state.lam, r.factorizations,
               r.newton_iterations, r.converged)


@pytest.fixture(scope="session")
def gp_iso():
    return GlobalProblem(ProblemSpec.benchmark("isotropic"))


@pytest.fixture(scope="session")
def gp_aniso():
    return GlobalProblem(ProblemSpec.benchmark("anisotropic"))


@pytest.fixture(scope="session")
def ref_iso(gp_iso):
    return _cached("ref_iso", lambda: solve_reference(gp_iso, AdaptiveParams(eps_cv=REF_EPS),
                                                      seed=SEED))


@pytest.fixture(scope="session")
def aitken_runs(gp_iso, ref_iso):
    """Isotropic Aitken runs of 20 iterations keyed by the cross-validation tolerance."""
    return {eps: _cached(f"aitken_{eps:g}",
                         lambda eps=eps: _run(gp_iso, ref_iso.U, eps, 20, Relaxation("aitken")))
            for eps in (1e-2, 1e-3, 1e-4)}


@pytest.fixture(scope="session")
def fixed_runs(gp_iso, ref_iso):
    """Isotropic fixed-relaxation runs of 10 iterations keyed by the parameter."""
    return {rho: _cached(f"fixed_{rho:g}",
                         lambda rho=rho: _run(gp_iso, ref_iso.U, 1e-3, 10, Relaxation("fixed", rho)))
            for rho in (0.2, 0.4, 0.8, 1.0, 1.8)}


@pytest.fixture(scope="session")
def aniso_run(gp_aniso):
    return _cached("aitken_aniso",
                   lambda: _run(gp_aniso, None, 1e-3, 10, Relaxation("aitken")))


_REPORT = []


@pytest.fixture(scope="session")
def report():
    """Record one pass/fail line per acceptance criterion."""
    def add(n, ok, detail):
        _REPORT.append(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return add


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_REPORT):
            terminalreporter.write_line(line)
