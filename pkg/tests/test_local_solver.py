import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from patchdd.global_local import PceField
from patchdd.local_solver import (NewtonDivergence, interface_values, solve_local_deterministic,
                                  solve_local_stochastic)
from patchdd.mesh import PatchLayout, Rect
from patchdd.problem import GlobalProblem, ProblemSpec
from patchdd.sparse_poly import AdaptiveParams, MultiIndexSet

SMALL = PatchLayout(Rect(0, 2, 0, 2), (Rect(0.5, 1.5, 0.5, 1.5),), (Rect(0.75, 1.25, 0.75, 1.25),),
                    (1.0,))


@pytest.fixture(scope="module")
def gp():
    return GlobalProblem(ProblemSpec(SMALL, H=0.25, h=0.125))


@pytest.fixture(scope="module")
def bench():
    return GlobalProblem(ProblemSpec.benchmark())


def residual(pp, xi, s):
    A = pp.space.matrix(pp.stiffness_data(xi))
    N = pp.space.reaction(pp.reaction_coeff(xi), s.w, pp.inclusion)
    return A @ s.w + N - pp.load - pp.coupling.B @ s.lam


def test_linear_case_one_solve(gp):
    lin = GlobalProblem(ProblemSpec(SMALL, H=0.25, h=0.125, reaction_scale=0.0))
    pp = lin.patches[0]
    xi = np.array([0.3, 0.8])
    g = np.linspace(0, 1, pp.n_iface)
    s = solve_local_deterministic(pp, xi, g)
    assert s.iterations == 1
    # oracle: direct Dirichlet solve of the linear system
    A = pp.space.matrix(pp.stiffness_data(xi)).tocsr()
    I, G = pp.interior, pp.iface_nodes
    w = np.zeros(pp.n_nodes)
    w[G] = g
    w[I] = spla.spsolve(A[I][:, I].tocsc(), pp.load[I] - A[I][:, G] @ g)
    assert np.allclose(s.w, w, atol=1e-12)


def test_zero_data_gives_zero(gp):
    zero = GlobalProblem(ProblemSpec(SMALL, H=0.25, h=0.125, f=0.0))
    s = solve_local_deterministic(zero.patches[0], [0.5, 0.5], np.zeros(zero.patches[0].n_iface))
    assert np.all(s.w == 0) and np.all(s.lam == 0)


def test_weak_equation_holds_with_multiplier(gp):
    pp = gp.patches[0]
    xi = np.array([0.9, 0.95])
    s = solve_local_deterministic(pp, xi, np.full(pp.n_iface, 2.0))
    r = residual(pp, xi, s)
    assert np.linalg.norm(r) <= 1e-10 * np.linalg.norm(pp.load)
    assert np.allclose(s.w[pp.iface_nodes], 2.0)


def test_warm_start_and_limits(gp):
    pp = gp.patches[0]
    xi = np.array([0.4, 1.0])
    g = np.full(pp.n_iface, 3.0)  # large data: strongly nonlinear
    s = solve_local_deterministic(pp, xi, g)
    again = solve_local_deterministic(pp, xi, g, w0=s.w)
    assert again.iterations <= 1
    assert np.allclose(again.w, s.w, atol=1e-12)
    with pytest.raises(NewtonDivergence):
        solve_local_deterministic(pp, xi, g, max_iter=1)
    with pytest.raises(ValueError):
        solve_local_deterministic(pp, xi, g[:-1])
    with pytest.raises(ValueError):
        solve_local_deterministic(pp, xi, g, tol=0)


def test_benchmark_newton_iterations(bench):
    rng = np.random.default_rng(0)
    its = []
    for q in range(bench.Q):
        pp = bench.patches[q]
        for _ in range(3):
            its.append(solve_local_deterministic(pp, rng.random(bench.m),
                                                 rng.random(pp.n_iface)).iterations)
    assert max(its) <= 5


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(-2, 2))
def test_residual_converged(a, b, c):
    gp = GlobalProblem(ProblemSpec(SMALL, H=0.5, h=0.25))
    pp = gp.patches[0]
    s = solve_local_deterministic(pp, [a, b], np.full(pp.n_iface, c))
    assert s.residual <= 1e-12
    assert np.linalg.norm(residual(pp, [a, b], s)) <= 1e-10


def test_interface_values_prolongate(gp):
    pp = gp.patches[0]
    A = MultiIndexSet([[0, 0], [1, 0]])
    coarse = np.random.default_rng(1).standard_normal((pp.coarse_iface.size, 2))
    xi = np.array([[0.2, 0.6], [0.7, 0.1]])
    U = PceField(A, np.zeros((gp.mesh.n_nodes, 2)))
    U.coefficients[pp.coarse_iface] = coarse
    vals = interface_values(pp, A, coarse, xi)
    for x, v in zip(xi, vals):
        assert np.allclose(v, pp.prolongation @ U(x[None])[0][pp.coarse_iface])


def test_deterministic_patch_gives_constant_fit():
    gp = GlobalProblem(ProblemSpec(SMALL, H=0.25, h=0.125, xi_fixed=0.5))
    pp = gp.patches[0]
    A = MultiIndexSet.zero(2)
    coarse = np.full((pp.coarse_iface.size, 1), 0.2)
    fit = solve_local_stochastic(pp, A, coarse, AdaptiveParams(eps_cv=1e-6), seed=0)
    assert fit.converged
    assert len(fit.w.indices) == 1 and len(fit.lam.indices) == 1
    s = solve_local_deterministic(pp, [0.5, 0.5], np.full(pp.n_iface, 0.2))
    assert np.allclose(fit.w.coefficients[:, 0], s.w, atol=1e-10)


def test_stochastic_fit_reuses_cache(gp):
    pp = gp.patches[0]
    A = MultiIndexSet.zero(2)
    coarse = np.full((pp.coarse_iface.size, 1), 0.5)
    p = AdaptiveParams(eps_cv=1e-4)
    f1 = solve_local_stochastic(pp, A, coarse, p, seed=3)
    f2 = solve_local_stochastic(pp, A, coarse, p, seed=3, cache=f1.cache)
    assert f1.n_samples == f2.n_samples
    assert f2.stats.max_iterations <= 1 < f1.stats.max_iterations
    assert np.array_equal(f1.w.indices.array, f2.w.indices.array)
    assert np.allclose(f1.w.coefficients, f2.w.coefficients, atol=1e-10)
