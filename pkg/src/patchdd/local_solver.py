"""Nonlinear patch solves for one sample and their adaptive sparse approximation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .problem import PatchProblem
from .sparse_poly import AdaptiveParams, PceApprox, adaptive_fit, design_matrix

NEWTON_MAX_ITER = 50
MAX_HALVINGS = 10


class NewtonDivergence(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


@dataclass
class LocalSample:
    """Result of one deterministic patch solve.

    ``iterations`` counts linear solves, including the initial linear
    predictor on a cold start.
    """

    xi: np.ndarray
    dirichlet: np.ndarray
    w: np.ndarray
    lam: np.ndarray
    iterations: int
    residual: float


def _residual(pp: PatchProblem, A, R, w):
    r = A @ w - pp.load
    if R is not None:
        r += pp.space.reaction(R, w, pp.inclusion)
    return r


def solve_local_deterministic(pp: PatchProblem, xi, dirichlet, tol=1e-12, w0=None,
                              max_iter=NEWTON_MAX_ITER) -> LocalSample:
    """Solve the patch problem with strongly imposed interface values.

    The unknown is split as the zero extension of ``dirichlet`` plus a
    function vanishing on the interface; Newton acts on the interior
    unknowns only. The multiplier is then recovered from the interface rows
    of the residual through the interface mass matrix.

    Parameters
    ----------
    pp : PatchProblem
    xi : array_like
        Full sample vector in (0, 1)^m.
    dirichlet : array_like
        Values at the fine interface nodes, in interface order.
    tol : float
        Stopping threshold on the 2-norm of the interior residual.
    w0 : array_like, optional
        Initial guess (warm start); its interface values are overwritten.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    dirichlet = np.asarray(dirichlet, dtype=float)
    if dirichlet.shape != (pp.n_iface,):
        raise ValueError(f"dirichlet must have {pp.n_iface} entries")
    I = pp.interior
    adata = pp.stiffness_data(xi)
    A = pp.space.matrix(adata)
    Rc = pp.reaction_coeff(xi)
    R = Rc if np.any(Rc[pp.inclusion] != 0.0) else None

    its = 0
    if w0 is None:
        w = np.zeros(pp.n_nodes)
        w[pp.iface_nodes] = dirichlet
        rhs = -_residual(pp, A, None, w)[I]
        w[I] = spla.spsolve(pp.take(adata).tocsc(), rhs)
        its = 1
    else:
        w = np.array(w0, dtype=float)
        w[pp.iface_nodes] = dirichlet

    r = _residual(pp, A, R, w)
    res = float(np.linalg.norm(r[I]))
    while res > tol:
        if its >= max_iter:
            raise NewtonDivergence(f"Newton did not converge in {max_iter} iterations", res)
        jdata = adata if R is None else adata + pp.space.reaction_jacobian_data(R, w, pp.inclusion)
        dz = spla.spsolve(pp.take(jdata).tocsc(), -r[I])
        its += 1
        step = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = w.copy()
            trial[I] += step * dz
            rt = _residual(pp, A, R, trial)
            rest = float(np.linalg.norm(rt[I]))
            if rest < res or rest <= tol:
                break
            step *= 0.5
        else:
            # no decrease at rounding level: accept if already tiny
            if res <= 100 * tol:
                break
            raise NewtonDivergence("line search failed", res)
        w, r, res = trial, rt, rest

    lam = pp.multiplier(r[pp.iface_nodes])
    return LocalSample(np.asarray(xi, dtype=float), dirichlet, w, lam, its, res)


@dataclass
class LocalStats:
    n_solves: int = 0
    iterations: list = field(default_factory=list)

    @property
    def max_iterations(self) -> int:
        return max(self.iterations, default=0)


@dataclass
class LocalFit:
    """Adaptive approximation of one patch's solution and multiplier."""

    q: int
    w: PceApprox
    lam: PceApprox
    converged: bool
    n_samples: int
    stats: LocalStats
    cache: dict


def interface_values(pp: PatchProblem, U_indices, U_coarse, xi) -> np.ndarray:
    """Fine interface Dirichlet data at samples ``xi`` from a global PCE.

    ``U_coarse`` holds the coefficients at the coarse interface nodes,
    shape ``(n_coarse_iface, #A)``.
    """
    vals = design_matrix(U_indices, xi) @ U_coarse.T  # (n, n_coarse)
    return (pp.prolongation @ vals.T).T


def solve_local_stochastic(pp: PatchProblem, U_indices, U_coarse, params: AdaptiveParams,
                           seed: int, tol=1e-12, cache=None) -> LocalFit:
    """Adaptive sparse fit of ``(w_q, lambda_q)`` driven by the global iterate.

    Samples are drawn from a generator seeded with ``seed``; solutions from
    a previous call can be passed in ``cache`` (keyed by the sample bytes)
    and serve as Newton initial guesses.
    """
    cache = {} if cache is None else cache
    new_cache = {}
    stats = LocalStats()
    n = pp.n_nodes

    def oracle(xi):
        g = interface_values(pp, U_indices, U_coarse, xi)
        out = np.empty((xi.shape[0], n + pp.n_iface))
        for i, x in enumerate(xi):
            key = x.tobytes()
            s = solve_local_deterministic(pp, x, g[i], tol, w0=cache.get(key))
            new_cache[key] = s.w
            stats.n_solves += 1
            stats.iterations.append(s.iterations)
            out[i, :n] = s.w
            out[i, n:] = s.lam
        return out

    m = U_indices.m
    res = adaptive_fit(oracle, m, params, groups=[slice(0, n), slice(n, n + pp.n_iface)],
                       seed=seed)
    w_fit, lam_fit = res.approximations
    return LocalFit(pp.q, w_fit, lam_fit, res.converged, res.n_samples, stats, new_cache)
