"""Adaptive sparse least squares with random sampling and a working-set strategy.

The sampling loop grows the sample set by a fixed fraction until the
cross-validation errors converge or stagnate; the working-set loop then
enriches each output group's monotone index set from its reduced margin
until convergence, overfitting, or too few samples. Both loops alternate
until every group reaches the tolerance.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .basis import design_matrix
from .indices import MultiIndexSet, is_monotone, reduced_margin, select_bulk
from .regression import InstabilityError, loo_errors, ls_fit


# "ms": corrected mean-square LOO ratio; "rms": its square root, a relative
# root-mean-square error comparable to the relative errors of the outputs.
ERROR_MEASURES = ("rms", "ms")


@dataclass(frozen=True)
class AdaptiveParams:
    n_initial: int = 1
    p_add: float = 0.1
    theta: float = 0.5
    eps_cv: float = 1e-3
    eps_stagn: float = 0.1
    eps_overfit: float = 0.1
    max_samples: int = 5000
    max_rounds: int = 200
    error_measure: str = "rms"

    def __post_init__(self):
        if self.error_measure not in ERROR_MEASURES:
            raise ValueError(f"error_measure must be one of {ERROR_MEASURES}")
        if self.n_initial < 1:
            raise ValueError("n_initial must be >= 1")
        if self.p_add <= 0:
            raise ValueError("p_add must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        for name in ("eps_cv", "eps_stagn", "eps_overfit"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class PceApprox:
    """Polynomial chaos approximation of a random vector.

    ``coefficients[i, k]`` multiplies ``psi_{indices[k]}`` in output ``i``.
    """

    indices: MultiIndexSet
    coefficients: np.ndarray
    loo_errors: np.ndarray | None = None
    n_samples: int = 0
    seed: int | None = None

    @property
    def m(self) -> int:
        return self.indices.m

    @property
    def n_outputs(self) -> int:
        return self.coefficients.shape[0]

    def __call__(self, xi) -> np.ndarray:
        """Evaluate at points ``xi`` of shape ``(n, m)``; returns ``(n, n_outputs)``."""
        return design_matrix(self.indices, xi) @ self.coefficients.T

    def error_norm(self) -> float:
        return float(np.linalg.norm(self.loo_errors)) if self.loo_errors is not None else math.nan

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "indices": self.indices.array.tolist(),
            "coefficients": self.coefficients.tolist(),
            "loo_errors": None if self.loo_errors is None else
            [float(e) if np.isfinite(e) else None for e in self.loo_errors],
            "n_samples": int(self.n_samples),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d) -> "PceApprox":
        idx = MultiIndexSet(np.asarray(d["indices"], dtype=np.int64).reshape(-1, d["m"]))
        coef = np.asarray(d["coefficients"], dtype=float).reshape(-1, len(idx))
        loo = d.get("loo_errors")
        if loo is not None:
            loo = np.array([np.inf if e is None else e for e in loo], dtype=float)
        return cls(idx, coef, loo, d.get("n_samples", 0), d.get("seed"))

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


@dataclass
class SampleLog:
    xi: np.ndarray
    values: np.ndarray
    seed: int
    history: list = field(default_factory=list)

    @property
    def n_samples(self) -> int:
        return self.xi.shape[0]

    def to_csv(self, path):
        m, n = self.xi.shape[1], self.values.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"xi_{i + 1}" for i in range(m)] + [f"y_{j}" for j in range(n)])
            for a, b in zip(self.xi, self.values):
                w.writerow([repr(float(v)) for v in a] + [repr(float(v)) for v in b])


@dataclass
class AdaptiveResult:
    approximations: list
    log: SampleLog
    converged: bool

    @property
    def n_samples(self) -> int:
        return self.log.n_samples


class UniformSampler:
    """Uniform points in the open cube (0, 1)^m from a counter-based generator."""

    def __init__(self, m: int, seed: int):
        self.m = m
        self.seed = int(seed)
        self.rng = np.random.Generator(np.random.Philox(self.seed))

    def draw(self, n: int) -> np.ndarray:
        # random() returns k / 2**53; shifting by half a step keeps 0 out
        return self.rng.random((n, self.m)) + 2.0 ** -54


@dataclass
class _Group:
    cols: slice
    A: MultiIndexSet
    coefficients: np.ndarray = None
    eps: np.ndarray = None

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.eps))


def _fit(A, xi, Y, measure="rms"):
    Psi = design_matrix(A, xi)
    try:
        fit = ls_fit(Psi, Y)
        eps = loo_errors(fit.coefficients, Psi, Y, fit=fit)
        return fit.coefficients, np.sqrt(eps) if measure == "rms" else eps
    except InstabilityError:
        coef = np.zeros((Y.shape[1], len(A)))
        if len(A) <= Psi.shape[0]:
            coef = np.linalg.lstsq(Psi, Y, rcond=None)[0].T
        return coef, np.full(Y.shape[1], np.inf)


def _stagnated(eps, prev, tol) -> bool:
    n = np.linalg.norm(eps)
    if not np.isfinite(n) or not np.all(np.isfinite(prev)):
        return False
    if n == 0.0:
        return True
    return np.linalg.norm(eps - prev) / n <= tol


def _overfits(eps_new, eps_old, tol) -> bool:
    new, old = np.linalg.norm(eps_new), np.linalg.norm(eps_old)
    if not np.isfinite(new):
        return True
    if not np.isfinite(old):
        return False
    if old == 0.0:
        return new > 0.0
    return new / old > 1.0 + tol


def _working_set(g: _Group, xi, Y, params: AdaptiveParams):
    N = xi.shape[0]
    Yg = Y[:, g.cols]
    while g.norm > params.eps_cv:
        M = reduced_margin(g.A)
        if len(g.A) + len(M) > N:
            break
        T = MultiIndexSet(np.vstack([g.A.array, M.array]))
        try:
            fitT = ls_fit(design_matrix(T, xi), Yg)
        except InstabilityError:
            break
        norms2 = np.sum(fitT.coefficients[:, len(g.A):] ** 2, axis=0)
        g.A = g.A.union(select_bulk(M, norms2, params.theta))
        assert is_monotone(g.A)
        old = g.eps
        g.coefficients, g.eps = _fit(g.A, xi, Yg, params.error_measure)
        if _overfits(g.eps, old, params.eps_overfit):
            break


def adaptive_fit(oracle, m: int, params: AdaptiveParams = AdaptiveParams(), groups=None,
                 seed: int = 0) -> AdaptiveResult:
    """Adaptive sparse polynomial approximation of a vector-valued function.

    Parameters
    ----------
    oracle : callable
        Maps an ``(n, m)`` array of points in (0, 1)^m to an ``(n, n_out)``
        array. Must be deterministic.
    m : int
        Number of random variables.
    groups : list of slice, optional
        Partition of the output columns. Samples are shared; each group gets
        its own index set. The sampling loop runs until every group has
        converged or stagnated.
    seed : int
        Seed of the sample generator; results are reproducible given it.
    """
    sampler = UniformSampler(m, seed)
    xi = sampler.draw(params.n_initial)
    Y = np.asarray(oracle(xi), dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if groups is None:
        groups = [slice(0, Y.shape[1])]
    gs = [_Group(sl, MultiIndexSet.zero(m)) for sl in groups]
    for g in gs:
        g.coefficients, g.eps = _fit(g.A, xi, Y[:, g.cols], params.error_measure)
    history = [(xi.shape[0], [len(g.A) for g in gs])]

    def converged(g):
        return g.norm <= params.eps_cv

    capped = False
    rounds = 0
    while not all(converged(g) for g in gs):
        if rounds >= params.max_rounds:
            capped = True
            break
        prev = [np.full_like(g.eps, np.inf) for g in gs]
        while True:
            N = xi.shape[0]
            if N >= params.max_samples:
                capped = True
                break
            n_add = min(math.ceil(params.p_add * N), params.max_samples - N)
            new = sampler.draw(n_add)
            xi = np.vstack([xi, new])
            Y = np.vstack([Y, np.asarray(oracle(new), dtype=float).reshape(n_add, -1)])
            done = []
            for g, pv in zip(gs, prev):
                g.coefficients, g.eps = _fit(g.A, xi, Y[:, g.cols], params.error_measure)
                done.append(converged(g) or _stagnated(g.eps, pv, params.eps_stagn))
            prev = [g.eps.copy() for g in gs]
            if all(done):
                break
        for g in gs:
            if not converged(g):
                _working_set(g, xi, Y, params)
        rounds += 1
        history.append((xi.shape[0], [len(g.A) for g in gs]))
        if capped:
            break

    ok = all(converged(g) for g in gs)
    approx = [PceApprox(g.A, g.coefficients, g.eps, xi.shape[0], int(seed)) for g in gs]
    return AdaptiveResult(approx, SampleLog(xi, Y, int(seed), history), ok)
