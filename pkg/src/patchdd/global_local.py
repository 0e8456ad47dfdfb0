"""Global-local iteration: deterministic global solves, relaxation, stochastic patch solves."""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .local_solver import LocalFit, solve_local_stochastic
from .problem import GlobalProblem
from .sparse_poly import AdaptiveParams, MultiIndexSet, PceApprox, design_matrix


@dataclass
class PceField:
    """Nodal field expanded on the orthonormal Legendre chaos.

    ``coefficients[:, k]`` is the nodal vector multiplying ``psi_{indices[k]}``.
    """

    indices: MultiIndexSet
    coefficients: np.ndarray
    mesh_id: str = "global"

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.ndim != 2 or self.coefficients.shape[1] != len(self.indices):
            raise ValueError("coefficients must have one column per multi-index")

    @classmethod
    def zero(cls, n_nodes: int, m: int, mesh_id="global") -> "PceField":
        return cls(MultiIndexSet.zero(m), np.zeros((n_nodes, 1)), mesh_id)

    @classmethod
    def from_approx(cls, a: PceApprox, mesh_id="global") -> "PceField":
        return cls(a.indices, a.coefficients, mesh_id)

    @property
    def m(self) -> int:
        return self.indices.m

    @property
    def n_nodes(self) -> int:
        return self.coefficients.shape[0]

    def __call__(self, xi) -> np.ndarray:
        """Values at samples ``xi`` (n, m); returns (n, n_nodes)."""
        return design_matrix(self.indices, np.atleast_2d(xi)) @ self.coefficients.T

    def aligned(self, target: MultiIndexSet) -> np.ndarray:
        return align(self.indices, self.coefficients, target)

    def pruned(self) -> "PceField":
        """Drop exactly-zero coefficient columns, always keeping the zero index."""
        keep = np.any(self.coefficients != 0.0, axis=0)
        keep[self.indices.position(np.zeros(self.m, dtype=np.int64))] = True
        if keep.all():
            return self
        return PceField(MultiIndexSet(self.indices.array[keep], self.m),
                        self.coefficients[:, keep], self.mesh_id)

    def to_dict(self) -> dict:
        return {"mesh_id": self.mesh_id, "m": self.m, "indices": self.indices.array.tolist(),
                "coefficients": self.coefficients.tolist()}

    @classmethod
    def from_dict(cls, d) -> "PceField":
        idx = MultiIndexSet(np.asarray(d["indices"], dtype=np.int64).reshape(-1, d["m"]), d["m"])
        coef = np.asarray(d["coefficients"], dtype=float).reshape(-1, len(idx))
        return cls(idx, coef, d.get("mesh_id", "global"))


def align(indices: MultiIndexSet, coefficients, target: MultiIndexSet) -> np.ndarray:
    """Zero-pad ``coefficients`` (columns over ``indices``) onto ``target``."""
    out = np.zeros((coefficients.shape[0], len(target)))
    out[:, target.positions(indices.array)] = coefficients
    return out


def union_indices(*sets: MultiIndexSet) -> MultiIndexSet:
    u = sets[0]
    for s in sets[1:]:
        u = u.union(s)
    return u


def _zero_pos(A: MultiIndexSet) -> int:
    return int(A.position(np.zeros(A.m, dtype=np.int64)))


def global_step(gp: GlobalProblem, U: PceField, lams) -> PceField:
    """One deterministic global solve per chaos coefficient.

    ``U_hat_a = C^{-1} (C_fict U_a - sum_q Btilde_q lam_{q,a} + l_ext [a = 0])``
    over the union of the index sets of ``U`` and the multipliers.
    """
    A = union_indices(U.indices, MultiIndexSet.zero(U.m), *[l.indices for l in lams])
    rhs = gp.C_fict @ U.aligned(A)
    for pp, lam in zip(gp.patches, lams):
        rhs -= pp.coupling.Btilde @ align(lam.indices, lam.coefficients, A)
    rhs[:, _zero_pos(A)] += gp.l_ext
    return PceField(A, gp.solver.solve(rhs))


def field_inner(M, a: np.ndarray, b: np.ndarray) -> float:
    """``sum_a a_a^T M b_a`` for aligned coefficient matrices."""
    return float(np.sum(a * (M @ b)))


class Relaxation:
    """Fixed or Aitken relaxation of successive global iterates.

    Aitken's parameter is one scalar per iteration, computed in the
    aggregate inner product ``sum_a <., .>_{H1}`` over chaos coefficients.
    """

    def __init__(self, kind="aitken", rho=1.0, rho_min=1e-8, rho_max=1.5):
        if kind not in ("aitken", "fixed"):
            raise ValueError(f"unknown relaxation {kind!r}")
        if kind == "fixed" and not rho > 0:
            raise ValueError("fixed relaxation parameter must be positive")
        if not 0 < rho_min <= rho_max:
            raise ValueError("need 0 < rho_min <= rho_max")
        self.kind, self.rho0, self.rho_min, self.rho_max = kind, float(rho), rho_min, rho_max
        self.reset()

    def reset(self):
        self.k = 0
        self.rho = 1.0 if self.kind == "aitken" else self.rho0
        self.delta = None  # (indices, coefficients) of the previous increment

    @staticmethod
    def aitken_raw(rho_prev, d_new, d_old, inner) -> float:
        diff = d_new - d_old
        den = inner(diff, diff)
        if den == 0.0:
            return rho_prev
        return -rho_prev * inner(diff, d_old) / den

    def __call__(self, U_hat: PceField, U_prev: PceField, M) -> tuple[PceField, float]:
        self.k += 1
        A = union_indices(U_hat.indices, U_prev.indices)
        prev = U_prev.aligned(A)
        delta = U_hat.aligned(A) - prev
        if self.kind == "aitken" and self.k >= 3:
            old = align(self.delta[0], self.delta[1], A)

            def inner(a, b):
                return field_inner(M, a, b)

            raw = self.aitken_raw(self.rho, delta, old, inner)
            self.rho = float(min(max(raw, self.rho_min), self.rho_max))
        elif self.kind == "aitken":
            self.rho = 1.0
        self.delta = (A, delta)
        return PceField(A, prev + self.rho * delta), self.rho


def error_indicator(U: PceField, U_ref: PceField, M) -> float:
    """Relative mean-square distance ``||U - U_ref|| / ||U_ref||`` in the ``M`` norm."""
    A = union_indices(U.indices, U_ref.indices)
    ref = U_ref.aligned(A)
    den = field_inner(M, ref, ref)
    if den <= 0.0:
        raise ValueError("reference field has zero norm")
    d = U.aligned(A) - ref
    return math.sqrt(max(field_inner(M, d, d), 0.0) / den)


@dataclass
class IterationState:
    k: int
    U: PceField
    w: list
    lam: list
    rho: float
    fits: list = field(default_factory=list)


@dataclass
class IterationResult:
    state: IterationState
    history: list
    converged: bool
    factorizations: int
    timings: list
    newton_iterations: list


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("PATCHDD_THREADS", "1")))
    except ValueError:
        return 1


def local_step(gp: GlobalProblem, U: PceField, params: AdaptiveParams, seed: int, tol: float,
               caches, threads=1) -> list[LocalFit]:
    def run(q):
        pp = gp.patches[q]
        coarse = U.coefficients[pp.coarse_iface]
        return solve_local_stochastic(pp, U.indices, coarse, params, seed + q, tol, caches[q])

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(run, range(gp.Q)))
    return [run(q) for q in range(gp.Q)]


def iterate(gp: GlobalProblem, k_max=20, relaxation: Relaxation | None = None,
            params: AdaptiveParams = AdaptiveParams(), seed=0, newton_tol=1e-12,
            reference: PceField | None = None, stop_tol=None, threads=None,
            callback=None) -> IterationResult:
    """Run ``k_max`` outer iterations from the zero state.

    Each patch ``q`` draws its samples from a generator seeded with
    ``seed + q``, identical at every iteration, so Newton solves can be
    warm-started from the previous iterate at the same sample.
    """
    relaxation = relaxation or Relaxation()
    relaxation.reset()
    threads = default_threads() if threads is None else threads
    n = gp.mesh.n_nodes
    m = gp.m
    U = PceField.zero(n, m)
    w = [PceField.zero(pp.n_nodes, m, f"patch{pp.q}") for pp in gp.patches]
    lam = [PceField.zero(pp.n_iface, m, f"iface{pp.q}") for pp in gp.patches]
    caches = [dict() for _ in gp.patches]
    history, timings, newton = [], [], []
    state = IterationState(0, U, w, lam, relaxation.rho)
    converged = True
    for k in range(1, k_max + 1):
        t0 = time.perf_counter()
        U_hat = global_step(gp, U, lam)
        t1 = time.perf_counter()
        U_new, rho = relaxation(U_hat, U, gp.M_H1)
        fits = local_step(gp, U_new, params, seed, newton_tol, caches, threads)
        t2 = time.perf_counter()
        caches = [f.cache for f in fits]
        w = [PceField.from_approx(f.w, f"patch{f.q}") for f in fits]
        lam = [PceField.from_approx(f.lam, f"iface{f.q}") for f in fits]
        change = None
        if stop_tol is not None:
            nrm = math.sqrt(max(field_inner(gp.M_H1, U_new.coefficients, U_new.coefficients), 0.0))
            d = U_new.aligned(union_indices(U_new.indices, U.indices)) - \
                U.aligned(union_indices(U_new.indices, U.indices))
            change = math.sqrt(max(field_inner(gp.M_H1, d, d), 0.0)) / nrm if nrm > 0 else 0.0
        U = U_new.pruned()
        err = error_indicator(U, reference, gp.M_ext) if reference is not None else math.nan
        converged = all(f.converged for f in fits)
        history.append({
            "k": k, "rho_k": rho, "error_indicator": err,
            "N": [f.n_samples for f in fits],
            "dim_w": [len(f.w.indices) for f in fits],
            "dim_lambda": [len(f.lam.indices) for f in fits],
        })
        timings.append({"k": k, "global_s": t1 - t0, "local_s": t2 - t1})
        newton.append([it for f in fits for it in f.stats.iterations])
        state = IterationState(k, U, w, lam, rho, fits)
        if callback is not None:
            callback(state, history[-1])
        if change is not None and change <= stop_tol:
            break
    return IterationResult(state, history, converged, gp.solver.factorizations, timings, newton)
