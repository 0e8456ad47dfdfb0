"""Reference solution of the fully coupled problem.

For one sample the coupled system is solved monolithically: the unknowns
are the coarse nodes outside the patch interiors and the fine interior
nodes of every patch, while fine interface values are tied to the coarse
ones through the prolongation. Since the multiplier space is the full fine
trace space, this constraint elimination is exact; multipliers are then
recovered a posteriori on each patch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .global_local import PceField, align, union_indices
from .local_solver import MAX_HALVINGS, NEWTON_MAX_ITER, NewtonDivergence
from .problem import GlobalProblem
from .sparse_poly import AdaptiveParams, PceApprox, adaptive_fit


@dataclass
class CoupledSample:
    U: np.ndarray
    w: list
    lam: list
    iterations: int
    residual: float


class CoupledSolver:
    """Deterministic monolithic solver of the coupled global/patch problem."""

    def __init__(self, gp: GlobalProblem):
        self.gp = gp
        n = gp.mesh.n_nodes
        inside = np.zeros(n, dtype=bool)
        for pi in gp.iface:
            inside[pi.coarse_interior] = True
        free = np.zeros(n, dtype=bool)
        free[gp.free] = True
        self.coarse = np.flatnonzero(free & ~inside)
        self.inside = np.flatnonzero(inside)
        nE = self.coarse.size
        self.offsets = [0, n]
        for pp in gp.patches:
            self.offsets.append(self.offsets[-1] + pp.n_nodes)
        self.x_offsets = [0, nE]
        for pp in gp.patches:
            self.x_offsets.append(self.x_offsets[-1] + pp.interior.size)

        # T maps reduced unknowns to the stacked (U, w_1, ..., w_Q) vector
        rows, cols, vals = [self.coarse], [np.arange(nE)], [np.ones(nE)]
        pos = np.full(n, -1)
        pos[self.coarse] = np.arange(nE)
        for q, pp in enumerate(gp.patches):
            o, xo = self.offsets[q + 1], self.x_offsets[q + 1]
            rows.append(o + pp.interior)
            cols.append(xo + np.arange(pp.interior.size))
            vals.append(np.ones(pp.interior.size))
            P = pp.prolongation.tocoo()
            c = pos[pp.coarse_iface[P.col]]
            if np.any(c < 0):
                raise AssertionError("interface node outside the reduced coarse set")
            rows.append(o + pp.iface_nodes[P.row])
            cols.append(c)
            vals.append(P.data)
        self.T = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                               shape=(self.offsets[-1], self.x_offsets[-1]))
        self.Tt = self.T.T.tocsr()

    @property
    def n_outputs(self) -> int:
        return self.coarse.size + sum(pp.n_nodes + pp.n_iface for pp in self.gp.patches)

    def groups(self):
        """Output column slices: exterior U, then ``w_q`` and ``lambda_q`` per patch."""
        out = [slice(0, self.coarse.size)]
        o = self.coarse.size
        for pp in self.gp.patches:
            out.append(slice(o, o + pp.n_nodes))
            out.append(slice(o + pp.n_nodes, o + pp.n_nodes + pp.n_iface))
            o += pp.n_nodes + pp.n_iface
        return out

    def _split(self, y):
        U = y[:self.offsets[1]]
        ws = [y[self.offsets[q + 1]:self.offsets[q + 2]] for q in range(self.gp.Q)]
        return U, ws

    def _residual(self, y, mats, Rs):
        gp = self.gp
        U, ws = self._split(y)
        parts = [gp.C_ext @ U - gp.l_ext]
        for pp, A, R, w in zip(gp.patches, mats, Rs, ws):
            r = A @ w - pp.load
            if R is not None:
                r += pp.space.reaction(R, w, pp.inclusion)
            parts.append(r)
        return np.concatenate(parts)

    def solve(self, xi, tol=1e-12, max_iter=NEWTON_MAX_ITER) -> CoupledSample:
        gp = self.gp
        adatas = [pp.stiffness_data(xi) for pp in gp.patches]
        mats = [pp.space.matrix(d) for pp, d in zip(gp.patches, adatas)]
        Rs = []
        for pp in gp.patches:
            R = pp.reaction_coeff(xi)
            Rs.append(R if np.any(R[pp.inclusion] != 0.0) else None)

        def jacobian(y, with_reaction=True):
            _, ws = self._split(y)
            blocks = [gp.C_ext]
            for pp, d, R, w in zip(gp.patches, adatas, Rs, ws):
                if with_reaction and R is not None:
                    d = d + pp.space.reaction_jacobian_data(R, w, pp.inclusion)
                blocks.append(pp.space.matrix(d))
            return (self.Tt @ sp.block_diag(blocks, format="csr") @ self.T).tocsc()

        y0 = np.zeros(self.offsets[-1])
        # linear predictor without the reaction term
        r0 = self.Tt @ self._residual(y0, mats, [None] * gp.Q)
        x = spla.spsolve(jacobian(y0, False), -r0)
        its = 1
        y = self.T @ x
        r = self.Tt @ self._residual(y, mats, Rs)
        res = float(np.linalg.norm(r))
        while res > tol:
            if its >= max_iter:
                raise NewtonDivergence(f"Newton did not converge in {max_iter} iterations", res)
            dx = spla.spsolve(jacobian(y), -r)
            its += 1
            step = 1.0
            for _ in range(MAX_HALVINGS + 1):
                xt = x + step * dx
                yt = self.T @ xt
                rt = self.Tt @ self._residual(yt, mats, Rs)
                rest = float(np.linalg.norm(rt))
                if rest < res or rest <= tol:
                    break
                step *= 0.5
            else:
                if res <= 100 * tol:
                    break
                raise NewtonDivergence("line search failed", res)
            x, y, r, res = xt, yt, rt, rest

        full = self._residual(y, mats, Rs)
        U, ws = self._split(y)
        lams = []
        for q, pp in enumerate(gp.patches):
            rq = full[self.offsets[q + 1]:self.offsets[q + 2]]
            lams.append(pp.multiplier(rq[pp.iface_nodes]))
        return CoupledSample(U.copy(), [w.copy() for w in ws], lams, its, res)

    def pack(self, s: CoupledSample) -> np.ndarray:
        parts = [s.U[self.coarse]]
        for w, lam in zip(s.w, s.lam):
            parts += [w, lam]
        return np.concatenate(parts)

    def extend(self, coarse_coeffs: np.ndarray) -> np.ndarray:
        """Full global coefficient vectors from their values on the reduced coarse set.

        Values strictly inside the fictitious patches are the discrete
        harmonic extension for the fictitious operator, which is what every
        global iterate satisfies there.
        """
        gp = self.gp
        n = gp.mesh.n_nodes
        out = np.zeros((n, coarse_coeffs.shape[1]))
        out[self.coarse] = coarse_coeffs
        if self.inside.size:
            C = gp.C_tilde.tocsr()
            CII = C[self.inside][:, self.inside].tocsc()
            rhs = -(C[self.inside] @ out)
            out[self.inside] = spla.splu(CII).solve(np.ascontiguousarray(rhs))
        return out


@dataclass
class ReferenceSolution:
    U: PceField
    w: list
    lam: list
    n_samples: int
    converged: bool
    loo_errors: list
    seed: int
    eps_cv: float

    def to_dict(self) -> dict:
        return {
            "U": self.U.to_dict(),
            "w": [f.to_dict() for f in self.w],
            "lambda": [f.to_dict() for f in self.lam],
            "n_samples": int(self.n_samples),
            "converged": bool(self.converged),
            "loo_errors": [float(e) for e in self.loo_errors],
            "seed": int(self.seed),
            "eps_cv": float(self.eps_cv),
        }

    @classmethod
    def from_dict(cls, d) -> "ReferenceSolution":
        return cls(PceField.from_dict(d["U"]), [PceField.from_dict(x) for x in d["w"]],
                   [PceField.from_dict(x) for x in d["lambda"]], d["n_samples"], d["converged"],
                   d.get("loo_errors", []), d.get("seed", 0), d.get("eps_cv", float("nan")))


def solve_reference(gp: GlobalProblem, params: AdaptiveParams, seed=0, tol=1e-12,
                    solver: CoupledSolver | None = None) -> ReferenceSolution:
    """Adaptive sparse approximation of the coupled solution ``(U, w_q, lambda_q)``.

    All outputs share one sample pool; the exterior global field and each
    patch's solution and multiplier get their own index sets.
    """
    solver = solver or CoupledSolver(gp)

    def oracle(xi):
        return np.vstack([solver.pack(solver.solve(x, tol)) for x in xi])

    res = adaptive_fit(oracle, gp.m, params, groups=solver.groups(), seed=seed)
    fits = res.approximations
    U = PceField(fits[0].indices, solver.extend(fits[0].coefficients))
    w = [PceField.from_approx(fits[1 + 2 * q], f"patch{q}") for q in range(gp.Q)]
    lam = [PceField.from_approx(fits[2 + 2 * q], f"iface{q}") for q in range(gp.Q)]
    return ReferenceSolution(U, w, lam, res.n_samples, res.converged,
                             [f.error_norm() for f in fits], seed, params.eps_cv)


def coupled_residuals(gp: GlobalProblem, U, ws, lams, xi) -> dict:
    """Relative residuals of the coupled equations at one sample.

    ``U``, ``ws`` and ``lams`` are nodal vectors at ``xi``. Returns the
    global-equation residual on coarse nodes outside the patch interiors,
    the largest patch-equation residual and the largest interface
    mismatch, each relative to the size of the terms it balances.
    """
    inside = np.zeros(gp.mesh.n_nodes, dtype=bool)
    for pi in gp.iface:
        inside[pi.coarse_interior] = True
    rows = np.setdiff1d(gp.free, np.flatnonzero(inside))
    flux = sum(pp.coupling.Btilde @ lam for pp, lam in zip(gp.patches, lams))
    ra = (gp.C_ext @ U + flux - gp.l_ext)[rows]
    sa = np.linalg.norm((gp.C_ext @ U)[rows]) + np.linalg.norm(flux[rows]) + \
        np.linalg.norm(gp.l_ext[rows])
    out = {"global": float(np.linalg.norm(ra) / sa), "patch": 0.0, "interface": 0.0}
    for pp, w, lam in zip(gp.patches, ws, lams):
        A = pp.space.matrix(pp.stiffness_data(xi))
        Nw = pp.space.reaction(pp.reaction_coeff(xi), w, pp.inclusion)
        Bl = pp.coupling.B @ lam
        rb = A @ w + Nw - Bl - pp.load
        sb = np.linalg.norm(A @ w) + np.linalg.norm(Nw) + np.linalg.norm(Bl) + \
            np.linalg.norm(pp.load)
        out["patch"] = max(out["patch"], float(np.linalg.norm(rb) / sb))
        g = pp.prolongation @ U[pp.coarse_iface]
        rc = w[pp.iface_nodes] - g
        M = pp.coupling.mass
        out["interface"] = max(out["interface"],
                               float(np.sqrt(rc @ (M @ rc)) / np.sqrt(g @ (M @ g))))
    return out


__all__ = ["CoupledSolver", "CoupledSample", "ReferenceSolution", "solve_reference",
           "coupled_residuals", "align", "union_indices"]
