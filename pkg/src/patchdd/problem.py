"""Discrete global and patch problems of the diffusion-reaction benchmark.

Patch ``q`` (0-based here) carries the diffusion coefficient
``1 + gamma_q xi_{2q} chi_q`` and the reaction coefficient
``gamma_q xi_{2q+1} chi_q`` where ``chi_q`` is the indicator of its
inclusion; the complementary subdomain has unit diffusion and no reaction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import Coupling, P1Space, assemble_coupling
from .mesh import (DIRICHLET, EXTERIOR, INTERFACE, PatchLayout, Rect, benchmark_layout,
                   build_interface_map, build_rect_mesh, partition_global)


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    """Geometry, discretization and material parameters of a run."""

    layout: PatchLayout
    H: float = 0.1
    h: float = 0.05
    f: float = 1.0
    fictitious: object = "mean"
    reaction_scale: float = 1.0
    xi_fixed: float | None = None

    @classmethod
    def benchmark(cls, weights="isotropic", **kw):
        return cls(benchmark_layout(weights), **kw)

    @property
    def m(self) -> int:
        return 2 * self.layout.Q


class PatchProblem:
    """Affine-in-xi operators of one patch on its fine mesh."""

    def __init__(self, q: int, mesh, inclusion: Rect, gamma: float, f: float,
                 coupling: Coupling, iface, reaction_scale=1.0, xi_fixed=None):
        self.q = q
        self.mesh = mesh
        self.space = P1Space(mesh)
        self.gamma = float(gamma)
        self.reaction_scale = float(reaction_scale)
        self.xi_fixed = xi_fixed
        self.vars = (2 * q, 2 * q + 1)
        self.inclusion = np.flatnonzero(inclusion.contains(mesh.centroids()))
        chi = np.zeros(mesh.n_triangles)
        chi[self.inclusion] = 1.0
        self.chi = chi
        self.K0 = self.space.stiffness_data(1.0)
        self.K1 = self.space.scatter(self.space._local_stiff * chi[:, None, None])
        self.load = self.space.load(f)
        self.coupling = coupling
        self.prolongation = iface.prolongation
        self.coarse_iface = iface.coarse_nodes
        # fine interface nodes in multiplier order
        self.iface_nodes = iface.fine_nodes
        self.interior = np.flatnonzero(mesh.node_tags != INTERFACE)
        self.sub_II = self.space.submatrix_map(self.interior)
        self.sub_IG = self.space.submatrix_map(self.interior, self.iface_nodes)
        self._mass_lu = spla.splu(coupling.mass.tocsc())

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_nodes

    @property
    def n_iface(self) -> int:
        return self.iface_nodes.size

    def local_xi(self, xi):
        """``(xi_diffusion, xi_reaction)`` for this patch."""
        if self.xi_fixed is not None:
            return float(self.xi_fixed), float(self.xi_fixed)
        return float(xi[self.vars[0]]), float(xi[self.vars[1]])

    def stiffness_data(self, xi) -> np.ndarray:
        a, _ = self.local_xi(xi)
        return self.K0 + (self.gamma * a) * self.K1

    def reaction_coeff(self, xi) -> np.ndarray:
        _, b = self.local_xi(xi)
        return (self.reaction_scale * self.gamma * b) * self.chi

    def take(self, data, which="II") -> sp.csr_matrix:
        take, ind, ptr, shape = self.sub_II if which == "II" else self.sub_IG
        return sp.csr_matrix((data[take], ind, ptr), shape=shape)

    def multiplier(self, residual_iface) -> np.ndarray:
        """Solve the interface mass system for the multiplier."""
        return self._mass_lu.solve(np.asarray(residual_iface, dtype=float))


class GlobalSolver:
    """Factorization of the deterministic fictitious-domain operator, reused for all solves."""

    def __init__(self, C: sp.csr_matrix, free: np.ndarray):
        self.free = free
        self.n = C.shape[0]
        self.lu = spla.splu(C[free][:, free].tocsc())
        self.factorizations = 1

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        vec = rhs.ndim == 1
        b = rhs.reshape(self.n, -1)
        out = np.zeros_like(b)
        out[self.free] = self.lu.solve(np.ascontiguousarray(b[self.free]))
        return out[:, 0] if vec else out


class GlobalProblem:
    """All meshes, operators and the factorized global matrix of one configuration."""

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        layout = spec.layout
        self.layout = layout
        self.mesh = build_rect_mesh(layout.domain, spec.H, DIRICHLET)
        self.space = P1Space(self.mesh)
        self.tags = partition_global(self.mesh, layout)
        self.patch_meshes = [build_rect_mesh(b, spec.h, INTERFACE) for b in layout.patch_boxes]
        self.iface = build_interface_map(self.mesh, self.patch_meshes, layout)
        n = self.mesh.n_nodes

        ktilde = np.ones(self.mesh.n_triangles)
        cen = self.mesh.centroids()
        for q in range(layout.Q):
            ktilde[self.tags == q + 1] = self._fictitious_coeff(q, cen[self.tags == q + 1])
        self.ktilde = ktilde
        exterior = np.flatnonzero(self.tags == EXTERIOR)
        fict = np.flatnonzero(self.tags != EXTERIOR)
        self.C_tilde = self.space.stiffness(ktilde)
        self.C_fict = self.space.stiffness(ktilde, fict)
        self.C_ext = self.space.stiffness(1.0, exterior)
        self.l_ext = self.space.load(spec.f, exterior)
        self.M_ext = self.space.mass(exterior)
        self.M_H1 = (self.space.mass() + self.space.stiffness(1.0)).tocsr()
        self.free = np.flatnonzero(self.mesh.node_tags != DIRICHLET)
        self._solver = None

        self.patches = []
        for q in range(layout.Q):
            cpl = assemble_coupling(self.iface, q, self.patch_meshes[q], n)
            self.patches.append(PatchProblem(
                q, self.patch_meshes[q], layout.inclusion_boxes[q], layout.weights[q], spec.f,
                cpl, self.iface[q], spec.reaction_scale, spec.xi_fixed))

    def _fictitious_coeff(self, q, centroids):
        rule = self.spec.fictitious
        if isinstance(rule, (int, float)):
            if rule <= 0:
                raise ConfigurationError("fictitious diffusion must be positive")
            return float(rule)
        inc = self.spec.layout.inclusion_boxes[q].contains(centroids)
        g = self.spec.layout.weights[q]
        if rule == "mean":
            return np.where(inc, 1.0 + 0.5 * g, 1.0)
        if rule == "unit":
            return 1.0
        if rule == "fixed":
            if self.spec.xi_fixed is None:
                raise ConfigurationError("fictitious rule 'fixed' requires xi_fixed")
            return np.where(inc, 1.0 + g * self.spec.xi_fixed, 1.0)
        raise ConfigurationError(f"unknown fictitious coefficient rule {rule!r}")

    @property
    def m(self) -> int:
        return self.spec.m

    @property
    def Q(self) -> int:
        return self.layout.Q

    @property
    def solver(self) -> GlobalSolver:
        if self._solver is None:
            self._solver = GlobalSolver(self.C_tilde, self.free)
        return self._solver

    @property
    def exterior_nodes(self) -> np.ndarray:
        """Global nodes not strictly inside any fictitious patch."""
        inside = np.zeros(self.mesh.n_nodes, dtype=bool)
        for pi in self.iface:
            inside[pi.coarse_interior] = True
        return np.flatnonzero(~inside)
