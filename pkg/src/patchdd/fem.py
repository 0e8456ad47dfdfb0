"""P1 finite element operators on structured triangulations.

All assembly goes through :class:`P1Space`, which precomputes element
geometry and a fixed CSR pattern (node adjacency) so that every operator
is a ``bincount`` onto the same data array. Entry order is therefore
deterministic and operators on one mesh can be added data-wise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import StructuredTriMesh, InterfaceMap

# Symmetric 6-point rule, exact for degree 4 (barycentric coords, weights sum to 1).
_A1, _B1, _W1 = 0.445948490915965, 0.108103018168070, 0.223381589678011
_A2, _B2, _W2 = 0.091576213509771, 0.816847572980459, 0.109951743655322
QUAD_BARY = np.array([
    [_A1, _A1, _B1], [_A1, _B1, _A1], [_B1, _A1, _A1],
    [_A2, _A2, _B2], [_A2, _B2, _A2], [_B2, _A2, _A2],
])
QUAD_WEIGHTS = np.array([_W1, _W1, _W1, _W2, _W2, _W2])

_LOCAL_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


class AssemblyError(ValueError):
    pass


def _check_nonneg(values, name, strict):
    bad = values <= 0 if strict else values < 0
    if np.any(bad) or not np.all(np.isfinite(values)):
        sign = "positive" if strict else "nonnegative"
        raise AssemblyError(f"{name} must be {sign} and finite on every element")


class P1Space:
    """Element geometry and sparsity pattern of P1 elements on ``mesh``."""

    def __init__(self, mesh: StructuredTriMesh):
        self.mesh = mesh
        tri = mesh.triangles
        p = mesh.nodes[tri]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(det <= 0):
            raise AssemblyError("mesh has non-positively oriented triangles")
        self.area = 0.5 * det
        # gradients of the barycentric functions, shape (nt, 3, 2)
        inv = np.empty((tri.shape[0], 2, 2))
        inv[:, 0, 0] = d2[:, 1] / det
        inv[:, 0, 1] = -d2[:, 0] / det
        inv[:, 1, 0] = -d1[:, 1] / det
        inv[:, 1, 1] = d1[:, 0] / det
        ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        self.grads = np.einsum("ka,tab->tkb", ref, inv)

        n = mesh.n_nodes
        rows = np.repeat(tri, 3, axis=1).ravel()
        cols = np.tile(tri, (1, 3)).ravel()
        key = rows * n + cols
        uniq, self._scatter = np.unique(key, return_inverse=True)
        self._scatter = self._scatter.ravel()
        r, c = np.divmod(uniq, n)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, r + 1, 1)
        self.indptr = np.cumsum(indptr)
        self.indices = c
        self.nnz = uniq.size
        self.n = n
        self._local_stiff = np.einsum("tib,tjb->tij", self.grads, self.grads) * self.area[:, None, None]
        self._local_mass = _LOCAL_MASS[None] * self.area[:, None, None]

    # -- helpers -----------------------------------------------------------
    def _element_values(self, values, elements):
        v = np.broadcast_to(np.asarray(values, dtype=float), (self.mesh.n_triangles,)).copy()
        if elements is not None:
            mask = np.zeros(self.mesh.n_triangles, dtype=bool)
            mask[elements] = True
            v[~mask] = 0.0
        return v

    def scatter(self, local: np.ndarray) -> np.ndarray:
        """Sum element matrices ``(nt, 3, 3)`` onto the CSR data array."""
        return np.bincount(self._scatter, weights=local.ravel(), minlength=self.nnz)

    def matrix(self, data: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    # -- operators ---------------------------------------------------------
    def stiffness_data(self, coeff=1.0, elements=None) -> np.ndarray:
        k = self._element_values(coeff, elements)
        active = k if elements is None else k[elements]
        _check_nonneg(active, "diffusion coefficient", strict=True)
        return self.scatter(self._local_stiff * k[:, None, None])

    def stiffness(self, coeff=1.0, elements=None) -> sp.csr_matrix:
        return self.matrix(self.stiffness_data(coeff, elements))

    def mass(self, elements=None) -> sp.csr_matrix:
        w = self._element_values(1.0, elements)
        return self.matrix(self.scatter(self._local_mass * w[:, None, None]))

    def load(self, f=1.0, elements=None) -> np.ndarray:
        w = self._element_values(f, elements) * self.area / 3.0
        return np.bincount(self.mesh.triangles.ravel(), weights=np.repeat(w, 3),
                           minlength=self.n)

    def _reaction_setup(self, R, w, elements):
        R = self._element_values(R, None)
        _check_nonneg(R, "reaction coefficient", strict=False)
        if elements is None:
            elements = np.flatnonzero(R)
        tri = self.mesh.triangles[elements]
        wq = np.asarray(w, dtype=float)[tri] @ QUAD_BARY.T  # (ne, nq)
        return elements, tri, wq, R[elements] * self.area[elements]

    def reaction(self, R, w, elements=None) -> np.ndarray:
        """Nodal vector of the cubic reaction form ``int R w^3 phi_i``.

        Only triangles in ``elements`` (default: those with ``R != 0``) are
        visited.
        """
        _, tri, wq, ra = self._reaction_setup(R, w, elements)
        loc = ((wq ** 3 * QUAD_WEIGHTS) @ QUAD_BARY) * ra[:, None]
        return np.bincount(tri.ravel(), weights=loc.ravel(), minlength=self.n)

    def reaction_jacobian_data(self, R, w, elements=None) -> np.ndarray:
        elements, _, wq, ra = self._reaction_setup(R, w, elements)
        c = 3.0 * wq ** 2 * QUAD_WEIGHTS * ra[:, None]
        loc = np.einsum("tp,pi,pj->tij", c, QUAD_BARY, QUAD_BARY)
        idx = self._scatter.reshape(-1, 9)[elements].ravel()
        return np.bincount(idx, weights=loc.ravel(), minlength=self.nnz)

    def reaction_jacobian(self, R, w, elements=None) -> sp.csr_matrix:
        return self.matrix(self.reaction_jacobian_data(R, w, elements))

    def submatrix_map(self, rows, cols=None):
        """Pattern of ``M[rows][:, cols]`` and the positions of its entries in the data array.

        Returns ``(take, indices, indptr, shape)`` so that
        ``csr_matrix((data[take], indices, indptr), shape)`` is the submatrix.
        """
        cols = rows if cols is None else cols
        marker = self.matrix(np.arange(1, self.nnz + 1, dtype=float))
        sub = marker[rows][:, cols].tocsr()
        sub.sort_indices()
        return sub.data.astype(np.int64) - 1, sub.indices.copy(), sub.indptr.copy(), sub.shape


def assemble_stiffness(mesh, coeff=1.0, elements=None, space=None) -> sp.csr_matrix:
    """Stiffness matrix ``sum_T K_T int_T grad phi_i . grad phi_j``.

    ``coeff`` is a scalar or one value per triangle; ``elements`` restricts
    the sum to a subset of triangles.
    """
    space = space or P1Space(mesh)
    return space.stiffness(coeff, elements)


def assemble_reaction(mesh, R, w, space=None) -> np.ndarray:
    space = space or P1Space(mesh)
    return space.reaction(R, np.asarray(w, dtype=float))


def assemble_reaction_jacobian(mesh, R, w, space=None) -> sp.csr_matrix:
    space = space or P1Space(mesh)
    return space.reaction_jacobian(R, np.asarray(w, dtype=float))


def assemble_load(mesh, f=1.0, elements=None, space=None) -> np.ndarray:
    space = space or P1Space(mesh)
    return space.load(f, elements)


def gram_matrices(mesh, elements=None, space=None):
    """``(M_L2, M_H1)`` with ``M_H1 = M_L2 + unit stiffness``."""
    space = space or P1Space(mesh)
    m = space.mass(elements)
    return m, (m + space.stiffness(1.0, elements)).tocsr()


def interface_mass(points: np.ndarray) -> sp.csr_matrix:
    """1D P1 mass matrix on the closed polyline through ``points`` (in order)."""
    n = points.shape[0]
    nxt = np.roll(np.arange(n), -1)
    length = np.linalg.norm(points[nxt] - points, axis=1)
    i = np.arange(n)
    rows = np.concatenate([i, nxt, i, nxt])
    cols = np.concatenate([i, nxt, nxt, i])
    vals = np.concatenate([length / 3.0, length / 3.0, length / 6.0, length / 6.0])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass(frozen=True, eq=False)
class Coupling:
    """Interface operators of one patch.

    ``mass`` is the fine-interface mass matrix (multiplier dofs x multiplier
    dofs); ``B`` maps multiplier dofs to patch-node loads and ``Btilde``
    maps them to global-node loads through the transposed prolongation.
    """

    mass: sp.csr_matrix
    B: sp.csr_matrix
    Btilde: sp.csr_matrix


def assemble_coupling(iface: InterfaceMap, q: int, patch_mesh: StructuredTriMesh,
                      n_global: int) -> Coupling:
    pi = iface[q]
    M = interface_mass(patch_mesh.nodes[pi.fine_nodes])
    nf = pi.n_fine
    sel = sp.csr_matrix((np.ones(nf), (pi.fine_nodes, np.arange(nf))),
                        shape=(patch_mesh.n_nodes, nf))
    B = (sel @ M).tocsr()
    selc = sp.csr_matrix((np.ones(pi.n_coarse), (pi.coarse_nodes, np.arange(pi.n_coarse))),
                         shape=(n_global, pi.n_coarse))
    Bt = (selc @ (pi.prolongation.T @ M)).tocsr()
    return Coupling(M, B, Bt)
