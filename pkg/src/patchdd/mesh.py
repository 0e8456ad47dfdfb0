"""Structured P1 triangulations of rectangles, patch layouts and interface maps.

The global (fictitious) domain and every patch are axis-aligned rectangles
meshed with square cells split along the lower-left to upper-right diagonal.
Patch meshes are uniform refinements of the global mesh restricted to the
patch, so coarse interface traces are exactly representable on the fine
interface.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

INTERIOR = 0
DIRICHLET = 1
INTERFACE = 2

EXTERIOR = 0  # element tag of the complementary subdomain; patch q gets tag q

_LINE_TOL = 1e-9


class MeshError(ValueError):
    """Raised when a mesh, layout or mesh pairing violates the sizing rules."""


@dataclass(frozen=True)
class Rect:
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise MeshError(f"degenerate rectangle {self}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def perimeter(self) -> float:
        return 2.0 * (self.width + self.height)

    def contains(self, pts, tol=0.0) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return ((pts[:, 0] >= self.x0 - tol) & (pts[:, 0] <= self.x1 + tol)
                & (pts[:, 1] >= self.y0 - tol) & (pts[:, 1] <= self.y1 + tol))

    def strictly_inside(self, other: "Rect", gap=0.0) -> bool:
        """True if ``self`` lies in the interior of ``other`` with margin ``gap``."""
        return (self.x0 > other.x0 + gap and self.x1 < other.x1 - gap
                and self.y0 > other.y0 + gap and self.y1 < other.y1 - gap)

    def overlaps(self, other: "Rect") -> bool:
        return (self.x0 < other.x1 and other.x0 < self.x1
                and self.y0 < other.y1 and other.y0 < self.y1)

    def as_tuple(self):
        return (self.x0, self.x1, self.y0, self.y1)


@dataclass(frozen=True, eq=False)
class StructuredTriMesh:
    """P1 triangulation of a rectangle on a regular grid.

    Nodes are numbered lexicographically with x running fastest, so node
    ``(i, j)`` of the grid has id ``j * (nx + 1) + i``.
    """

    box: Rect
    spacing: float
    nx: int
    ny: int
    nodes: np.ndarray
    triangles: np.ndarray
    node_tags: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def node_id(self, i, j):
        return np.asarray(j) * (self.nx + 1) + np.asarray(i)

    def grid_index(self, pts, tol=_LINE_TOL):
        """Grid indices ``(i, j)`` of points that must coincide with mesh nodes."""
        pts = np.atleast_2d(pts)
        fi = (pts[:, 0] - self.box.x0) / self.spacing
        fj = (pts[:, 1] - self.box.y0) / self.spacing
        i = np.rint(fi).astype(np.int64)
        j = np.rint(fj).astype(np.int64)
        if (np.any(np.abs(fi - i) * self.spacing > tol)
                or np.any(np.abs(fj - j) * self.spacing > tol)
                or np.any((i < 0) | (i > self.nx) | (j < 0) | (j > self.ny))):
            raise MeshError("points do not coincide with mesh nodes")
        return i, j

    def locate_nodes(self, pts):
        i, j = self.grid_index(pts)
        return self.node_id(i, j)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def boundary_nodes(self) -> np.ndarray:
        """Boundary node ids, counterclockwise from the lower-left corner."""
        nx, ny = self.nx, self.ny
        bottom = self.node_id(np.arange(0, nx), 0)
        right = self.node_id(nx, np.arange(0, ny))
        top = self.node_id(np.arange(nx, 0, -1), ny)
        left = self.node_id(0, np.arange(ny, 0, -1))
        return np.concatenate([bottom, right, top, left])


def _cells(length: float, s: float) -> int:
    n = int(round(length / s))
    if n < 1 or abs(n * s - length) > 1e-12 * max(length, 1.0):
        raise MeshError(f"side length {length} is not a multiple of element size {s}")
    return n


def build_rect_mesh(box, s, boundary_tag=DIRICHLET) -> StructuredTriMesh:
    """Mesh a rectangle with square cells of side ``s``, two triangles each.

    Parameters
    ----------
    box : Rect or tuple
        ``(x0, x1, y0, y1)``.
    s : float
        Cell side; both side lengths must be integer multiples of it.
    boundary_tag : int
        Tag given to every node on the rectangle boundary (``DIRICHLET`` for
        the global domain, ``INTERFACE`` for a patch).
    """
    box = box if isinstance(box, Rect) else Rect(*box)
    nx = _cells(box.width, s)
    ny = _cells(box.height, s)
    xs = np.linspace(box.x0, box.x1, nx + 1)
    ys = np.linspace(box.y0, box.y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # rows follow y, so ravel() puts x fastest
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
    ii, jj = ii.ravel(), jj.ravel()
    n00 = jj * (nx + 1) + ii
    n10 = n00 + 1
    n01 = n00 + nx + 1
    n11 = n01 + 1
    lower = np.column_stack([n00, n10, n11])
    upper = np.column_stack([n00, n11, n01])
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    tags = np.full(nodes.shape[0], INTERIOR, dtype=np.int8)
    i_all = np.tile(np.arange(nx + 1), ny + 1)
    j_all = np.repeat(np.arange(ny + 1), nx + 1)
    on_bnd = (i_all == 0) | (i_all == nx) | (j_all == 0) | (j_all == ny)
    tags[on_bnd] = boundary_tag
    return StructuredTriMesh(box, float(s), nx, ny, nodes, triangles, tags)


@dataclass(frozen=True)
class PatchLayout:
    """Patches, the inclusions carrying the randomness, and uncertainty weights."""

    domain: Rect
    patch_boxes: tuple = ()
    inclusion_boxes: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        q = len(self.patch_boxes)
        if len(self.inclusion_boxes) != q or len(self.weights) != q:
            raise MeshError("patch, inclusion and weight lists differ in length")
        for k, (lam, inc, g) in enumerate(zip(self.patch_boxes, self.inclusion_boxes, self.weights)):
            if not lam.strictly_inside(self.domain):
                raise MeshError(f"patch {k + 1} is not strictly inside the domain")
            if not inc.strictly_inside(lam):
                raise MeshError(f"inclusion {k + 1} does not stay away from its patch boundary")
            if not 0.0 <= g <= 1.0:
                raise MeshError(f"weight of patch {k + 1} outside [0, 1]")
        for a in range(q):
            for b in range(a + 1, q):
                if self.patch_boxes[a].overlaps(self.patch_boxes[b]):
                    raise MeshError(f"patches {a + 1} and {b + 1} overlap")

    @property
    def Q(self) -> int:
        return len(self.patch_boxes)


def benchmark_layout(weights="isotropic", Q=8) -> PatchLayout:
    """Square patches stacked along a (0,2) x (0,2Q) strip, one inclusion each.

    ``weights`` is ``"isotropic"`` (all ones), ``"anisotropic"``
    (``1 - 0.1 (q + 1)``) or an explicit sequence of length ``Q``.
    """
    domain = Rect(0.0, 2.0, 0.0, 2.0 * Q)
    patches = tuple(Rect(0.5, 1.5, 2 * q - 1.5, 2 * q - 0.5) for q in range(1, Q + 1))
    inclusions = tuple(Rect(0.75, 1.25, 2 * q - 1.25, 2 * q - 0.75) for q in range(1, Q + 1))
    if isinstance(weights, str):
        if weights == "isotropic":
            gammas = tuple(1.0 for _ in range(Q))
        elif weights == "anisotropic":
            gammas = tuple(1.0 - 0.1 * (q + 1) for q in range(1, Q + 1))
        else:
            raise MeshError(f"unknown weight mode {weights!r}")
    else:
        gammas = tuple(float(g) for g in weights)
    return PatchLayout(domain, patches, inclusions, gammas)


def _on_lines(value, origin, s):
    f = (value - origin) / s
    return abs(f - round(f)) * s <= _LINE_TOL


def partition_global(mesh: StructuredTriMesh, layout: PatchLayout) -> np.ndarray:
    """Element tags: ``EXTERIOR`` (0) or the 1-based patch index.

    Every patch edge must run along mesh lines, so each fictitious patch is
    an exact union of coarse triangles.
    """
    tags = np.full(mesh.n_triangles, EXTERIOR, dtype=np.int64)
    cen = mesh.centroids()
    for q, lam in enumerate(layout.patch_boxes, start=1):
        for v, o in ((lam.x0, mesh.box.x0), (lam.x1, mesh.box.x0),
                     (lam.y0, mesh.box.y0), (lam.y1, mesh.box.y0)):
            if not _on_lines(v, o, mesh.spacing):
                raise MeshError(f"boundary of patch {q} cuts mesh elements")
        tags[lam.contains(cen)] = q
    return tags


@dataclass(frozen=True, eq=False)
class PatchInterface:
    """Coarse/fine node lists on one closed interface and the trace prolongation."""

    coarse_nodes: np.ndarray
    fine_nodes: np.ndarray
    prolongation: sp.csr_matrix
    fine_arclength: np.ndarray
    coarse_interior: np.ndarray
    coarse_closure: np.ndarray

    @property
    def n_coarse(self) -> int:
        return self.coarse_nodes.size

    @property
    def n_fine(self) -> int:
        return self.fine_nodes.size


@dataclass(frozen=True, eq=False)
class InterfaceMap:
    patches: tuple = field(default_factory=tuple)

    def __getitem__(self, q):
        return self.patches[q]

    def __len__(self):
        return len(self.patches)


def _perimeter_arclength(mesh: StructuredTriMesh, ids: np.ndarray) -> np.ndarray:
    pts = mesh.nodes[ids]
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def build_interface_map(global_mesh: StructuredTriMesh, patch_meshes, layout: PatchLayout) -> InterfaceMap:
    """Interface node maps between the coarse mesh and nested patch meshes."""
    if len(patch_meshes) != layout.Q:
        raise MeshError("one patch mesh per patch is required")
    H = global_mesh.spacing
    out = []
    for q, (pm, lam) in enumerate(zip(patch_meshes, layout.patch_boxes), start=1):
        if not np.allclose(pm.box.as_tuple(), lam.as_tuple(), rtol=0.0, atol=_LINE_TOL):
            raise MeshError(f"patch mesh {q} does not cover its patch")
        ratio = H / pm.spacing
        r = int(round(ratio))
        if r < 1 or abs(ratio - r) > 1e-9:
            raise MeshError(f"patch mesh {q} is not a nested refinement of the global mesh")
        i0, j0 = global_mesh.grid_index([[lam.x0, lam.y0]])
        i1, j1 = global_mesh.grid_index([[lam.x1, lam.y1]])
        i0, j0, i1, j1 = int(i0[0]), int(j0[0]), int(i1[0]), int(j1[0])
        if pm.nx != r * (i1 - i0) or pm.ny != r * (j1 - j0):
            raise MeshError(f"patch mesh {q} is not a nested refinement of the global mesh")

        nxc, nyc = i1 - i0, j1 - j0
        bottom = [(i, j0) for i in range(i0, i1)]
        right = [(i1, j) for j in range(j0, j1)]
        top = [(i, j1) for i in range(i1, i0, -1)]
        left = [(i0, j) for j in range(j1, j0, -1)]
        ij = np.array(bottom + right + top + left)
        coarse = global_mesh.node_id(ij[:, 0], ij[:, 1])
        fine = pm.boundary_nodes()
        nc, nf = coarse.size, fine.size
        assert nf == r * nc == 2 * r * (nxc + nyc)

        f = np.arange(nf)
        c = f // r
        rem = f % r
        rows, cols, vals = [f[rem == 0]], [c[rem == 0]], [np.ones(np.count_nonzero(rem == 0))]
        mid = rem != 0
        t = rem[mid] / r
        rows += [f[mid], f[mid]]
        cols += [c[mid], (c[mid] + 1) % nc]
        vals += [1.0 - t, t]
        P = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(nf, nc))

        ii, jj = np.meshgrid(np.arange(i0 + 1, i1), np.arange(j0 + 1, j1))
        interior = np.sort(global_mesh.node_id(ii.ravel(), jj.ravel()))
        ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1))
        closure = np.sort(global_mesh.node_id(ii.ravel(), jj.ravel()))
        arc = _perimeter_arclength(pm, np.append(fine, fine[0]))[:-1]
        out.append(PatchInterface(coarse, fine, P, arc, interior, closure))
    return InterfaceMap(tuple(out))
