"""Moments, sensitivity indices and exports of chaos-expanded fields."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mesh import EXTERIOR

VTK_TRIANGLE = 5


def _coeffs(u):
    """``(indices array, coefficients (n_nodes, #A))`` of a PceField or PceApprox."""
    return u.indices.array, np.asarray(u.coefficients, dtype=float)


def moments(u):
    """Nodal mean and variance of an expansion on an orthonormal basis."""
    idx, c = _coeffs(u)
    zero = ~np.any(idx, axis=1)
    mean = c[:, zero].sum(axis=1)
    var = np.sum(c[:, ~zero] ** 2, axis=1)
    return mean, var


def conditional_variances(u) -> np.ndarray:
    """``V(E(u | xi_i))`` for every variable; shape ``(m, n_nodes)``.

    Only multi-indices supported on the single coordinate ``i`` contribute.
    """
    idx, c = _coeffs(u)
    m = idx.shape[1]
    nz = idx > 0
    single = nz.sum(axis=1) == 1
    out = np.zeros((m, c.shape[0]))
    for k in np.flatnonzero(single):
        out[np.argmax(nz[k])] += c[:, k] ** 2
    return out


@dataclass
class SensitivityResult:
    indices: np.ndarray  # (m, n_nodes)
    deterministic: bool


def sensitivity_indices(u, denominator=None) -> SensitivityResult:
    """Normalized first-order indices ``V(E(u|xi_i))(x) / max_x V(u)(x)``.

    ``denominator`` overrides the spatial maximum of the variance (used when
    several fields share one normalization). A deterministic field yields
    all-zero indices and ``deterministic=True``.
    """
    num = conditional_variances(u)
    if denominator is None:
        denominator = float(moments(u)[1].max(initial=0.0))
    if denominator <= 0.0:
        return SensitivityResult(np.zeros_like(num), True)
    return SensitivityResult(num / denominator, False)


@dataclass
class MeshPart:
    name: str
    nodes: np.ndarray
    triangles: np.ndarray
    node_ids: np.ndarray  # ids in the source mesh
    field: object  # expansion restricted to node_ids


@dataclass
class MultiscaleField:
    """Coarse exterior part followed by one fine part per patch."""

    parts: list

    def statistics(self):
        """Per-part mean, variance and sensitivity indices with a shared normalization."""
        mv = [moments(p.field) for p in self.parts]
        vmax = max(float(v.max(initial=0.0)) for _, v in mv)
        out = []
        for p, (mean, var) in zip(self.parts, mv):
            s = sensitivity_indices(p.field, vmax if vmax > 0 else None)
            out.append({"mean": mean, "variance": var, "sensitivity": s.indices})
        return out


class _Restricted:
    def __init__(self, indices, coefficients):
        self.indices = indices
        self.coefficients = coefficients


def merge_multiscale(U, ws, gp) -> MultiscaleField:
    """Multiscale field: ``U`` on exterior coarse elements, ``w_q`` on patch ``q``."""
    if len(ws) != gp.Q or any(w is None for w in ws):
        raise ValueError("one patch solution per patch is required")
    tri = gp.mesh.triangles[gp.tags == EXTERIOR]
    used = np.unique(tri)
    remap = np.full(gp.mesh.n_nodes, -1)
    remap[used] = np.arange(used.size)
    parts = [MeshPart("exterior", gp.mesh.nodes[used], remap[tri], used,
                      _Restricted(U.indices, np.asarray(U.coefficients)[used]))]
    for q, (pm, w) in enumerate(zip(gp.patch_meshes, ws)):
        parts.append(MeshPart(f"patch{q + 1}", pm.nodes, pm.triangles,
                              np.arange(pm.n_nodes), w))
    return MultiscaleField(parts)


def write_vtk(path, nodes, triangles, point_data: dict, title="patchdd field"):
    """Legacy ASCII VTK unstructured grid of triangles with nodal scalars."""
    nodes = np.asarray(nodes, dtype=float)
    tri = np.asarray(triangles, dtype=np.int64)
    with open(path, "w") as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {nodes.shape[0]} double\n")
        for x, y in nodes:
            fh.write(f"{x:.17g} {y:.17g} 0\n")
        fh.write(f"CELLS {tri.shape[0]} {4 * tri.shape[0]}\n")
        for a, b, c in tri:
            fh.write(f"3 {a} {b} {c}\n")
        fh.write(f"CELL_TYPES {tri.shape[0]}\n")
        fh.write(f"{VTK_TRIANGLE}\n" * tri.shape[0])
        if point_data:
            fh.write(f"POINT_DATA {nodes.shape[0]}\n")
            for name, vals in point_data.items():
                vals = np.asarray(vals, dtype=float)
                if vals.shape != (nodes.shape[0],):
                    raise ValueError(f"field {name!r} has wrong length")
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                fh.writelines(f"{v:.17g}\n" for v in vals)


def write_node_csv(path, nodes, values, name="value", node_ids=None):
    """CSV with columns ``node_id, x, y`` and one column per field.

    ``values`` is a nodal array (column ``name``) or a dict of them.
    """
    nodes = np.asarray(nodes, dtype=float)
    cols = values if isinstance(values, dict) else {name: values}
    data = [np.asarray(v, dtype=float) for v in cols.values()]
    ids = np.arange(nodes.shape[0]) if node_ids is None else node_ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "x", "y", *cols])
        for k, (i, (x, y)) in enumerate(zip(ids, nodes)):
            w.writerow([int(i), repr(float(x)), repr(float(y))] + [repr(float(d[k])) for d in data])


def export_statistics(outdir, field: MultiscaleField, variables=None):
    """Write mean, variance and selected sensitivity fields of every part as VTK."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for part, st in zip(field.parts, field.statistics()):
        data = {"mean": st["mean"], "variance": st["variance"]}
        sel = range(st["sensitivity"].shape[0]) if variables is None else variables
        for i in sel:
            data[f"S_{i + 1}"] = st["sensitivity"][i]
        p = outdir / f"{part.name}.vtk"
        write_vtk(p, part.nodes, part.triangles, data)
        written.append(p)
    return written
