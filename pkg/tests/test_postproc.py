import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patchdd.global_local import PceField
from patchdd.mesh import PatchLayout, Rect
from patchdd.postproc import (conditional_variances, export_statistics, merge_multiscale, moments,
                              sensitivity_indices, write_node_csv, write_vtk)
from patchdd.problem import GlobalProblem, ProblemSpec
from patchdd.sparse_poly import MultiIndexSet


def field(idx, coeffs):
    return PceField(MultiIndexSet(idx), np.atleast_2d(np.asarray(coeffs, dtype=float)))


def test_moments_monte_carlo():
    rng = np.random.default_rng(0)
    u = field([[0, 0], [1, 0], [0, 2], [1, 1]], rng.standard_normal((3, 4)))
    mean, var = moments(u)
    s = u(rng.random((400000, 2)))
    assert np.allclose(mean, s.mean(axis=0), atol=0.01)
    assert np.allclose(var, s.var(axis=0), rtol=0.02)


def test_sensitivity_monte_carlo():
    # oracle: V(E(u|xi_1)) from a conditional Monte Carlo estimate
    rng = np.random.default_rng(1)
    u = field([[0, 0], [1, 0], [2, 0], [0, 1], [1, 1]], [[0.5, 1.0, 0.4, 0.7, 0.3]])
    x1 = rng.random(2000)
    inner = rng.random(2000)
    cond = np.array([u(np.column_stack([np.full(2000, a), inner]))[:, 0].mean() for a in x1])
    V1 = conditional_variances(u)[0, 0]
    assert abs(V1 - cond.var()) <= 0.05 * V1
    assert np.isclose(V1, 1.0 + 0.16)


def test_pure_interaction_and_deterministic():
    u = field([[0, 0], [1, 1]], [[2.0, 1.0]])
    s = sensitivity_indices(u)
    assert np.all(s.indices == 0) and not s.deterministic
    d = sensitivity_indices(field([[0, 0]], [[3.0]]))
    assert d.deterministic and np.all(d.indices == 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_sensitivity_bounded(seed):
    rng = np.random.default_rng(seed)
    idx = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 0], [0, 2, 1]])
    u = field(idx, rng.standard_normal((5, len(idx))))
    s = sensitivity_indices(u)
    _, var = moments(u)
    assert np.all(s.indices >= 0)
    assert np.all(s.indices.sum(axis=0) <= var / var.max() + 1e-12)
    assert s.indices.max() <= 1 + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    idx = np.array([[0, 0, 0], [2, 0, 0], [0, 1, 0], [0, 0, 3], [1, 1, 1]])
    c = rng.standard_normal((4, len(idx)))
    perm = rng.permutation(3)
    u, v = field(idx, c), field(idx[:, perm], c)
    assert np.allclose(moments(u)[1], moments(v)[1])
    assert np.allclose(sensitivity_indices(u).indices[perm], sensitivity_indices(v).indices)


def test_vtk_format(tmp_path):
    nodes = np.array([[0, 0], [1, 0], [0, 1.0]])
    p = tmp_path / "t.vtk"
    write_vtk(p, nodes, [[0, 1, 2]], {"mean": [0.1, 1 / 3, 2.0]})
    lines = p.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert lines[3] == "DATASET UNSTRUCTURED_GRID"
    assert "POINTS 3 double" in lines and "CELLS 1 4" in lines
    assert lines[lines.index("CELL_TYPES 1") + 1] == "5"
    assert float(lines[-2]) == 1 / 3
    with pytest.raises(ValueError):
        write_vtk(p, nodes, [[0, 1, 2]], {"bad": [1.0]})


def test_csv_format(tmp_path):
    p = tmp_path / "n.csv"
    write_node_csv(p, [[0.5, 0.25], [1, 2]], {"mean": [0.1, 0.2], "variance": [0, 1]},
                   node_ids=[7, 9])
    lines = p.read_text().splitlines()
    assert lines[0] == "node_id,x,y,mean,variance"
    assert lines[1] == "7,0.5,0.25,0.1,0.0"


def test_multiscale_merge_and_export(tmp_path):
    lay = PatchLayout(Rect(0, 2, 0, 2), (Rect(0.5, 1.5, 0.5, 1.5),),
                      (Rect(0.75, 1.25, 0.75, 1.25),), (1.0,))
    gp = GlobalProblem(ProblemSpec(lay, H=0.25, h=0.125))
    A = MultiIndexSet([[0, 0], [1, 0]])
    U = PceField(A, np.column_stack([np.ones(gp.mesh.n_nodes), 0.1 * np.ones(gp.mesh.n_nodes)]))
    w = PceField(MultiIndexSet([[0, 0], [0, 1]]),
                 np.column_stack([np.ones(gp.patches[0].n_nodes), np.ones(gp.patches[0].n_nodes)]))
    ms = merge_multiscale(U, [w], gp)
    assert [p.name for p in ms.parts] == ["exterior", "patch1"]
    ext = ms.parts[0]
    assert ext.triangles.shape[0] == np.count_nonzero(gp.tags == 0)
    st = ms.statistics()
    assert np.allclose(st[0]["sensitivity"][0], 0.01)  # shared normalization by max variance 1
    assert np.allclose(st[1]["sensitivity"][1], 1.0)
    files = export_statistics(tmp_path, ms, variables=[0])
    assert [f.name for f in files] == ["exterior.vtk", "patch1.vtk"]
    assert "SCALARS S_1 double 1" in files[1].read_text()
    with pytest.raises(ValueError):
        merge_multiscale(U, [], gp)
