import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patchdd.mesh import (DIRICHLET, EXTERIOR, INTERFACE, MeshError, PatchLayout, Rect,
                          benchmark_layout, build_interface_map, build_rect_mesh,
                          partition_global)


@pytest.fixture(scope="module")
def coarse():
    return build_rect_mesh(Rect(0, 2, 0, 16), 0.1)


@pytest.fixture(scope="module")
def layout():
    return benchmark_layout()


@pytest.fixture(scope="module")
def fine_meshes(layout):
    return [build_rect_mesh(b, 0.05, INTERFACE) for b in layout.patch_boxes]


@pytest.mark.parametrize("box, s, nn, nt", [
    ((0, 2, 0, 16), 0.1, 3381, 6400),
    ((0, 1, 0, 1), 1.0, 4, 2),
    ((0.5, 1.5, 0.5, 1.5), 0.05, 441, 800),
])
def test_mesh_counts(box, s, nn, nt):
    m = build_rect_mesh(box, s)
    assert (m.n_nodes, m.n_triangles) == (nn, nt)
    assert np.all(m.signed_areas() > 0)


def test_count_formula_and_positive_areas():
    for bx, by, s in [(3, 2, 0.5), (1, 4, 0.25), (2.5, 0.5, 0.5)]:
        m = build_rect_mesh((0, bx, 0, by), s)
        assert m.n_nodes == round((bx / s + 1) * (by / s + 1))
        assert m.n_triangles == round(2 * (bx / s) * (by / s))
        assert np.all(m.signed_areas() > 0)
        assert np.isclose(m.signed_areas().sum(), bx * by, rtol=0, atol=1e-12)


def test_lexicographic_x_fastest(coarse):
    assert np.allclose(coarse.nodes[:21, 1], 0.0)
    assert np.allclose(coarse.nodes[:21, 0], np.linspace(0, 2, 21))
    assert np.allclose(coarse.nodes[21], [0.0, 0.1])


def test_boundary_tags(coarse):
    x, y = coarse.nodes.T
    on = np.isclose(x, 0) | np.isclose(x, 2) | np.isclose(y, 0) | np.isclose(y, 16)
    assert np.array_equal(coarse.node_tags == DIRICHLET, on)
    assert on.sum() == 2 * (21 + 161) - 4 == 360


def test_sizing_error():
    with pytest.raises(MeshError):
        build_rect_mesh((0, 1, 0, 1), 0.3)


def test_deterministic(coarse):
    again = build_rect_mesh(Rect(0, 2, 0, 16), 0.1)
    assert coarse.nodes.tobytes() == again.nodes.tobytes()
    assert coarse.triangles.tobytes() == again.triangles.tobytes()


def test_partition_counts(coarse, layout):
    tags = partition_global(coarse, layout)
    cen = coarse.centroids()
    for q, box in enumerate(layout.patch_boxes, start=1):
        brute = sum(1 for c in cen if box.x0 < c[0] < box.x1 and box.y0 < c[1] < box.y1)
        assert brute == 200
        assert np.count_nonzero(tags == q) == brute
    areas = coarse.signed_areas()
    total = sum(areas[tags == q].sum() for q in range(layout.Q + 1))
    assert abs(total - 32.0) <= 1e-12
    for q in range(1, layout.Q + 1):
        assert abs(areas[tags == q].sum() - 1.0) <= 1e-12


def test_partition_no_patches(coarse):
    tags = partition_global(coarse, PatchLayout(Rect(0, 2, 0, 16)))
    assert np.all(tags == EXTERIOR)


def test_partition_rejects_cut():
    lay = PatchLayout(Rect(0, 2, 0, 16), (Rect(0.55, 1.5, 0.5, 1.5),),
                      (Rect(0.75, 1.25, 0.75, 1.25),), (1.0,))
    with pytest.raises(MeshError):
        partition_global(build_rect_mesh(Rect(0, 2, 0, 16), 0.1), lay)


def test_layout_validation():
    d = Rect(0, 2, 0, 4)
    with pytest.raises(MeshError):  # overlapping
        PatchLayout(d, (Rect(0.5, 1.5, 0.5, 1.5), Rect(0.5, 1.5, 1.0, 2.0)),
                    (Rect(0.7, 1.3, 0.7, 1.3), Rect(0.7, 1.3, 1.2, 1.8)), (1.0, 1.0))
    with pytest.raises(MeshError):  # touching the domain boundary
        PatchLayout(d, (Rect(0.0, 1.0, 0.5, 1.5),), (Rect(0.2, 0.8, 0.7, 1.3),), (1.0,))
    with pytest.raises(MeshError):  # inclusion touching the patch boundary
        PatchLayout(d, (Rect(0.5, 1.5, 0.5, 1.5),), (Rect(0.5, 1.0, 0.7, 1.3),), (1.0,))


def test_interface_counts(coarse, layout, fine_meshes):
    im = build_interface_map(coarse, fine_meshes, layout)
    for q, pi in enumerate(im.patches):
        assert (pi.n_coarse, pi.n_fine) == (40, 80)
        assert np.all(coarse.node_tags[pi.coarse_nodes] != DIRICHLET)
        assert np.all(fine_meshes[q].node_tags[pi.fine_nodes] == INTERFACE)
        # counterclockwise from the lower-left corner
        box = layout.patch_boxes[q]
        assert np.allclose(fine_meshes[q].nodes[pi.fine_nodes[0]], [box.x0, box.y0])
        assert np.allclose(fine_meshes[q].nodes[pi.fine_nodes[1]], [box.x0 + 0.05, box.y0])
        assert np.allclose(coarse.nodes[pi.coarse_nodes[1]], [box.x0 + 0.1, box.y0])
        assert np.allclose(pi.prolongation.sum(axis=1), 1.0)
        assert pi.coarse_interior.size == 81


def test_midpoint_rows(coarse, layout, fine_meshes):
    P = build_interface_map(coarse, fine_meshes, layout)[0].prolongation.toarray()
    for i, row in enumerate(P):
        nz = np.sort(row[row != 0])
        if i % 2 == 0:
            assert np.array_equal(nz, [1.0])
        else:
            assert np.array_equal(nz, [0.5, 0.5])


def test_identity_for_equal_meshes(coarse, layout):
    fm = [build_rect_mesh(b, 0.1, INTERFACE) for b in layout.patch_boxes]
    P = build_interface_map(coarse, fm, layout)[3].prolongation
    assert np.array_equal(P.toarray(), np.eye(40))


def test_non_nested_rejected(coarse, layout):
    fm = [build_rect_mesh(b, 0.04, INTERFACE) for b in layout.patch_boxes]
    with pytest.raises(MeshError):
        build_interface_map(coarse, fm, layout)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.integers(1, 4))
def test_prolongation_exact_for_linear(a, b, c, r):
    g = build_rect_mesh(Rect(0, 3, 0, 3), 0.5)
    lay = PatchLayout(Rect(0, 3, 0, 3), (Rect(0.5, 2.0, 1.0, 2.5),),
                      (Rect(1.0, 1.5, 1.5, 2.0),), (1.0,))
    fm = [build_rect_mesh(lay.patch_boxes[0], 0.5 / r, INTERFACE)]
    pi = build_interface_map(g, fm, lay)[0]

    def u(p):
        return a + b * p[:, 0] + c * p[:, 1]

    fine = pi.prolongation @ u(g.nodes[pi.coarse_nodes])
    assert np.allclose(fine, u(fm[0].nodes[pi.fine_nodes]), rtol=0, atol=1e-12)
