import numpy as np
import pytest
from scipy.spatial import Delaunay

from tactile_transfer.exceptions import TooFewVerticesError
from tactile_transfer.mesh import MeshTopology, make_digit_pad
from tactile_transfer.pooling import build_pooling_hierarchy, coarsen


def grid(n):
    xs, ys = np.meshgrid(np.arange(n, dtype=float), np.arange(n, dtype=float))
    verts = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(n * n)])
    tris = []
    for r in range(n - 1):
        for c in range(n - 1):
            a, b, d, e = r * n + c, r * n + c + 1, (r + 1) * n + c, (r + 1) * n + c + 1
            tris += [[a, b, e], [a, e, d]]
    return MeshTopology(verts, tris)


def octahedron_strip():
    # 8 vertices: two rows of four on a bent strip
    verts = np.array([[i, 0, 0] for i in range(4)] + [[i, 1, 0.3 * i] for i in range(4)], float)
    tris = []
    for i in range(3):
        tris += [[i, i + 1, i + 5], [i, i + 5, i + 4]]
    return MeshTopology(verts, tris)


def test_eight_vertices_halve_to_four():
    level = coarsen(octahedron_strip(), 2)
    assert level.coarse.n_vertices == 4
    assert level.down.shape == (4, 8) and level.up.shape == (8, 4)


def test_grid_down_rows_have_a_single_one():
    level = coarsen(grid(4), 2)
    D = level.down.toarray()
    assert D.shape == (8, 16)
    assert np.all((D != 0).sum(axis=1) == 1)
    assert np.all(D.sum(axis=1) == 1.0)
    np.testing.assert_array_equal(D @ grid(4).vertices, level.coarse.vertices)


@pytest.mark.parametrize("seed", range(3))
def test_down_up_is_identity_on_coarse_fields(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 1, (60, 2))
    topo = MeshTopology(np.column_stack([pts, 0.1 * np.sin(3 * pts[:, 0])]), Delaunay(pts).simplices)
    h = build_pooling_hierarchy(topo, levels=3, factor=2)
    for lvl in h.levels:
        DU = (lvl.down @ lvl.up).toarray()
        np.testing.assert_allclose(DU, np.eye(lvl.coarse.n_vertices), atol=1e-9)
        coarse_field = rng.normal(size=(lvl.coarse.n_vertices, 3))
        np.testing.assert_allclose(lvl.down @ (lvl.up @ coarse_field), coarse_field, atol=1e-9)


def test_up_rows_are_barycentric():
    h = build_pooling_hierarchy(make_digit_pad(n_vertices=200), levels=2)
    for lvl in h.levels:
        U = lvl.up.tocsr()
        nnz = np.diff(U.indptr)
        assert nnz.min() >= 1 and nnz.max() <= 3
        np.testing.assert_allclose(np.asarray(U.sum(axis=1)).ravel(), 1.0, atol=1e-12)
        assert U.data.min() > 0


def test_hierarchy_sizes_follow_ceil_halving():
    topo = make_digit_pad(n_vertices=300)
    h = build_pooling_hierarchy(topo, levels=4, factor=2)
    sizes = [topo.n_vertices]
    for _ in range(4):
        sizes.append(int(np.ceil(sizes[-1] / 2)))
    assert h.sizes == sizes
    for a, b in zip(h.topologies[:-1], h.topologies[1:]):
        assert b.triangles.max() < b.n_vertices
        assert len(np.unique(b.triangles)) == b.n_vertices


def test_too_few_vertices():
    with pytest.raises(TooFewVerticesError):
        build_pooling_hierarchy(grid(4), levels=3, factor=2)
    with pytest.raises(ValueError):
        build_pooling_hierarchy(grid(4), levels=0)
    with pytest.raises(ValueError):
        build_pooling_hierarchy(grid(4), levels=1, factor=1)


def test_coarsening_is_deterministic():
    topo = grid(6)
    a, b = coarsen(topo), coarsen(topo)
    np.testing.assert_array_equal(a.kept, b.kept)
    np.testing.assert_array_equal(a.coarse.triangles, b.coarse.triangles)
    assert (a.up != b.up).nnz == 0
