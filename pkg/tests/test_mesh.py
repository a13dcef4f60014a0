import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lodgfem.errors import ConfigurationError
from lodgfem.mesh import build_mesh, build_pair, patch, patch_elements


@pytest.mark.parametrize("level,nodes,elements,interior", [(1, 9, 8, 1), (2, 25, 32, 9)])
def test_counts(level, nodes, elements, interior):
    m = build_mesh(level)
    assert (m.n_nodes, m.n_elements, m.interior_nodes.size) == (nodes, elements, interior)


def test_element_diameter_level6():
    m = build_mesh(6)
    p = m.nodes[m.elements]
    longest = np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2).max()
    assert m.element_diam == pytest.approx(np.sqrt(2) * 2.0 ** -6, rel=1e-15)
    assert longest == pytest.approx(m.element_diam, rel=1e-14)


@pytest.mark.parametrize("level", [0, 11, -1, 2.5])
def test_bad_level(level):
    with pytest.raises(ConfigurationError):
        build_mesh(level)


@pytest.mark.parametrize("level", [1, 3, 5])
def test_orientation_and_regularity(level):
    m = build_mesh(level)
    areas = m.signed_areas()
    assert np.all(areas > 0)
    assert areas.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(m.shape_regularity(), m.shape_regularity()[0])


def test_boundary_excluded():
    m = build_mesh(4)
    x, y = m.nodes[m.interior_nodes].T
    assert np.all((x > 0) & (x < 1) & (y > 0) & (y < 1))
    assert m.boundary_mask.sum() == 4 * m.n


def test_diagonal_direction():
    m = build_mesh(2)
    # both triangles of a cell share the lower-left -> upper-right diagonal
    p = m.nodes[m.elements[:2]]
    assert np.allclose(p[0][[0, 2]], p[1][[0, 1]])
    assert np.allclose(p[0][2] - p[0][0], [m.h, m.h])


@pytest.mark.parametrize("cl,fl,per", [(1, 2, 4), (2, 4, 16), (3, 7, 256)])
def test_pair_children(cl, fl, per):
    pair = build_pair(cl, fl)
    assert pair.child_map.shape == (pair.coarse.n_elements, per)
    assert np.array_equal(np.sort(pair.child_map.ravel()), np.arange(pair.fine.n_elements))
    area_f = pair.fine.signed_areas()[pair.child_map].sum(axis=1)
    assert np.max(np.abs(area_f - pair.coarse.signed_areas())) <= 1e-14
    assert np.array_equal(pair.fine.nodes[pair.node_embed], pair.coarse.nodes)


def test_pair_rejects_equal_levels():
    with pytest.raises(ConfigurationError):
        build_pair(3, 3)
    with pytest.raises(ConfigurationError):
        build_pair(4, 2)


def test_children_inside_parent():
    pair = build_pair(2, 4)
    cen = pair.fine.nodes[pair.fine.elements].mean(axis=1)
    verts = pair.coarse.nodes[pair.coarse.elements[pair.parent]]
    for a, b in [(0, 1), (1, 2), (2, 0)]:
        e = verts[:, b] - verts[:, a]
        r = cen - verts[:, a]
        assert np.all(e[:, 0] * r[:, 1] - e[:, 1] * r[:, 0] > 0)


def test_prolongation_reproduces_linears():
    pair = build_pair(2, 5)
    P = pair.prolongation
    for f in (lambda x, y: np.ones_like(x), lambda x, y: x, lambda x, y: 2 * x - 3 * y):
        fc = f(*pair.coarse.nodes.T)
        assert np.allclose(P @ fc, f(*pair.fine.nodes.T), atol=1e-14)


def _brute_patch(mesh, element, k):
    selected = {element}
    for _ in range(k):
        verts = {int(v) for K in selected for v in mesh.elements[K]}
        selected = {K for K in range(mesh.n_elements) if verts & set(mesh.elements[K].tolist())}
    return sorted(selected)


def test_patch_k0():
    pair = build_pair(2, 4)
    for K in range(pair.coarse.n_elements):
        assert patch(pair, K, 0).coarse_elements.tolist() == [K]


def test_patch_k1_interior_level3():
    pair = build_pair(3, 4)
    m = pair.coarse
    cell = 3 * m.n + 3
    for K in (2 * cell, 2 * cell + 1):
        p = patch(pair, K, 1)
        assert p.coarse_elements.tolist() == _brute_patch(m, K, 1)
        assert p.coarse_elements.size == 13


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 127), st.integers(0, 4))
def test_patch_matches_brute_force(K, k):
    m = build_mesh(3)
    assert patch_elements(m, K, k).tolist() == _brute_patch(m, K, k)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 31), st.integers(0, 6))
def test_patch_monotone(K, k):
    pair = build_pair(2, 3)
    a, b = patch(pair, K, k), patch(pair, K, k + 1)
    assert set(a.coarse_elements) <= set(b.coarse_elements)
    assert set(a.fine_nodes) <= set(b.fine_nodes)
    assert not pair.fine.boundary_mask[b.fine_nodes].any()


@pytest.mark.parametrize("level", [1, 2, 3])
def test_patch_saturates(level):
    pair = build_pair(level, level + 1)
    for K in (0, pair.coarse.n_elements - 1):
        p = patch(pair, K, 2 * 2 ** level)
        assert p.coarse_elements.size == pair.coarse.n_elements
        assert np.array_equal(p.fine_nodes, pair.fine.interior_nodes)


def test_patch_fine_nodes_strictly_inside():
    pair = build_pair(2, 4)
    p = patch(pair, 10, 1)
    inside = np.zeros(pair.coarse.n_elements, bool)
    inside[p.coarse_elements] = True
    for node in p.fine_nodes:
        elems = pair.fine.node_elements[node].indices
        assert inside[pair.parent[elems]].all()


def test_patch_bad_args():
    pair = build_pair(1, 2)
    with pytest.raises(ConfigurationError):
        patch(pair, 8, 1)
    with pytest.raises(ConfigurationError):
        patch(pair, 0, -1)
