import numpy as np
import pytest
import scipy.linalg as sla

from lodgfem.assembly import coarse_galerkin_operators, interior_prolongation
from lodgfem.errors import LodError
from lodgfem.linalg import energy_norm
from lodgfem.lod import (_corrector_matrix, build_global_space, build_space, cached_correctors,
                         clear_cache, compute_correctors, corrector_decay, correctors_key,
                         element_rhs, load_correctors, ms_ritz_project, node_corrector,
                         save_correctors)
from lodgfem.mesh import patch


def _dense_element_corrector(pair, fem, cl, K, a, nodes):
    """Constrained minimizer on ``nodes`` via an explicit null-space basis."""
    A = fem.full_stiffness[nodes][:, nodes].toarray()
    C = cl.matrix_full[:, nodes].toarray()
    C = C[np.abs(C).sum(axis=1) > 0]
    b = element_rhs(pair, fem, K, a)[nodes]
    N = sla.null_space(C)
    return N @ np.linalg.solve(N.T @ A @ N, N.T @ b)


@pytest.fixture(scope="module", params=["unit", "rough"])
def setup24(request, pair24_unit, pair24_rough):
    return pair24_unit if request.param == "unit" else pair24_rough


def test_saturated_equals_global_per_element(setup24):
    pair, fem, cl = setup24
    cs = compute_correctors(pair, fem, cl, 8, use_cache=False)
    interior = pair.fine.interior_nodes
    for (K, a), (nodes, w) in cs.entries.items():
        assert np.array_equal(nodes, interior)
        ref = _dense_element_corrector(pair, fem, cl, K, a, interior)
        scale = max(1.0, energy_norm(fem.stiffness, ref))
        assert energy_norm(fem.stiffness, w - ref) <= 1e-8 * scale


def test_saturated_space_equals_global_space(setup24):
    pair, fem, cl = setup24
    loc = build_space(compute_correctors(pair, fem, cl, 8, use_cache=False), pair, fem)
    glob = build_global_space(pair, fem, cl)
    for j in range(loc.dim):
        d = (loc.correctors[:, j] - glob.correctors[:, j]).toarray().ravel()
        assert energy_norm(fem.stiffness, d) <= 1e-8


def test_corrector_energy_matches_dense_oracle(pair24_unit):
    pair, fem, cl = pair24_unit
    for x in pair.coarse.interior_nodes[[0, 4]]:
        phi = node_corrector(pair, fem, cl, x, 1)
        ref = np.zeros(pair.fine.n_nodes)
        for K in np.flatnonzero((pair.coarse.elements == x).any(axis=1)):
            a = int(np.flatnonzero(pair.coarse.elements[K] == x)[0])
            nodes = patch(pair, K, 1).fine_nodes
            ref[nodes] += _dense_element_corrector(pair, fem, cl, K, a, nodes)
        ref = ref[pair.fine.interior_nodes]
        assert abs(energy_norm(fem.stiffness, phi) - energy_norm(fem.stiffness, ref)) <= 1e-8
        assert energy_norm(fem.stiffness, phi - ref) <= 1e-8


@pytest.mark.parametrize("k", [0, 1, 2])
def test_correctors_in_fine_space_and_patch(setup24, k):
    pair, fem, cl = setup24
    cs = compute_correctors(pair, fem, cl, k, use_cache=False)
    for (K, a), (nodes, w) in cs.entries.items():
        full = np.zeros(pair.fine.n_nodes)
        full[nodes] = w
        assert np.max(np.abs(cl.matrix_full @ full)) <= 1e-9
        assert np.array_equal(nodes, patch(pair, K, k).fine_nodes)


def test_boundary_vertices_skipped(pair24_unit):
    pair, fem, cl = pair24_unit
    cs = compute_correctors(pair, fem, cl, 1, use_cache=False)
    for (K, a) in cs.entries:
        assert not pair.coarse.boundary_mask[pair.coarse.elements[K, a]]
    n_expected = sum(int((~pair.coarse.boundary_mask[e]).sum()) for e in pair.coarse.elements)
    assert len(cs.entries) == n_expected


def test_element_rhs_local(pair24_unit):
    pair, fem, cl = pair24_unit
    K = 9
    rhs = element_rhs(pair, fem, K, 1)
    own = np.unique(pair.fine.elements[pair.child_map[K]])
    outside = np.setdiff1d(np.arange(pair.fine.n_nodes), own)
    assert not rhs[outside].any()
    # rhs of phi_x on K equals the K-part of the fine stiffness applied to the coarse hat
    hat = pair.prolongation[:, pair.coarse.elements[K, 1]].toarray().ravel()
    assert np.allclose(rhs.sum(), 0.0, atol=1e-13)
    assert rhs @ hat > 0


def test_global_corrector_of_far_element_is_zero(pair24_unit):
    pair, fem, cl = pair24_unit
    x = pair.coarse.interior_nodes[0]
    K = int(np.flatnonzero(~(pair.coarse.elements == x).any(axis=1))[0])
    # phi_x vanishes on K, so the element right-hand side is zero
    lam = pair.prolongation[pair.fine.elements[pair.child_map[K]].ravel(), x].toarray()
    assert not lam.any()


@pytest.mark.parametrize("k", [1, 2, None])
def test_space_properties(pair24_rough, k):
    pair, fem, cl = pair24_rough
    space = (build_global_space(pair, fem, cl) if k is None
             else build_space(compute_correctors(pair, fem, cl, k, use_cache=False), pair, fem))
    assert space.dim == (2 ** pair.coarse.level - 1) ** 2
    for A in (space.ms_stiffness, space.ms_mass):
        D = A.toarray()
        assert np.array_equal(D, D.T)
        assert np.linalg.eigvalsh(D)[0] > 0


def test_global_space_orthogonal_to_fine_space(setup24, rng):
    pair, fem, cl = setup24
    space = build_global_space(pair, fem, cl)
    C = cl.matrix.toarray()
    W = rng.standard_normal((C.shape[1], 10))
    W -= C.T @ np.linalg.solve(C @ C.T, C @ W)
    a = space.basis.T @ (fem.stiffness @ W)
    scale = np.sqrt(np.outer(space.ms_stiffness.diagonal(), np.einsum("ij,ij->j", W, fem.stiffness @ W)))
    assert np.max(np.abs(a) / scale) <= 1e-8


@pytest.mark.parametrize("k", [1, 2, 3])
def test_condition_number_comparable_to_p1(pair24_unit, k):
    pair, fem, cl = pair24_unit
    space = build_space(compute_correctors(pair, fem, cl, k, use_cache=False), pair, fem)
    KH, _, _ = coarse_galerkin_operators(pair, fem)
    c_ms = np.linalg.cond(space.ms_stiffness.toarray())
    c_p1 = np.linalg.cond(KH.toarray())
    assert c_p1 / 10 <= c_ms <= 10 * c_p1


def test_ritz_projection(pair24_rough, rng):
    pair, fem, cl = pair24_rough
    space = build_space(compute_correctors(pair, fem, cl, 2, use_cache=False), pair, fem)
    c = rng.standard_normal(space.dim)
    v = space.lift(c)
    assert np.max(np.abs(ms_ritz_project(space, fem, v) - v)) <= 1e-9 * np.max(np.abs(v))
    n = pair.fine.interior_nodes.size
    assert not ms_ritz_project(space, fem, np.zeros(n)).any()
    for _ in range(3):
        v = rng.standard_normal(n)
        r = ms_ritz_project(space, fem, v)
        Av = fem.stiffness @ v
        assert np.max(np.abs(space.basis.T @ (fem.stiffness @ (v - r)))) <= 1e-8 * np.max(np.abs(Av))


def test_decay_monotone_small(pair24_rough):
    pair, fem, cl = pair24_rough
    x = pair.coarse.interior_nodes[4]
    errs = corrector_decay(pair, fem, cl, x, [0, 1, 2, 3, 8])
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] <= 1e-8


def test_decay_rejects_boundary_node(pair24_unit):
    pair, fem, cl = pair24_unit
    with pytest.raises(LodError):
        corrector_decay(pair, fem, cl, 0, [1])


def test_negative_k(pair24_unit):
    pair, fem, cl = pair24_unit
    with pytest.raises(LodError):
        compute_correctors(pair, fem, cl, -1)


def test_summation_order_is_deterministic(pair24_rough):
    pair, fem, cl = pair24_rough
    a = compute_correctors(pair, fem, cl, 1, use_cache=False)
    b = compute_correctors(pair, fem, cl, 1, elements=range(pair.coarse.n_elements - 1, -1, -1),
                           use_cache=False)
    Pa, Pb = _corrector_matrix(a, pair), _corrector_matrix(b, pair)
    assert Pa.data.tobytes() == Pb.data.tobytes()
    assert np.array_equal(Pa.indices, Pb.indices)


def test_memory_cache(pair24_unit):
    pair, fem, cl = pair24_unit
    clear_cache()
    a = compute_correctors(pair, fem, cl, 1)
    assert compute_correctors(pair, fem, cl, 1) is a
    clear_cache()
    assert compute_correctors(pair, fem, cl, 1) is not a


def test_key_depends_on_inputs(pair24_unit, pair24_rough):
    pu, fu, _ = pair24_unit
    pr, fr, _ = pair24_rough
    keys = {correctors_key(pu, fu, 1), correctors_key(pu, fu, 2), correctors_key(pr, fr, 1)}
    assert len(keys) == 3


def test_binary_cache_round_trip(pair24_rough, tmp_path):
    pair, fem, cl = pair24_rough
    cs = compute_correctors(pair, fem, cl, 1, use_cache=False)
    path = tmp_path / "c.bin"
    save_correctors(cs, path)
    back = load_correctors(path, expected_key=cs.key)
    assert (back.k, back.coarse_level, back.fine_level) == (1, 2, 4)
    assert back.entries.keys() == cs.entries.keys()
    for key, (nodes, w) in cs.entries.items():
        assert np.array_equal(back.entries[key][0], nodes)
        assert back.entries[key][1].tobytes() == w.tobytes()
    assert load_correctors(path, expected_key="0" * 64) is None
    s1 = build_space(cs, pair, fem)
    s2 = build_space(back, pair, fem)
    assert s1.basis.data.tobytes() == s2.basis.data.tobytes()


def test_binary_cache_rejects_garbage(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"NOTACACHE" + bytes(100))
    with pytest.raises(LodError):
        load_correctors(p)


def test_cached_correctors_directory(pair24_unit, tmp_path):
    pair, fem, cl = pair24_unit
    clear_cache()
    d = tmp_path / "cache"
    a = cached_correctors(pair, fem, cl, 1, cache_dir=str(d))
    files = list(d.iterdir())
    assert len(files) == 1 and files[0].name.startswith("correctors-")
    b = cached_correctors(pair, fem, cl, 1, cache_dir=str(d))
    assert b is not a and b.entries.keys() == a.entries.keys()


def test_basis_is_coarse_hat_minus_corrector(pair24_unit):
    pair, fem, cl = pair24_unit
    space = build_space(compute_correctors(pair, fem, cl, 1, use_cache=False), pair, fem)
    E = interior_prolongation(pair)
    assert abs(space.basis - (E - space.correctors)).max() == 0.0
