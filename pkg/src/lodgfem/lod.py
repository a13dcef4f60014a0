"""Localized element correctors, the multiscale basis, and the Ritz projection onto it.

For a coarse element ``K`` and one of its vertices ``x`` the element corrector
solves, on the patch of size ``k`` around ``K``,

    find w in V_f(patch):  a_patch(w, v) = a_K(phi_x, v)   for all v in V_f(patch)

where ``V_f`` is the kernel of the Clement operator. The constraint is imposed with
Lagrange multipliers on the Clement rows. The basis function at ``x`` is
``phi_x - sum_K w_{K,x}``.
"""

import hashlib
import logging
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import interior_prolongation
from .errors import LodError, SaddlePointError
from .linalg import CORRECTOR_TOL, as_csr, energy_norm, saddle_solve
from .mesh import patch

log = logging.getLogger(__name__)

CACHE_MAGIC = b"LODCORR\x00"
CACHE_VERSION = 1


@dataclass(eq=False)
class CorrectorSet:
    """Element correctors keyed by ``(coarse element, local vertex)``.

    Each entry is ``(fine_nodes, values)`` with global fine node indices. Vertices
    on the boundary have no entry: their hats never enter the basis.
    """

    k: int
    coarse_level: int
    fine_level: int
    entries: dict = field(default_factory=dict)
    patch_nodes: dict = field(default_factory=dict, repr=False)
    key: str = ""

    def vector(self, element, vertex, n_fine_nodes):
        out = np.zeros(n_fine_nodes)
        if (element, vertex) in self.entries:
            nodes, vals = self.entries[(element, vertex)]
            out[nodes] = vals
        return out


@dataclass(frozen=True, eq=False)
class MultiscaleSpace:
    """Basis columns ``phi_x - phi_{k,x}`` over interior fine nodes, one per interior coarse node."""

    k: object
    basis: sp.csr_matrix
    correctors: sp.csr_matrix
    ms_stiffness: sp.csr_matrix
    ms_mass: sp.csr_matrix
    coarse_nodes: np.ndarray

    @property
    def dim(self):
        return self.basis.shape[1]

    def lift(self, c):
        return self.basis @ c


def _element_barycentric(pair, element):
    """Barycentric coordinates of the children's vertices w.r.t. the coarse element."""
    coarse, fine = pair.coarse, pair.fine
    verts = coarse.nodes[coarse.elements[element]]
    children = pair.child_map[element]
    pts = fine.nodes[fine.elements[children]]  # (c, 3, 2)
    v0 = verts[0]
    d1, d2 = verts[1] - v0, verts[2] - v0
    det = d1[0] * d2[1] - d1[1] * d2[0]
    r = pts - v0
    l1 = (r[..., 0] * d2[1] - r[..., 1] * d2[0]) / det
    l2 = (d1[0] * r[..., 1] - d1[1] * r[..., 0]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)  # (c, 3 child vertices, 3 coarse vertices)


def element_rhs(pair, fem, element, vertex):
    """``a_K(phi_x, phi_i)`` for all fine nodes ``i`` (full node numbering)."""
    children = pair.child_map[element]
    lam = _element_barycentric(pair, element)[:, :, vertex]
    local = np.einsum("cij,cj->ci", fem.local_stiffness[children], lam)
    out = np.zeros(pair.fine.n_nodes)
    np.add.at(out, pair.fine.elements[children].ravel(), local.ravel())
    return out


def correctors_key(pair, fem, k):
    h = hashlib.sha256()
    h.update(f"{pair.coarse.level},{pair.fine.level},{k}".encode())
    h.update(np.ascontiguousarray(fem.element_coeff).tobytes())
    return h.hexdigest()


_CACHE = {}


def clear_cache():
    _CACHE.clear()


def compute_correctors(pair, fem, clement, k, elements=None, tol=CORRECTOR_TOL, use_cache=True):
    """Solve the element corrector problems on patches of size ``k``.

    Elements whose patches cover the same fine nodes share one saddle-point
    solve with several right-hand sides.
    """
    if k < 0:
        raise LodError(f"patch size must be nonnegative, got {k}")
    key = correctors_key(pair, fem, k)
    full = elements is None
    if full and use_cache and key in _CACHE:
        return _CACHE[key]

    coarse = pair.coarse
    coarse_interior = ~coarse.boundary_mask
    if full:
        elements = range(coarse.n_elements)
    cs = CorrectorSet(k, coarse.level, pair.fine.level, key=key)

    groups = {}
    for K in elements:
        K = int(K)
        verts = [a for a in range(3) if coarse_interior[coarse.elements[K, a]]]
        if not verts:
            continue
        p = patch(pair, K, k)
        cs.patch_nodes[K] = p.fine_nodes
        gkey = hashlib.sha1(p.fine_nodes.tobytes()).hexdigest()
        groups.setdefault(gkey, (p.fine_nodes, []))[1].extend((K, a) for a in verts)

    K_full = fem.full_stiffness
    C_full = clement.matrix_full
    for nodes, jobs in groups.values():
        A = as_csr(K_full[nodes][:, nodes])
        C = C_full[:, nodes]
        rhs = np.column_stack([element_rhs(pair, fem, K, a)[nodes] for K, a in jobs])
        label = f"K={jobs[0][0]},k={k}" if len(jobs) <= 3 else f"k={k} ({len(jobs)} jobs)"
        try:
            W = saddle_solve(A, C, rhs, tol=tol, label=label)
        except SaddlePointError:
            raise
        except LodError as exc:
            raise SaddlePointError(f"corrector solve failed on patch {label}: {exc}") from exc
        for j, job in enumerate(jobs):
            cs.entries[job] = (nodes, W[:, j])

    if full and use_cache:
        _CACHE[key] = cs
    return cs


def _corrector_matrix(cs, pair):
    """Summed correctors ``phi_{k,x}`` as a sparse (fine interior x coarse interior) matrix.

    Contributions are accumulated in ascending element order for each node.
    """
    coarse, fine = pair.coarse, pair.fine
    fine_pos = np.full(fine.n_nodes, -1, dtype=np.int64)
    fine_pos[fine.interior_nodes] = np.arange(fine.interior_nodes.size)
    coarse_pos = np.full(coarse.n_nodes, -1, dtype=np.int64)
    coarse_pos[coarse.interior_nodes] = np.arange(coarse.interior_nodes.size)

    by_node = {}
    for (K, a) in sorted(cs.entries):
        x = int(coarse.elements[K, a])
        by_node.setdefault(x, []).append(cs.entries[(K, a)])

    acc = np.zeros(fine.interior_nodes.size)
    rows, cols, vals = [], [], []
    for x in sorted(by_node):
        acc[:] = 0.0
        for nodes, w in by_node[x]:
            np.add.at(acc, fine_pos[nodes], w)
        nz = np.flatnonzero(acc)
        rows.append(nz)
        cols.append(np.full(nz.size, coarse_pos[x]))
        vals.append(acc[nz].copy())
    n_c = coarse.interior_nodes.size
    if rows:
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    return as_csr(sp.coo_matrix((vals, (rows, cols)), shape=(fine.interior_nodes.size, n_c)))


def _space_from_correctors(pair, fem, Phi, k):
    E = interior_prolongation(pair)
    B = as_csr(E - Phi)
    KB = fem.stiffness @ B
    MB = fem.mass @ B
    S = as_csr(B.T @ KB)
    M = as_csr(B.T @ MB)
    return MultiscaleSpace(k, B, Phi, as_csr(0.5 * (S + S.T)), as_csr(0.5 * (M + M.T)),
                           pair.coarse.interior_nodes)


def build_space(cs, pair, fem):
    return _space_from_correctors(pair, fem, _corrector_matrix(cs, pair), cs.k)


def global_correctors(pair, fem, clement, tol=CORRECTOR_TOL):
    """Unlocalized correctors ``phi_x`` for every interior coarse node, one sparse column each."""
    E = interior_prolongation(pair)
    rhs = (fem.stiffness @ E).toarray()
    W = saddle_solve(fem.stiffness, clement.matrix, rhs, tol=tol, label="global")
    W[np.abs(W) < 1e-300] = 0.0
    return as_csr(sp.csr_matrix(W))


def build_global_space(pair, fem, clement, tol=CORRECTOR_TOL):
    """Multiscale space with global correctors (the saturated-patch limit)."""
    return _space_from_correctors(pair, fem, global_correctors(pair, fem, clement, tol), None)


def node_corrector(pair, fem, clement, node, k, tol=CORRECTOR_TOL):
    """Localized corrector ``phi_{k,x}`` of one interior coarse node, on interior fine nodes."""
    elements = np.flatnonzero((pair.coarse.elements == node).any(axis=1))
    cs = compute_correctors(pair, fem, clement, k, elements=elements, tol=tol, use_cache=False)
    out = np.zeros(pair.fine.n_nodes)
    for K in elements:
        a = int(np.flatnonzero(pair.coarse.elements[K] == node)[0])
        nodes, w = cs.entries[(int(K), a)]
        out[nodes] += w
    return out[pair.fine.interior_nodes]


def corrector_decay(pair, fem, clement, node, ks, tol=CORRECTOR_TOL):
    """Energy error of the localized corrector of ``node`` against the global one, per k."""
    E = interior_prolongation(pair)
    pos = int(np.searchsorted(pair.coarse.interior_nodes, node))
    if pos >= pair.coarse.interior_nodes.size or pair.coarse.interior_nodes[pos] != node:
        raise LodError(f"coarse node {node} is not interior")
    rhs = fem.stiffness @ E[:, pos].toarray().ravel()
    phi = saddle_solve(fem.stiffness, clement.matrix, rhs, tol=tol, label=f"global node {node}")
    errors = []
    for k in ks:
        phi_k = node_corrector(pair, fem, clement, node, k, tol=tol)
        errors.append(energy_norm(fem.stiffness, phi - phi_k))
    return errors


def _spd_solve(A, b):
    return sla.cho_solve(sla.cho_factor(A.toarray()), b)


def ms_ritz_project(space, fem, v):
    """Fine representation of the a-orthogonal projection of ``v`` onto the multiscale space."""
    B = space.basis
    c = _spd_solve(space.ms_stiffness, B.T @ (fem.stiffness @ v))
    return B @ c


# binary cache -----------------------------------------------------------------

def save_correctors(cs, path):
    """Write ``cs`` atomically to ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(CACHE_MAGIC)
            fh.write(struct.pack("<I", CACHE_VERSION))
            fh.write(cs.key.encode("ascii").ljust(64, b"\0"))
            fh.write(struct.pack("<IIIQ", cs.coarse_level, cs.fine_level, cs.k, len(cs.entries)))
            for (K, a) in sorted(cs.entries):
                nodes, vals = cs.entries[(K, a)]
                fh.write(struct.pack("<qiq", K, a, nodes.size))
                fh.write(np.ascontiguousarray(nodes, dtype="<i8").tobytes())
                fh.write(np.ascontiguousarray(vals, dtype="<f8").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_correctors(path, expected_key=None):
    """Read a corrector file. Returns None when ``expected_key`` does not match."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != CACHE_MAGIC:
        raise LodError(f"{path}: not a corrector cache file")
    (version,) = struct.unpack_from("<I", data, 8)
    if version != CACHE_VERSION:
        raise LodError(f"{path}: unsupported cache version {version}")
    key = data[12:76].rstrip(b"\0").decode("ascii")
    if expected_key is not None and key != expected_key:
        return None
    lc, lf, k, count = struct.unpack_from("<IIIQ", data, 76)
    off = 76 + struct.calcsize("<IIIQ")
    cs = CorrectorSet(k, lc, lf, key=key)
    head = struct.calcsize("<qiq")
    for _ in range(count):
        K, a, nnz = struct.unpack_from("<qiq", data, off)
        off += head
        nodes = np.frombuffer(data, dtype="<i8", count=nnz, offset=off).astype(np.int64)
        off += 8 * nnz
        vals = np.frombuffer(data, dtype="<f8", count=nnz, offset=off).astype(np.float64)
        off += 8 * nnz
        cs.entries[(K, a)] = (nodes, vals)
        cs.patch_nodes[K] = nodes
    return cs


def cached_correctors(pair, fem, clement, k, cache_dir=None, tol=CORRECTOR_TOL):
    """``compute_correctors`` backed by an optional on-disk cache directory."""
    if cache_dir is None:
        return compute_correctors(pair, fem, clement, k, tol=tol)
    key = correctors_key(pair, fem, k)
    path = os.path.join(cache_dir, f"correctors-{key[:24]}.bin")
    if os.path.exists(path):
        cs = load_correctors(path, expected_key=key)
        if cs is not None:
            log.debug("loaded correctors from %s", path)
            return cs
    cs = compute_correctors(pair, fem, clement, k, tol=tol)
    os.makedirs(cache_dir, exist_ok=True)
    save_correctors(cs, path)
    return cs
