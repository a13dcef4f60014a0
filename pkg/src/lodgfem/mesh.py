"""Uniform triangulations of the unit square, coarse/fine pairs and element patches.

Every Cartesian cell of width ``2**-level`` is split along the diagonal from its
lower-left to its upper-right corner. Nodes are numbered row by row starting at
the origin, ``node = j * (n + 1) + i`` for ``x = i h, y = j h``. Cell ``(i, j)``
carries elements ``2 * (j * n + i)`` (lower-right triangle) and ``2 * (j * n + i) + 1``
(upper-left triangle), both counter-clockwise.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError

MAX_LEVEL = 10


@dataclass(frozen=True, eq=False)
class TriMesh:
    level: int
    nodes: np.ndarray
    elements: np.ndarray
    interior_nodes: np.ndarray
    boundary_mask: np.ndarray = field(repr=False)

    @property
    def n(self):
        """Cells per side."""
        return 2 ** self.level

    @property
    def h(self):
        """Cartesian spacing."""
        return 2.0 ** -self.level

    @property
    def element_diam(self):
        return np.sqrt(2.0) * self.h

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    def node_index(self, i, j):
        return j * (self.n + 1) + i

    def signed_areas(self):
        p = self.nodes[self.elements]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def shape_regularity(self):
        """Per-element ratio of inscribed-circle diameter to element diameter."""
        p = self.nodes[self.elements]
        edges = np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2)
        area = np.abs(self.signed_areas())
        inradius = 2.0 * area / edges.sum(axis=1)
        return 2.0 * inradius / edges.max(axis=1)

    @cached_property
    def node_elements(self):
        """Sparse incidence (nodes x elements)."""
        rows = self.elements.ravel()
        cols = np.repeat(np.arange(self.n_elements), 3)
        data = np.ones(rows.size, dtype=np.int8)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n_nodes, self.n_elements))


def build_mesh(level):
    if not isinstance(level, (int, np.integer)) or not 1 <= level <= MAX_LEVEL:
        raise ConfigurationError(f"mesh level must be an integer in [1, {MAX_LEVEL}], got {level!r}")
    level = int(level)
    n = 2 ** level
    h = 2.0 ** -level
    jj, ii = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    nodes = np.column_stack([ii.ravel() * h, jj.ravel() * h])

    cj, ci = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    a = (cj * (n + 1) + ci).ravel()
    b = a + 1
    c = a + n + 2
    d = a + n + 1
    elements = np.empty((2 * n * n, 3), dtype=np.int64)
    elements[0::2] = np.column_stack([a, b, c])
    elements[1::2] = np.column_stack([a, c, d])

    ix, jy = ii.ravel(), jj.ravel()
    boundary = (ix == 0) | (ix == n) | (jy == 0) | (jy == n)
    interior = np.flatnonzero(~boundary)
    return TriMesh(level, nodes, elements, interior, boundary)


@dataclass(frozen=True, eq=False)
class MeshPair:
    coarse: TriMesh
    fine: TriMesh
    child_map: np.ndarray
    parent: np.ndarray
    node_embed: np.ndarray

    @property
    def ratio(self):
        """Fine cells per coarse cell along one axis."""
        return 2 ** (self.fine.level - self.coarse.level)

    @cached_property
    def prolongation(self):
        """P1 interpolation of coarse hats on fine nodes, shape (fine nodes, coarse nodes)."""
        fine, coarse = self.fine, self.coarse
        _, first = np.unique(fine.elements.ravel(), return_index=True)
        elem = self.parent[first // 3]
        verts = coarse.nodes[coarse.elements[elem]]
        p = fine.nodes
        v0 = verts[:, 0]
        d1 = verts[:, 1] - v0
        d2 = verts[:, 2] - v0
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        r = p - v0
        l1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
        l2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
        lam = np.column_stack([1.0 - l1 - l2, l1, l2])
        rows = np.repeat(np.arange(fine.n_nodes), 3)
        cols = coarse.elements[elem].ravel()
        vals = lam.ravel()
        keep = np.abs(vals) > 1e-14
        return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])),
                             shape=(fine.n_nodes, coarse.n_nodes))


def build_pair(coarse_level, fine_level):
    if coarse_level >= fine_level:
        raise ConfigurationError(
            f"coarse level ({coarse_level}) must be below fine level ({fine_level})")
    coarse = build_mesh(coarse_level)
    fine = build_mesh(fine_level)
    H = coarse.h
    centroids = fine.nodes[fine.elements].mean(axis=1)
    ci = np.floor(centroids[:, 0] / H).astype(np.int64)
    cj = np.floor(centroids[:, 1] / H).astype(np.int64)
    u = centroids[:, 0] / H - ci
    v = centroids[:, 1] / H - cj
    parent = 2 * (cj * coarse.n + ci) + (u < v)
    per = 4 ** (fine_level - coarse_level)
    child_map = np.argsort(parent, kind="stable").reshape(coarse.n_elements, per)
    if not np.all(parent[child_map] == np.arange(coarse.n_elements)[:, None]):
        raise ConfigurationError("fine mesh is not a refinement of the coarse mesh")
    r = 2 ** (fine_level - coarse_level)
    cjj, cii = np.divmod(np.arange(coarse.n_nodes), coarse.n + 1)
    node_embed = fine.node_index(cii * r, cjj * r)
    if not np.allclose(fine.nodes[node_embed], coarse.nodes, atol=0.0, rtol=0.0):
        raise ConfigurationError("coarse nodes do not coincide with fine nodes")
    return MeshPair(coarse, fine, child_map, parent, node_embed)


@dataclass(frozen=True, eq=False)
class Patch:
    center_element: int
    k: int
    coarse_elements: np.ndarray
    fine_nodes: np.ndarray


def patch_elements(mesh, element, k):
    """k rounds of vertex-adjacency closure starting from ``element``."""
    inc = mesh.node_elements
    selected = np.zeros(mesh.n_elements, dtype=bool)
    selected[element] = True
    for _ in range(k):
        touched = np.zeros(mesh.n_nodes, dtype=bool)
        touched[mesh.elements[selected].ravel()] = True
        grown = (inc.T @ touched.astype(np.int8)) > 0
        if grown.sum() == selected.sum():
            break
        selected = grown
    return np.flatnonzero(selected)


def patch(mesh_pair, element, k):
    coarse, fine = mesh_pair.coarse, mesh_pair.fine
    if not 0 <= element < coarse.n_elements:
        raise ConfigurationError(f"coarse element {element} out of range")
    if k < 0:
        raise ConfigurationError(f"patch size must be nonnegative, got {k}")
    elems = patch_elements(coarse, element, k)
    in_patch = np.zeros(coarse.n_elements, dtype=bool)
    in_patch[elems] = True
    outside_fine = ~in_patch[mesh_pair.parent]
    blocked = np.zeros(fine.n_nodes, dtype=bool)
    blocked[fine.elements[outside_fine].ravel()] = True
    nodes = np.flatnonzero(~blocked & ~fine.boundary_mask)
    return Patch(int(element), int(k), elems, nodes)
