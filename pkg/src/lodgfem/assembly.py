"""P1 stiffness and mass assembly, the weighted Clement operator, and load vectors."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .coeff import element_values
from .linalg import JacobiCG, as_csr


@dataclass(frozen=True, eq=False)
class FemOperators:
    mesh: object
    element_coeff: np.ndarray
    local_stiffness: np.ndarray
    local_mass: np.ndarray
    full_stiffness: sp.csr_matrix
    full_mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix

    @property
    def interior(self):
        return self.mesh.interior_nodes

    def extend(self, v_interior):
        """Zero-extend an interior vector to all nodes."""
        out = np.zeros(self.mesh.n_nodes)
        out[self.interior] = v_interior
        return out

    def restrict(self, v_full):
        return np.asarray(v_full)[self.interior]


def _scatter(mesh, local):
    el = mesh.elements
    rows = np.repeat(el, 3, axis=1).ravel()
    cols = np.tile(el, (1, 3)).ravel()
    return as_csr(sp.coo_matrix((local.ravel(), (rows, cols)),
                                shape=(mesh.n_nodes, mesh.n_nodes)))


def assemble(mesh, field):
    coeff = np.ascontiguousarray(element_values(field, mesh), dtype=np.float64)
    nodes = np.ascontiguousarray(mesh.nodes, dtype=np.float64)
    elements = np.ascontiguousarray(mesh.elements, dtype=np.int64)
    kloc, mloc = _kernels.p1_local_matrices(nodes, elements, coeff)
    kloc, mloc = np.asarray(kloc), np.asarray(mloc)
    K = _scatter(mesh, kloc)
    M = _scatter(mesh, mloc)
    inner = mesh.interior_nodes
    return FemOperators(
        mesh=mesh,
        element_coeff=coeff,
        local_stiffness=kloc,
        local_mass=mloc,
        full_stiffness=K,
        full_mass=M,
        stiffness=as_csr(K[inner][:, inner]),
        mass=as_csr(M[inner][:, inner]),
    )


def interpolate(mesh, func):
    """Nodal values of ``func(x, y)`` at every node."""
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    return np.broadcast_to(np.asarray(func(x, y), dtype=np.float64), x.shape).copy()


def load_vector(fem, f, t=None):
    """Interior load ``(f, phi_i)`` by the mass-times-interpolant rule.

    ``f`` is either a nodal vector over all nodes or a callable ``f(x, y, t)``.
    """
    if callable(f):
        f = interpolate(fem.mesh, lambda x, y: f(x, y, t))
    f = np.asarray(f, dtype=np.float64)
    return (fem.full_mass @ f)[fem.interior]


def interior_prolongation(pair):
    """Prolongation restricted to interior fine nodes x interior coarse nodes."""
    E = pair.prolongation
    return as_csr(E[pair.fine.interior_nodes][:, pair.coarse.interior_nodes])


@dataclass(frozen=True, eq=False)
class ClementMatrix:
    matrix: sp.csr_matrix
    matrix_full: sp.csr_matrix
    weights: np.ndarray
    coarse_nodes: np.ndarray

    def __call__(self, v_interior):
        return self.matrix @ v_interior


def clement(pair, fem):
    """Rows ``(phi_i, phi_x) / (1, phi_x)`` for interior coarse nodes ``x``.

    The products of fine hats with coarse hats are integrated exactly through the
    fine mass matrix, since every coarse hat lies in the fine space.
    """
    cnodes = pair.coarse.interior_nodes
    E = pair.prolongation[:, cnodes]
    Q = as_csr((fem.full_mass @ E).T)
    weights = np.asarray(Q.sum(axis=1)).ravel()
    full = as_csr(sp.diags(1.0 / weights) @ Q)
    return ClementMatrix(
        matrix=as_csr(full[:, pair.fine.interior_nodes]),
        matrix_full=full,
        weights=weights,
        coarse_nodes=cnodes,
    )


def coarse_galerkin_operators(pair, fem_fine):
    """Coarse P1 stiffness and mass obtained from fine operators, ``E^T K_h E`` and ``E^T M_h E``."""
    E = interior_prolongation(pair)
    return as_csr(E.T @ fem_fine.stiffness @ E), as_csr(E.T @ fem_fine.mass @ E), E


def l2_project_coarse(pair, fem_fine, fem_coarse, tol=1e-13):
    """Return ``v -> c`` with ``M_H c = E^T M_h v`` (L2 projection onto interior coarse P1)."""
    E = interior_prolongation(pair)
    mixed = as_csr(E.T @ fem_fine.mass)
    solver = JacobiCG(fem_coarse.mass, tol)

    def project(v):
        return solver.solve(mixed @ np.asarray(v, dtype=np.float64))[0]

    return project
