"""Sparse storage helpers and the solvers used throughout.

Matrices are ``scipy.sparse.csr_matrix`` in canonical form (sorted, duplicate
free). The Krylov solver is a Jacobi-preconditioned conjugate gradient method
whose inner loop runs in the selected kernel backend.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .errors import ConvergenceError, DomainError, SaddlePointError

DENSE_KKT_LIMIT = 2000
CORRECTOR_TOL = 1e-10
STEP_TOL = 1e-9


def as_csr(A):
    """Canonical CSR with int32 indices, as required by the compiled kernels."""
    A = sp.csr_matrix(A, dtype=np.float64)
    A.sum_duplicates()
    A.sort_indices()
    if A.indices.dtype != np.int32:
        A.indices = A.indices.astype(np.int32)
        A.indptr = A.indptr.astype(np.int32)
    return A


def is_symmetric(A, tol=1e-12):
    """Entrywise check ``|a_ij - a_ji| <= tol * max(1, |a_ij|)``."""
    A = sp.csr_matrix(A)
    D = (A - A.T).tocoo()
    if D.nnz == 0:
        return True
    aij = np.asarray(A[D.row, D.col]).ravel()
    return bool(np.all(np.abs(D.data) <= tol * np.maximum(1.0, np.abs(aij))))


@dataclass
class SolveReport:
    iterations: int
    relative_residual: float
    converged: bool


class JacobiCG:
    """Jacobi-preconditioned CG bound to one SPD matrix, reusable across right-hand sides."""

    def __init__(self, A, tol=CORRECTOR_TOL, max_iter=None):
        self.A = as_csr(A)
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DomainError(f"CG needs a square matrix, got {self.A.shape}")
        diag = self.A.diagonal()
        if np.any(diag <= 0):
            raise DomainError("matrix has nonpositive diagonal entries; not SPD")
        self.inv_diag = np.ascontiguousarray(1.0 / diag)
        self.tol = tol
        self.max_iter = max_iter if max_iter is not None else max(10 * n, 100)

    def solve(self, b, x0=None):
        A = self.A
        b = np.ascontiguousarray(b, dtype=np.float64)
        if b.shape != (A.shape[0],):
            raise DomainError(f"right-hand side has shape {b.shape}, expected ({A.shape[0]},)")
        x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return np.zeros_like(b), SolveReport(0, 0.0, True)
        total = 0
        rel = np.inf
        # restarts guard against drift of the recursive residual
        for _ in range(8):
            its, _rec = _kernels.pcg_csr(A.indptr, A.indices, A.data, self.inv_diag,
                                         b, x, self.tol, self.max_iter - total)
            total += its
            rel = np.linalg.norm(b - A @ x) / bnorm
            if rel <= self.tol or total >= self.max_iter or its == 0:
                break
        report = SolveReport(total, float(rel), bool(rel <= self.tol))
        if not report.converged:
            raise ConvergenceError(
                f"CG stalled after {total} iterations at relative residual {rel:.3e} "
                f"(tol {self.tol:.1e})", report)
        return x, report


def cg_solve(A, b, tol=CORRECTOR_TOL, max_iter=None, x0=None):
    if not tol > 0:
        raise DomainError("tolerance must be positive")
    return JacobiCG(A, tol, max_iter).solve(b, x0)


def prune_zero_rows(C):
    C = sp.csr_matrix(C)
    C.eliminate_zeros()
    keep = np.flatnonzero(np.diff(C.indptr) > 0)
    return C[keep], keep


def saddle_solve(A, C, b, tol=CORRECTOR_TOL, label=None, dense_limit=DENSE_KKT_LIMIT,
                 inner="lu"):
    """Solve ``A w + C^T lam = b, C w = 0`` for one or several right-hand sides.

    ``b`` may be a vector or an (n, r) array. All-zero rows of ``C`` are dropped
    first. Small systems use a dense KKT factorization, large ones a Schur
    complement on the multipliers. The Schur inner solves use a sparse LU of
    ``A`` (``inner="lu"``) or Jacobi-CG (``inner="cg"``).
    """
    where = f" on patch {label}" if label is not None else ""
    A = as_csr(A)
    n = A.shape[0]
    b = np.asarray(b, dtype=np.float64)
    single = b.ndim == 1
    B = b[:, None] if single else b
    if B.shape[0] != n:
        raise DomainError(f"right-hand side has {B.shape[0]} rows, expected {n}")
    if C is None:
        C = sp.csr_matrix((0, n))
    C, _ = prune_zero_rows(C)
    m = C.shape[0]
    if m > n:
        raise SaddlePointError(f"{m} constraints exceed {n} unknowns{where}")

    if inner not in ("lu", "cg"):
        raise DomainError(f"inner solver must be 'lu' or 'cg', got {inner!r}")
    if m == 0:
        W = _inner_solver(A, tol, inner)(B)
    elif n + m <= dense_limit:
        Cd = C.toarray()
        if np.linalg.matrix_rank(Cd) < m:
            raise SaddlePointError(f"constraint matrix is rank deficient{where}")
        K = np.zeros((n + m, n + m))
        K[:n, :n] = A.toarray()
        K[:n, n:] = Cd.T
        K[n:, :n] = Cd
        rhs = np.zeros((n + m, B.shape[1]))
        rhs[:n] = B
        try:
            W = sla.solve(K, rhs, assume_a="sym")[:n]
        except (sla.LinAlgError, ValueError) as exc:
            raise SaddlePointError(f"dense KKT solve failed{where}: {exc}") from exc
    else:
        solve = _inner_solver(A, tol, inner)
        Y = solve(C.toarray().T)
        S = C @ Y
        S = 0.5 * (S + S.T)
        eig = np.linalg.eigvalsh(S)
        if eig[0] <= 1e-13 * eig[-1]:
            raise SaddlePointError(f"constraint matrix is rank deficient{where}")
        Z = solve(B)
        W = Z - Y @ sla.cho_solve(sla.cho_factor(S), C @ Z)
    return W[:, 0] if single else W


def _inner_solver(A, tol, inner):
    """Returns ``R -> A^{-1} R`` for an (n, r) array."""
    if inner == "cg":
        solver = JacobiCG(A, tol)

        def solve(R):
            out = np.empty_like(R)
            for j in range(R.shape[1]):
                out[:, j] = solver.solve(R[:, j])[0]
            return out
        return solve
    lu = spla.splu(A.tocsc())
    return lambda R: lu.solve(np.ascontiguousarray(R))


def _check_dims(M, v):
    v = np.asarray(v, dtype=np.float64)
    if M.shape[0] != M.shape[1] or v.shape != (M.shape[0],):
        raise DomainError(f"vector of shape {v.shape} does not conform to matrix {M.shape}")
    return v


def l2_norm(M, v):
    v = _check_dims(M, v)
    return float(np.sqrt(max(v @ (M @ v), 0.0)))


def energy_norm(K, v):
    v = _check_dims(K, v)
    return float(np.sqrt(max(v @ (K @ v), 0.0)))
