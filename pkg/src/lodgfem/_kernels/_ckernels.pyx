# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: Jacobi-preconditioned CG on CSR storage and P1 element matrices."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


cdef inline void _csr_matvec(const int[::1] indptr, const int[::1] indices,
                             const double[::1] data, const double[::1] x,
                             double[::1] out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, jj
    cdef double s
    for i in range(n):
        s = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            s += data[jj] * x[indices[jj]]
        out[i] = s


cdef inline double _dot(const double[::1] a, const double[::1] b, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(n):
        s += a[i] * b[i]
    return s


def pcg_csr(const int[::1] indptr, const int[::1] indices, const double[::1] data,
            const double[::1] inv_diag, const double[::1] b, double[::1] x,
            double tol, Py_ssize_t max_iter):
    """Run PCG in place on ``x``. Returns ``(iterations, recursive_relative_residual)``."""
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t i, it = 0
    cdef double bnorm, rnorm, rz, rz_new, alpha, beta, pap
    r_arr = np.empty(n)
    z_arr = np.empty(n)
    p_arr = np.empty(n)
    q_arr = np.empty(n)
    cdef double[::1] r = r_arr
    cdef double[::1] z = z_arr
    cdef double[::1] p = p_arr
    cdef double[::1] q = q_arr

    with nogil:
        bnorm = sqrt(_dot(b, b, n))
        if bnorm == 0.0:
            for i in range(n):
                x[i] = 0.0
            rnorm = 0.0
            bnorm = 1.0
        else:
            _csr_matvec(indptr, indices, data, x, q, n)
            for i in range(n):
                r[i] = b[i] - q[i]
            rnorm = sqrt(_dot(r, r, n))
            for i in range(n):
                z[i] = inv_diag[i] * r[i]
                p[i] = z[i]
            rz = _dot(r, z, n)
            while rnorm > tol * bnorm and it < max_iter:
                it += 1
                _csr_matvec(indptr, indices, data, p, q, n)
                pap = _dot(p, q, n)
                if pap <= 0.0:
                    break
                alpha = rz / pap
                for i in range(n):
                    x[i] += alpha * p[i]
                    r[i] -= alpha * q[i]
                rnorm = sqrt(_dot(r, r, n))
                if rnorm <= tol * bnorm:
                    break
                for i in range(n):
                    z[i] = inv_diag[i] * r[i]
                rz_new = _dot(r, z, n)
                beta = rz_new / rz
                rz = rz_new
                for i in range(n):
                    p[i] = z[i] + beta * p[i]
    return it, rnorm / bnorm


def p1_local_matrices(const double[:, ::1] nodes, const cnp.int64_t[:, ::1] elements,
                      const double[::1] coeff):
    """Element stiffness ``coeff*area*G G^T`` and exact P1 mass for every triangle."""
    cdef Py_ssize_t ne = elements.shape[0]
    kloc_arr = np.empty((ne, 3, 3))
    mloc_arr = np.empty((ne, 3, 3))
    cdef double[:, :, ::1] kloc = kloc_arr
    cdef double[:, :, ::1] mloc = mloc_arr
    cdef Py_ssize_t e, a, c
    cdef double x0, y0, x1, y1, x2, y2, det, area, scale
    cdef double gx[3]
    cdef double gy[3]
    with nogil:
        for e in range(ne):
            x0 = nodes[elements[e, 0], 0]; y0 = nodes[elements[e, 0], 1]
            x1 = nodes[elements[e, 1], 0]; y1 = nodes[elements[e, 1], 1]
            x2 = nodes[elements[e, 2], 0]; y2 = nodes[elements[e, 2], 1]
            det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
            area = 0.5 * fabs(det)
            # barycentric gradients
            gx[0] = (y1 - y2) / det; gy[0] = (x2 - x1) / det
            gx[1] = (y2 - y0) / det; gy[1] = (x0 - x2) / det
            gx[2] = (y0 - y1) / det; gy[2] = (x1 - x0) / det
            scale = coeff[e] * area
            for a in range(3):
                for c in range(3):
                    kloc[e, a, c] = scale * (gx[a] * gx[c] + gy[a] * gy[c])
                    mloc[e, a, c] = area / 12.0 if a != c else area / 6.0
    return kloc_arr, mloc_arr
