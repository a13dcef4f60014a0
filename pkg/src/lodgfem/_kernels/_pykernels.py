"""Pure numpy/scipy versions of the compiled kernels, used when the extension is unavailable."""

import numpy as np
import scipy.sparse as sp


def pcg_csr(indptr, indices, data, inv_diag, b, x, tol, max_iter):
    n = b.shape[0]
    A = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    bnorm = np.sqrt(b @ b)
    if bnorm == 0.0:
        x[:] = 0.0
        return 0, 0.0
    r = b - A @ x
    rnorm = np.sqrt(r @ r)
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    it = 0
    while rnorm > tol * bnorm and it < max_iter:
        it += 1
        q = A @ p
        pap = p @ q
        if pap <= 0.0:
            break
        alpha = rz / pap
        x += alpha * p
        r -= alpha * q
        rnorm = np.sqrt(r @ r)
        if rnorm <= tol * bnorm:
            break
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return it, rnorm / bnorm


def p1_local_matrices(nodes, elements, coeff):
    xy = nodes[elements]  # (ne, 3, 2)
    x0, y0 = xy[:, 0, 0], xy[:, 0, 1]
    x1, y1 = xy[:, 1, 0], xy[:, 1, 1]
    x2, y2 = xy[:, 2, 0], xy[:, 2, 1]
    det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    area = 0.5 * np.abs(det)
    gx = np.stack([y1 - y2, y2 - y0, y0 - y1], axis=1) / det[:, None]
    gy = np.stack([x2 - x1, x0 - x2, x1 - x0], axis=1) / det[:, None]
    scale = (coeff * area)[:, None, None]
    kloc = scale * (gx[:, :, None] * gx[:, None, :] + gy[:, :, None] * gy[:, None, :])
    mloc = (area / 12.0)[:, None, None] * (np.ones((3, 3)) + np.eye(3))
    return kloc, mloc
