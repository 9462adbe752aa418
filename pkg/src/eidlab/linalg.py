"""Eigenvalues of batches of small symmetric matrices.

2x2 and 3x3 use closed forms of the characteristic polynomial; larger sizes
fall back to cyclic Jacobi rotations applied to the whole batch at once.
"""
import numpy as np


def _sym_eig2(M):
    a, b, d = M[..., 0, 0], 0.5 * (M[..., 0, 1] + M[..., 1, 0]), M[..., 1, 1]
    mid = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), b)
    return np.stack([mid - rad, mid + rad], axis=-1)


def _sym_eig3(M):
    # trigonometric solution of the depressed cubic
    A = 0.5 * (M + np.swapaxes(M, -1, -2))
    q = np.trace(A, axis1=-2, axis2=-1) / 3.0
    off = A[..., 0, 1] ** 2 + A[..., 0, 2] ** 2 + A[..., 1, 2] ** 2
    diag = (A[..., 0, 0] - q) ** 2 + (A[..., 1, 1] - q) ** 2 + (A[..., 2, 2] - q) ** 2
    p = np.sqrt((diag + 2.0 * off) / 6.0)
    out = np.empty(A.shape[:-2] + (3,))
    scalar = p <= 1e-300 + 1e-15 * np.abs(q)
    out[scalar] = q[scalar][..., None]
    if np.any(~scalar):
        Ab, qb, pb = A[~scalar], q[~scalar], p[~scalar]
        B = (Ab - qb[:, None, None] * np.eye(3)) / pb[:, None, None]
        r = np.clip(np.linalg.det(B) / 2.0, -1.0, 1.0)
        phi = np.arccos(r) / 3.0
        e_hi = qb + 2.0 * pb * np.cos(phi)
        e_lo = qb + 2.0 * pb * np.cos(phi + 2.0 * np.pi / 3.0)
        e_mid = 3.0 * qb - e_hi - e_lo
        out[~scalar] = np.stack([e_lo, e_mid, e_hi], axis=-1)
    return np.sort(out, axis=-1)


def jacobi_eigvalsh(M, tol=1e-12, max_sweeps=60):
    """Cyclic Jacobi on a batch ``(..., n, n)``; returns ascending eigenvalues."""
    A = 0.5 * (M + np.swapaxes(M, -1, -2))
    shape = A.shape
    n = shape[-1]
    A = A.reshape(-1, n, n).astype(float).copy()
    scale = np.maximum(np.linalg.norm(A, axis=(1, 2)), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2, axis=(1, 2)))
        if np.all(off <= tol * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[:, p, q]
                active = np.abs(apq) > 1e-300
                if not np.any(active):
                    continue
                theta = np.where(active, (A[:, q, q] - A[:, p, p]) / (2.0 * np.where(active, apq, 1.0)), 0.0)
                t = np.where(active, np.sign(theta) / (np.abs(theta) + np.sqrt(theta ** 2 + 1.0)), 0.0)
                t = np.where(active & (theta == 0), 1.0, t)
                c = 1.0 / np.sqrt(t ** 2 + 1.0)
                s = t * c
                Ap = A[:, :, p].copy()
                Aq = A[:, :, q].copy()
                A[:, :, p] = c[:, None] * Ap - s[:, None] * Aq
                A[:, :, q] = s[:, None] * Ap + c[:, None] * Aq
                Rp = A[:, p, :].copy()
                Rq = A[:, q, :].copy()
                A[:, p, :] = c[:, None] * Rp - s[:, None] * Rq
                A[:, q, :] = s[:, None] * Rp + c[:, None] * Rq
    ev = np.sort(np.diagonal(A, axis1=1, axis2=2), axis=-1)
    return ev.reshape(shape[:-1])


def sym_eigvalsh(M):
    """Ascending eigenvalues for a batch of symmetric matrices ``(..., n, n)``."""
    M = np.asarray(M, dtype=float)
    n = M.shape[-1]
    if n == 1:
        return M[..., 0, :].copy()
    if n == 2:
        return _sym_eig2(M)
    if n == 3:
        return _sym_eig3(M)
    return jacobi_eigvalsh(M)
