"""Small dense symmetric eigenproblems, batched.

Cyclic Jacobi rotations are applied to a whole stack of matrices at once;
for the sizes used here (at most 8x8) this is fast, deterministic and does
not touch a threaded LAPACK.
"""
from __future__ import annotations

import numpy as np


def jacobi_eigvals(a, tol: float = 1e-12, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of symmetric matrices by cyclic Jacobi sweeps.

    Parameters
    ----------
    a : array_like, shape (..., n, n)
        Symmetric input, ``n <= 8``.
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm of every matrix is
        below ``tol`` times its total Frobenius norm.

    Returns
    -------
    ndarray, shape (..., n)
        Eigenvalues in ascending order.
    """
    a = np.array(a, dtype=float, copy=True)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError("expected a stack of square matrices")
    n = a.shape[-1]
    if n > 8:
        raise ValueError("jacobi_eigvals is meant for n <= 8")
    batch = a.shape[:-2]
    a = a.reshape(-1, n, n)
    scale = np.sqrt(np.sum(a * a, axis=(1, 2)))
    scale[scale == 0] = 1.0
    off = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        offn = np.sqrt(np.sum(a[:, off] ** 2, axis=1))
        if np.all(offn <= tol * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                app = a[:, p, p]
                aqq = a[:, q, q]
                nz = np.abs(apq) > 1e-300
                tau = np.where(nz, (aqq - app) / (2.0 * np.where(nz, apq, 1.0)), 0.0)
                t = np.where(nz, np.sign(tau + (tau == 0)) / (np.abs(tau) + np.sqrt(1.0 + tau * tau)), 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # rotate columns p, q then rows p, q
                ap = a[:, :, p].copy()
                aq = a[:, :, q]
                a[:, :, p] = c[:, None] * ap - s[:, None] * aq
                a[:, :, q] = s[:, None] * ap + c[:, None] * aq
                ap = a[:, p, :].copy()
                aq = a[:, q, :]
                a[:, p, :] = c[:, None] * ap - s[:, None] * aq
                a[:, q, :] = s[:, None] * ap + c[:, None] * aq
                a[:, p, q] = 0.0
                a[:, q, p] = 0.0
    w = np.sort(np.diagonal(a, axis1=1, axis2=2), axis=1)
    return w.reshape(batch + (n,))


def is_symmetric(a, tol: float = 1e-12) -> np.ndarray:
    a = np.asarray(a)
    scale = np.maximum(np.max(np.abs(a), axis=(-1, -2)), 1e-300)
    return np.max(np.abs(a - np.swapaxes(a, -1, -2)), axis=(-1, -2)) <= tol * scale


def psd_check(a, rel: float = 1e-10) -> np.ndarray:
    """True where the smallest eigenvalue is at least ``-rel * trace``."""
    a = np.asarray(a, dtype=float)
    w = jacobi_eigvals(a)
    tr = np.trace(a, axis1=-2, axis2=-1)
    return w[..., 0] >= -rel * np.abs(tr)
