"""Hot kernels: softmax-weighted Gaussian kernel sums and nearest-neighbour search.

Each kernel has a numba ``@njit`` implementation and a pure-numpy one.  The
numba path is used when numba imports and ``EMDIFF_DISABLE_NUMBA`` is unset
(or ``0``); set it to ``1`` to force numpy.  Both paths evaluate every query
independently with a fixed summation order, so results do not depend on how
queries are batched.
"""
from __future__ import annotations

import os

import numpy as np

_CHUNK_ELEMS = 1 << 22

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and os.environ.get("EMDIFF_DISABLE_NUMBA", "0") in ("", "0")


def kernel_moments_numpy(X, A, logc, inv_var, scale, P):
    """For each query row ``x`` of ``X`` and softmax weights

        w_j  proportional to  exp(logc_j - 0.5 * inv_var_j * |x - A_j|^2)

    return ``R = sum_j w_j scale_j (x - A_j)`` (m x d), ``M = sum_j w_j P_j``
    (m x p) and ``log sum_j exp(...)`` (m).
    """
    m, d = X.shape
    n = A.shape[0]
    p = P.shape[1]
    R = np.empty((m, d))
    M = np.empty((m, p))
    L = np.empty(m)
    step = max(1, _CHUNK_ELEMS // max(1, n * d))
    for lo in range(0, m, step):
        hi = min(m, lo + step)
        diff = X[lo:hi, None, :] - A[None, :, :]
        sq = np.einsum("mnd,mnd->mn", diff, diff)
        logits = logc[None, :] - 0.5 * inv_var[None, :] * sq
        mx = logits.max(axis=1, keepdims=True)
        e = np.exp(logits - mx)
        s = e.sum(axis=1, keepdims=True)
        w = e / s
        L[lo:hi] = mx[:, 0] + np.log(s[:, 0])
        R[lo:hi] = np.einsum("mn,mnd->md", w * scale[None, :], diff)
        if p:
            M[lo:hi] = np.einsum("mn,np->mp", w, P)
    return R, M, L


def nearest_sqdist_numpy(Q, A):
    """Squared distance from each row of ``Q`` to its nearest row of ``A`` and its index."""
    m, d = Q.shape
    n = A.shape[0]
    best = np.empty(m)
    arg = np.empty(m, dtype=np.int64)
    step = max(1, _CHUNK_ELEMS // max(1, n * d))
    for lo in range(0, m, step):
        hi = min(m, lo + step)
        diff = Q[lo:hi, None, :] - A[None, :, :]
        sq = np.einsum("mnd,mnd->mn", diff, diff)
        arg[lo:hi] = sq.argmin(axis=1)
        best[lo:hi] = sq[np.arange(hi - lo), arg[lo:hi]]
    return best, arg


if numba is not None:

    @numba.njit(cache=True)
    def kernel_moments_numba(X, A, logc, inv_var, scale, P):
        m, d = X.shape
        n = A.shape[0]
        p = P.shape[1]
        R = np.zeros((m, d))
        M = np.zeros((m, p))
        L = np.empty(m)
        logits = np.empty(n)
        for i in range(m):
            mx = -np.inf
            for j in range(n):
                sq = 0.0
                for k in range(d):
                    diff = X[i, k] - A[j, k]
                    sq += diff * diff
                v = logc[j] - 0.5 * inv_var[j] * sq
                logits[j] = v
                if v > mx:
                    mx = v
            s = 0.0
            for j in range(n):
                e = np.exp(logits[j] - mx)
                logits[j] = e
                s += e
            for j in range(n):
                w = logits[j] / s
                ws = w * scale[j]
                for k in range(d):
                    R[i, k] += ws * (X[i, k] - A[j, k])
                for k in range(p):
                    M[i, k] += w * P[j, k]
            L[i] = mx + np.log(s)
        return R, M, L

    @numba.njit(cache=True)
    def nearest_sqdist_numba(Q, A):
        m, d = Q.shape
        n = A.shape[0]
        best = np.empty(m)
        arg = np.empty(m, dtype=np.int64)
        for i in range(m):
            b = np.inf
            bj = 0
            for j in range(n):
                sq = 0.0
                for k in range(d):
                    diff = Q[i, k] - A[j, k]
                    sq += diff * diff
                if sq < b:
                    b = sq
                    bj = j
            best[i] = b
            arg[i] = bj
        return best, arg


def _prep(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def kernel_moments(X, A, logc, inv_var, scale, P=None, backend=None):
    """Dispatching front end of the kernel-moment computation (see numpy version)."""
    X = _prep(X)
    A = _prep(A)
    if P is None:
        P = np.empty((A.shape[0], 0))
    args = (X, A, _prep(logc), _prep(inv_var), _prep(scale), _prep(P))
    if _use_numba(backend):
        return kernel_moments_numba(*args)
    return kernel_moments_numpy(*args)


def nearest_sqdist(Q, A, backend=None):
    Q = _prep(Q)
    A = _prep(A)
    if _use_numba(backend):
        return nearest_sqdist_numba(Q, A)
    return nearest_sqdist_numpy(Q, A)


def _use_numba(backend):
    if backend is None:
        return USE_NUMBA
    if backend == "numba":
        if numba is None:
            raise RuntimeError("numba backend requested but numba is not installed")
        return True
    if backend == "numpy":
        return False
    raise ValueError(f"unknown backend {backend!r}")
