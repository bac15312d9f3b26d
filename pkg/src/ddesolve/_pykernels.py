"""Pure-Python (numpy) implementations of the hot kernels.

Signatures match :mod:`ddesolve._ckernels` exactly; see
:mod:`ddesolve.kernels` for the selection logic. Arrays must be C-contiguous
float64; ``K`` has one row per stage.
"""
import math

import numpy as np


def rk_stages(rhs, t, h, y, A, c, K):
    """Fill ``K`` with the stage derivatives of an explicit RK step.

    Returns False as soon as a stage derivative is non-finite.
    """
    s = K.shape[0]
    for i in range(s):
        if i == 0:
            yi = y.copy()
        else:
            yi = y + h * (A[i, :i] @ K[:i])
        k = rhs(t + c[i] * h, yi)
        K[i] = k
        if not np.isfinite(K[i]).all():
            return False
    return True


def combine(y, K, w, h, out):
    np.add(y, h * (w @ K), out=out)
    return out


def error_norm(y, y_new, K, e, h, atol, rtol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    err = h * (e @ K) / scale
    return math.sqrt(float(err @ err) / err.shape[0])


def dense_eval(y0, K, P, h, theta, out):
    q = P.shape[1]
    powers = theta ** np.arange(1, q + 1)
    np.add(y0, h * ((P @ powers) @ K), out=out)
    return out


def cubic_uniform(Y, n, t0, h, s, out):
    """Cubic Lagrange interpolation of rows ``Y[:n]`` sampled at ``t0 + j*h``.

    The 4-point stencil is clipped to ``[0, n-1]``, so queries past the last
    row extrapolate from the final four samples.
    """
    x = (s - t0) / h
    j = int(math.floor(x)) - 1
    if j > n - 4:
        j = n - 4
    if j < 0:
        j = 0
    u = x - j
    w0 = -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0
    w1 = u * (u - 2.0) * (u - 3.0) / 2.0
    w2 = -u * (u - 1.0) * (u - 3.0) / 2.0
    w3 = u * (u - 1.0) * (u - 2.0) / 6.0
    np.add(w0 * Y[j] + w1 * Y[j + 1], w2 * Y[j + 2] + w3 * Y[j + 3], out=out)
    return out
