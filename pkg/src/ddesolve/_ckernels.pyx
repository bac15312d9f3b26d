# cython: language_level=3
"""Compiled hot kernels. Same contracts as ``ddesolve._pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, floor, isfinite

cnp.import_array()


def rk_stages(rhs, double t, double h, const double[::1] y, const double[:, ::1] A,
              const double[::1] c, double[:, ::1] K):
    cdef Py_ssize_t s = K.shape[0], d = K.shape[1]
    cdef Py_ssize_t i, j, m
    cdef double acc
    cdef double[::1] yv
    cdef const double[::1] kv
    for i in range(s):
        yi = np.empty(d)
        yv = yi
        for m in range(d):
            acc = 0.0
            for j in range(i):
                acc += A[i, j] * K[j, m]
            yv[m] = y[m] + h * acc
        k = rhs(t + c[i] * h, yi)
        kv = np.asarray(k, dtype=np.float64).reshape(-1)
        if kv.shape[0] != d:
            raise ValueError(f"vector field returned {kv.shape[0]} components, expected {d}")
        for m in range(d):
            if not isfinite(kv[m]):
                return False
            K[i, m] = kv[m]
    return True


def combine(const double[::1] y, const double[:, ::1] K, const double[::1] w, double h, double[::1] out):
    cdef Py_ssize_t s = K.shape[0], d = K.shape[1]
    cdef Py_ssize_t j, m
    cdef double acc
    for m in range(d):
        acc = 0.0
        for j in range(s):
            acc += w[j] * K[j, m]
        out[m] = y[m] + h * acc
    return np.asarray(out)


def error_norm(const double[::1] y, const double[::1] y_new, const double[:, ::1] K,
               const double[::1] e,
               double h, double atol, double rtol):
    cdef Py_ssize_t s = K.shape[0], d = K.shape[1]
    cdef Py_ssize_t j, m
    cdef double acc, sc, total = 0.0
    for m in range(d):
        acc = 0.0
        for j in range(s):
            acc += e[j] * K[j, m]
        sc = atol + rtol * max(fabs(y[m]), fabs(y_new[m]))
        acc = h * acc / sc
        total += acc * acc
    return sqrt(total / d)


def dense_eval(const double[::1] y0, const double[:, ::1] K, const double[:, ::1] P, double h,
               double theta, double[::1] out):
    cdef Py_ssize_t s = K.shape[0], d = K.shape[1], q = P.shape[1]
    cdef Py_ssize_t j, m, r
    cdef double acc, p, tp
    cdef double bt[32]
    if s > 32:
        raise ValueError("at most 32 stages supported")
    for j in range(s):
        acc = 0.0
        tp = theta
        for r in range(q):
            acc += P[j, r] * tp
            tp *= theta
        bt[j] = acc
    for m in range(d):
        acc = 0.0
        for j in range(s):
            acc += bt[j] * K[j, m]
        out[m] = y0[m] + h * acc
    return np.asarray(out)


def cubic_uniform(const double[:, ::1] Y, Py_ssize_t n, double t0, double h, double s,
                  double[::1] out):
    cdef Py_ssize_t d = Y.shape[1], m
    cdef double x = (s - t0) / h
    cdef Py_ssize_t j = <Py_ssize_t>floor(x) - 1
    cdef double u, w0, w1, w2, w3
    if j > n - 4:
        j = n - 4
    if j < 0:
        j = 0
    u = x - j
    w0 = -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0
    w1 = u * (u - 2.0) * (u - 3.0) / 2.0
    w2 = -u * (u - 1.0) * (u - 3.0) / 2.0
    w3 = u * (u - 1.0) * (u - 2.0) / 6.0
    for m in range(d):
        out[m] = w0 * Y[j, m] + w1 * Y[j + 1, m] + w2 * Y[j + 2, m] + w3 * Y[j + 3, m]
    return np.asarray(out)
