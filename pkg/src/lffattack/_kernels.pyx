# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: softmax cross-entropy gradients and the signed projected step.

Loops run in a fixed order so results are deterministic; no fast-math.
Arguments must be C-contiguous float64 arrays (the model classes guarantee it).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, tanh, isfinite
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline double* _ptr(cnp.ndarray a, Py_ssize_t n, str name) except NULL:
    if a.dtype.num != cnp.NPY_DOUBLE or not cnp.PyArray_IS_C_CONTIGUOUS(a):
        raise TypeError(f"{name} must be a C-contiguous float64 array")
    if cnp.PyArray_SIZE(a) != n:
        raise ValueError(f"{name} has {cnp.PyArray_SIZE(a)} entries, expected {n}")
    return <double*>cnp.PyArray_DATA(a)


cdef inline cnp.ndarray _zeros(Py_ssize_t n):
    cdef cnp.npy_intp dims[1]
    dims[0] = n
    return cnp.PyArray_ZEROS(1, dims, cnp.NPY_DOUBLE, 0)


cdef double _softmax_xent(double* z, Py_ssize_t K, Py_ssize_t label, double* dz) noexcept nogil:
    cdef Py_ssize_t k
    cdef double m = z[0], s = 0.0, rest = 0.0, loss
    for k in range(1, K):
        if z[k] > m:
            m = z[k]
    for k in range(K):
        dz[k] = exp(z[k] - m)
        s += dz[k]
        if k != label:
            rest += dz[k]
    if z[label] == m:
        loss = log1p(rest)
    else:
        loss = m + log(s) - z[label]
    for k in range(K):
        dz[k] = dz[k] / s
    dz[label] -= 1.0
    return loss


def linear_loss_grad(cnp.ndarray W, cnp.ndarray b, cnp.ndarray x, Py_ssize_t label, bint negate):
    cdef Py_ssize_t K = W.shape[0], N = W.shape[1], k, j
    cdef double* w = _ptr(W, K * N, "W")
    cdef double* bb = _ptr(b, K, "b")
    cdef double* xx = _ptr(x, N, "x")
    if not 0 <= label < K:
        raise ValueError("label out of range")
    cdef cnp.ndarray g_arr = _zeros(N)
    cdef double* g = <double*>cnp.PyArray_DATA(g_arr)
    cdef double* z = <double*>malloc(2 * K * sizeof(double))
    if z == NULL:
        raise MemoryError()
    cdef double* dz = z + K
    cdef double acc, loss
    with nogil:
        for k in range(K):
            acc = bb[k]
            for j in range(N):
                acc += w[k * N + j] * xx[j]
            z[k] = acc
        loss = _softmax_xent(z, K, label, dz)
        for k in range(K):
            for j in range(N):
                g[j] += w[k * N + j] * dz[k]
        if negate:
            loss = -loss
            for j in range(N):
                g[j] = -g[j]
    free(z)
    return loss, g_arr


def mlp_loss_grad(cnp.ndarray W1, cnp.ndarray b1, cnp.ndarray W2, cnp.ndarray b2,
                  cnp.ndarray x, Py_ssize_t label, bint negate):
    cdef Py_ssize_t H = W1.shape[0], N = W1.shape[1], K = W2.shape[0], h, j, k
    if W2.shape[1] != H:
        raise ValueError("W2 columns must match hidden width")
    cdef double* w1 = _ptr(W1, H * N, "W1")
    cdef double* c1 = _ptr(b1, H, "b1")
    cdef double* w2 = _ptr(W2, K * H, "W2")
    cdef double* c2 = _ptr(b2, K, "b2")
    cdef double* xx = _ptr(x, N, "x")
    if not 0 <= label < K:
        raise ValueError("label out of range")
    cdef cnp.ndarray g_arr = _zeros(N)
    cdef double* g = <double*>cnp.PyArray_DATA(g_arr)
    cdef double* a = <double*>malloc((2 * H + 2 * K) * sizeof(double))
    if a == NULL:
        raise MemoryError()
    cdef double* d = a + H
    cdef double* z = d + H
    cdef double* dz = z + K
    cdef double acc, loss
    with nogil:
        for h in range(H):
            acc = c1[h]
            for j in range(N):
                acc += w1[h * N + j] * xx[j]
            a[h] = tanh(acc)
            d[h] = 0.0
        for k in range(K):
            acc = c2[k]
            for h in range(H):
                acc += w2[k * H + h] * a[h]
            z[k] = acc
        loss = _softmax_xent(z, K, label, dz)
        for k in range(K):
            for h in range(H):
                d[h] += w2[k * H + h] * dz[k]
        for h in range(H):
            d[h] = d[h] * (1.0 - a[h] * a[h])
        for h in range(H):
            for j in range(N):
                g[j] += w1[h * N + j] * d[h]
        if negate:
            loss = -loss
            for j in range(N):
                g[j] = -g[j]
    free(a)
    return loss, g_arr


def signed_step(cnp.ndarray x, cnp.ndarray d, double alpha, cnp.ndarray lo, cnp.ndarray hi):
    cdef Py_ssize_t i, n = cnp.PyArray_SIZE(x)
    cdef double* xx = _ptr(x, n, "x")
    cdef double* dd = _ptr(d, n, "direction")
    cdef double* l = _ptr(lo, n, "lo")
    cdef double* u = _ptr(hi, n, "hi")
    cdef cnp.ndarray out_arr = _zeros(n)
    cdef double* out = <double*>cnp.PyArray_DATA(out_arr)
    cdef double v, s
    with nogil:
        for i in range(n):
            if dd[i] > 0.0:
                s = 1.0
            elif dd[i] < 0.0:
                s = -1.0
            else:
                s = 0.0
            v = xx[i] + alpha * s
            if v < l[i]:
                v = l[i]
            if v > u[i]:
                v = u[i]
            out[i] = v
    return out_arr


def all_finite(cnp.ndarray v):
    cdef Py_ssize_t i, n = cnp.PyArray_SIZE(v)
    cdef double* p = _ptr(v, n, "v")
    for i in range(n):
        if not isfinite(p[i]):
            return False
    return True
