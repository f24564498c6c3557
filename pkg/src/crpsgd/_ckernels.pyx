# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: keyed SplitMix64 streams, Gaussian batch sums and
logistic batch gradients. Mirrors ``_pykernels`` exactly on integer streams."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, cos, sin, exp, M_PI
from libc.stdint cimport uint64_t

cnp.import_array()

NAME = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _prefix(uint64_t run, uint64_t worker, uint64_t rnd) noexcept nogil:
    cdef uint64_t h = 0
    h = _mix(h ^ _mix(run + GOLDEN))
    h = _mix(h ^ _mix(worker + GOLDEN))
    h = _mix(h ^ _mix(rnd + GOLDEN))
    return h


cdef inline uint64_t _word(uint64_t h, uint64_t k) noexcept nogil:
    return _mix(h + (k + 1) * GOLDEN)


cdef inline uint64_t _u64(object v):
    return <uint64_t>(int(v) & 0xFFFFFFFFFFFFFFFF)


def stream_words(run, worker, rnd, Py_ssize_t sample0, Py_ssize_t n, Py_ssize_t nwords):
    cdef cnp.ndarray[cnp.uint64_t, ndim=2] out = np.empty((n, nwords), dtype=np.uint64)
    cdef uint64_t p = _prefix(_u64(run), _u64(worker), _u64(rnd))
    cdef uint64_t h
    cdef Py_ssize_t j, k
    with nogil:
        for j in range(n):
            h = _mix(p ^ _mix(<uint64_t>(sample0 + j) + GOLDEN))
            for k in range(nwords):
                out[j, k] = _word(h, k)
    return out


cdef inline void _gauss_into(uint64_t h, Py_ssize_t dim, double *dst, bint add) noexcept nogil:
    cdef Py_ssize_t p, npairs = (dim + 1) // 2
    cdef double u1, u2, r, z0, z1
    for p in range(npairs):
        u1 = (<double>((_word(h, 2 * p) >> 11)) + 1.0) * INV_2_53
        u2 = <double>(_word(h, 2 * p + 1) >> 11) * INV_2_53
        r = sqrt(-2.0 * log(u1))
        z0 = r * cos(2.0 * M_PI * u2)
        z1 = r * sin(2.0 * M_PI * u2)
        if add:
            dst[2 * p] += z0
            if 2 * p + 1 < dim:
                dst[2 * p + 1] += z1
        else:
            dst[2 * p] = z0
            if 2 * p + 1 < dim:
                dst[2 * p + 1] = z1


def gaussian_samples(run, worker, rnd, Py_ssize_t sample0, Py_ssize_t n, Py_ssize_t dim):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, dim))
    cdef uint64_t p = _prefix(_u64(run), _u64(worker), _u64(rnd))
    cdef Py_ssize_t j
    cdef double *base = <double *>out.data
    with nogil:
        for j in range(n):
            _gauss_into(_mix(p ^ _mix(<uint64_t>(sample0 + j) + GOLDEN)), dim, base + j * dim, False)
    return out


def gaussian_sum(run, worker, rnd, Py_ssize_t n, Py_ssize_t dim):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] acc = np.zeros(dim)
    cdef uint64_t p = _prefix(_u64(run), _u64(worker), _u64(rnd))
    cdef Py_ssize_t j
    cdef double *a = <double *>acc.data
    with nogil:
        for j in range(n):
            _gauss_into(_mix(p ^ _mix(<uint64_t>j + GOLDEN)), dim, a, True)
    return acc


def sample_indices(run, worker, rnd, Py_ssize_t sample0, Py_ssize_t n, uint64_t m):
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.empty(n, dtype=np.uint64)
    cdef uint64_t p = _prefix(_u64(run), _u64(worker), _u64(rnd))
    cdef Py_ssize_t j
    with nogil:
        for j in range(n):
            out[j] = ((_word(_mix(p ^ _mix(<uint64_t>(sample0 + j) + GOLDEN)), 0) >> 32) * m) >> 32
    return out


cdef inline double _sigmoid(double t) noexcept nogil:
    cdef double e
    if t >= 0:
        return 1.0 / (1.0 + exp(-t))
    e = exp(t)
    return e / (1.0 + e)


def logistic_grad_sum(double[:, ::1] Z, double[::1] b, double[::1] x, run, worker, rnd, Py_ssize_t n):
    cdef Py_ssize_t M = Z.shape[0], d = Z.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] acc = np.zeros(d)
    cdef double *a = <double *>acc.data
    cdef uint64_t p = _prefix(_u64(run), _u64(worker), _u64(rnd))
    cdef Py_ssize_t j, k, i
    cdef double dot, coef
    with nogil:
        for j in range(n):
            i = <Py_ssize_t>(((_word(_mix(p ^ _mix(<uint64_t>j + GOLDEN)), 0) >> 32) * <uint64_t>M) >> 32)
            dot = 0.0
            for k in range(d):
                dot = dot + Z[i, k] * x[k]
            coef = -b[i] * _sigmoid(-b[i] * dot)
            for k in range(d):
                a[k] += coef * Z[i, k]
    return acc
