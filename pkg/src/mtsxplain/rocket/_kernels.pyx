# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled ROCKET convolution: PPV and max for every (instance, kernel) pair."""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange, parallel
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef void _one(const double[:, :, ::1] X, Py_ssize_t i,
               const double[::1] weights, const cnp.int64_t[::1] lengths,
               const double[::1] biases, const cnp.int64_t[::1] dilations,
               const cnp.int64_t[::1] paddings, const cnp.int64_t[::1] n_channels,
               const cnp.int64_t[::1] channel_indices,
               const cnp.int64_t[::1] w_off, const cnp.int64_t[::1] c_off,
               double[:, ::1] out, double* z) noexcept nogil:
    cdef Py_ssize_t L = X.shape[2]
    cdef Py_ssize_t K = lengths.shape[0]
    cdef Py_ssize_t k, ci, j, t, c, length, dil, pad, out_len, shift, t_lo, t_hi, positive
    cdef double w, mx
    cdef const double* xrow
    for k in range(K):
        length = lengths[k]
        dil = dilations[k]
        pad = paddings[k]
        out_len = L + 2 * pad - (length - 1) * dil
        for t in range(out_len):
            z[t] = biases[k]
        for ci in range(n_channels[k]):
            c = channel_indices[c_off[k] + ci]
            xrow = &X[i, c, 0]
            for j in range(length):
                w = weights[w_off[k] + ci * length + j]
                shift = j * dil - pad
                t_lo = -shift if shift < 0 else 0
                t_hi = L - shift
                if t_hi > out_len:
                    t_hi = out_len
                for t in range(t_lo, t_hi):
                    z[t] = z[t] + w * xrow[t + shift]
        positive = 0
        mx = z[0]
        for t in range(out_len):
            if z[t] > 0:
                positive = positive + 1
            if z[t] > mx:
                mx = z[t]
        out[i, 2 * k] = <double>positive / <double>out_len
        out[i, 2 * k + 1] = mx


def apply_kernels(const double[:, :, ::1] X, const double[::1] weights,
                  const cnp.int64_t[::1] lengths, const double[::1] biases,
                  const cnp.int64_t[::1] dilations, const cnp.int64_t[::1] paddings,
                  const cnp.int64_t[::1] n_channels, const cnp.int64_t[::1] channel_indices,
                  int num_threads=1):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t L = X.shape[2]
    cdef Py_ssize_t K = lengths.shape[0]
    cdef Py_ssize_t i, k, max_pad = 0
    w_off_arr = np.zeros(K, dtype=np.int64)
    c_off_arr = np.zeros(K, dtype=np.int64)
    if K > 1:
        c_off_arr[1:] = np.cumsum(np.asarray(n_channels))[:-1]
        w_off_arr[1:] = np.cumsum(np.asarray(n_channels) * np.asarray(lengths))[:-1]
    cdef cnp.int64_t[::1] w_off = w_off_arr
    cdef cnp.int64_t[::1] c_off = c_off_arr
    for k in range(K):
        if paddings[k] > max_pad:
            max_pad = paddings[k]
    result = np.empty((n, 2 * K), dtype=np.float64)
    cdef double[:, ::1] out = result
    cdef double* z
    if num_threads < 1:
        num_threads = 1
    with nogil, parallel(num_threads=num_threads):
        z = <double*> malloc((L + 2 * max_pad + 1) * sizeof(double))
        for i in prange(n, schedule="static"):
            _one(X, i, weights, lengths, biases, dilations, paddings, n_channels,
                 channel_indices, w_off, c_off, out, z)
        free(z)
    return result
