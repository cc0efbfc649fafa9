# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled attention kernel; see _attention_py for the reference semantics."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def attend(query, keys, values, double temperature):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] q = np.ascontiguousarray(query, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] k = np.ascontiguousarray(keys, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t nq = q.shape[0]
    cdef Py_ssize_t nm = k.shape[0]
    cdef Py_ssize_t d = q.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(nq, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] logits = np.empty(nm, dtype=np.float64)
    cdef Py_ssize_t c, m, j
    cdef double acc, diff, top, wsum, vsum, w

    for c in range(nq):
        top = -1e300
        for m in range(nm):
            acc = 0.0
            for j in range(d):
                diff = q[c, j] - k[m, j]
                acc += diff * diff
            acc = -acc / temperature
            logits[m] = acc
            if acc > top:
                top = acc
        wsum = 0.0
        vsum = 0.0
        for m in range(nm):
            w = exp(logits[m] - top)
            wsum += w
            vsum += w * v[m]
        out[c] = vsum / wsum
    return out
