# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled CSR affine-layer kernel.

The accumulation order is part of the library contract: for every output
row the stored entries are folded left to right (ascending column index),
the bias is added after the dot product, and ReLU is applied last.  The
python backend follows the identical order, so both produce bit-identical
results.
"""

import numpy as np

cimport numpy as cnp

ctypedef fused idx_t:
    cnp.int32_t
    cnp.int64_t


def affine_batch(cnp.float64_t[::1] data,
                 idx_t[::1] indices,
                 idx_t[::1] indptr,
                 cnp.float64_t[::1] bias,
                 cnp.float64_t[:, ::1] x,
                 bint relu):
    """Compute relu?(W @ x + b) for a CSR matrix W and batch columns x."""
    cdef Py_ssize_t n_out = indptr.shape[0] - 1
    cdef Py_ssize_t nb = x.shape[1]
    cdef Py_ssize_t i, b, jj, j
    cdef double v, t

    out_arr = np.zeros((n_out, nb), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr

    with nogil:
        for i in range(n_out):
            for jj in range(indptr[i], indptr[i + 1]):
                j = indices[jj]
                v = data[jj]
                for b in range(nb):
                    out[i, b] = out[i, b] + v * x[j, b]
            v = bias[i]
            for b in range(nb):
                t = out[i, b] + v
                if relu and t < 0.0:
                    t = 0.0
                out[i, b] = t
    return out_arr
