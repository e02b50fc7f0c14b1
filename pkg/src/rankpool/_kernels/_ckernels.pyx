# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: im2col/col2im and the pooling gather/scatter loops.

Must stay bit-identical to _pykernels: same tie-breaking (first max in the
row-major window scan) and the same col2im accumulation order (kernel
offsets outermost), because the backends are interchangeable at import.
"""

import numpy as np

cimport numpy as cnp
from libc.string cimport memcpy

cnp.import_array()

BACKEND = "c"


def im2col(cnp.ndarray[cnp.float64_t, ndim=4, mode="c"] x, int kh, int kw):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t oh = h - kh + 1, ow = w - kw + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] cols = np.empty(
        (n * oh * ow, kh * kw * c), dtype=np.float64
    )
    # For a C-contiguous (n,h,w,c) array the kw*c values of one kernel row
    # are one contiguous block, so each patch is kh straight copies.
    cdef Py_ssize_t i, oy, ox, u, row
    cdef Py_ssize_t rowlen = kw * c
    with nogil:
        for i in range(n):
            for oy in range(oh):
                for ox in range(ow):
                    row = (i * oh + oy) * ow + ox
                    for u in range(kh):
                        memcpy(
                            &cols[row, u * rowlen],
                            &x[i, oy + u, ox, 0],
                            rowlen * sizeof(double),
                        )
    return cols


def col2im(
    cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] cols,
    int n, int h, int w, int c, int kh, int kw,
):
    cdef Py_ssize_t oh = h - kh + 1, ow = w - kw + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=4, mode="c"] out = np.zeros(
        (n, h, w, c), dtype=np.float64
    )
    cdef Py_ssize_t i, oy, ox, u, v, cc, row, col
    # Kernel offsets stay outermost so each output element accumulates its
    # (u, v) contributions in the same order as the fallback's slice adds.
    with nogil:
        for u in range(kh):
            for v in range(kw):
                for i in range(n):
                    for oy in range(oh):
                        for ox in range(ow):
                            row = (i * oh + oy) * ow + ox
                            col = (u * kw + v) * c
                            for cc in range(c):
                                out[i, oy + u, ox + v, cc] += cols[row, col + cc]
    return out


def pool_max_forward(cnp.ndarray[cnp.float64_t, ndim=4, mode="c"] x, int ph, int pw):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], d = x.shape[3]
    cdef Py_ssize_t oh = h // ph, ow = w // pw
    cdef cnp.ndarray[cnp.float64_t, ndim=4, mode="c"] out = np.empty(
        (n, oh, ow, d), dtype=np.float64
    )
    cdef cnp.ndarray[cnp.int64_t, ndim=4, mode="c"] switches = np.empty(
        (n, oh, ow, d), dtype=np.int64
    )
    cdef Py_ssize_t i, oy, ox, cc, di, dj
    cdef double best, val
    cdef Py_ssize_t best_idx
    with nogil:
        for i in range(n):
            for oy in range(oh):
                for ox in range(ow):
                    for cc in range(d):
                        best = x[i, oy * ph, ox * pw, cc]
                        best_idx = 0
                        for di in range(ph):
                            for dj in range(pw):
                                val = x[i, oy * ph + di, ox * pw + dj, cc]
                                if val > best:
                                    best = val
                                    best_idx = di * pw + dj
                        out[i, oy, ox, cc] = best
                        switches[i, oy, ox, cc] = best_idx
    return out, switches


def pool_switch_backward(
    cnp.ndarray[cnp.float64_t, ndim=4, mode="c"] grad_out,
    cnp.ndarray[cnp.int64_t, ndim=4, mode="c"] switches,
    int ph, int pw,
):
    cdef Py_ssize_t n = grad_out.shape[0], oh = grad_out.shape[1]
    cdef Py_ssize_t ow = grad_out.shape[2], d = grad_out.shape[3]
    cdef cnp.ndarray[cnp.float64_t, ndim=4, mode="c"] grad_in = np.zeros(
        (n, oh * ph, ow * pw, d), dtype=np.float64
    )
    cdef Py_ssize_t i, oy, ox, cc, s
    with nogil:
        for i in range(n):
            for oy in range(oh):
                for ox in range(ow):
                    for cc in range(d):
                        s = switches[i, oy, ox, cc]
                        grad_in[i, oy * ph + s // pw, ox * pw + s % pw, cc] = grad_out[
                            i, oy, ox, cc
                        ]
    return grad_in


def pool_shared_argmax(cnp.ndarray[cnp.float64_t, ndim=3, mode="c"] maps, int ph, int pw):
    cdef Py_ssize_t n = maps.shape[0], h = maps.shape[1], w = maps.shape[2]
    cdef Py_ssize_t oh = h // ph, ow = w // pw
    cdef cnp.ndarray[cnp.int64_t, ndim=3, mode="c"] switches = np.empty(
        (n, oh, ow), dtype=np.int64
    )
    cdef Py_ssize_t i, oy, ox, di, dj
    cdef double best, val
    cdef Py_ssize_t best_idx
    with nogil:
        for i in range(n):
            for oy in range(oh):
                for ox in range(ow):
                    best = maps[i, oy * ph, ox * pw]
                    best_idx = 0
                    for di in range(ph):
                        for dj in range(pw):
                            val = maps[i, oy * ph + di, ox * pw + dj]
                            if val > best:
                                best = val
                                best_idx = di * pw + dj
                    switches[i, oy, ox] = best_idx
    return switches


def pool_gather_shared(
    cnp.ndarray[cnp.float64_t, ndim=4, mode="c"] x,
    cnp.ndarray[cnp.int64_t, ndim=3, mode="c"] switches,
    int ph, int pw,
):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], d = x.shape[3]
    cdef Py_ssize_t oh = h // ph, ow = w // pw
    cdef cnp.ndarray[cnp.float64_t, ndim=4, mode="c"] out = np.empty(
        (n, oh, ow, d), dtype=np.float64
    )
    cdef Py_ssize_t i, oy, ox, cc, s, sy, sx
    with nogil:
        for i in range(n):
            for oy in range(oh):
                for ox in range(ow):
                    s = switches[i, oy, ox]
                    sy = oy * ph + s // pw
                    sx = ox * pw + s % pw
                    for cc in range(d):
                        out[i, oy, ox, cc] = x[i, sy, sx, cc]
    return out


def pool_shared_backward(
    cnp.ndarray[cnp.float64_t, ndim=4, mode="c"] grad_out,
    cnp.ndarray[cnp.int64_t, ndim=3, mode="c"] switches,
    int ph, int pw,
):
    cdef Py_ssize_t n = grad_out.shape[0], oh = grad_out.shape[1]
    cdef Py_ssize_t ow = grad_out.shape[2], d = grad_out.shape[3]
    cdef cnp.ndarray[cnp.float64_t, ndim=4, mode="c"] grad_in = np.zeros(
        (n, oh * ph, ow * pw, d), dtype=np.float64
    )
    cdef Py_ssize_t i, oy, ox, cc, s, sy, sx
    with nogil:
        for i in range(n):
            for oy in range(oh):
                for ox in range(ow):
                    s = switches[i, oy, ox]
                    sy = oy * ph + s // pw
                    sx = ox * pw + s % pw
                    for cc in range(d):
                        grad_in[i, sy, sx, cc] = grad_out[i, oy, ox, cc]
    return grad_in
