# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for valid convolution and max pooling.

Same contracts as ipcnet.backend.reference; see there for the layout and
tie-breaking conventions.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv2d_forward(double[:, :, ::1] x, double[:, :, :, ::1] w,
                   double[::1] bias, int stride_h, int stride_w):
    cdef Py_ssize_t h = x.shape[0], width = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], cout = w.shape[3]
    cdef Py_ssize_t out_h = (h - kh) // stride_h + 1
    cdef Py_ssize_t out_w = (width - kw) // stride_w + 1
    out_arr = np.empty((out_h, out_w, cout))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, o, p, q, c, r0, c0
    cdef double xv
    # innermost loop runs over the contiguous cout axis of both w and out
    # so the compiler can vectorize the rank-1 update
    for i in range(out_h):
        r0 = i * stride_h
        for j in range(out_w):
            c0 = j * stride_w
            for o in range(cout):
                out[i, j, o] = bias[o]
            for p in range(kh):
                for q in range(kw):
                    for c in range(cin):
                        xv = x[r0 + p, c0 + q, c]
                        for o in range(cout):
                            out[i, j, o] += xv * w[p, q, c, o]
    return out_arr


def conv2d_backward(double[:, :, ::1] x, double[:, :, :, ::1] w,
                    double[:, :, ::1] grad, int stride_h, int stride_w):
    cdef Py_ssize_t h = x.shape[0], width = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], cout = w.shape[3]
    cdef Py_ssize_t out_h = grad.shape[0], out_w = grad.shape[1]
    gx_arr = np.zeros((h, width, cin))
    gw_arr = np.zeros((kh, kw, cin, cout))
    gb_arr = np.zeros(cout)
    cdef double[:, :, ::1] gx = gx_arr
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t i, j, o, p, q, c, r0, c0
    cdef double xv, acc
    for i in range(out_h):
        r0 = i * stride_h
        for j in range(out_w):
            c0 = j * stride_w
            for o in range(cout):
                gb[o] += grad[i, j, o]
            for p in range(kh):
                for q in range(kw):
                    for c in range(cin):
                        xv = x[r0 + p, c0 + q, c]
                        acc = 0.0
                        for o in range(cout):
                            acc += grad[i, j, o] * w[p, q, c, o]
                            gw[p, q, c, o] += grad[i, j, o] * xv
                        gx[r0 + p, c0 + q, c] += acc
    return gx_arr, gw_arr, gb_arr


def maxpool_forward(double[:, :, ::1] x, int pool_h, int pool_w,
                    int stride_h, int stride_w):
    cdef Py_ssize_t h = x.shape[0], width = x.shape[1], nchan = x.shape[2]
    cdef Py_ssize_t out_h = (h - pool_h) // stride_h + 1
    cdef Py_ssize_t out_w = (width - pool_w) // stride_w + 1
    out_arr = np.empty((out_h, out_w, nchan))
    arg_arr = np.empty((out_h, out_w, nchan), dtype=np.int64)
    cdef double[:, :, ::1] out = out_arr
    cdef cnp.int64_t[:, :, ::1] arg = arg_arr
    cdef Py_ssize_t i, j, c, p, q, r0, c0, best_pos
    cdef double best, v
    for i in range(out_h):
        r0 = i * stride_h
        for j in range(out_w):
            c0 = j * stride_w
            for c in range(nchan):
                best = x[r0, c0, c]
                best_pos = r0 * width + c0
                for p in range(pool_h):
                    for q in range(pool_w):
                        v = x[r0 + p, c0 + q, c]
                        if v > best:
                            best = v
                            best_pos = (r0 + p) * width + (c0 + q)
                out[i, j, c] = best
                arg[i, j, c] = best_pos
    return out_arr, arg_arr


def maxpool_backward(double[:, :, ::1] grad, cnp.int64_t[:, :, ::1] arg,
                     Py_ssize_t height, Py_ssize_t width):
    cdef Py_ssize_t out_h = grad.shape[0], out_w = grad.shape[1], nchan = grad.shape[2]
    gx_arr = np.zeros((height, width, nchan))
    cdef double[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t i, j, c, pos
    for i in range(out_h):
        for j in range(out_w):
            for c in range(nchan):
                pos = arg[i, j, c]
                gx[pos // width, pos % width, c] += grad[i, j, c]
    return gx_arr
