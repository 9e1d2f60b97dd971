# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution kernels.

Bitwise-identical to ``_fallback`` by construction: every output element
accumulates its terms in the same order as the NumPy reference (see the
fallback module docstring), and the extension is compiled with FP contraction
disabled so multiply+add round exactly like NumPy's separate operations.
"""

import numpy as np

BACKEND_NAME = "compiled"


def conv3x3_forward(double[:, :, ::1] inp, double[:, :, :, ::1] kernel, double[::1] bias):
    cdef Py_ssize_t C = inp.shape[0], H = inp.shape[1], W = inp.shape[2]
    cdef Py_ssize_t O = kernel.shape[0]
    out_arr = np.empty((O, H, W), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t o, c, dy, dx, y, x, y0, y1, x0, x1
    cdef double kv, b
    for o in range(O):
        b = bias[o]
        for y in range(H):
            for x in range(W):
                out[o, y, x] = b
        for c in range(C):
            for dy in range(3):
                y0 = 1 if dy == 0 else 0
                y1 = H - 1 if dy == 2 else H
                for dx in range(3):
                    x0 = 1 if dx == 0 else 0
                    x1 = W - 1 if dx == 2 else W
                    kv = kernel[o, c, dy, dx]
                    for y in range(y0, y1):
                        for x in range(x0, x1):
                            out[o, y, x] += kv * inp[c, y + dy - 1, x + dx - 1]
    return out_arr


def conv3x3_backward_input(double[:, :, ::1] grad_out, double[:, :, :, ::1] kernel):
    cdef Py_ssize_t O = grad_out.shape[0], H = grad_out.shape[1], W = grad_out.shape[2]
    cdef Py_ssize_t C = kernel.shape[1]
    din_arr = np.zeros((C, H, W), dtype=np.float64)
    cdef double[:, :, ::1] din = din_arr
    cdef Py_ssize_t o, c, dy, dx, y, x, y0, y1, x0, x1
    cdef double kv
    for o in range(O):
        for dy in range(3):
            # input rows whose grad_out row y-dy+1 stays in range
            y0 = 1 if dy == 2 else 0
            y1 = H - 1 if dy == 0 else H
            for dx in range(3):
                x0 = 1 if dx == 2 else 0
                x1 = W - 1 if dx == 0 else W
                for c in range(C):
                    kv = kernel[o, c, dy, dx]
                    for y in range(y0, y1):
                        for x in range(x0, x1):
                            din[c, y, x] += kv * grad_out[o, y - dy + 1, x - dx + 1]
    return din_arr


def conv3x3_backward_weights(double[:, :, ::1] grad_out, double[:, :, ::1] inp):
    cdef Py_ssize_t O = grad_out.shape[0], H = grad_out.shape[1], W = grad_out.shape[2]
    cdef Py_ssize_t C = inp.shape[0]
    dk_arr = np.zeros((O, C, 3, 3), dtype=np.float64)
    db_arr = np.zeros(O, dtype=np.float64)
    cdef double[:, :, :, ::1] dk = dk_arr
    cdef double[::1] db = db_arr

    # grad_out transposed to (y, x, o) so the o-accumulators sit contiguously;
    # input zero-padded so every tap is a plain load (pad taps contribute 0.0
    # terms, matching the fallback's order exactly).
    gt_arr = np.ascontiguousarray(np.transpose(grad_out, (1, 2, 0)))
    pad_arr = np.zeros((C, H + 2, W + 2), dtype=np.float64)
    pad_arr[:, 1 : H + 1, 1 : W + 1] = inp
    cdef double[:, :, ::1] gt = gt_arr
    cdef double[:, :, ::1] pin = pad_arr
    acc_arr = np.empty(O, dtype=np.float64)
    cdef double[::1] acc = acc_arr

    cdef Py_ssize_t o, c, dy, dx, y, x
    cdef double v, s
    for o in range(O):
        s = 0.0
        for y in range(H):
            for x in range(W):
                s += grad_out[o, y, x]
        db[o] = s
    for c in range(C):
        for dy in range(3):
            for dx in range(3):
                for o in range(O):
                    acc[o] = 0.0
                for y in range(H):
                    for x in range(W):
                        v = pin[c, y + dy, x + dx]
                        for o in range(O):
                            acc[o] += gt[y, x, o] * v
                for o in range(O):
                    dk[o, c, dy, dx] = acc[o]
    return dk_arr, db_arr
