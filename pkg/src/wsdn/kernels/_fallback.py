"""Pure NumPy convolution kernels (fallback backend).

These are the reference implementations of the hot kernels. The compiled
backend in ``_core.pyx`` reproduces them bit for bit, which requires the
accumulation order to be pinned down exactly:

* ``conv3x3_forward``: each output element starts at its bias and accumulates
  ``input * weight`` terms in row-major ``(c, dy, dx)`` order; taps that fall
  outside the image are skipped.
* ``conv3x3_backward_input``: each input-gradient element starts at zero and
  accumulates in row-major ``(o, dy, dx)`` order; out-of-range taps skipped.
* ``conv3x3_backward_weights``: each weight-gradient element accumulates over
  pixels in row-major ``(y, x)`` order, with out-of-bounds taps read as 0.0
  (explicit zero terms, realized by zero-padding the input). Bias gradients
  accumulate over pixels in the same order.

Sequential pixel sums start from +0.0 and run left to right, exactly like a
scalar accumulator loop. They are realized with ``np.cumsum`` (sequential by
definition) rather than ``np.sum`` (pairwise), with a leading zero so signed
zeros round identically to the compiled backend.
"""

import numpy as np

BACKEND_NAME = "python"

# Output index ranges for which the tap index stays in bounds, per offset d:
# valid output slice is [lo, E - trim) for an extent E.
_SPAN = {0: (1, 0), 1: (0, 0), 2: (0, 1)}


def conv3x3_forward(inp, kernel, bias):
    """3x3 convolution, stride 1, zero padding 1.

    inp: (C, H, W) float64, kernel: (O, C, 3, 3), bias: (O,) -> (O, H, W).
    """
    C, H, W = inp.shape
    O = kernel.shape[0]
    out = np.empty((O, H, W), dtype=np.float64)
    out[:] = bias[:, None, None]
    for c in range(C):
        for dy in range(3):
            y0, yt = _SPAN[dy]
            y1 = H - yt
            for dx in range(3):
                x0, xt = _SPAN[dx]
                x1 = W - xt
                out[:, y0:y1, x0:x1] += (
                    kernel[:, c, dy, dx, None, None]
                    * inp[c, y0 + dy - 1 : y1 + dy - 1, x0 + dx - 1 : x1 + dx - 1]
                )
    return out


def conv3x3_backward_input(grad_out, kernel):
    """Gradient w.r.t. the convolution input. grad_out: (O, H, W) -> (C, H, W)."""
    O, H, W = grad_out.shape
    C = kernel.shape[1]
    din = np.zeros((C, H, W), dtype=np.float64)
    for o in range(O):
        for dy in range(3):
            # input row y draws from grad_out row y-dy+1
            y0, yt = _SPAN[2 - dy]
            y1 = H - yt
            for dx in range(3):
                x0, xt = _SPAN[2 - dx]
                x1 = W - xt
                din[:, y0:y1, x0:x1] += (
                    kernel[o, :, dy, dx, None, None]
                    * grad_out[o, y0 - dy + 1 : y1 - dy + 1, x0 - dx + 1 : x1 - dx + 1]
                )
    return din


def _seq_sum(a):
    # Sequential left-to-right sum starting from +0.0, exactly as a scalar
    # accumulator loop would compute it. The leading zero matters: a first
    # term of -0.0 must round to +0.0, as 0.0 + -0.0 does.
    flat = np.concatenate((np.zeros(1), a.ravel()))
    return float(np.cumsum(flat)[-1])


def conv3x3_backward_weights(grad_out, inp):
    """Gradients w.r.t. kernel and bias.

    grad_out: (O, H, W), inp: (C, H, W) -> (dk (O, C, 3, 3), db (O,)).
    """
    O, H, W = grad_out.shape
    C = inp.shape[0]
    padded = np.zeros((C, H + 2, W + 2), dtype=np.float64)
    padded[:, 1 : H + 1, 1 : W + 1] = inp
    dk = np.empty((O, C, 3, 3), dtype=np.float64)
    db = np.empty(O, dtype=np.float64)
    for o in range(O):
        g = grad_out[o]
        db[o] = _seq_sum(g)
        for c in range(C):
            for dy in range(3):
                for dx in range(3):
                    dk[o, c, dy, dx] = _seq_sum(g * padded[c, dy : dy + H, dx : dx + W])
    return dk, db
