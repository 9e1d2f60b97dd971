"""Differentiable operations. Each builds one graph node.

The op set is exactly what the model zoo needs: 3x3 and 1x1 convolutions,
ReLU/sigmoid, 2x2 max pooling, 2x upsampling (nearest for training graphs,
bilinear for attention-map resizing), channel concatenation, global pooling,
a dense head, elementwise add/mul for the attention gate, and spatial
pad/crop so odd-sized inputs survive the pooling stages.
"""

import numpy as np

from .. import kernels
from .tensor import Tensor, guided_enabled, node


def conv2d(x, kernel, bias):
    """3x3 convolution, stride 1, zero padding 1 (shape-preserving)."""
    if x.values.ndim != 3:
        raise ValueError(f"conv2d expects CHW input, got shape {x.values.shape}")
    if kernel.values.ndim != 4 or kernel.values.shape[2:] != (3, 3):
        raise ValueError(f"conv2d kernel must be (O, C, 3, 3), got {kernel.values.shape}")
    if kernel.values.shape[1] != x.values.shape[0]:
        raise ValueError(
            f"channel mismatch: input has {x.values.shape[0]}, kernel expects {kernel.values.shape[1]}"
        )
    if bias.values.shape != (kernel.values.shape[0],):
        raise ValueError(f"bias must be ({kernel.values.shape[0]},), got {bias.values.shape}")
    vals = kernels.conv3x3_forward(x.values, kernel.values, bias.values)

    def bk():
        g = np.ascontiguousarray(out.grad)
        if kernel.requires_grad or bias.requires_grad:
            dk, db = kernels.conv3x3_backward_weights(g, x.values)
            kernel.accumulate_grad(dk)
            bias.accumulate_grad(db)
        if x.requires_grad:
            x.accumulate_grad(kernels.conv3x3_backward_input(g, kernel.values))

    out = node(vals, (x, kernel, bias), bk)
    return out


def conv1x1(x, kernel, bias):
    """1x1 convolution (per-pixel channel mix)."""
    if kernel.values.ndim != 4 or kernel.values.shape[2:] != (1, 1):
        raise ValueError(f"conv1x1 kernel must be (O, C, 1, 1), got {kernel.values.shape}")
    if kernel.values.shape[1] != x.values.shape[0]:
        raise ValueError(
            f"channel mismatch: input has {x.values.shape[0]}, kernel expects {kernel.values.shape[1]}"
        )
    k2 = kernel.values[:, :, 0, 0]
    vals = np.einsum("oc,chw->ohw", k2, x.values) + bias.values[:, None, None]

    def bk():
        g = out.grad
        if x.requires_grad:
            x.accumulate_grad(np.einsum("oc,ohw->chw", k2, g))
        if kernel.requires_grad:
            dk = np.einsum("ohw,chw->oc", g, x.values)
            kernel.accumulate_grad(dk[:, :, None, None])
        if bias.requires_grad:
            bias.accumulate_grad(np.einsum("ohw->o", g))

    out = node(vals, (x, kernel, bias), bk)
    return out


def relu(x):
    vals = np.maximum(x.values, 0.0)

    def bk():
        mask = x.values > 0
        if guided_enabled():
            # guided backprop: additionally drop negative upstream gradients
            mask = mask & (out.grad > 0)
        x.accumulate_grad(np.where(mask, out.grad, 0.0))

    out = node(vals, (x,), bk)
    return out


def sigmoid(x):
    v = x.values
    vals = np.empty_like(v)
    pos = v >= 0
    vals[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    vals[~pos] = ev / (1.0 + ev)

    def bk():
        x.accumulate_grad(out.grad * vals * (1.0 - vals))

    out = node(vals, (x,), bk)
    return out


def activation(x, kind):
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation kind: {kind}")


def maxpool2d(x):
    """2x2 max pooling, stride 2; argmax ties go to the lowest row-major
    position so the backward routing is deterministic."""
    C, H, W = x.values.shape
    if H % 2 or W % 2:
        raise ValueError(f"maxpool2d needs even spatial extents, got {H}x{W}")
    blocks = (
        x.values.reshape(C, H // 2, 2, W // 2, 2)
        .transpose(0, 1, 3, 2, 4)
        .reshape(C, H // 2, W // 2, 4)
    )
    idx = blocks.argmax(axis=3)
    vals = np.take_along_axis(blocks, idx[..., None], axis=3)[..., 0]

    def bk():
        din = np.zeros_like(x.values)
        ci, by, bx = np.indices(idx.shape)
        din[ci, 2 * by + idx // 2, 2 * bx + idx % 2] = out.grad
        x.accumulate_grad(din)

    out = node(vals, (x,), bk)
    return out


def _lin_axis(size):
    # align-corners-false source coordinates for 2x upsampling, borders clamped
    t = np.arange(2 * size, dtype=np.float64)
    s = np.clip((t + 0.5) / 2.0 - 0.5, 0.0, float(size - 1))
    i0 = np.floor(s).astype(np.intp)
    f = s - i0
    i1 = np.minimum(i0 + 1, size - 1)
    return i0, i1, f


def bilinear_up2x_array(values):
    """2x bilinear upsampling of a CHW array (no autodiff). Shared by the
    upsample2x op and the attention-map resizing paths."""
    C, H, W = values.shape
    iy0, iy1, fy = _lin_axis(H)
    ix0, ix1, fx = _lin_axis(W)
    rows = values[:, iy0, :] * (1.0 - fy)[None, :, None] + values[:, iy1, :] * fy[None, :, None]
    return rows[:, :, ix0] * (1.0 - fx)[None, None, :] + rows[:, :, ix1] * fx[None, None, :]


def upsample2x(x, mode="nearest"):
    C, H, W = x.values.shape
    if mode == "nearest":
        vals = np.repeat(np.repeat(x.values, 2, axis=1), 2, axis=2)

        def bk():
            b = out.grad.reshape(C, H, 2, W, 2)
            x.accumulate_grad(b[:, :, 0, :, 0] + b[:, :, 0, :, 1] + b[:, :, 1, :, 0] + b[:, :, 1, :, 1])

        out = node(vals, (x,), bk)
        return out
    if mode == "bilinear":
        iy0, iy1, fy = _lin_axis(H)
        ix0, ix1, fx = _lin_axis(W)
        vals = bilinear_up2x_array(x.values)

        def bk():
            g = out.grad
            grows = np.zeros((C, 2 * H, W))
            for tx in range(2 * W):
                grows[:, :, ix0[tx]] += g[:, :, tx] * (1.0 - fx[tx])
                grows[:, :, ix1[tx]] += g[:, :, tx] * fx[tx]
            din = np.zeros_like(x.values)
            for ty in range(2 * H):
                din[:, iy0[ty], :] += grows[:, ty, :] * (1.0 - fy[ty])
                din[:, iy1[ty], :] += grows[:, ty, :] * fy[ty]
            x.accumulate_grad(din)

        out = node(vals, (x,), bk)
        return out
    raise ValueError(f"unknown upsample mode: {mode}")


def concat_channels(xs):
    xs = list(xs)
    spatial = {t.values.shape[1:] for t in xs}
    if len(spatial) != 1:
        raise ValueError(f"concat_channels inputs disagree on spatial size: {sorted(spatial)}")
    vals = np.concatenate([t.values for t in xs], axis=0)

    def bk():
        ofs = 0
        for t in xs:
            c = t.values.shape[0]
            if t.requires_grad:
                t.accumulate_grad(out.grad[ofs : ofs + c])
            ofs += c

    out = node(vals, tuple(xs), bk)
    return out


def concat_vectors(xs):
    xs = list(xs)
    if any(t.values.ndim != 1 for t in xs):
        raise ValueError("concat_vectors expects 1-D tensors")
    vals = np.concatenate([t.values for t in xs])

    def bk():
        ofs = 0
        for t in xs:
            n = t.values.shape[0]
            if t.requires_grad:
                t.accumulate_grad(out.grad[ofs : ofs + n])
            ofs += n

    out = node(vals, tuple(xs), bk)
    return out


def global_pool(x, mode):
    C, H, W = x.values.shape
    if mode == "avg":
        vals = x.values.mean(axis=(1, 2))

        def bk():
            x.accumulate_grad(np.broadcast_to((out.grad / (H * W))[:, None, None], x.values.shape))

        out = node(vals, (x,), bk)
        return out
    if mode == "max":
        flat = x.values.reshape(C, -1)
        idx = flat.argmax(axis=1)  # first occurrence = lowest row-major index
        vals = flat[np.arange(C), idx]

        def bk():
            din = np.zeros_like(x.values)
            din.reshape(C, -1)[np.arange(C), idx] = out.grad
            x.accumulate_grad(din)

        out = node(vals, (x,), bk)
        return out
    raise ValueError(f"unknown global_pool mode: {mode}")


def dense(x, weights, bias):
    if x.values.ndim != 1:
        raise ValueError(f"dense expects a vector input, got shape {x.values.shape}")
    U, K = weights.values.shape
    if K != x.values.shape[0]:
        raise ValueError(f"dense weight length {K} != input length {x.values.shape[0]}")
    if bias.values.shape != (U,):
        raise ValueError(f"dense bias must be ({U},), got {bias.values.shape}")
    vals = weights.values @ x.values + bias.values

    def bk():
        g = out.grad
        if x.requires_grad:
            x.accumulate_grad(weights.values.T @ g)
        if weights.requires_grad:
            weights.accumulate_grad(np.outer(g, x.values))
        if bias.requires_grad:
            bias.accumulate_grad(g)

    out = node(vals, (x, weights, bias), bk)
    return out


def add(a, b):
    if a.values.shape != b.values.shape:
        raise ValueError(f"add shape mismatch: {a.values.shape} vs {b.values.shape}")
    vals = a.values + b.values

    def bk():
        a.accumulate_grad(out.grad)
        b.accumulate_grad(out.grad)

    out = node(vals, (a, b), bk)
    return out


def mul(a, b):
    """Elementwise product; one operand may have a single channel, in which
    case it broadcasts across the other's channels (the attention gate)."""
    sa, sb = a.values.shape, b.values.shape
    if sa != sb and not (len(sa) == len(sb) == 3 and sa[1:] == sb[1:] and 1 in (sa[0], sb[0])):
        raise ValueError(f"mul shape mismatch: {sa} vs {sb}")
    vals = a.values * b.values

    def bk():
        for this, other in ((a, b), (b, a)):
            if not this.requires_grad:
                continue
            g = out.grad * other.values
            if g.shape != this.values.shape:
                g = g.sum(axis=0, keepdims=True)
            this.accumulate_grad(g)

    out = node(vals, (a, b), bk)
    return out


def pad_spatial(x, pad_h, pad_w):
    """Zero padding appended on the bottom/right edges."""
    C, H, W = x.values.shape
    vals = np.zeros((C, H + pad_h, W + pad_w))
    vals[:, :H, :W] = x.values

    def bk():
        x.accumulate_grad(out.grad[:, :H, :W])

    out = node(vals, (x,), bk)
    return out


def crop_spatial(x, height, width):
    """Keep the top-left height x width window."""
    vals = x.values[:, :height, :width].copy()

    def bk():
        g = np.zeros_like(x.values)
        g[:, :height, :width] = out.grad
        x.accumulate_grad(g)

    out = node(vals, (x,), bk)
    return out
