"""Training-time augmentation: small shifts, small rotations, flips."""

import numpy as np

MAX_SHIFT = 2
MAX_ANGLE = 0.2


def translate(image, dy, dx):
    """Integer shift with zero fill."""
    H, W = image.shape
    out = np.zeros_like(image)
    out[max(dy, 0) : H + min(dy, 0), max(dx, 0) : W + min(dx, 0)] = image[
        max(-dy, 0) : H + min(-dy, 0), max(-dx, 0) : W + min(-dx, 0)
    ]
    return out


def rotate(image, theta):
    """Rotate about the image center with bilinear resampling, zero fill.

    theta = 0 reproduces the input bitwise: the inverse map lands exactly on
    the integer grid, so the off-grid bilinear taps all carry weight zero.
    """
    H, W = image.shape
    cy, cx = (H - 1) / 2.0, (W - 1) / 2.0
    y, x = np.meshgrid(
        np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij"
    )
    cos, sin = np.cos(theta), np.sin(theta)
    sy = cos * (y - cy) - sin * (x - cx) + cy
    sx = sin * (y - cy) + cos * (x - cx) + cx
    y0 = np.floor(sy)
    x0 = np.floor(sx)
    fy = sy - y0
    fx = sx - x0
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)
    out = np.zeros_like(image)
    taps = (
        (0, 0, (1.0 - fy) * (1.0 - fx)),
        (0, 1, (1.0 - fy) * fx),
        (1, 0, fy * (1.0 - fx)),
        (1, 1, fy * fx),
    )
    for oy, ox, w in taps:
        yy = y0 + oy
        xx = x0 + ox
        valid = (yy >= 0) & (yy < H) & (xx >= 0) & (xx < W)
        vals = np.where(valid, image[np.clip(yy, 0, H - 1), np.clip(xx, 0, W - 1)], 0.0)
        out += w * vals
    return out


def augment(image, rng):
    """Apply each transform independently with probability 1/2, in order:
    translate, rotate, horizontal flip, vertical flip.

    The draw order is a determinism contract: one coin per transform is
    always drawn, and parameter draws happen only when a transform fires.
    Count labels are unaffected by construction.
    """
    out = image
    if rng.random() < 0.5:
        dy = int(rng.integers(-MAX_SHIFT, MAX_SHIFT + 1))
        dx = int(rng.integers(-MAX_SHIFT, MAX_SHIFT + 1))
        out = translate(out, dy, dx)
    if rng.random() < 0.5:
        out = rotate(out, float(rng.uniform(-MAX_ANGLE, MAX_ANGLE)))
    if rng.random() < 0.5:
        out = out[:, ::-1].copy()
    if rng.random() < 0.5:
        out = out[::-1, :].copy()
    return out
