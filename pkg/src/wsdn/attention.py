"""Attention maps: six ways to turn a trained model and an image into a
non-negative score field at input resolution.

Linear-combination methods (cam, gated-cam, grad-cam) weigh retained feature
maps; gradient methods (grad, guided) differentiate the scalar output with
respect to the image; intensity is the image itself. Negative values are
nullified at the end, and every map is cropped back to the original image
extents (forward may have padded the input to survive pooling).
"""

from dataclasses import dataclass

import numpy as np

from .engine import backward, guided_mode
from .engine.ops import bilinear_up2x_array

METHOD_IDS = ("cam", "gated-cam", "grad-cam", "grad", "guided", "intensity")


@dataclass
class AttentionMap:
    scores: np.ndarray  # (H, W), all >= 0
    method: str
    raw_min: float  # pre-clamp extrema, for visualization scaling
    raw_max: float


def _finalize(field, image_hw, method):
    field = field[: image_hw[0], : image_hw[1]]
    raw_min, raw_max = float(field.min()), float(field.max())
    return AttentionMap(np.maximum(field, 0.0), method, raw_min, raw_max)


def _image_array(image):
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise ValueError(f"expected a single-channel image, got shape {arr.shape}")
    return arr


def _combine(weights, maps):
    # per-pixel linear combination; kept order-stable (no BLAS dispatch)
    return np.einsum("k,khw->hw", weights, maps)


def attention_cam(model, image):
    """Weights of the final dense layer applied to the last-conv feature
    maps (full input resolution); the dense bias is a constant offset and is
    left out."""
    if model.spec.arch_id not in ("gp_unet", "gp_unet_no_residual"):
        raise ValueError(f"cam needs a gp_unet-family model, got {model.spec.arch_id}")
    fp = model.forward(image)
    w = model.params["dense.weight"].values[0]
    return _finalize(_combine(w, fp.taps["cam"].values), fp.image_hw, "cam")


def attention_gated_cam(model, image):
    """Per-scale dense-weight combinations; the coarse-scale term is
    bilinearly upsampled to input resolution before the scales are summed."""
    if model.spec.arch_id != "gated_attention":
        raise ValueError(f"gated-cam needs a gated_attention model, got {model.spec.arch_id}")
    fp = model.forward(image)
    w = model.params["dense.weight"].values[0]
    n_fine = fp.taps["fine"].values.shape[0]
    fine = _combine(w[:n_fine], fp.taps["fine"].values)
    coarse = _combine(w[n_fine:], fp.taps["coarse"].values)
    field = fine + bilinear_up2x_array(coarse[None])[0]
    return _finalize(field, fp.image_hw, "gated-cam")


def attention_grad_cam(model, image):
    """Feature maps of the last convolution weighted by the spatial mean of
    their gradients; upsampled bilinearly when the tap sits at half
    resolution (the base architecture)."""
    fp = model.forward(image)
    backward(fp.output, 1.0)
    tap = fp.taps["cam"]
    alpha = tap.grad.mean(axis=(1, 2))
    field = _combine(alpha, tap.values)
    ph, pw = fp.padded_hw
    if field.shape == (ph // 2, pw // 2):
        field = bilinear_up2x_array(field[None])[0]
    elif field.shape != (ph, pw):
        raise ValueError(f"unexpected tap resolution {field.shape} for padded {ph}x{pw}")
    return _finalize(field, fp.image_hw, "grad-cam")


def attention_grad(model, image):
    """Gradient of the scalar output with respect to the input image."""
    fp = model.forward(image, input_grad=True)
    backward(fp.output, 1.0)
    return _finalize(fp.input.grad[0], fp.image_hw, "grad")


def attention_guided_backprop(model, image):
    """Input gradient with the guided rule: every ReLU backward also zeroes
    negative upstream gradients."""
    fp = model.forward(image, input_grad=True)
    with guided_mode():
        backward(fp.output, 1.0)
    return _finalize(fp.input.grad[0], fp.image_hw, "guided")


def attention_intensity(image):
    """The image itself as a score field."""
    arr = _image_array(image)
    return _finalize(arr.copy(), arr.shape, "intensity")


def compute_attention(method, model, image):
    if method == "cam":
        return attention_cam(model, image)
    if method == "gated-cam":
        return attention_gated_cam(model, image)
    if method == "grad-cam":
        return attention_grad_cam(model, image)
    if method == "grad":
        return attention_grad(model, image)
    if method == "guided":
        return attention_guided_backprop(model, image)
    if method == "intensity":
        return attention_intensity(image)
    raise ValueError(f"unknown attention method: {method!r}")
