"""Model zoo: four weakly supervised counting architectures.

All four share the same recipe: shape-preserving 3x3 convolutions with ReLU,
2x2 max pooling between scales, skip connections by channel concatenation,
global pooling to one neuron per feature map, and a dense layer to the single
scalar output. 2D configurations use a quarter of the 3D channel widths.

``count_parameters`` and ``build_model`` both derive from the same layer
plan, so the analytic count always equals the number of scalars allocated.
"""

from dataclasses import dataclass

import numpy as np

from .engine import Tensor, ops

ARCH_IDS = ("gp_unet", "gp_unet_no_residual", "gated_attention", "base")


@dataclass(frozen=True)
class ArchitectureSpec:
    arch_id: str
    dims: int = 2
    blockwise_skips: bool = True
    global_pool_mode: str = "avg"
    base_width: int = 0  # 0 = derive from dims (8 for 2D, 32 for 3D)

    def __post_init__(self):
        if self.arch_id not in ARCH_IDS:
            raise ValueError(f"unknown architecture: {self.arch_id!r}")
        if self.dims not in (2, 3):
            raise ValueError(f"dims must be 2 or 3, got {self.dims}")
        if self.global_pool_mode not in ("avg", "max"):
            raise ValueError(f"global_pool_mode must be avg or max, got {self.global_pool_mode!r}")
        if self.arch_id != "gp_unet" and (not self.blockwise_skips or self.global_pool_mode != "avg"):
            raise ValueError("blockwise_skips/global_pool_mode variants apply to gp_unet only")
        if self.base_width == 0:
            object.__setattr__(self, "base_width", 8 if self.dims == 2 else 32)

    def __str__(self):
        bits = [self.arch_id, f"{self.dims}d"]
        if not self.blockwise_skips:
            bits.append("noskip")
        if self.global_pool_mode != "avg":
            bits.append(self.global_pool_mode)
        return "-".join(bits)


def _plan(spec):
    """Layer plan: (name, kind, in_ch, out_ch, has_bias) in wiring order.

    Kinds: conv3 (3^dims kernel), conv1x1, dense. The plan fixes parameter
    naming, initialization draw order, and checkpoint layout.
    """
    w = spec.base_width
    a = spec.arch_id
    entries = [("conv1", "conv3", 1, w, True), ("conv2", "conv3", w, w, True)]
    if a == "gp_unet_no_residual":
        entries += [
            ("conv3", "conv3", w, 2 * w, True),
            ("conv4", "conv3", 2 * w, 2 * w, True),
            ("conv5", "conv3", 2 * w, 4 * w, True),
            ("conv6", "conv3", 4 * w + 2 * w, 2 * w, True),
            ("conv7", "conv3", 2 * w + w, w, True),
            ("dense", "dense", w, 1, True),
        ]
        return entries
    cat1 = w + 1 if spec.blockwise_skips else w
    cat2 = cat1 + 2 * w if spec.blockwise_skips else 2 * w
    entries += [
        ("conv3", "conv3", cat1, 2 * w, True),
        ("conv4", "conv3", 2 * w, 2 * w, True),
    ]
    if a == "gp_unet":
        entries += [
            ("conv5", "conv3", cat2 + cat1, w, True),
            ("dense", "dense", w, 1, True),
        ]
    elif a == "base":
        entries += [("dense", "dense", cat2, 1, True)]
    elif a == "gated_attention":
        entries += [
            ("gate_x", "conv1x1", cat1, cat1, True),
            ("gate_g", "conv1x1", cat2, cat1, False),
            ("gate_psi", "conv1x1", cat1, 1, True),
            ("dense", "dense", cat1 + cat2, 1, True),
        ]
    return entries


def count_parameters(spec):
    """Analytic parameter count for the wiring, any dims."""
    kernel_volume = 3**spec.dims
    total = 0
    for _, kind, cin, cout, has_bias in _plan(spec):
        if kind == "conv3":
            total += cout * cin * kernel_volume
        elif kind == "conv1x1":
            total += cout * cin
        else:  # dense
            total += cout * cin
        if has_bias:
            total += cout
    return total


def parameter_shapes(spec):
    """Parameter name to shape, exactly as build_model allocates them."""
    shapes = {}
    for name, kind, cin, cout, has_bias in _plan(spec):
        if kind == "dense":
            shapes[name + ".weight"] = (cout, cin)
        elif kind == "conv3":
            shapes[name + ".kernel"] = (cout, cin) + (3,) * spec.dims
        else:
            shapes[name + ".kernel"] = (cout, cin) + (1,) * spec.dims
        if has_bias:
            shapes[name + ".bias"] = (cout,)
    return shapes


@dataclass
class ForwardPass:
    output: Tensor  # scalar prediction, shape (1,)
    taps: dict  # feature maps retained for attention methods
    input: Tensor  # the (pre-padding) input leaf; holds d yhat/d image after backward
    image_hw: tuple  # original spatial extents
    padded_hw: tuple  # extents after the even-divisibility padding


class Model:
    def __init__(self, spec, params):
        self.spec = spec
        self.params = params

    def zero_grad(self):
        for t in self.params.values():
            t.zero_grad()

    def forward(self, image, input_grad=False):
        arr = np.asarray(image, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[0] != 1:
            raise ValueError(f"expected a single-channel image, got shape {arr.shape}")
        H, W = arr.shape[1:]
        leaf = Tensor(arr, requires_grad=input_grad)
        divisor = 4 if self.spec.arch_id == "gp_unet_no_residual" else 2
        pad_h, pad_w = -H % divisor, -W % divisor
        x = ops.pad_spatial(leaf, pad_h, pad_w) if (pad_h or pad_w) else leaf
        hw, phw = (H, W), (H + pad_h, W + pad_w)

        p = self.params
        conv = lambda name, t: ops.relu(ops.conv2d(t, p[name + ".kernel"], p[name + ".bias"]))
        h2 = conv("conv2", conv("conv1", x))

        if self.spec.arch_id == "gp_unet_no_residual":
            p1 = ops.maxpool2d(h2)
            h4 = conv("conv4", conv("conv3", p1))
            p2 = ops.maxpool2d(h4)
            h5 = conv("conv5", p2)
            h6 = conv("conv6", ops.concat_channels([ops.upsample2x(h5), h4]))
            h7 = conv("conv7", ops.concat_channels([ops.upsample2x(h6), h2]))
            vec = ops.global_pool(h7, "avg")
            out = ops.dense(vec, p["dense.weight"], p["dense.bias"])
            return ForwardPass(out, {"cam": h7}, leaf, hw, phw)

        cat1 = ops.concat_channels([h2, x]) if self.spec.blockwise_skips else h2
        pooled = ops.maxpool2d(cat1)
        h4 = conv("conv4", conv("conv3", pooled))
        cat2 = ops.concat_channels([pooled, h4]) if self.spec.blockwise_skips else h4

        if self.spec.arch_id == "gp_unet":
            merged = ops.concat_channels([ops.upsample2x(cat2), cat1])
            h5 = conv("conv5", merged)
            vec = ops.global_pool(h5, self.spec.global_pool_mode)
            out = ops.dense(vec, p["dense.weight"], p["dense.bias"])
            return ForwardPass(out, {"cam": h5}, leaf, hw, phw)

        if self.spec.arch_id == "base":
            vec = ops.global_pool(cat2, "avg")
            out = ops.dense(vec, p["dense.weight"], p["dense.bias"])
            return ForwardPass(out, {"cam": h4}, leaf, hw, phw)

        # gated_attention
        gated, _ = attention_gate(
            cat1,
            cat2,
            wx_kernel=p["gate_x.kernel"],
            wx_bias=p["gate_x.bias"],
            wg_kernel=p["gate_g.kernel"],
            psi_kernel=p["gate_psi.kernel"],
            psi_bias=p["gate_psi.bias"],
        )
        vec = ops.concat_vectors([ops.global_pool(gated, "avg"), ops.global_pool(cat2, "avg")])
        out = ops.dense(vec, p["dense.weight"], p["dense.bias"])
        taps = {"fine": gated, "coarse": cat2, "cam": gated}
        return ForwardPass(out, taps, leaf, hw, phw)


def attention_gate(x, g, *, wx_kernel, wx_bias, wg_kernel, psi_kernel, psi_bias):
    """Additive attention gate merging a coarse signal g into fine maps x.

    a = sigmoid(psi(relu(Wx x + Wg up2(g) + b))), output = x (.) a, with Wx,
    Wg, psi all 1x1 convolutions and a broadcast over x's channels. Returns
    (gated maps, attention map a).
    """
    _, H, W = x.values.shape
    _, gh, gw = g.values.shape
    if (2 * gh, 2 * gw) != (H, W):
        raise ValueError(f"gate scale mismatch: fine {H}x{W} vs coarse {gh}x{gw}")
    zeros = Tensor(np.zeros(wg_kernel.values.shape[0]))
    mix = ops.add(
        ops.conv1x1(x, wx_kernel, wx_bias),
        ops.conv1x1(ops.upsample2x(g), wg_kernel, zeros),
    )
    a = ops.sigmoid(ops.conv1x1(ops.relu(mix), psi_kernel, psi_bias))
    return ops.mul(x, a), a


def build_model(spec, seed, init="scaled"):
    """Allocate and initialize parameters for a trainable (2D) spec.

    init="scaled": weights ~ N(0, 1/fan_in); init="paper": unit variance.
    Biases start at zero either way. Draws come from a dedicated substream of
    `seed` in plan order, so equal seeds build identical models.
    """
    if spec.dims != 2:
        raise ValueError("only 2D models are trainable; 3D specs are for counting")
    if init not in ("scaled", "paper"):
        raise ValueError(f"unknown init: {init!r}")
    rng = np.random.default_rng((seed, 100))
    params = {}
    for name, kind, cin, cout, has_bias in _plan(spec):
        if kind == "conv3":
            shape, fan_in = (cout, cin, 3, 3), cin * 9
        elif kind == "conv1x1":
            shape, fan_in = (cout, cin, 1, 1), cin
        else:
            shape, fan_in = (cout, cin), cin
        std = 1.0 if init == "paper" else 1.0 / np.sqrt(fan_in)
        wname = name + (".weight" if kind == "dense" else ".kernel")
        params[wname] = Tensor(rng.standard_normal(shape) * std, requires_grad=True)
        if has_bias:
            params[name + ".bias"] = Tensor(np.zeros(cout), requires_grad=True)
    return Model(spec, params)
