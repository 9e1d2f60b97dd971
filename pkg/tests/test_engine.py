"""Tensor engine: op semantics, exact fixtures, finite-difference gradients,
guided ReLU masking, and the Adadelta update rule."""

import numpy as np
import pytest

from wsdn.engine import Tensor, adadelta_step, backward, guided_mode, ops
from wsdn.engine.adadelta import Adadelta

from _naive import conv3x3, bilinear_up2x, finite_diff, max_rel_err


def t(values, requires_grad=False):
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=requires_grad)


# ---------------------------------------------------------------- conv2d


def test_conv2d_identity_kernel():
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1.0
    out = ops.conv2d(t([[[5.0]]]), t(k), t([0.0]))
    assert out.values.shape == (1, 1, 1)
    assert out.values[0, 0, 0] == 5.0


def test_conv2d_all_ones_kernel():
    x = t([[[1.0, 2, 3], [4, 5, 6], [7, 8, 9]]])
    out = ops.conv2d(x, t(np.ones((1, 1, 3, 3))), t([0.0]))
    assert out.values[0, 1, 1] == 45.0
    assert out.values[0, 0, 0] == 12.0


def test_conv2d_zero_kernel_gives_bias():
    rng = np.random.default_rng(3)
    x = t(rng.standard_normal((2, 4, 5)))
    out = ops.conv2d(x, t(np.zeros((3, 2, 3, 3))), t([1.0, -2.0, 0.5]))
    assert np.array_equal(out.values, np.broadcast_to([[1.0]], (4, 5)) * np.array([1.0, -2.0, 0.5])[:, None, None])


def test_conv2d_matches_naive_oracle():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((3, 6, 7))
    k = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    out = ops.conv2d(t(x), t(k), t(b))
    assert np.allclose(out.values, conv3x3(x, k, b), rtol=1e-12, atol=1e-12)


def test_conv2d_validation_errors():
    with pytest.raises(ValueError):
        ops.conv2d(t(np.zeros((2, 4, 4))), t(np.zeros((1, 3, 3, 3))), t([0.0]))
    with pytest.raises(ValueError):
        ops.conv2d(t(np.zeros((1, 4, 4))), t(np.zeros((1, 1, 5, 5))), t([0.0]))


def test_conv1x1_matches_channel_mix():
    rng = np.random.default_rng(12)
    x = rng.standard_normal((3, 4, 4))
    k = rng.standard_normal((2, 3, 1, 1))
    b = rng.standard_normal(2)
    out = ops.conv1x1(t(x), t(k), t(b))
    want = np.einsum("oc,chw->ohw", k[:, :, 0, 0], x) + b[:, None, None]
    assert np.allclose(out.values, want, rtol=1e-12, atol=1e-12)
    with pytest.raises(ValueError):
        ops.conv1x1(t(x), t(np.zeros((2, 3, 3, 3))), t(b))


# ---------------------------------------------------------------- maxpool


def test_maxpool_block_and_gradient_routing():
    x = t([[[1.0, 2], [3, 4]]], requires_grad=True)
    out = ops.maxpool2d(x)
    assert out.values.shape == (1, 1, 1)
    assert out.values[0, 0, 0] == 4.0
    backward(out, 1.0)
    assert np.array_equal(x.grad, [[[0.0, 0], [0, 1]]])


def test_maxpool_tie_routes_to_lowest_row_major():
    x = t(np.full((1, 2, 2), 7.0), requires_grad=True)
    out = ops.maxpool2d(x)
    backward(out, 1.0)
    assert np.array_equal(x.grad, [[[1.0, 0], [0, 0]]])


def test_maxpool_zero_tensor():
    out = ops.maxpool2d(t(np.zeros((3, 4, 6))))
    assert out.values.shape == (3, 2, 3)
    assert not out.values.any()


def test_maxpool_rejects_odd_extent():
    with pytest.raises(ValueError):
        ops.maxpool2d(t(np.zeros((1, 3, 4))))


# ---------------------------------------------------------------- upsample


def test_upsample_nearest_replicates():
    out = ops.upsample2x(t([[[3.5]]]))
    assert np.array_equal(out.values, np.full((1, 2, 2), 3.5))


def test_upsample_nearest_backward_sums_blocks():
    x = t(np.zeros((2, 3, 4)), requires_grad=True)
    out = ops.upsample2x(x)
    backward(out, 1.0)
    assert np.array_equal(x.grad, np.full((2, 3, 4), 4.0))


def test_upsample_bilinear_fixture():
    out = ops.upsample2x(t([[[0.0, 2.0], [0.0, 2.0]]]), mode="bilinear")
    want = np.array([[0.0, 0.5, 1.5, 2.0]] * 4)
    assert np.array_equal(out.values[0], want)


def test_upsample_bilinear_matches_naive():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 5, 3))
    out = ops.upsample2x(t(x), mode="bilinear")
    for c in range(2):
        assert np.allclose(out.values[c], bilinear_up2x(x[c]), rtol=1e-12, atol=1e-12)


def test_upsample_bilinear_backward_matches_finite_differences():
    rng = np.random.default_rng(7)
    buf = rng.standard_normal((1, 3, 4))
    x = Tensor(buf, requires_grad=True)
    out = ops.global_pool(ops.upsample2x(x, mode="bilinear"), "avg")
    backward(out, 1.0)
    fd = finite_diff(
        lambda: float(ops.global_pool(ops.upsample2x(Tensor(buf), mode="bilinear"), "avg").values[0]),
        buf,
    )
    assert max_rel_err(x.grad, fd) < 1e-6


def test_upsample_unknown_mode():
    with pytest.raises(ValueError):
        ops.upsample2x(t(np.zeros((1, 2, 2))), mode="cubic")


def test_maxpool_of_nearest_upsample_is_identity():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((3, 4, 5))
    out = ops.maxpool2d(ops.upsample2x(t(x)))
    assert np.array_equal(out.values, x)


# ---------------------------------------------------------------- concat


def test_concat_stacks_in_order():
    a, b = t(np.ones((1, 2, 2))), t(np.zeros((1, 2, 2)))
    out = ops.concat_channels([a, b])
    assert out.values.shape == (2, 2, 2)
    assert np.array_equal(out.values[0], np.ones((2, 2)))
    assert np.array_equal(out.values[1], np.zeros((2, 2)))


def test_concat_channel_arithmetic_and_backward_routing():
    xs = [
        t(np.random.default_rng(i).standard_normal((c, 3, 3)), requires_grad=True)
        for i, c in enumerate((8, 16, 1))
    ]
    out = ops.concat_channels(xs)
    assert out.values.shape == (25, 3, 3)
    g = np.arange(25.0 * 9).reshape(25, 3, 3)
    backward(out, g)
    assert np.array_equal(xs[0].grad, g[:8])
    assert np.array_equal(xs[1].grad, g[8:24])
    assert np.array_equal(xs[2].grad, g[24:])


def test_concat_spatial_mismatch():
    with pytest.raises(ValueError):
        ops.concat_channels([t(np.zeros((1, 2, 2))), t(np.zeros((1, 3, 2)))])


# ---------------------------------------------------------------- activation


def test_relu_values():
    out = ops.relu(t([[[-2.0, 3.0]]]))
    assert np.array_equal(out.values, [[[0.0, 3.0]]])


def test_relu_standard_vs_guided_backward():
    for guided, want in ((False, -1.0), (True, 0.0)):
        x = t([[[2.0]]], requires_grad=True)
        out = ops.relu(x)
        if guided:
            with guided_mode():
                backward(out, -1.0)
        else:
            backward(out, -1.0)
        assert x.grad[0, 0, 0] == want


def test_relu_zero_input_passes_nothing():
    x = t([[[0.0]]], requires_grad=True)
    backward(ops.relu(x), 1.0)
    assert x.grad[0, 0, 0] == 0.0


def test_guided_mode_restores_flag():
    x = t([[[1.0]]], requires_grad=True)
    with guided_mode():
        pass
    backward(ops.relu(x), -1.0)
    assert x.grad[0, 0, 0] == -1.0  # flag must be off again


def test_sigmoid_value_and_derivative():
    x = t([0.0], requires_grad=True)
    out = ops.sigmoid(x)
    assert out.values[0] == 0.5
    backward(out, 1.0)
    assert x.grad[0] == 0.25


def test_sigmoid_extreme_inputs_are_finite():
    out = ops.sigmoid(t([-1000.0, 1000.0]))
    assert np.all(np.isfinite(out.values))
    assert out.values[0] == 0.0 and out.values[1] == 1.0


# ---------------------------------------------------------------- global pool


def test_global_pool_fixtures():
    x = t([[[1.0, 2], [3, 4]]])
    assert ops.global_pool(x, "avg").values[0] == 2.5
    assert ops.global_pool(x, "max").values[0] == 4.0
    with pytest.raises(ValueError):
        ops.global_pool(x, "median")


def test_global_pool_avg_backward_uniform():
    x = t(np.ones((1, 2, 2)), requires_grad=True)
    backward(ops.global_pool(x, "avg"), 1.0)
    assert np.array_equal(x.grad, np.full((1, 2, 2), 0.25))


def test_global_pool_avg_backward_mass_conservation():
    rng = np.random.default_rng(9)
    x = t(rng.standard_normal((4, 7, 13)), requires_grad=True)
    out = ops.global_pool(x, "avg")
    g = rng.standard_normal(4)
    backward(out, g)
    assert np.allclose(x.grad.sum(axis=(1, 2)), g, rtol=1e-12, atol=1e-12)


def test_global_pool_max_backward_routes_to_first_max():
    x = t([[[5.0, 5.0], [1.0, 5.0]]], requires_grad=True)
    backward(ops.global_pool(x, "max"), 2.0)
    assert np.array_equal(x.grad, [[[2.0, 0], [0, 0]]])


# ---------------------------------------------------------------- dense


def test_dense_fixtures():
    out = ops.dense(t([1.0, 2.0]), t([[3.0, 4.0]]), t([0.0]))
    assert out.values[0] == 11.0
    out = ops.dense(t([1.0, 2.0]), t(np.zeros((1, 2))), t([7.0]))
    assert out.values[0] == 7.0


def test_dense_weight_gradient_equals_input():
    x = t([1.0, 2.0, 3.0])
    w = t(np.zeros((1, 3)), requires_grad=True)
    out = ops.dense(x, w, t([0.0]))
    backward(out, 1.0)
    assert np.array_equal(w.grad, [[1.0, 2.0, 3.0]])


def test_dense_length_mismatch():
    with pytest.raises(ValueError):
        ops.dense(t([1.0, 2.0]), t(np.zeros((1, 3))), t([0.0]))


# ---------------------------------------------------------------- backward


def test_backward_gap_of_relu_fixture():
    x = t([[[1.0, -1.0], [2.0, -2.0]]], requires_grad=True)
    out = ops.global_pool(ops.relu(x), "avg")
    backward(out, 1.0)
    assert np.array_equal(x.grad, [[[0.25, 0.0], [0.25, 0.0]]])


def test_backward_constant_graph_zero_gradient():
    x = t(np.ones((1, 2, 2)), requires_grad=True)
    c = t(np.ones((1, 2, 2)))
    out = ops.global_pool(c, "avg")
    backward(out, 1.0)
    assert x.grad is None or not x.grad.any()


def test_backward_twice_is_bitwise_deterministic():
    def run():
        rng = np.random.default_rng(21)
        x = t(rng.standard_normal((2, 4, 4)), requires_grad=True)
        k = t(rng.standard_normal((3, 2, 3, 3)), requires_grad=True)
        b = t(rng.standard_normal(3), requires_grad=True)
        w = t(rng.standard_normal((1, 3)), requires_grad=True)
        d = t(rng.standard_normal(1), requires_grad=True)
        out = ops.dense(ops.global_pool(ops.relu(ops.conv2d(x, k, b)), "avg"), w, d)
        backward(out, 1.0)
        return x.grad, k.grad, b.grad, w.grad, d.grad

    for a, b in zip(run(), run()):
        assert a.tobytes() == b.tobytes()


def test_composite_graph_matches_finite_differences():
    rng = np.random.default_rng(17)
    xv = rng.standard_normal((2, 4, 4)) + 0.1
    kv = rng.standard_normal((3, 2, 3, 3))
    bv = rng.standard_normal(3)
    wv = rng.standard_normal((1, 3))
    dv = rng.standard_normal(1)

    def build():
        x = Tensor(xv, requires_grad=True)
        k = Tensor(kv, requires_grad=True)
        b = Tensor(bv, requires_grad=True)
        w = Tensor(wv, requires_grad=True)
        d = Tensor(dv, requires_grad=True)
        h = ops.relu(ops.conv2d(x, k, b))
        h = ops.maxpool2d(h)
        out = ops.dense(ops.global_pool(h, "avg"), w, d)
        return x, k, b, w, d, out

    x, k, b, w, d, out = build()
    backward(out, 1.0)
    for buf, tensor in ((xv, x), (kv, k), (bv, b), (wv, w), (dv, d)):
        fd = finite_diff(lambda: float(build()[-1].values[0]), buf)
        assert max_rel_err(tensor.grad, fd) < 1e-6


def _graph_plan(seed):
    rng = np.random.default_rng(seed)
    plan = {
        "C": int(rng.integers(1, 3)),
        "concat": bool(rng.integers(2)),
        "pool": bool(rng.integers(2)),
        "up": bool(rng.integers(2)),
        "mode": "avg" if rng.integers(2) else "max",
        "sigmoid": bool(rng.integers(2)),
    }
    plan["hc"] = 2 + (plan["C"] if plan["concat"] else 0)
    return plan


def _graph_leaves(seed, plan):
    rng = np.random.default_rng(seed + 10_000)
    shapes = {
        "x": (plan["C"], 4, 4),
        "k1": (2, plan["C"], 3, 3),
        "b1": (2,),
        "k2": (2, plan["hc"], 3, 3),
        "b2": (2,),
        "w": (1, 2),
        "d": (1,),
    }
    return {n: rng.standard_normal(s) for n, s in shapes.items()}


def _build_graph(bufs, plan, requires_grad):
    leaves = {n: Tensor(v, requires_grad=requires_grad) for n, v in bufs.items()}
    margins = []
    x = leaves["x"]
    pre = ops.conv2d(x, leaves["k1"], leaves["b1"])
    margins.append(float(np.min(np.abs(pre.values))))
    h = ops.relu(pre)
    if plan["concat"]:
        h = ops.concat_channels([h, x])
    if plan["pool"]:
        blocks = h.values.reshape(h.values.shape[0], 2, 2, 2, 2).reshape(-1, 4)
        top2 = np.sort(blocks, axis=1)[:, -2:]
        margins.append(float(np.min(top2[:, 1] - top2[:, 0])))
        h = ops.maxpool2d(h)
        if plan["up"]:
            h = ops.upsample2x(h)
    pre = ops.conv2d(h, leaves["k2"], leaves["b2"])
    margins.append(float(np.min(np.abs(pre.values))))
    h = ops.relu(pre)
    if plan["mode"] == "max":
        flat = np.sort(h.values.reshape(h.values.shape[0], -1), axis=1)
        if flat.shape[1] > 1:
            margins.append(float(np.min(flat[:, -1] - flat[:, -2])))
    out = ops.dense(ops.global_pool(h, plan["mode"]), leaves["w"], leaves["d"])
    if plan["sigmoid"]:
        out = ops.sigmoid(out)
    return leaves, out, min(margins)


def test_fifty_random_graphs_match_finite_differences():
    checked = 0
    seed = 0
    while checked < 50:
        seed += 1
        plan = _graph_plan(seed)
        bufs = _graph_leaves(seed, plan)
        leaves, out, margin = _build_graph(bufs, plan, requires_grad=True)
        if margin < 1e-3:
            continue  # too close to a relu/argmax kink for finite differences
        backward(out, 1.0)
        for name, tensor in leaves.items():
            fd = finite_diff(
                lambda: _build_graph(bufs, plan, requires_grad=False)[1].values[0], bufs[name]
            )
            got = tensor.grad if tensor.grad is not None else np.zeros_like(bufs[name])
            err = max_rel_err(got, fd)
            assert err < 1e-6, f"seed {seed}, leaf {name}: rel err {err:.3e}"
        checked += 1
    assert checked == 50


# ---------------------------------------------------------------- arithmetic ops


def test_add_and_mul_backward():
    rng = np.random.default_rng(30)
    a = t(rng.standard_normal((2, 3, 3)), requires_grad=True)
    b = t(rng.standard_normal((2, 3, 3)), requires_grad=True)
    gate = t(rng.standard_normal((1, 3, 3)), requires_grad=True)
    out = ops.global_pool(ops.mul(ops.add(a, b), gate), "avg")
    backward(out, 1.0)
    for buf, tensor in ((a.values, a), (b.values, b), (gate.values, gate)):
        def rebuild():
            aa = Tensor(a.values)
            bb = Tensor(b.values)
            gg = Tensor(gate.values)
            return float(ops.global_pool(ops.mul(ops.add(aa, bb), gg), "avg").values.sum())

        fd = finite_diff(rebuild, buf)
        assert max_rel_err(tensor.grad, fd) < 1e-6


def test_pad_crop_roundtrip_and_backward():
    rng = np.random.default_rng(31)
    x = t(rng.standard_normal((2, 3, 5)), requires_grad=True)
    padded = ops.pad_spatial(x, 1, 3)
    assert padded.values.shape == (2, 4, 8)
    assert np.array_equal(padded.values[:, :3, :5], x.values)
    assert not padded.values[:, 3:, :].any() and not padded.values[:, :, 5:].any()
    cropped = ops.crop_spatial(padded, 3, 5)
    assert np.array_equal(cropped.values, x.values)
    backward(ops.global_pool(cropped, "avg"), np.ones(2))
    assert np.allclose(x.grad, 1.0 / 15.0, rtol=1e-12)


# ---------------------------------------------------------------- adadelta


def test_adadelta_zero_gradient_keeps_param():
    p = np.array([1.0, -2.0])
    eg2 = np.full(2, 0.5)
    edx2 = np.full(2, 0.5)
    adadelta_step(p, np.zeros(2), eg2, edx2, rho=0.95, eps=1e-6, lr=1.0)
    assert np.array_equal(p, [1.0, -2.0])
    assert np.allclose(eg2, 0.475) and np.allclose(edx2, 0.475)


def test_adadelta_first_step_frozen_value():
    p = np.array([0.25])
    eg2 = np.zeros(1)
    edx2 = np.zeros(1)
    adadelta_step(p, np.ones(1), eg2, edx2, rho=0.95, eps=1e-6, lr=1.0)
    assert np.isclose(p[0], 0.24552790876568917, rtol=0, atol=1e-15)
    assert np.isclose(eg2[0], 0.050000000000000044, rtol=0, atol=1e-16)
    assert np.isclose(edx2[0], 9.999800003999919e-07, rtol=0, atol=1e-20)


def test_adadelta_two_steps_grow_in_magnitude():
    p = np.array([0.25])
    eg2, edx2 = np.zeros(1), np.zeros(1)
    adadelta_step(p, np.ones(1), eg2, edx2, rho=0.95, eps=1e-6, lr=1.0)
    d1 = p[0] - 0.25
    adadelta_step(p, np.ones(1), eg2, edx2, rho=0.95, eps=1e-6, lr=1.0)
    d2 = p[0] - 0.25 - d1
    assert np.isclose(d1, -0.0044720912343108364, rtol=0, atol=1e-15)
    assert np.isclose(d2, -0.004529062265533204, rtol=0, atol=1e-15)
    assert abs(d2) > abs(d1) and d1 < 0 and d2 < 0


def test_adadelta_validation():
    with pytest.raises(ValueError):
        adadelta_step(np.zeros(2), np.zeros(3), np.zeros(2), np.zeros(2), rho=0.95, eps=1e-6, lr=1.0)
    with pytest.raises(ValueError):
        adadelta_step(np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2), rho=0.95, eps=0.0, lr=1.0)


def test_adadelta_optimizer_tracks_parameters():
    p1 = Tensor(np.ones(3), requires_grad=True)
    p2 = Tensor(np.full((2, 2), 2.0), requires_grad=True)
    opt = Adadelta({"a": p1, "b": p2})
    p1.grad = np.ones(3)
    p2.grad = np.zeros((2, 2))
    opt.step()
    assert np.allclose(p1.values, 1.0 - 0.0044720912343108364, rtol=0, atol=1e-15)
    assert np.array_equal(p2.values, np.full((2, 2), 2.0))
    opt.zero_grad()
    assert not p1.grad.any() and not p2.grad.any()
