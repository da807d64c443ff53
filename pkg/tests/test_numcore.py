"""Engine tests: primitive forward values, FD gradient oracle, optimizer recipe."""

import numpy as np
import pytest

from gradcheck import check_grads, finite_difference_grads, max_rel_err
from tinytsfm import numcore as nc
from tinytsfm.errors import ContractError, ShapeError, TrainingError


def t(x, grad=False):
    return nc.Tensor(np.asarray(x, dtype=np.float32), requires_grad=grad)


# ---------------------------------------------------------------- forward values


def test_matmul_identity():
    a = t(np.eye(2))
    b = t([[1, 2], [3, 4]])
    np.testing.assert_allclose(nc.matmul(a, b).data, [[1, 2], [3, 4]])


def test_matmul_zero_annihilator():
    a = t([[1, 2], [3, 4]])
    b = t([[0], [0]])
    np.testing.assert_array_equal(nc.matmul(a, b).data, [[0], [0]])


def test_matmul_hand_product():
    a = t([[1, 2], [3, 4]])
    b = t([[5, 6], [7, 8]])
    np.testing.assert_allclose(nc.matmul(a, b).data, [[19, 22], [43, 50]])


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        nc.matmul(t(np.zeros((2, 3))), t(np.zeros((2, 3))))


def test_softmax_symmetry():
    np.testing.assert_allclose(nc.softmax_lastdim(t([0.0, 0.0])).data, [0.5, 0.5])


def test_softmax_saturation_stable():
    out = nc.softmax_lastdim(t([1000.0, 0.0])).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-6)


def test_softmax_log_ratio():
    out = nc.softmax_lastdim(t([np.log(1.0), np.log(3.0)])).data
    np.testing.assert_allclose(out, [0.25, 0.75], rtol=1e-6)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    for _ in range(20):
        shape = tuple(rng.integers(1, 6, size=rng.integers(1, 4)))
        x = t(rng.normal(size=shape) * 10)
        sums = nc.softmax_lastdim(x).data.sum(axis=-1)
        np.testing.assert_allclose(sums, 1.0, atol=1e-6)


def test_scale_norm_rms_example():
    out = nc.scale_norm(t([3.0, 4.0]), t([1.0, 1.0]), eps=0.0).data
    np.testing.assert_allclose(out, [0.84853, 1.13137], atol=1e-5)


def test_scale_norm_constant_vector():
    for c in (2.5, -2.5):
        out = nc.scale_norm(t([c] * 6), t(np.ones(6)), eps=0.0).data
        np.testing.assert_allclose(out, np.sign(c) * np.ones(6), atol=1e-6)


def test_scale_norm_zero_gamma():
    out = nc.scale_norm(t([1.0, 2.0]), t([0.0, 0.0])).data
    np.testing.assert_array_equal(out, [0.0, 0.0])


def test_scale_norm_gamma_shape_mismatch():
    with pytest.raises(ShapeError):
        nc.scale_norm(t([1.0, 2.0]), t([1.0, 2.0, 3.0]))


def test_forward_determinism_bit_identical():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 5)).astype(np.float32)
    w = rng.normal(size=(5, 3)).astype(np.float32)
    a = nc.matmul(t(x), t(w)).data
    b = nc.matmul(t(x), t(w)).data
    assert np.array_equal(a, b)


# ---------------------------------------------------------------- backward basics


def test_backward_square_at_three():
    x = t(3.0, grad=True)
    with nc.Tape() as tape:
        loss = nc.mul(x, x)
    nc.backward(loss, tape)
    np.testing.assert_allclose(x.grad, 6.0)


def test_backward_softmax_sum_is_constant():
    x = t([0.3, -1.2, 2.0], grad=True)
    with nc.Tape() as tape:
        loss = nc.sum_(nc.softmax_lastdim(x))
    nc.backward(loss, tape)
    np.testing.assert_allclose(x.grad, np.zeros(3), atol=1e-6)


def test_backward_requires_scalar():
    x = t([1.0, 2.0], grad=True)
    with nc.Tape() as tape:
        y = nc.mul(x, x)
    with pytest.raises(ContractError):
        nc.backward(y, tape)


def test_backward_accumulates_on_second_call():
    x = t(2.0, grad=True)
    with nc.Tape() as tape:
        loss = nc.mul(x, x)
    nc.backward(loss, tape)
    nc.backward(loss, tape)
    np.testing.assert_allclose(x.grad, 8.0)


def test_backward_shared_input_fan_out():
    # x feeds two branches; gradients must sum: d/dx (x*x + 3x) = 2x + 3
    x = t(1.5, grad=True)
    three = t(3.0)
    with nc.Tape() as tape:
        loss = nc.add(nc.mul(x, x), nc.mul(x, three))
    nc.backward(loss, tape)
    np.testing.assert_allclose(x.grad, 6.0)


def test_no_recording_without_tape():
    x = t([1.0, 2.0], grad=True)
    tape = nc.Tape()
    nc.mul(x, x)  # outside any tape context
    assert len(tape) == 0


# ------------------------------------------------------- FD checks per primitive


def _weighted_mean_loss(out, w):
    return nc.mean_(nc.mul(out, w))


def test_fd_matmul():
    rng = np.random.default_rng(10)
    for _ in range(12):
        m, k, n = rng.integers(1, 5, size=3)
        a = t(rng.normal(size=(m, k)), grad=True)
        b = t(rng.normal(size=(k, n)), grad=True)
        w = t(rng.normal(size=(m, n)))
        check_grads(lambda: _weighted_mean_loss(nc.matmul(a, b), w), {"a": a, "b": b})


def test_fd_matmul_batched():
    rng = np.random.default_rng(11)
    for _ in range(6):
        a = t(rng.normal(size=(2, 3, 4)), grad=True)
        b = t(rng.normal(size=(2, 4, 5)), grad=True)
        w = t(rng.normal(size=(2, 3, 5)))
        check_grads(lambda: _weighted_mean_loss(nc.matmul(a, b), w), {"a": a, "b": b})


def test_fd_matmul_broadcast_rhs():
    rng = np.random.default_rng(12)
    a = t(rng.normal(size=(3, 2, 4)), grad=True)
    b = t(rng.normal(size=(4, 5)), grad=True)
    w = t(rng.normal(size=(3, 2, 5)))
    check_grads(lambda: _weighted_mean_loss(nc.matmul(a, b), w), {"a": a, "b": b})


def test_fd_softmax():
    rng = np.random.default_rng(13)
    for _ in range(12):
        x = t(rng.normal(size=(3, 5)) * 2, grad=True)
        w = t(rng.normal(size=(3, 5)))
        check_grads(lambda: _weighted_mean_loss(nc.softmax_lastdim(x), w), {"x": x})


def test_fd_scale_norm():
    rng = np.random.default_rng(14)
    for _ in range(12):
        x = t(rng.normal(size=(4, 6)) + 0.5, grad=True)
        gamma = t(rng.normal(size=6), grad=True)
        w = t(rng.normal(size=(4, 6)))
        check_grads(
            lambda: _weighted_mean_loss(nc.scale_norm(x, gamma), w),
            {"x": x, "gamma": gamma},
        )


def test_fd_relu():
    rng = np.random.default_rng(15)
    for _ in range(10):
        # keep entries away from the kink where the derivative is undefined
        vals = rng.normal(size=(3, 4))
        vals[np.abs(vals) < 0.05] += 0.1
        x = t(vals, grad=True)
        w = t(rng.normal(size=(3, 4)))
        check_grads(lambda: _weighted_mean_loss(nc.relu(x), w), {"x": x})


def test_fd_add_mul_broadcast():
    rng = np.random.default_rng(16)
    for _ in range(10):
        a = t(rng.normal(size=(4, 1)), grad=True)
        b = t(rng.normal(size=(3,)), grad=True)
        w = t(rng.normal(size=(4, 3)))
        check_grads(
            lambda: _weighted_mean_loss(nc.mul(nc.add(a, b), b), w), {"a": a, "b": b}
        )


def test_fd_reshape_transpose_sum():
    rng = np.random.default_rng(17)
    for _ in range(6):
        x = t(rng.normal(size=(2, 3, 4)), grad=True)
        w = t(rng.normal(size=(4, 6)))

        def loss():
            y = nc.transpose(x, (2, 0, 1))
            y = nc.reshape(y, (4, 6))
            return _weighted_mean_loss(y, w)

        check_grads(loss, {"x": x})


def test_fd_sum_axis_keepdims():
    rng = np.random.default_rng(18)
    x = t(rng.normal(size=(3, 4)), grad=True)
    w = t(rng.normal(size=(3, 1)))
    check_grads(lambda: _weighted_mean_loss(nc.sum_(x, axis=1, keepdims=True), w), {"x": x})


def test_fd_gather_rows_with_repeats():
    rng = np.random.default_rng(19)
    for _ in range(8):
        table = t(rng.normal(size=(5, 3)), grad=True)
        idx = rng.integers(0, 5, size=(4, 4))  # repeats exercise scatter-add
        w = t(rng.normal(size=(4, 4, 3)))
        check_grads(lambda: _weighted_mean_loss(nc.gather_rows(table, idx), w), {"t": table})


def test_fd_two_layer_mlp():
    rng = np.random.default_rng(20)
    x = t(rng.normal(size=(4, 6)))
    w1 = t(rng.normal(size=(6, 8)) * 0.5, grad=True)
    w2 = t(rng.normal(size=(8, 3)) * 0.5, grad=True)
    target = t(rng.normal(size=(4, 3)))

    def loss():
        h = nc.relu(nc.matmul(x, w1))
        y = nc.matmul(h, w2)
        d = nc.sub(y, target)
        return nc.mean_(nc.mul(d, d))

    check_grads(loss, {"w1": w1, "w2": w2})


def test_fd_oracle_detects_wrong_gradient():
    # sanity check on the oracle itself: a deliberately broken grad must fail
    x = t(1.7, grad=True)

    def loss():
        return nc.mul(x, x)

    fd = finite_difference_grads(loss, {"x": x})
    assert max_rel_err(np.array(2.0 * 1.7), fd["x"]) <= 1e-3
    assert max_rel_err(np.array(1.7), fd["x"]) > 1e-2  # wrong by factor 2


# ---------------------------------------------------------------- optimizer


def test_adamw_first_step_hand_example():
    p = {"w": t(0.0, grad=True)}
    state = nc.AdamWState(p, weight_decay=0.0)
    nc.adamw_step(p, {"w": np.float32(1.0)}, state, lr=0.1)
    np.testing.assert_allclose(p["w"].data, -0.1, atol=1e-7)
    assert state.step_count == 1


def test_adamw_zero_grad_no_decay_keeps_params():
    p = {"w": t([1.0, -2.0], grad=True)}
    state = nc.AdamWState(p, weight_decay=0.0)
    for _ in range(5):
        nc.adamw_step(p, {"w": np.zeros(2, dtype=np.float32)}, state, lr=0.1)
    np.testing.assert_array_equal(p["w"].data, [1.0, -2.0])


def test_adamw_pure_decay_term():
    p = {"w": t(1.0, grad=True)}
    state = nc.AdamWState(p, weight_decay=0.05)
    nc.adamw_step(p, {"w": np.float32(0.0)}, state, lr=0.1)
    np.testing.assert_allclose(p["w"].data, 0.995, rtol=1e-6)


def test_adamw_matches_reference_loop():
    # independent re-execution of the textbook update, float64 reference
    rng = np.random.default_rng(21)
    theta = rng.normal(size=4)
    gs = [rng.normal(size=4) for _ in range(7)]
    lr, wd, b1, b2, eps = 0.01, 0.05, 0.9, 0.999, 1e-8

    ref = theta.copy()
    m = np.zeros(4)
    v = np.zeros(4)
    for step, g in enumerate(gs, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**step)
        vhat = v / (1 - b2**step)
        ref = ref - lr * (mhat / (np.sqrt(vhat) + eps) + wd * ref)

    p = {"w": t(theta, grad=True)}
    state = nc.AdamWState(p, weight_decay=wd, beta1=b1, beta2=b2, eps=eps)
    for g in gs:
        nc.adamw_step(p, {"w": g.astype(np.float32)}, state, lr=lr)
    np.testing.assert_allclose(p["w"].data, ref, rtol=1e-4, atol=1e-6)


def test_adamw_nan_grad_names_parameter():
    p = {"bad_param": t(1.0, grad=True)}
    state = nc.AdamWState(p)
    with pytest.raises(TrainingError, match="bad_param"):
        nc.adamw_step(p, {"bad_param": np.float32(np.nan)}, state, lr=0.1)


def test_clip_boundary_norm_unchanged():
    g = {"a": np.array([3.0], dtype=np.float32), "b": np.array([4.0], dtype=np.float32)}
    nc.clip_global_norm(g, max_norm=5.0)
    np.testing.assert_array_equal(g["a"], [3.0])
    np.testing.assert_array_equal(g["b"], [4.0])


def test_clip_scales_above_max():
    g = {"a": np.array([6.0], dtype=np.float32), "b": np.array([8.0], dtype=np.float32)}
    nc.clip_global_norm(g, max_norm=5.0)
    np.testing.assert_allclose(g["a"], [3.0], rtol=1e-6)
    np.testing.assert_allclose(g["b"], [4.0], rtol=1e-6)


def test_clip_zero_grads_unchanged():
    g = {"a": np.zeros(3, dtype=np.float32)}
    nc.clip_global_norm(g, max_norm=5.0)
    np.testing.assert_array_equal(g["a"], np.zeros(3))


def test_clip_never_increases_norm():
    rng = np.random.default_rng(22)
    for _ in range(25):
        g = {f"p{i}": rng.normal(size=rng.integers(1, 5)).astype(np.float32) * 10 for i in range(3)}
        before = nc.global_norm(g)
        nc.clip_global_norm(g, max_norm=5.0)
        after = nc.global_norm(g)
        assert after <= min(before, 5.0) + 1e-6


def test_cosine_lr_endpoints_and_midpoint():
    sched = nc.CosineSchedule(lr_init=1e-4, lr_final=1e-5, total_steps=100)
    np.testing.assert_allclose(nc.cosine_lr(0, sched), 1e-4, rtol=1e-12)
    np.testing.assert_allclose(nc.cosine_lr(100, sched), 1e-5, rtol=1e-12)
    np.testing.assert_allclose(nc.cosine_lr(50, sched), 5.5e-5, rtol=1e-12)


def test_cosine_lr_monotone_nonincreasing():
    sched = nc.CosineSchedule(total_steps=137)
    lrs = [nc.cosine_lr(s, sched) for s in range(138)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))


def test_cosine_lr_step_out_of_range():
    sched = nc.CosineSchedule(total_steps=10)
    with pytest.raises(ContractError):
        nc.cosine_lr(11, sched)
    with pytest.raises(ContractError):
        nc.cosine_lr(-1, sched)
