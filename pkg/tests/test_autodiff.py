import numpy as np
import pytest

import glyphgen.autodiff as ad
from glyphgen.autodiff import (
    Adam,
    GraphConsumed,
    LabelOutOfRange,
    NonFinite,
    NotScalar,
    ShapeMismatch,
    Tensor,
    backward,
    he_init,
    lstm_cell,
    lstm_param_count,
)

RNG = np.random.default_rng(20240811)


def t64(arr, requires_grad=True):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=requires_grad)


def rand(*shape, lo=-1.0, hi=1.0):
    return RNG.uniform(lo, hi, size=shape)


def fd_check(build, tensors, h=1e-5, rtol=1e-4, atol=1e-7):
    """Central finite differences against analytic grads, 64-bit."""
    for p in tensors:
        p.grad = None
    loss = build()
    backward(loss)
    analytic = [p.grad.copy() for p in tensors]
    for p, a in zip(tensors, analytic):
        flat = p.data.ravel()
        fd = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = build().item()
            flat[i] = orig - h
            fm = build().item()
            flat[i] = orig
            fd[i] = (fp - fm) / (2 * h)
        fd = fd.reshape(p.shape)
        err = np.abs(a - fd)
        bound = atol + rtol * np.maximum(np.abs(a), np.abs(fd))
        assert np.all(err <= bound), f"max err {err.max():.3e} vs bound {bound.min():.3e}"


def weighted(out, seed=7):
    # inner product with a fixed vector catches permuted/misplaced gradients
    r = np.random.default_rng(seed).normal(size=out.shape)
    return ad.reduce_sum(ad.mul(out, Tensor(r)))


# ---------------------------------------------------------------------------
# basic semantics


def test_sum_gradient_is_ones():
    x = t64(rand(3, 4))
    backward(ad.reduce_sum(x))
    assert np.array_equal(x.grad, np.ones((3, 4)))


def test_square_gradient():
    x = t64([1.0, 2.0])
    backward(ad.reduce_sum(ad.mul(x, x)))
    assert np.allclose(x.grad, [2.0, 4.0])


def test_matmul_identity():
    a = rand(4, 4)
    out = ad.matmul(Tensor(a), Tensor(np.eye(4)))
    assert np.allclose(out.data, a)


def test_softmax_uniform():
    out = ad.softmax(Tensor(np.zeros(4)))
    assert np.allclose(out.data, 0.25)


def test_shared_parameter_grads_sum():
    x = t64([3.0])
    y = ad.add(ad.mul(x, 2.0), ad.mul(x, 5.0))
    backward(ad.reduce_sum(y))
    assert np.allclose(x.grad, [7.0])


def test_backward_requires_scalar():
    x = t64(rand(3))
    with pytest.raises(NotScalar):
        backward(ad.mul(x, x))


def test_backward_twice_rejected():
    x = t64(rand(3))
    loss = ad.reduce_sum(x)
    backward(loss)
    with pytest.raises(GraphConsumed):
        backward(loss)


def test_no_grad_builds_no_graph():
    x = t64(rand(3))
    with ad.no_grad():
        y = ad.mul(x, x)
    assert not y.requires_grad and y._parents == ()


def test_nonfinite_detected():
    with np.errstate(invalid="ignore"), pytest.raises(NonFinite):
        ad.log(Tensor(np.array([-1.0])))
    with pytest.raises(NonFinite):
        Tensor(np.array([np.nan]))
    with ad.finite_checks(False):
        Tensor(np.array([np.nan]))  # suppressed


def test_shape_mismatch_reports_both():
    with pytest.raises(ShapeMismatch) as exc:
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
    assert "(2, 3)" in str(exc.value) and "(4, 2)" in str(exc.value)


# ---------------------------------------------------------------------------
# finite-difference oracle, one op at a time


def test_grad_add_broadcast():
    a, b = t64(rand(3, 1)), t64(rand(1, 4))
    fd_check(lambda: weighted(ad.add(a, b)), [a, b])


def test_grad_sub():
    a, b = t64(rand(2, 3)), t64(rand(2, 3))
    fd_check(lambda: weighted(ad.sub(a, b)), [a, b])


def test_grad_mul_broadcast():
    a, b = t64(rand(2, 3)), t64(rand(3))
    fd_check(lambda: weighted(ad.mul(a, b)), [a, b])


def test_grad_div():
    a, b = t64(rand(2, 3)), t64(rand(2, 3, lo=0.5, hi=2.0))
    fd_check(lambda: weighted(ad.div(a, b)), [a, b])


def test_grad_neg():
    a = t64(rand(5))
    fd_check(lambda: weighted(ad.neg(a)), [a])


def test_grad_matmul():
    a, b = t64(rand(3, 4)), t64(rand(4, 2))
    fd_check(lambda: weighted(ad.matmul(a, b)), [a, b])


def test_grad_concat():
    a, b = t64(rand(2, 3)), t64(rand(2, 2))
    fd_check(lambda: weighted(ad.concat([a, b], axis=1)), [a, b])


def test_grad_slice():
    a = t64(rand(4, 5))
    fd_check(lambda: weighted(a[1:3, ::2]), [a])


def test_grad_reshape():
    a = t64(rand(2, 6))
    fd_check(lambda: weighted(ad.reshape(a, (3, 4))), [a])


def test_grad_relu():
    a = t64(rand(3, 3) + np.where(rand(3, 3) > 0, 0.1, -0.1))  # keep off the kink
    fd_check(lambda: weighted(ad.relu(a)), [a])


def test_grad_sigmoid_tanh_exp():
    a = t64(rand(2, 4))
    fd_check(lambda: weighted(ad.sigmoid(a)), [a])
    fd_check(lambda: weighted(ad.tanh(a)), [a])
    fd_check(lambda: weighted(ad.exp(a)), [a])


def test_grad_log_power():
    a = t64(rand(2, 4, lo=0.5, hi=3.0))
    fd_check(lambda: weighted(ad.log(a)), [a])
    fd_check(lambda: weighted(ad.power(a, -0.5)), [a])


def test_grad_clip_interior():
    a = t64(rand(3, 3, lo=-0.4, hi=0.4))
    fd_check(lambda: weighted(ad.clip(a, -0.5, 0.5)), [a])


def test_grad_clip_zero_outside():
    a = t64(np.array([-2.0, 0.0, 2.0]))
    backward(ad.reduce_sum(ad.clip(a, -1.0, 1.0)))
    assert np.array_equal(a.grad, [0.0, 1.0, 0.0])


def test_grad_maximum():
    a = t64(np.array([0.4, -0.7, 1.2]))
    b = t64(np.array([0.1, 0.3, 1.5]))
    fd_check(lambda: weighted(ad.maximum(a, b)), [a, b])


def test_grad_softmax_logsumexp():
    a = t64(rand(3, 5))
    fd_check(lambda: weighted(ad.softmax(a, axis=-1)), [a])
    fd_check(lambda: weighted(ad.logsumexp(a, axis=1)), [a])
    fd_check(lambda: weighted(ad.logsumexp(a, axis=1, keepdims=True)), [a])


def test_grad_reductions():
    a = t64(rand(2, 3, 4))
    fd_check(lambda: weighted(ad.reduce_sum(a, axis=(1, 2), keepdims=True)), [a])
    fd_check(lambda: weighted(ad.reduce_mean(a, axis=1)), [a])
    fd_check(lambda: ad.reduce_mean(a), [a])


def test_grad_dropout():
    a = t64(rand(4, 4))
    mask = ad.make_dropout_mask(np.random.default_rng(3), (4, 4), 0.7)
    fd_check(lambda: weighted(ad.dropout(a, 0.7, mask)), [a])


def test_grad_embedding_lookup():
    table = t64(rand(6, 3))
    idx = np.array([0, 2, 2, 5])
    fd_check(lambda: weighted(ad.embedding_lookup(table, idx)), [table])


def test_embedding_label_out_of_range():
    table = t64(rand(6, 3))
    with pytest.raises(LabelOutOfRange):
        ad.embedding_lookup(table, np.array([6]))


# ---------------------------------------------------------------------------
# convolutions


def conv_naive(x, k, s):
    n, h, w, cin = x.shape
    kh, kw, _, cout = k.shape
    ho, pt, pb = ad._same_pads(h, kh, s)
    wo, pl, pr = ad._same_pads(w, kw, s)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    out = np.zeros((n, ho, wo, cout))
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                patch = xp[b, i * s : i * s + kh, j * s : j * s + kw, :]
                out[b, i, j] = np.tensordot(patch, k, axes=([0, 1, 2], [0, 1, 2]))
    return out


def test_same_padding_shape_rule():
    x = Tensor(rand(1, 4, 4, 2))
    k = Tensor(rand(3, 3, 2, 5))
    assert ad.conv2d(x, k, stride=1).shape == (1, 4, 4, 5)
    assert ad.conv2d(x, k, stride=2).shape == (1, 2, 2, 5)


def test_same_padding_favors_bottom_right():
    # 64 -> 32 with a 5-wide kernel needs 3 pads: 1 before, 2 after
    out, lo, hi = ad._same_pads(64, 5, 2)
    assert (out, lo, hi) == (32, 1, 2)


def test_conv_forward_matches_naive():
    for s in (1, 2):
        x = rand(2, 5, 5, 3)
        k = rand(3, 3, 3, 4)
        got = ad.conv2d(Tensor(x), Tensor(k), stride=s).data
        assert np.allclose(got, conv_naive(x, k, s), atol=1e-12)


def test_conv_transpose_shape():
    x = Tensor(rand(2, 4, 4, 6))
    k = Tensor(rand(4, 4, 3, 6))  # (kh, kw, c_out, c_in)
    assert ad.conv_transpose2d(x, k, stride=2).shape == (2, 8, 8, 3)
    assert ad.conv_transpose2d(x, k, stride=1).shape == (2, 4, 4, 3)


def test_conv_transpose_is_adjoint_of_conv():
    # <convT(x), u> == <x, conv(u)> with the shared kernel
    x = rand(2, 3, 3, 5)
    k = rand(3, 3, 4, 5)
    u = rand(2, 6, 6, 4)
    lhs = np.sum(ad.conv_transpose2d(Tensor(x), Tensor(k), stride=2).data * u)
    rhs = np.sum(x * ad.conv2d(Tensor(u), Tensor(k), stride=2).data)
    assert np.isclose(lhs, rhs, rtol=1e-10)


def test_grad_conv2d():
    for s in (1, 2):
        x = t64(rand(2, 5, 5, 2))
        k = t64(rand(3, 3, 2, 3))
        fd_check(lambda: weighted(ad.conv2d(x, k, stride=s)), [x, k])


def test_grad_conv_transpose2d():
    for s in (1, 2):
        x = t64(rand(2, 3, 3, 3))
        k = t64(rand(3, 3, 2, 3))
        fd_check(lambda: weighted(ad.conv_transpose2d(x, k, stride=s)), [x, k])


def test_conv_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        ad.conv2d(Tensor(rand(1, 4, 4, 3)), Tensor(rand(3, 3, 2, 5)))


# ---------------------------------------------------------------------------
# conditional instance norm


def test_cin_constant_channel_returns_shift():
    x = Tensor(np.full((2, 4, 4, 3), 5.0))
    scales = Tensor(rand(62, 3))
    shifts = Tensor(rand(62, 3))
    labels = np.array([7, 41])
    out = ad.cond_instance_norm(x, labels, scales, shifts)
    for n, lab in enumerate(labels):
        for ch in range(3):
            assert np.allclose(out.data[n, :, :, ch], shifts.data[lab, ch], atol=1e-6)


def test_cin_plain_instance_norm():
    x = Tensor(rand(2, 6, 6, 4))
    scales = Tensor(np.ones((62, 4)))
    shifts = Tensor(np.zeros((62, 4)))
    out = ad.cond_instance_norm(x, np.array([0, 1]), scales, shifts).data
    assert np.allclose(out.mean(axis=(1, 2)), 0.0, atol=1e-5)
    assert np.allclose(out.var(axis=(1, 2)), 1.0, atol=1e-3)


def test_grad_cond_instance_norm():
    x = t64(rand(2, 3, 3, 2))
    scales = t64(rand(5, 2))
    shifts = t64(rand(5, 2))
    labels = np.array([1, 4])
    fd_check(
        lambda: weighted(ad.cond_instance_norm(x, labels, scales, shifts)),
        [x, scales, shifts],
    )


# ---------------------------------------------------------------------------
# lstm


def test_lstm_zero_weights():
    n, din, hidden = 3, 5, 4
    x = Tensor(rand(n, din))
    h = Tensor(np.zeros((n, hidden)))
    c = Tensor(rand(n, hidden))
    w = Tensor(np.zeros((din + hidden, 4 * hidden)))
    b = Tensor(np.zeros(4 * hidden))
    h2, c2 = lstm_cell(x, h, c, w, b)
    # with zero weights: i=f=o=0.5, g=0, so c' = 0.5*c and h' = 0.5*tanh(c')
    assert np.allclose(c2.data, 0.5 * c.data)
    assert np.allclose(h2.data, 0.5 * np.tanh(0.5 * c.data))


def test_lstm_zero_weights_zero_cell():
    x = Tensor(rand(2, 3))
    h = Tensor(np.zeros((2, 4)))
    c = Tensor(np.zeros((2, 4)))
    w = Tensor(np.zeros((7, 16)))
    b = Tensor(np.zeros(16))
    h2, c2 = lstm_cell(x, h, c, w, b)
    assert np.all(h2.data == 0.0) and np.all(c2.data == 0.0)


def test_lstm_param_count():
    assert lstm_param_count(104, 1024) == 4_624_384
    assert lstm_param_count(1024, 1024) == 8_392_704


def test_grad_lstm_cell():
    n, din, hidden = 2, 3, 4
    x = t64(rand(n, din))
    h = t64(rand(n, hidden))
    c = t64(rand(n, hidden))
    w = t64(rand(din + hidden, 4 * hidden))
    b = t64(rand(4 * hidden))

    def build():
        h2, c2 = lstm_cell(x, h, c, w, b)
        return ad.add(weighted(h2, seed=1), weighted(c2, seed=2))

    fd_check(build, [x, h, c, w, b])


def test_lstm_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        lstm_cell(
            Tensor(rand(2, 3)),
            Tensor(rand(2, 4)),
            Tensor(rand(2, 4)),
            Tensor(rand(9, 16)),
            Tensor(np.zeros(16)),
        )


# ---------------------------------------------------------------------------
# init / optimizer


def test_he_init_std():
    rng = np.random.default_rng(0)
    s8 = he_init((1_000_000,), fan_in=8, rng=rng)
    assert abs(float(s8.data.std()) - 0.5) < 0.01
    rng = np.random.default_rng(1)
    s2 = he_init((100_000,), fan_in=2, rng=rng)
    assert abs(float(s2.data.std()) - 1.0) < 0.02


def test_he_init_reproducible():
    a = he_init((64,), 16, np.random.default_rng(42))
    b = he_init((64,), 16, np.random.default_rng(42))
    assert np.array_equal(a.data, b.data)


def test_adam_zero_grad_no_change():
    p = Tensor(rand(3, 3), requires_grad=True)
    before = p.data.copy()
    p.grad = np.zeros_like(p.data)
    opt = Adam(lr=0.1)
    for _ in range(5):
        opt.step({"p": p})
    assert np.array_equal(p.data, before)


def test_adam_scalar_hand_trace():
    p = Tensor(np.array([1.0]), requires_grad=True)
    p.grad = np.array([1.0], dtype=p.data.dtype)
    opt = Adam(lr=0.1, eps=1e-6)
    opt.step({"p": p})
    # mhat = vhat = 1 after one step, so delta = -lr / (1 + eps)
    assert np.isclose(p.data[0], 1.0 - 0.1 / (1.0 + 1e-6), atol=1e-9)


def test_adam_groups_independent():
    a = Tensor(np.array([0.0]), requires_grad=True)
    b = Tensor(np.array([0.0]), requires_grad=True)
    a.grad = np.array([1.0], dtype=a.data.dtype)
    b.grad = np.array([0.0], dtype=b.data.dtype)
    opt = Adam(lr=0.5)
    opt.step({"a": a, "b": b})
    assert a.data[0] != 0.0 and b.data[0] == 0.0


def test_determinism_full_step():
    def run():
        rng = np.random.default_rng(99)
        w = he_init((4, 4), 4, rng)
        x = Tensor(rng.normal(size=(2, 4)).astype(np.float32))
        loss = ad.reduce_mean(ad.mul(ad.matmul(x, w), ad.matmul(x, w)))
        backward(loss)
        opt = Adam(lr=0.01)
        opt.step({"w": w})
        return w.data.copy()

    assert np.array_equal(run(), run())
