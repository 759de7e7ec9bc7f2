import numpy as np
import pytest

from econet import nn


def fd_close(fd, g, atol=1e-6, rtol=1e-4):
    return abs(fd - g) <= atol + rtol * (abs(fd) + abs(g))


def check_input_grad(layer, x, train=False, entries=8, h=1e-6, seed=0, **fwd):
    """Central finite differences on a scalar projection of the output."""
    rng = np.random.default_rng(seed)
    out = layer.forward(x.copy(), train=train, **fwd)
    proj = rng.normal(size=out.shape)
    dx = layer.backward(proj.copy())
    for _ in range(entries):
        idx = tuple(rng.integers(0, s) for s in x.shape)
        xp = x.copy()
        xp[idx] += h
        lp = float((layer.forward(xp, train=train, **fwd) * proj).sum())
        xm = x.copy()
        xm[idx] -= h
        lm = float((layer.forward(xm, train=train, **fwd) * proj).sum())
        layer.forward(x.copy(), train=train, **fwd)  # restore cache shape
        fd = (lp - lm) / (2 * h)
        assert fd_close(fd, dx[idx]), (idx, fd, dx[idx])


def check_param_grads(layer, x, train=False, entries=8, h=1e-6, seed=0, **fwd):
    rng = np.random.default_rng(seed)
    out = layer.forward(x.copy(), train=train, **fwd)
    proj = rng.normal(size=out.shape)
    layer.backward(proj.copy())
    grads = [g.copy() for g in layer.grads()]
    for p, g in zip(layer.params(), grads):
        for _ in range(entries):
            idx = tuple(rng.integers(0, s) for s in p.shape)
            orig = p[idx]
            p[idx] = orig + h
            lp = float((layer.forward(x.copy(), train=train, **fwd) * proj).sum())
            p[idx] = orig - h
            lm = float((layer.forward(x.copy(), train=train, **fwd) * proj).sum())
            p[idx] = orig
            fd = (lp - lm) / (2 * h)
            assert fd_close(fd, g[idx]), (idx, fd, g[idx])


class TestConv3d:
    def test_valid_shape_collapse(self):
        rng = np.random.default_rng(0)
        conv = nn.Conv3d(1, 128, 7, rng)
        out = conv.forward(rng.random((2, 7, 7, 7, 1), dtype=np.float32))
        assert out.shape == (2, 1, 1, 1, 128)

    def test_valid_shape_general(self):
        rng = np.random.default_rng(0)
        conv = nn.Conv3d(1, 4, 7, rng)
        out = conv.forward(rng.random((1, 9, 9, 9, 1), dtype=np.float32))
        assert out.shape == (1, 3, 3, 3, 4)

    def test_identity_kernel(self):
        rng = np.random.default_rng(0)
        conv = nn.Conv3d(1, 1, 1, rng)
        conv.weight[...] = 1.0
        conv.bias[...] = 0.0
        x = rng.random((2, 4, 5, 6, 1), dtype=np.float32)
        assert np.allclose(conv.forward(x), x)

    def test_same_padding_preserves_dims(self):
        rng = np.random.default_rng(0)
        conv = nn.Conv3d(1, 3, 5, rng)
        out = conv.forward(rng.random((1, 8, 9, 10, 1), dtype=np.float32),
                           padding="same")
        assert out.shape == (1, 8, 9, 10, 3)

    def test_kernel_too_large(self):
        rng = np.random.default_rng(0)
        conv = nn.Conv3d(1, 2, 7, rng)
        with pytest.raises(ValueError, match="larger than input"):
            conv.forward(rng.random((1, 5, 5, 5, 1), dtype=np.float32))

    def test_channel_mismatch(self):
        conv = nn.Conv3d(2, 2, 3, np.random.default_rng(0))
        with pytest.raises(ValueError, match="channels"):
            conv.forward(np.zeros((1, 3, 3, 3, 1), dtype=np.float32))

    def test_gradients_collapse_case(self):
        rng = np.random.default_rng(1)
        conv = nn.Conv3d(2, 3, 3, rng, dtype=np.float64)
        x = rng.normal(size=(4, 3, 3, 3, 2))
        check_input_grad(conv, x)
        check_param_grads(conv, x)

    def test_gradients_spatial_case(self):
        rng = np.random.default_rng(2)
        conv = nn.Conv3d(2, 3, 3, rng, dtype=np.float64)
        x = rng.normal(size=(2, 6, 5, 4, 2))
        check_input_grad(conv, x)
        check_param_grads(conv, x)

    def test_offset_path_matches_col_path(self):
        # same arithmetic through the wide-kernel fallback
        rng = np.random.default_rng(3)
        conv = nn.Conv3d(40, 2, 5, rng, dtype=np.float64)  # 5^3*40 = 5000 > 4096
        x = rng.normal(size=(1, 6, 6, 6, 40))
        out = conv.forward(x)
        from econet.nn.layers import _build_col
        ref = (_build_col(x, 5) @ conv.weight.reshape(-1, 2) + conv.bias)
        assert np.allclose(out.reshape(-1, 2), ref, atol=1e-10)

    def test_column_memo_reused_across_epochs(self):
        rng = np.random.default_rng(4)
        conv = nn.Conv3d(1, 2, 3, rng)
        x = rng.random((3, 5, 5, 5, 1), dtype=np.float32)
        conv.forward(x, train=True)
        first = conv._memo_col
        conv.forward(x, train=True)
        assert conv._memo_col is first
        # a different array of the same shape must not hit the memo
        y = x.copy()
        out_y = conv.forward(y, train=True)
        assert conv._memo_x is y
        assert np.allclose(out_y, conv.forward(x, train=False))


class TestBatchNorm:
    def test_train_normalizes_batch(self):
        rng = np.random.default_rng(0)
        bn = nn.BatchNorm(3, dtype=np.float64)
        x = rng.normal(loc=5.0, scale=3.0, size=(64, 3))
        out = bn.forward(x, train=True)
        assert np.allclose(out.mean(axis=0), 0.0, atol=1e-7)
        assert np.allclose(out.var(axis=0), 1.0, atol=1e-3)

    def test_eval_uses_running_stats(self):
        bn = nn.BatchNorm(2, dtype=np.float64)
        bn.running_mean[:] = [1.0, -2.0]
        bn.running_var[:] = [4.0, 0.25]
        x = np.array([[1.0, -2.0]])
        out = bn.forward(x, train=False)
        assert np.allclose(out, 0.0)

    def test_degenerate_batch(self):
        bn = nn.BatchNorm(2)
        with pytest.raises(nn.DegenerateBatchError):
            bn.forward(np.zeros((1, 2), dtype=np.float32), train=True)

    def test_running_stats_converge(self):
        # eval output at the true distribution mean drifts toward 0
        rng = np.random.default_rng(42)
        bn = nn.BatchNorm(1, dtype=np.float64)
        for _ in range(1000):
            bn.forward(rng.normal(0.7, 0.5, size=(1024, 1)), train=True)
        out = bn.forward(np.array([[0.7]]), train=False)
        assert abs(out[0, 0]) < 1e-2

    def test_gradients_train_and_eval(self):
        rng = np.random.default_rng(5)
        for train in (True, False):
            bn = nn.BatchNorm(4, dtype=np.float64)
            bn.running_mean[:] = rng.normal(size=4)
            bn.running_var[:] = 0.5 + rng.random(4)
            x = rng.normal(size=(10, 4))
            check_input_grad(bn, x, train=train)
            check_param_grads(bn, x, train=train)

    def test_spatial_axes_pooled(self):
        rng = np.random.default_rng(6)
        bn = nn.BatchNorm(2, dtype=np.float64)
        x = rng.normal(size=(3, 4, 4, 4, 2))
        out = bn.forward(x, train=True)
        flat = out.reshape(-1, 2)
        assert np.allclose(flat.mean(axis=0), 0.0, atol=1e-7)


class TestReLUDropout:
    def test_relu_forward_backward(self):
        relu = nn.ReLU()
        x = np.array([[-1.0, 2.0], [0.0, -3.0]])
        out = relu.forward(x.copy())
        assert np.array_equal(out, [[0.0, 2.0], [0.0, 0.0]])
        dx = relu.backward(np.ones_like(x))
        assert np.array_equal(dx, [[0.0, 1.0], [0.0, 0.0]])

    def test_dropout_rate_zero_identity(self):
        d = nn.Dropout(0.0)
        x = np.random.default_rng(0).normal(size=(5, 5))
        assert np.array_equal(d.forward(x, train=True, rng=np.random.default_rng(1)), x)

    def test_dropout_eval_identity(self):
        d = nn.Dropout(0.9)
        x = np.random.default_rng(0).normal(size=(5, 5))
        assert np.array_equal(d.forward(x, train=False), x)

    def test_dropout_keep_fraction(self):
        d = nn.Dropout(0.3)
        rng = np.random.default_rng(7)
        x = np.ones((1000, 1000))
        out = d.forward(x, train=True, rng=rng)
        kept = (out != 0).mean()
        assert abs(kept - 0.7) < 0.005
        # inverted scaling: survivors are x / (1 - rate)
        assert np.allclose(out[out != 0], 1.0 / 0.7)

    def test_dropout_backward_matches_mask(self):
        d = nn.Dropout(0.5)
        rng = np.random.default_rng(8)
        x = rng.normal(size=(50, 50))
        out = d.forward(x, train=True, rng=rng)
        dy = rng.normal(size=x.shape)
        dx = d.backward(dy.copy())
        assert np.allclose(dx[out == 0], 0.0)
        assert np.allclose(dx[out != 0], dy[out != 0] * 2.0)

    def test_dropout_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            nn.Dropout(1.0)


class TestLinear:
    def test_gradients(self):
        rng = np.random.default_rng(9)
        lin = nn.Linear(4, 3, rng, dtype=np.float64)
        x = rng.normal(size=(6, 4))
        check_input_grad(lin, x)
        check_param_grads(lin, x)

    def test_linear_equals_1x1x1_conv_everywhere(self):
        rng = np.random.default_rng(10)
        lin = nn.Linear(5, 3, rng, dtype=np.float64)
        conv = nn.Conv3d(5, 3, 1, rng, dtype=np.float64)
        conv.weight[0, 0, 0] = lin.weight
        conv.bias[...] = lin.bias
        vol = rng.normal(size=(1, 6, 7, 8, 5))
        out_conv = conv.forward(vol)
        out_lin = lin.forward(vol)
        assert np.array_equal(out_conv, out_lin)


class TestLoss:
    def test_symmetric_logits(self):
        loss, grad = nn.weighted_softmax_ce(np.zeros((1, 2)), np.array([1]), 1.0, 1.0)
        assert abs(loss - np.log(2.0)) < 1e-12
        assert np.allclose(grad, [[0.5, -0.5]])

    def test_weight_linearity(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(16, 2))
        y = np.ones(16, dtype=np.int64)
        l1, _ = nn.weighted_softmax_ce(logits, y, 1.0, 1.0)
        l2, _ = nn.weighted_softmax_ce(logits, y, 2.0, 1.0)
        assert abs(l2 - 2.0 * l1) < 1e-9

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        logits = rng.normal(size=(12, 2))
        y = rng.integers(0, 2, size=12)
        w_f, w_b = 1.7, 0.4
        loss, grad = nn.weighted_softmax_ce(logits, y, w_f, w_b)
        h = 1e-6
        for _ in range(20):
            i, j = rng.integers(0, 12), rng.integers(0, 2)
            lp = logits.copy()
            lp[i, j] += h
            lm = logits.copy()
            lm[i, j] -= h
            fd = (nn.weighted_softmax_ce(lp, y, w_f, w_b)[0]
                  - nn.weighted_softmax_ce(lm, y, w_f, w_b)[0]) / (2 * h)
            assert fd_close(fd, grad[i, j], rtol=1e-4)

    def test_clamp_keeps_loss_finite(self):
        logits = np.array([[100.0, -100.0]])
        loss, _ = nn.weighted_softmax_ce(logits, np.array([1]), 1.0, 1.0)
        assert np.isfinite(loss)
        assert abs(loss - (-np.log(nn.PROB_CLAMP))) < 1e-6

    def test_rejects_bad_labels(self):
        with pytest.raises(ValueError):
            nn.weighted_softmax_ce(np.zeros((1, 2)), np.array([2]), 1.0, 1.0)

    def test_softmax_simplex(self):
        rng = np.random.default_rng(2)
        p = nn.softmax(rng.normal(scale=5, size=(100, 2)), axis=1)
        assert np.allclose(p.sum(axis=1), 1.0)
        assert (p > 0).all() and (p < 1).all()

    def test_softmax_saturation_stays_finite(self):
        p = nn.softmax(np.array([[800.0, -800.0]]), axis=1)
        assert np.isfinite(p).all() and abs(p.sum() - 1.0) < 1e-12


class TestAdam:
    def test_zero_gradient_fixed_point(self):
        p = np.ones(4)
        st = nn.init_adam([p])
        nn.adam_step([p], [np.zeros(4)], st, 0.1)
        assert np.array_equal(p, np.ones(4))

    def test_first_step_magnitude(self):
        p = np.zeros(3)
        g = np.array([0.5, -2.0, 10.0])
        st = nn.init_adam([p])
        nn.adam_step([p], [g], st, 0.01)
        # bias-corrected moments cancel |g|: step ~= lr * sign(g)
        assert np.allclose(np.abs(p), 0.01, rtol=1e-6)
        assert np.array_equal(np.sign(p), -np.sign(g))

    def test_shape_mismatch(self):
        p = np.zeros(3)
        st = nn.init_adam([p])
        with pytest.raises(ValueError):
            nn.adam_step([p], [np.zeros(4)], st, 0.1)


class TestSchedule:
    def test_breakpoints(self):
        sched = nn.LrSchedule(points=((0, 0.01), (140, 0.001)))
        assert sched.lr_at(0) == 0.01
        assert sched.lr_at(139) == 0.01
        assert sched.lr_at(140) == 0.001
        assert sched.lr_at(199) == 0.001

    def test_requires_epoch_zero(self):
        with pytest.raises(ValueError):
            nn.LrSchedule(points=((10, 0.1),))

    def test_json_round_trip(self):
        sched = nn.LrSchedule(points=((0, 0.05), (30, 0.01)))
        assert nn.LrSchedule.from_json(sched.to_json()) == sched
