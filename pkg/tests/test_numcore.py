import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dmg import numcore as nc
from dmg.numcore import GRUWeights, LSTMWeights, Tensor
from helpers import naive_matmul, numeric_grad, rel_error


def param(a):
    return Tensor(np.array(a, dtype=float), requires_grad=True)


# -- matmul ------------------------------------------------------------------

def test_matmul_identity():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(nc.matmul(a, np.eye(2)).data, [[1, 2], [3, 4]])


def test_matmul_scalar_case():
    assert nc.matmul([[2.0]], [[3.0]]).data.tolist() == [[6.0]]


@pytest.mark.parametrize("shape", [(3, 4, 2), (8, 8, 8)])
def test_matmul_matches_triple_loop(shape):
    m, k, n = shape
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(m, k)), rng.normal(size=(k, n))
    np.testing.assert_allclose(nc.matmul(a, b).data, naive_matmul(a, b), rtol=0, atol=1e-12)


def test_matmul_mismatch_names_shapes():
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 3\)"):
        nc.matmul(np.ones((2, 3)), np.ones((2, 3)))


# -- softmax -----------------------------------------------------------------

def test_softmax_symmetric():
    np.testing.assert_allclose(nc.softmax([0.0, 0.0]).data, [0.5, 0.5])


def test_softmax_log_ratio():
    np.testing.assert_allclose(nc.softmax([math.log(1), math.log(3)]).data, [0.25, 0.75], atol=1e-15)


def test_softmax_empty_raises():
    with pytest.raises(ValueError):
        nc.softmax(np.zeros(0))


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, st.integers(1, 12), elements=st.floats(-50, 50)),
    st.floats(-100, 100),
)
def test_softmax_shift_invariant_and_normalised(x, c):
    p = nc.softmax(x).data
    assert np.all(p >= 0)
    assert abs(p.sum() - 1) < 1e-9
    np.testing.assert_allclose(nc.softmax(x + c).data, p, atol=1e-12)


def test_softmax_large_inputs_stay_finite():
    p = nc.softmax([1000.0, 1001.0, -1000.0]).data
    assert np.all(np.isfinite(p))


# -- LSTM --------------------------------------------------------------------

def lstm_weights(rng, d, h, scale=0.5):
    return LSTMWeights(
        param(rng.uniform(-scale, scale, (d, 4 * h))),
        param(rng.uniform(-scale, scale, (h, 4 * h))),
        param(rng.uniform(-scale, scale, 4 * h)),
    )


def scalar_lstm(x, h, c, wx, wh, b):
    H = len(h)
    sig = lambda z: 1 / (1 + math.exp(-z))
    h_new, c_new = [], []
    for u in range(H):
        def pre(gate):
            col = gate * H + u
            s = b[col]
            for d in range(len(x)):
                s += x[d] * wx[d][col]
            for k in range(H):
                s += h[k] * wh[k][col]
            return s
        i, f, g, o = sig(pre(0)), sig(pre(1)), math.tanh(pre(2)), sig(pre(3))
        cu = f * c[u] + i * g
        c_new.append(cu)
        h_new.append(o * math.tanh(cu))
    return h_new, c_new


def test_lstm_zero_everything():
    w = LSTMWeights(param(np.zeros((3, 8))), param(np.zeros((2, 8))), param(np.zeros(8)))
    h, c = nc.lstm_cell(np.zeros(3), np.zeros(2), np.zeros(2), w)
    np.testing.assert_array_equal(h.data, 0)
    np.testing.assert_array_equal(c.data, 0)


def test_lstm_matches_scalar_gate_equations():
    rng = np.random.default_rng(1)
    w = lstm_weights(rng, 3, 2)
    x, h0, c0 = rng.normal(size=3), rng.normal(size=2), rng.normal(size=2)
    h, c = nc.lstm_cell(x, h0, c0, w)
    hs, cs = scalar_lstm(x, h0, c0, w.wx.data, w.wh.data, w.b.data)
    np.testing.assert_allclose(h.data, hs, atol=1e-14)
    np.testing.assert_allclose(c.data, cs, atol=1e-14)


@pytest.mark.parametrize("batched", [False, True])
def test_lstm_gradients_finite_difference(batched):
    rng = np.random.default_rng(2)
    w = lstm_weights(rng, 3, 2)
    shape = (4,) if batched else ()
    x = param(rng.normal(size=shape + (3,)))
    h0 = param(rng.normal(size=shape + (2,)))
    c0 = param(rng.normal(size=shape + (2,)))

    def loss():
        h, c = nc.lstm_cell(x, h0, c0, w)
        return nc.add(nc.sum(h), nc.mul(nc.sum(c), 0.3))

    leaves = {"x": x, "h": h0, "c": c0, "wx": w.wx, "wh": w.wh, "b": w.b}
    grads = nc.backward(loss(), leaves)
    for name, t in leaves.items():
        fd = numeric_grad(lambda: loss().item(), t)
        assert rel_error(grads[name], fd) < 1e-4, name


def test_lstm_dimension_mismatch():
    w = lstm_weights(np.random.default_rng(0), 3, 2)
    with pytest.raises(ValueError):
        nc.lstm_cell(np.zeros(4), np.zeros(2), np.zeros(2), w)
    with pytest.raises(ValueError):
        nc.lstm_cell(np.zeros(3), np.zeros(2), np.zeros(3), w)


# -- GRU ---------------------------------------------------------------------

def gru_weights(rng, d, h, scale=0.5):
    return GRUWeights(
        param(rng.uniform(-scale, scale, (d, 3 * h))),
        param(rng.uniform(-scale, scale, (h, 3 * h))),
        param(rng.uniform(-scale, scale, 3 * h)),
        param(rng.uniform(-scale, scale, 3 * h)),
    )


def scalar_gru(x, h, wx, wh, bx, bh):
    H = len(h)
    sig = lambda z: 1 / (1 + math.exp(-z))

    def lin(vec, w, b, col):
        return b[col] + sum(vec[d] * w[d][col] for d in range(len(vec)))

    out = []
    for u in range(H):
        r = sig(lin(x, wx, bx, u) + lin(h, wh, bh, u))
        z = sig(lin(x, wx, bx, H + u) + lin(h, wh, bh, H + u))
        n = math.tanh(lin(x, wx, bx, 2 * H + u) + r * lin(h, wh, bh, 2 * H + u))
        out.append((1 - z) * n + z * h[u])
    return out


def test_gru_zero_everything():
    w = GRUWeights(param(np.zeros((3, 6))), param(np.zeros((2, 6))), param(np.zeros(6)), param(np.zeros(6)))
    np.testing.assert_array_equal(nc.gru_cell(np.zeros(3), np.zeros(2), w).data, 0)


def test_gru_matches_scalar_gate_equations():
    rng = np.random.default_rng(3)
    w = gru_weights(rng, 3, 2)
    x, h0 = rng.normal(size=3), rng.normal(size=2)
    h = nc.gru_cell(x, h0, w)
    ref = scalar_gru(x, h0, w.wx.data, w.wh.data, w.bx.data, w.bh.data)
    np.testing.assert_allclose(h.data, ref, atol=1e-14)


@pytest.mark.parametrize("batched", [False, True])
def test_gru_gradients_finite_difference(batched):
    rng = np.random.default_rng(4)
    w = gru_weights(rng, 3, 2)
    shape = (5,) if batched else ()
    x = param(rng.normal(size=shape + (3,)))
    h0 = param(rng.normal(size=shape + (2,)))

    def loss():
        return nc.sum(nc.gru_cell(x, h0, w))

    leaves = {"x": x, "h": h0, "wx": w.wx, "wh": w.wh, "bx": w.bx, "bh": w.bh}
    grads = nc.backward(loss(), leaves)
    for name, t in leaves.items():
        fd = numeric_grad(lambda: loss().item(), t)
        assert rel_error(grads[name], fd) < 1e-4, name


# -- backward ----------------------------------------------------------------

def test_backward_square():
    x = param(3.0)
    assert nc.backward(nc.mul(x, x), [x])[0] == pytest.approx(6.0)


def test_backward_cross_entropy_of_softmax():
    rng = np.random.default_rng(5)
    z = param(rng.normal(size=6))
    t = 2

    def loss():
        return nc.mul(nc.log(nc.pick(nc.softmax(z), t)), -1.0)

    (g,) = nc.backward(loss(), [z])
    fd = numeric_grad(lambda: loss().item(), z)
    expected = nc.softmax(z.data).data - np.eye(6)[t]
    assert rel_error(fd, expected) < 1e-6
    np.testing.assert_allclose(g, expected, atol=1e-12)


def test_backward_constant_gives_zero():
    x = param([1.0, 2.0])
    c = nc.add(nc.mul(Tensor(2.0), 3.0), 0.0)
    loss = nc.add(c, nc.mul(nc.sum(nc.mul(x, 0.0)), 1.0))
    (g,) = nc.backward(loss, [x])
    np.testing.assert_array_equal(g, 0)


def test_unreachable_parameter_gets_zero():
    x, y = param(2.0), param(5.0)
    grads = nc.backward(nc.mul(x, x), {"x": x, "y": y})
    assert grads["y"] == 0.0
    assert grads["x"] == pytest.approx(4.0)


def test_backward_rejects_non_scalar():
    x = param([1.0, 2.0])
    with pytest.raises(ValueError):
        nc.backward(nc.mul(x, 2.0))


def test_fan_out_accumulates():
    x = param(1.5)
    y = nc.add(nc.mul(x, x), nc.mul(x, 4.0))
    assert nc.backward(y, [x])[0] == pytest.approx(2 * 1.5 + 4)


def test_tape_is_reverse_topological():
    x = param(1.0)
    a = nc.tanh(x)
    b = nc.mul(a, a)
    c = nc.add(b, a)
    tape = nc.Tape(c)
    order = [id(n) for n in tape.nodes]
    assert order.index(id(c)) < order.index(id(b)) < order.index(id(a)) < order.index(id(x))


def test_composite_ops_gradients():
    rng = np.random.default_rng(6)
    a = param(rng.normal(size=(3, 4)))
    b = param(rng.normal(size=(4, 5)))
    e = param(rng.normal(size=(6, 4)))
    m = np.array([1.0, 0.0, 1.0])

    def loss():
        ab = nc.matmul(a, b)
        s = nc.log_softmax(ab)
        emb = nc.take_rows(e, np.array([[0, 2], [2, 5]]))
        st_ = nc.stack([nc.sigmoid(a[0]), nc.exp(nc.mul(a[1], 0.1))], axis=0)
        cat = nc.concat([st_, nc.reshape(emb, (2, 8))], axis=1)
        bl = nc.blend(m, nc.tanh(a), nc.mul(a, a))
        return nc.add(
            nc.add(nc.sum(nc.pick(s, np.array([1, 0, 4]))), nc.mean(nc.mul(cat, cat))),
            nc.sum(nc.mul(bl, nc.softmax(a, axis=0))),
        )

    grads = nc.backward(loss(), {"a": a, "b": b, "e": e})
    for name, t in {"a": a, "b": b, "e": e}.items():
        assert rel_error(grads[name], numeric_grad(lambda: loss().item(), t)) < 1e-6, name


def test_batched_matmul_weight_gradient():
    rng = np.random.default_rng(7)
    x = param(rng.normal(size=(2, 3, 4)))
    w = param(rng.normal(size=(4, 2)))

    def loss():
        return nc.sum(nc.tanh(nc.matmul(x, w)))

    grads = nc.backward(loss(), {"x": x, "w": w})
    for name, t in {"x": x, "w": w}.items():
        assert rel_error(grads[name], numeric_grad(lambda: loss().item(), t)) < 1e-6


def test_tape_replay_deterministic():
    def run():
        rng = nc.make_rng(11)
        w = lstm_weights(rng, 3, 4)
        x = rng.normal(size=(5, 3))
        h = c = np.zeros((5, 4))
        for _ in range(3):
            h, c = nc.lstm_cell(x, h, c, w)
        loss = nc.sum(nc.mul(h, h))
        g = nc.backward(loss, [w.wx])[0]
        return loss.item(), g.tobytes()

    assert run() == run()


def test_no_grad_records_nothing():
    x = param(2.0)
    with nc.no_grad():
        y = nc.mul(x, x)
    assert not y.requires_grad


# -- Adam --------------------------------------------------------------------

def test_adam_zero_gradient_noop():
    p = {"w": np.array([1.0, -2.0])}
    new, _ = nc.adam_step(p, {"w": np.zeros(2)}, nc.Moments(), lr=0.1, step=1)
    np.testing.assert_array_equal(new["w"], p["w"])


def test_adam_first_step_size_is_lr():
    new, mom = nc.adam_step({"w": np.array(1.0)}, {"w": np.array(1.0)}, nc.Moments(), lr=0.1, step=1)
    # bias-corrected m/sqrt(v) == 1 on the first step
    assert new["w"] == pytest.approx(1.0 - 0.1 * 1.0 / (1.0 + 1e-8), abs=1e-15)
    assert mom.first["w"] == pytest.approx(0.1)
    assert mom.second["w"] == pytest.approx(0.001)


def test_adam_rejects_non_finite():
    with pytest.raises(FloatingPointError, match="bad"):
        nc.adam_step({"bad": np.zeros(2)}, {"bad": np.array([0.0, np.nan])}, nc.Moments(), 0.1, 1)


def test_adam_rejects_bad_lr():
    with pytest.raises(ValueError):
        nc.adam_step({"w": np.zeros(1)}, {"w": np.zeros(1)}, nc.Moments(), 0.0, 1)


def test_adam_runs_bit_identical():
    def run():
        rng = nc.make_rng(3)
        w = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
        opt = nc.Adam({"w": w}, lr=0.01)
        for _ in range(20):
            loss = nc.sum(nc.tanh(nc.matmul(w, w)))
            opt.step(nc.backward(loss, {"w": w}))
        return w.data.tobytes()

    assert run() == run()


def test_adam_minimises_quadratic():
    w = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    opt = nc.Adam({"w": w}, lr=0.1)
    for _ in range(300):
        opt.step(nc.backward(nc.sum(nc.mul(w, w)), {"w": w}))
    assert np.all(np.abs(w.data) < 1e-2)


def test_rng_streams_repeat():
    assert nc.make_rng(42).random(5).tolist() == nc.make_rng(42).random(5).tolist()


def test_sum_unordered_is_order_free_and_differentiable():
    rng = np.random.default_rng(9)
    x = nc.Tensor(rng.normal(size=(3, 7, 2)) * 10.0 ** rng.integers(-8, 8, size=(3, 7, 2)), True)
    base = nc.sum_unordered(x, axis=1).data
    for _ in range(20):
        perm = rng.permutation(7)
        assert np.array_equal(nc.sum_unordered(nc.Tensor(x.data[:, perm]), axis=1).data, base)
    np.testing.assert_allclose(base, x.data.sum(axis=1), rtol=1e-12)
    w = rng.normal(size=(3, 2))
    f = lambda: float((nc.sum_unordered(x, axis=1).data * w).sum())
    g = nc.backward(nc.sum(nc.mul(nc.sum_unordered(x, axis=1), w)), [x])[0]
    assert rel_error(g, numeric_grad(f, x, eps=1e-3)) < 1e-6
