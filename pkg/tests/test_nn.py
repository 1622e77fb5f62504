import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from dmca.errors import CheckpointError, CorruptedStateError, PoisonedUpdateError, ShapeError
from dmca.nn import (
    LSTM,
    MLP,
    SGD,
    Adam,
    Dense,
    LstmCellState,
    LstmRegressor,
    ParamSet,
    grad_check,
)


def test_dense_identity_and_fixed_points():
    ps = ParamSet()
    d = Dense(ps, "d", 3, 3, "linear")
    ps["d.W"][...] = np.eye(3)
    x = np.array([0.5, -1.0, 2.0])
    assert np.array_equal(d(x), x)

    ps2 = ParamSet()
    t = Dense(ps2, "t", 4, 2, "tanh", np.random.default_rng(1))
    assert np.array_equal(t(np.zeros(4)), np.zeros(2))

    ps3 = ParamSet()
    s = Dense(ps3, "s", 1, 1, "sigmoid")
    ps3["s.W"][...] = 1.0
    assert s(np.array([0.0]))[0] == 0.5


def test_dense_shape_error():
    d = Dense(ParamSet(), "d", 3, 2)
    with pytest.raises(ShapeError):
        d(np.zeros(4))


def test_dense_quadratic_gradient():
    rng = np.random.default_rng(0)
    ps = ParamSet()
    d = Dense(ps, "d", 4, 3, "linear", rng)
    ps["d.b"][...] = rng.normal(size=3)
    x = rng.normal(size=4)
    y, rec = d.forward(x)
    d.backward(rec, y)  # loss = 0.5 |y|^2
    W, b = ps["d.W"], ps["d.b"]
    assert np.allclose(ps.grad("d.W"), np.outer(x, x @ W + b))
    assert np.allclose(ps.grad("d.b"), x @ W + b)


def test_zero_upstream_gradient_gives_zero_grads():
    rng = np.random.default_rng(0)
    net = MLP([3, 5, 2], ["tanh", "linear"], rng)
    y, rec = net.forward(rng.normal(size=(4, 3)))
    net.backward(rec, np.zeros_like(y))
    assert net.params.grad_norm() == 0.0


def test_lstm_zero_weights_recurrence():
    ps = ParamSet()
    cell = LSTM(ps, "c", 2, 3, forget_bias=0.0)
    ps["c.W"][...] = 0.0
    prev = LstmCellState(c=np.array([1.0, -2.0, 0.5]), h=np.zeros(3))
    nxt = cell.step(np.array([0.3, -0.7]), prev)
    assert np.allclose(nxt.i, 0.5) and np.allclose(nxt.f, 0.5) and np.allclose(nxt.o, 0.5)
    assert np.allclose(nxt.c, 0.5 * prev.c)
    assert np.allclose(nxt.h, 0.5 * np.tanh(0.5 * prev.c))


def test_lstm_saturated_forget_keeps_cell():
    ps = ParamSet()
    cell = LSTM(ps, "c", 1, 2)
    ps["c.W"][...] = 0.0
    b = ps["c.b"]
    b[:2] = -50.0  # input gate closed
    b[2:4] = 50.0  # forget gate open
    prev = LstmCellState(c=np.array([0.7, -1.3]), h=np.zeros(2))
    assert np.allclose(cell.step(np.array([5.0]), prev).c, prev.c, atol=1e-12)


def test_lstm_step_matches_scalar_recurrence():
    rng = np.random.default_rng(3)
    ps = ParamSet()
    n_in, u = 2, 3
    cell = LSTM(ps, "c", n_in, u, rng)
    ps["c.b"][...] = rng.normal(size=4 * u)
    x, h0, c0 = rng.normal(size=n_in), rng.normal(size=u), rng.normal(size=u)
    got = cell.step(x, LstmCellState(c=c0, h=h0))

    W, b = ps["c.W"], ps["c.b"]
    v = list(x) + list(h0)
    c_ref, h_ref = np.empty(u), np.empty(u)
    for j in range(u):
        def pre(gate):
            col = gate * u + j
            return sum(v[r] * W[r, col] for r in range(len(v))) + b[col]
        i = 1 / (1 + np.exp(-pre(0)))
        f = 1 / (1 + np.exp(-pre(1)))
        o = 1 / (1 + np.exp(-pre(2)))
        g = np.tanh(pre(3))
        c_ref[j] = f * c0[j] + i * g
        h_ref[j] = o * np.tanh(c_ref[j])
    assert np.allclose(got.c, c_ref, rtol=1e-12, atol=1e-14)
    assert np.allclose(got.h, h_ref, rtol=1e-12, atol=1e-14)


def test_lstm_rejects_corrupt_state():
    cell = LSTM(ParamSet(), "c", 1, 2)
    with pytest.raises(CorruptedStateError):
        cell.step(np.zeros(1), LstmCellState(c=np.array([np.nan, 0.0]), h=np.zeros(2)))
    with pytest.raises(ShapeError):
        cell.step(np.zeros(1), LstmCellState.zeros(3))


def test_grad_check_linear_quadratic_exact():
    rng = np.random.default_rng(0)
    net = MLP([3, 2], ["linear"], rng)
    assert grad_check(net, rng.normal(size=(4, 3)), rng.normal(size=(4, 2))) < 1e-6


def test_grad_check_tanh_and_lstm():
    rng = np.random.default_rng(1)
    net = MLP([3, 6, 2], ["tanh", "linear"], rng)
    assert grad_check(net, rng.normal(size=(5, 3))) < 1e-4
    reg = LstmRegressor(5, 4, rng)
    assert grad_check(reg, rng.normal(size=(3, 5)), rng.normal(size=3)) < 1e-4


def test_grad_check_refuses_large_models():
    net = MLP([100, 100, 1], ["relu", "linear"])
    with pytest.raises(ValueError):
        grad_check(net, np.zeros((1, 100)))


def test_sgd_rule_and_zero_grad():
    ps = ParamSet()
    ps.add("p", np.zeros(1))
    ps.grad("p")[...] = 1.0
    SGD(ps, 0.1, clip_norm=None).step()
    assert ps["p"][0] == pytest.approx(-0.1)
    ps.zero_grad()
    before = ps["p"].copy()
    SGD(ps, 0.1).step()
    assert np.array_equal(ps["p"], before)


def test_adam_constant_gradient_step_tends_to_lr():
    ps = ParamSet()
    ps.add("p", np.zeros(1))
    opt = Adam(ps, lr=0.01, clip_norm=None)
    prev = 0.0
    for _ in range(2000):
        ps.grad("p")[...] = 3.0
        opt.step()
        step, prev = prev - ps["p"][0], ps["p"][0]
    assert step == pytest.approx(0.01, rel=1e-6)


def test_optimizer_refuses_poisoned_gradient():
    ps = ParamSet()
    ps.add("p", np.ones(2))
    ps.grad("p")[...] = [np.inf, 0.0]
    with pytest.raises(PoisonedUpdateError):
        Adam(ps, 0.1).step()
    assert np.array_equal(ps["p"], np.ones(2))


def test_global_norm_clip():
    ps = ParamSet()
    ps.add("p", np.zeros(2))
    ps.grad("p")[...] = [30.0, 40.0]
    SGD(ps, 1.0, clip_norm=5.0).step()
    assert np.allclose(ps["p"], [-3.0, -4.0])


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    net = MLP([3, 4, 1], ["relu", "linear"], rng)
    path = tmp_path / "net.params"
    net.params.save(path, {"seed": 0})
    loaded = ParamSet.load(path)
    for name in net.params:
        assert np.array_equal(loaded[name], net.params[name])
    assert ParamSet.read_meta(path)["seed"] == "0"


def test_checkpoint_errors(tmp_path):
    with pytest.raises(CheckpointError):
        ParamSet.load(tmp_path / "missing.params")
    bad = tmp_path / "bad.params"
    bad.write_text("not a checkpoint\n")
    with pytest.raises(CheckpointError):
        ParamSet.load(bad)


@settings(max_examples=30, deadline=None)
@given(tau=st.floats(0.001, 1.0), seed=st.integers(0, 1000))
def test_blend_stays_in_envelope(tau, seed):
    rng = np.random.default_rng(seed)
    a, b = ParamSet(), ParamSet()
    a.add("w", rng.normal(size=5))
    b.add("w", rng.normal(size=5))
    lo, hi = np.minimum(a["w"], b["w"]), np.maximum(a["w"], b["w"])
    a.blend_from(b, tau)
    assert np.all(a["w"] >= lo - 1e-12) and np.all(a["w"] <= hi + 1e-12)


@settings(max_examples=25, deadline=None)
@given(x=st.lists(st.floats(-50, 50), min_size=1, max_size=6))
def test_sigmoid_layer_matches_expit(x):
    ps = ParamSet()
    d = Dense(ps, "d", len(x), 1, "sigmoid", np.random.default_rng(0))
    xs = np.array(x)
    assert d(xs)[0] == pytest.approx(expit(xs @ ps["d.W"][:, 0]))
