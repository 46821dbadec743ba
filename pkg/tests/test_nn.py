import math

import numpy as np
import pytest

from trajgan import autodiff as ad
from trajgan.autodiff import ShapeError, Tensor
from trajgan.nn import Linear, LSTMCell, MLP, xavier_uniform


def test_xavier_bounds():
    rng = np.random.default_rng(0)
    vals = xavier_uniform(rng, 10, 30, (10, 30))
    limit = np.sqrt(6.0 / 40.0)
    assert np.all(np.abs(vals) <= limit)
    assert vals.std() > 0


def test_linear_shapes_and_bias():
    rng = np.random.default_rng(1)
    layer = Linear(rng, 3, 5)
    out = layer(Tensor(np.zeros((4, 3))))
    assert out.shape == (4, 5)
    np.testing.assert_array_equal(out.data, np.tile(layer.b.data, (4, 1)))


def test_mlp_layer_count_and_relu():
    rng = np.random.default_rng(2)
    mlp = MLP(rng, 4, [8, 8, 1])
    assert len(mlp.layers) == 3
    out = mlp(Tensor(np.random.default_rng(3).uniform(-1, 1, (5, 4))))
    assert out.shape == (5, 1)


def test_lstm_forget_bias_is_one():
    rng = np.random.default_rng(4)
    cell = LSTMCell(rng, 3, 6)
    np.testing.assert_array_equal(cell.b.data[6:12], np.ones(6))
    assert np.all(cell.b.data[:6] == 0)


def test_lstm_hand_computed_single_cell():
    # one input, one hidden unit; hand-set weights, one step of input 1.0
    rng = np.random.default_rng(5)
    cell = LSTMCell(rng, 1, 1)
    wx = np.array([[0.5, -0.25, 0.75, 0.1]])
    wh = np.array([[0.2, 0.3, -0.4, 0.6]])
    b = np.array([0.05, 1.0, -0.15, 0.0])
    cell.wx.data = wx.copy()
    cell.wh.data = wh.copy()
    cell.b.data = b.copy()
    h, c = cell.step(Tensor([[1.0]]), Tensor([[0.0]]), Tensor([[0.0]]))

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    i = sig(0.5 + 0.05)
    f = sig(-0.25 + 1.0)
    g = math.tanh(0.75 - 0.15)
    o = sig(0.1 + 0.0)
    c_ref = f * 0.0 + i * g
    h_ref = o * math.tanh(c_ref)
    assert c.data[0, 0] == pytest.approx(c_ref, abs=1e-12)
    assert h.data[0, 0] == pytest.approx(h_ref, abs=1e-12)


def test_lstm_zero_weights_zero_state():
    rng = np.random.default_rng(6)
    cell = LSTMCell(rng, 2, 4)
    cell.wx.data[:] = 0.0
    cell.wh.data[:] = 0.0
    cell.b.data[:] = 0.0
    h, c = cell.initial_state(3)
    for _ in range(5):
        h, c = cell.step(Tensor(np.zeros((3, 2))), h, c)
    np.testing.assert_array_equal(h.data, np.zeros((3, 4)))


def test_lstm_shape_check():
    rng = np.random.default_rng(7)
    cell = LSTMCell(rng, 2, 4)
    with pytest.raises(ShapeError):
        cell.step(Tensor(np.zeros((3, 2))), Tensor(np.zeros((3, 5))),
                  Tensor(np.zeros((3, 5))))


def test_module_params_discovery_and_prefixes():
    rng = np.random.default_rng(8)
    mlp = MLP(rng, 2, [3, 1])
    names = set(mlp.params("head"))
    assert names == {"head.layers.0.w", "head.layers.0.b",
                     "head.layers.1.w", "head.layers.1.b"}
    assert all(p.requires_grad for p in mlp.params().values())


def test_lstm_gradients_flow():
    rng = np.random.default_rng(9)
    cell = LSTMCell(rng, 2, 3)
    h, c = cell.initial_state(2)
    x = Tensor(rng.uniform(-1, 1, (2, 2)))
    for _ in range(3):
        h, c = cell.step(x, h, c)
    ad.backward(ad.mean_all(ad.square(h)))
    assert cell.wx.grad is not None and np.any(cell.wx.grad != 0)
    assert cell.wh.grad is not None
    assert cell.b.grad is not None
