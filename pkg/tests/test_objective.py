import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from coane.encoder import DecoderParams, decoder_backward, decoder_forward, init_parameters
from coane.objective import (Adam, NonFiniteError, adam_step, attribute_loss, graph_likelihood, log_sigmoid,
                             negative_loss, positive_loss, total_loss_and_gradients)

from gradcheck import check_instance, make_instance
from oracles import central_difference, relative_error


def test_log_sigmoid_stable():
    x = np.array([-1e3, -30.0, 0.0, 30.0, 1e3])
    y = log_sigmoid(x)
    assert np.all(np.isfinite(y))
    assert y[2] == -math.log(2)
    assert abs(y[0] + 1e3) < 1e-9 and y[-1] == 0.0


def test_positive_loss_at_zero_score():
    Z = np.zeros((2, 4))
    T = sp.csr_matrix(np.array([[0.0, 0.7], [0.0, 0.0]]))
    loss, dZ = positive_loss(Z, T, np.array([0, 1]))
    assert abs(loss - 0.7 * math.log(2)) < 1e-15
    loss, _ = positive_loss(Z, T, np.array([1]))
    assert loss == 0.0


def test_positive_loss_scalar_reference():
    Z = np.array([[1.0, -0.5, 0.2, 0.3], [0.4, 0.1, -1.0, 2.0], [0.0, 1.5, 0.5, -0.5]])
    T = sp.csr_matrix(np.array([[0, 1.5, 0.25], [0.5, 0, 0], [0, 2.0, 0]]))
    loss, _ = positive_loss(Z, T, np.array([0, 1, 2]))
    ref = 0.0
    for i, j, w in [(0, 1, 1.5), (0, 2, 0.25), (1, 0, 0.5), (2, 1, 2.0)]:
        s = Z[i, 0] * Z[j, 2] + Z[i, 1] * Z[j, 3]
        ref += -w * math.log(1 / (1 + math.exp(-s)))
    assert abs(loss - ref) < 1e-12
    assert loss >= 0


def test_negative_loss_examples():
    Z = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    loss, _ = negative_loss(Z, np.array([0]), [np.array([1])], a=1.0)
    assert loss == 0.0
    loss, _ = negative_loss(Z, np.array([0]), [np.array([2])], a=1.0)
    assert loss == 1.0
    loss, dZ = negative_loss(Z, np.array([0]), [np.array([2])], a=0.0)
    assert loss == 0.0 and not dZ.any()


def test_negative_loss_scalar_reference():
    rng = np.random.default_rng(3)
    Z = rng.normal(size=(6, 4))
    batch = np.array([1, 4])
    negs = [np.array([0, 4, 5]), np.array([2, 2])]
    loss, _ = negative_loss(Z, batch, negs, a=0.3)
    ref = sum(0.3 * float(Z[i] @ Z[j]) ** 2 for i, js in zip(batch, negs) for j in js)
    assert abs(loss - ref) < 1e-12


def test_attribute_loss_examples():
    p = DecoderParams(np.zeros((2, 3)), np.zeros(2), np.zeros((2, 2)), np.zeros(2), np.zeros((4, 2)), np.zeros(4))
    X = np.zeros((5, 4))
    assert attribute_loss(np.ones((5, 3)), X, p, 1.0)[0] == 0.0
    p.b3[:] = 1.0
    assert attribute_loss(np.ones((5, 3)), X, p, 1.0)[0] == 1.0


def test_decoder_gradient_finite_difference():
    rng = np.random.default_rng(0)
    m = init_parameters(3, 4, 1, 5, 4, seed=0)
    p = m.decoder
    for b in (p.b1, p.b2, p.b3):
        b[:] = rng.normal(scale=0.3, size=b.shape)
    Zb = rng.normal(size=(6, 4))
    X = rng.normal(size=(6, 3))
    loss, dZ, grads = attribute_loss(Zb, X, p, 3.0)
    f = lambda: attribute_loss(Zb, X, p, 3.0)[0]
    for k, t in p.tensors().items():
        assert relative_error(grads[k], central_difference(f, t)) < 1e-5, k
    assert relative_error(dZ, central_difference(f, Zb)) < 1e-5


@pytest.mark.parametrize("seed", range(6))
def test_full_gradient_finite_difference(seed):
    errors = check_instance(seed)
    assert max(errors.values()) < 1e-4, errors


def test_term_switching():
    inst = make_instance(4)
    out = total_loss_and_gradients(**{**inst, "a": 0.0, "gamma": 0.0})
    assert out.l_obj == out.l_pos and out.l_neg == 0 and out.l_att == 0
    for k in ("W1", "b1", "W2", "b2", "W3", "b3"):
        assert not out.grads[k].any()
    only_pos = total_loss_and_gradients(**{**inst, "a": 0.0, "gamma": 0.0})
    no_pos = total_loss_and_gradients(**{**inst, "pos_weight": 0.0})
    full = total_loss_and_gradients(**inst)
    np.testing.assert_allclose(only_pos.grads["theta"] + no_pos.grads["theta"], full.grads["theta"],
                               rtol=1e-10, atol=1e-12)


def test_batch_rows_reencoded():
    inst = make_instance(7)
    total_loss_and_gradients(**inst)
    Zb = inst["aggregator"].encode(inst["model"].theta, inst["batch"])
    np.testing.assert_array_equal(inst["model"].Z[inst["batch"]], Zb)


def test_graph_likelihood_loop_reference():
    rng = np.random.default_rng(5)
    Z = rng.normal(size=(4, 4))
    D = rng.integers(0, 3, size=(4, 4)).astype(float)
    E = np.array([[0, 1, 0, 0], [1, 0, 1, 0], [0, 1, 0, 1], [0, 0, 1, 0]])
    ref = 0.0
    sig = lambda x: 1 / (1 + math.exp(-x))
    for i in range(4):
        for j in range(4):
            if i == j:
                continue
            s = Z[i, :2] @ Z[j, 2:]
            ref += D[i, j] * math.log(sig(s))
            if E[i, j] == 0:
                ref += math.log(sig(1 - s))
    assert abs(graph_likelihood(Z, D, sp.csr_matrix(E)) - ref) < 1e-10


def test_adam_hand_recursion():
    x = np.array([1.0])
    opt = Adam(lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
    m = v = 0.0
    ref = 1.0
    for t, g in enumerate([0.5, -1.0, 2.0], start=1):
        opt.step({"x": x}, {"x": np.array([g])})
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.1 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert abs(x[0] - ref) < 1e-15
    assert opt.t == 3


def test_adam_zero_gradient_fixed_point():
    x = np.array([1.0, -2.0])
    opt = adam_step({"x": x}, {"x": np.zeros(2)}, Adam())
    np.testing.assert_array_equal(x, [1.0, -2.0])
    assert opt.t == 1


def test_adam_constant_gradient_limit():
    x = np.array([0.0, 0.0])
    opt = Adam(lr=1e-3)
    prev = x.copy()
    for _ in range(2000):
        prev = x.copy()
        opt.step({"x": x}, {"x": np.array([3.0, -0.01])})
    np.testing.assert_allclose(x - prev, [-1e-3, 1e-3], rtol=1e-4)


def test_adam_non_finite_names_tensor():
    opt = Adam()
    with pytest.raises(NonFiniteError, match="W2"):
        opt.step({"W2": np.zeros(2)}, {"W2": np.array([np.nan, 0.0])})


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_losses_non_negative(seed):
    inst = make_instance(seed)
    out = total_loss_and_gradients(**inst)
    assert out.l_pos >= 0 and out.l_neg >= 0 and out.l_att >= 0
    assert out.l_obj == out.l_pos + out.l_neg + out.l_att
