import math

import numpy as np
import pytest

from fsmetric.errors import ShapeError, StateError
from gradsuite import CASES, TOLERANCE
from fsmetric.nn import (
    SGD, Conv2D, Flatten, Linear, MaxPool2D, Network, ReLU, Sigmoid, Softmax,
    contrastive_loss, cross_entropy, dumps_network, grad_check, kink_distance, loads_network,
)


def _kink_free(net, shape, rng, end=None, margin=1e-3):
    for _ in range(200):
        x = rng.normal(size=shape)
        if kink_distance(net, x, end=end) > margin:
            return x
    raise AssertionError("could not draw a kink-free input")


# forward -------------------------------------------------------------------

def test_identity_linear():
    lin = Linear(3, 3)
    lin.params["W"][:] = np.eye(3)
    lin.params["b"][:] = 0
    net = Network([lin], (3,))
    v = np.array([[0.5, -2.0, 7.0]], dtype=np.float32)
    np.testing.assert_array_equal(net.forward(v), v)


def test_relu_forward():
    net = Network([ReLU()], (3,))
    np.testing.assert_array_equal(net.forward(np.array([[-1.0, 0.0, 2.0]])), [[0, 0, 2]])


def test_ones_conv_sums_receptive_field():
    conv = Conv2D(1, 1, kernel_size=3)
    conv.params["W"][:] = 1
    out = Network([conv], (3, 3, 1)).forward(np.ones((1, 3, 3, 1)))
    assert out.shape == (1, 1, 1, 1)
    assert out[0, 0, 0, 0] == 9


def test_chain_shape_error_names_layers():
    with pytest.raises(ShapeError, match="layer 1"):
        Network([Linear(4, 3), Linear(5, 2)], (4,))


def test_input_shape_mismatch():
    net = Network([Linear(4, 3)], (4,))
    with pytest.raises(ShapeError):
        net.forward(np.zeros((2, 5)))


def test_forward_deterministic():
    rng = np.random.default_rng(1)
    net = Network([Conv2D(1, 4, 3, padding=1, rng=rng), ReLU(), MaxPool2D(2), Flatten(),
                   Linear(64, 3, rng=rng)], (8, 8, 1))
    x = rng.normal(size=(5, 8, 8, 1)).astype(np.float32)
    a = net.forward(x)
    b = net.forward(x)
    assert a.tobytes() == b.tobytes()


def test_softmax_rows_sum_to_one():
    x = np.random.default_rng(0).normal(scale=20, size=(50, 7)).astype(np.float32)
    out = Network([Softmax()], (7,)).forward(x)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)


# losses --------------------------------------------------------------------

def test_cross_entropy_uniform():
    loss, _ = cross_entropy(np.zeros((4, 3)), [0, 1, 2, 0])
    assert loss == pytest.approx(math.log(3), abs=1e-12)


def test_cross_entropy_saturated():
    loss, _ = cross_entropy(np.array([[1000.0, 0.0, 0.0]]), [0])
    assert 0 <= loss < 1e-6


def test_cross_entropy_worked_value():
    expected = -math.log(math.exp(3) / (math.exp(1) + math.exp(2) + math.exp(3)))
    loss, _ = cross_entropy(np.array([[1.0, 2.0, 3.0]]), [2])
    assert loss == pytest.approx(expected, abs=1e-12)
    assert loss == pytest.approx(0.4076, abs=1e-4)


@pytest.mark.parametrize("labels", [[3], [-1]])
def test_cross_entropy_bad_label(labels):
    with pytest.raises(ValueError):
        cross_entropy(np.zeros((1, 3)), labels)


def test_cross_entropy_empty_batch():
    with pytest.raises(ValueError):
        cross_entropy(np.zeros((0, 3)), [])


def test_contrastive_trivial_cases():
    h = np.array([0.3, -1.2])
    assert contrastive_loss(h, h, True)[0] == 0
    assert contrastive_loss(h, h + np.array([3.0, 0.0]), False, margin=1.0)[0] == 0
    assert contrastive_loss(h, h, False, margin=1.0)[0] == 1.0


def test_contrastive_shape_mismatch():
    with pytest.raises(ShapeError):
        contrastive_loss(np.zeros(3), np.zeros(2), True)


def test_contrastive_gradient_fd():
    rng = np.random.default_rng(3)
    h1, h2 = rng.normal(size=(6, 4)), rng.normal(scale=0.2, size=(6, 4))
    same = np.array([1, 0, 1, 0, 0, 1], bool)
    _, g1, g2 = contrastive_loss(h1, h2, same, margin=1.5)
    eps = 1e-6
    for arr, g in ((h1, g1), (h2, g2)):
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            fp = contrastive_loss(h1, h2, same, 1.5)[0]
            arr[idx] = orig - eps
            fm = contrastive_loss(h1, h2, same, 1.5)[0]
            arr[idx] = orig
            assert g[idx] == pytest.approx((fp - fm) / (2 * eps), abs=1e-7)


def test_losses_nonnegative():
    rng = np.random.default_rng(4)
    for _ in range(100):
        z = rng.normal(scale=5, size=(3, 4))
        assert cross_entropy(z, rng.integers(0, 4, 3))[0] >= 0
        assert contrastive_loss(z, rng.normal(size=(3, 4)), rng.random(3) < 0.5)[0] >= 0


# backward ------------------------------------------------------------------

def test_linear_weight_gradient_is_outer_product():
    lin = Linear(3, 2, rng=np.random.default_rng(0), dtype=np.float64)
    net = Network([lin], (3,))
    x = np.array([[1.0, -2.0, 0.5]])
    net.forward(x)
    net.backward(np.ones((1, 2)))
    np.testing.assert_array_equal(lin.grads["W"], np.outer(x[0], np.ones(2)))


def test_relu_backward_mask():
    net = Network([ReLU()], (2,))
    net.forward(np.array([[-1.0, 2.0]]))
    np.testing.assert_array_equal(net.backward(np.ones((1, 2)), input_grad=True), [[0, 1]])


def test_backward_without_forward():
    with pytest.raises(StateError):
        Network([Linear(2, 2)], (2,)).backward(np.ones((1, 2)))


def test_frozen_layers_record_no_gradient():
    rng = np.random.default_rng(0)
    net = Network([Linear(4, 5, rng=rng), ReLU(), Linear(5, 3, rng=rng)], (4,),
                  frozen=[True, False, False])
    x = rng.normal(size=(6, 4))
    _, g = cross_entropy(net.forward(x), rng.integers(0, 3, 6))
    dx = net.backward(g, input_grad=True)
    assert dx.shape == (6, 4) and np.any(dx != 0)
    assert not np.any(net.layers[0].grads["W"])
    assert np.any(net.layers[2].grads["W"])


# grad_check ----------------------------------------------------------------

def test_grad_check_linear_only():
    rng = np.random.default_rng(0)
    net = Network([Linear(6, 5, rng=rng), Linear(5, 3, rng=rng)], (6,))
    err = grad_check(net, rng.normal(size=(4, 6)), rng.integers(0, 3, 4), eps=1e-5)
    assert err < 1e-7


def test_grad_check_conv_relu_linear():
    rng = np.random.default_rng(1)
    net = Network([Conv2D(1, 3, 3, rng=rng), ReLU(), Flatten(), Linear(27, 3, rng=rng)],
                  (5, 5, 1))
    x = _kink_free(net, (3, 5, 5, 1), rng)
    assert grad_check(net, x, rng.integers(0, 3, 3)) < 1e-4


def test_grad_check_skips_frozen():
    rng = np.random.default_rng(2)
    net = Network([Linear(4, 4, rng=rng), Linear(4, 3, rng=rng)], (4,), frozen=[True, False])
    assert grad_check(net, rng.normal(size=(3, 4)), [0, 1, 2]) < 1e-7


def test_grad_check_refuses_large_networks():
    with pytest.raises(ValueError):
        grad_check(Network([Linear(200, 100)], (200,)), np.zeros((1, 200)), [0])


# optimizer -----------------------------------------------------------------

def _one_param_net(value):
    lin = Linear(1, 1, dtype=np.float32)
    lin.params["W"][:] = value
    lin.params["b"][:] = 0
    return Network([lin], (1,)), lin


def test_zero_lr_leaves_parameters():
    rng = np.random.default_rng(0)
    net = Network([Linear(3, 2, rng=rng)], (3,))
    before = [p.copy() for p in net.state()]
    net.forward(rng.normal(size=(2, 3)))
    net.backward(rng.normal(size=(2, 2)))
    SGD(lr=0.0).step(net)
    for a, b in zip(before, net.state()):
        np.testing.assert_array_equal(a, b)


def test_sgd_rule():
    net, lin = _one_param_net(1.0)
    net.forward(np.ones((1, 1), np.float32))
    net.backward(np.full((1, 1), 2.0))
    opt = SGD(lr=0.1)
    opt.step(net)
    assert lin.params["W"][0, 0] == np.float32(0.8)
    assert opt.steps == 1
    assert not np.any(lin.grads["W"])


def test_sgd_quadratic_step():
    net, lin = _one_param_net(0.0)
    w = net.forward(np.ones((1, 1), np.float32))
    net.backward(2 * (w - 3))  # d/dw (w - 3)^2
    SGD(lr=0.25).step(net)
    assert lin.params["W"][0, 0] == 1.5


def test_step_before_backward():
    net, _ = _one_param_net(1.0)
    with pytest.raises(StateError):
        SGD().step(net)


def test_frozen_parameters_bit_identical_after_training():
    rng = np.random.default_rng(5)
    net = Network([Linear(4, 6, rng=rng), ReLU(), Linear(6, 3, rng=rng)], (4,),
                  frozen=[True, False, False])
    frozen_before = net.layers[0].params["W"].tobytes()
    opt = SGD(lr=0.1, momentum=0.9)
    for _ in range(20):
        _, g = cross_entropy(net.forward(rng.normal(size=(8, 4))), rng.integers(0, 3, 8))
        net.backward(g)
        opt.step(net)
    assert net.layers[0].params["W"].tobytes() == frozen_before


# checkpoint ----------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    net = Network([Conv2D(2, 4, 3, padding=1, rng=rng), ReLU(), MaxPool2D(2), Flatten(),
                   Linear(4 * 4 * 4, 5, rng=rng), Sigmoid(), Softmax()], (8, 8, 2),
                  frozen=[True, True, True, False, False, False, False])
    blob = dumps_network(net, {"TEST": b"abc"})
    assert blob[:4] == b"FSEM"
    back, sections = loads_network(blob)
    assert sections == {"TEST": b"abc"}
    assert back.frozen == net.frozen and back.input_shape == net.input_shape
    assert [l.kind for l in back.layers] == [l.kind for l in net.layers]
    for a, b in zip(net.state(), back.state()):
        assert a.tobytes() == b.tobytes()
    assert dumps_network(back, {"TEST": b"abc"}) == blob


@pytest.mark.parametrize("case", sorted(CASES))
def test_grad_check_every_layer_kind_and_loss(case):
    for seed in range(2):
        assert CASES[case](seed) < TOLERANCE


def test_kink_distance_ignores_ties_among_clamped_zeros():
    net = Network([ReLU(), MaxPool2D(2)], (2, 2, 1))
    x = np.array([-1.0, -2.0, 3.0, -0.5]).reshape(1, 2, 2, 1)
    assert kink_distance(net, x) == 0.5
    x = np.full((1, 2, 2, 1), -1.0)
    assert kink_distance(net, x) == 1.0
