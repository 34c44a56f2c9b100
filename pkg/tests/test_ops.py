import math

import numpy as np
import pytest

from detnet import AutogradError, ShapeError, Tensor, no_grad, ops


def t(a, grad=False, dtype=np.float32):
    return Tensor(np.asarray(a, dtype=dtype), requires_grad=grad)


def cparams(w, b=None, stride=1, padding=0, dilation=1):
    return ops.ConvParams(t(w), None if b is None else t(b), stride, padding, dilation)


# -- conv2d -------------------------------------------------------------------

def test_conv_identity_kernel():
    x = np.random.default_rng(0).standard_normal((1, 2, 5, 5)).astype(np.float32)
    w = np.eye(2, dtype=np.float32).reshape(2, 2, 1, 1)
    np.testing.assert_array_equal(ops.conv2d(t(x), cparams(w)).data, x)


def test_conv_stage5_body_shape():
    x = t(np.zeros((1, 1024, 14, 14)))
    w = np.zeros((256, 1024, 3, 3), dtype=np.float32)
    assert ops.conv2d(x, cparams(w, padding=2, dilation=2)).shape == (1, 256, 14, 14)


def test_conv_bias_added():
    x = t(np.zeros((1, 1, 3, 3)))
    out = ops.conv2d(x, cparams(np.zeros((2, 1, 1, 1)), b=[1.5, -2.0]))
    np.testing.assert_array_equal(out.data[0, :, 0, 0], [1.5, -2.0])


@pytest.mark.parametrize("w_shape,x_shape,kw,dim", [
    ((4, 3, 3, 3), (1, 2, 8, 8), {}, "c_in"),
    ((4, 2, 7, 7), (1, 2, 4, 8), {}, "h"),
    ((4, 2, 3, 3), (1, 2, 8, 4), {"dilation": 3}, "w"),
])
def test_conv_shape_errors_name_dimension(w_shape, x_shape, kw, dim):
    with pytest.raises(ShapeError) as exc:
        ops.conv2d(t(np.zeros(x_shape)), cparams(np.zeros(w_shape), **kw))
    assert exc.value.dim == dim


def test_conv_bias_length_error():
    with pytest.raises(ShapeError) as exc:
        ops.conv2d(t(np.zeros((1, 1, 3, 3))), cparams(np.zeros((2, 1, 1, 1)), b=[1.0]))
    assert exc.value.dim == "c_out"


# -- batch norm ---------------------------------------------------------------

def bn(c, mode, **kw):
    p = ops.BatchNormParams.identity(c, mode=mode)
    for k, v in kw.items():
        setattr(p, k, v)
    return p


def test_bn_frozen_identity_stats():
    x = np.random.default_rng(1).standard_normal((2, 3, 4, 4)).astype(np.float32)
    out = ops.batch_norm(t(x), bn(3, "frozen")).data
    np.testing.assert_allclose(out, x / np.sqrt(1 + 1e-5), rtol=1e-6)


def test_bn_training_constant_input_gives_beta():
    x = np.full((2, 2, 3, 3), 4.0, dtype=np.float32)
    p = bn(2, "training")
    p.beta.data[:] = [0.5, -1.0]
    out = ops.batch_norm(t(x), p).data
    np.testing.assert_allclose(out[:, 0], 0.5)
    np.testing.assert_allclose(out[:, 1], -1.0)


def test_bn_training_hand_example():
    x = np.array([1, 2, 3, 4], dtype=np.float32).reshape(1, 1, 2, 2)
    p = bn(1, "training")
    out = ops.batch_norm(t(x), p).data.reshape(-1)
    np.testing.assert_allclose(out, [-1.3416, -0.4472, 0.4472, 1.3416], atol=1e-3)
    # mean 2.5, biased var 1.25, running = 0.9*old + 0.1*batch
    np.testing.assert_allclose(p.running_mean, [0.25], rtol=1e-6)
    np.testing.assert_allclose(p.running_var, [0.9 + 0.125], rtol=1e-6)


def test_bn_frozen_never_mutates_stats():
    p = bn(3, "frozen")
    p.running_mean[:] = [0.1, -0.2, 0.3]
    p.running_var[:] = [1.5, 0.5, 2.0]
    before = (p.running_mean.copy(), p.running_var.copy())
    x = t(np.random.default_rng(2).standard_normal((4, 3, 5, 5)), grad=True)
    for _ in range(3):
        ops.tensor_sum(ops.batch_norm(x, p)).backward()
    assert p.running_mean.tobytes() == before[0].tobytes()
    assert p.running_var.tobytes() == before[1].tobytes()


def test_bn_channel_mismatch():
    with pytest.raises(ShapeError):
        ops.batch_norm(t(np.zeros((1, 2, 2, 2))), bn(3, "frozen"))


def test_bn_unknown_mode():
    with pytest.raises(ValueError):
        ops.batch_norm(t(np.zeros((1, 1, 2, 2))), bn(1, "eval"))


# -- relu ----------------------------------------------------------------------

def test_relu_values_and_mask():
    x = t([-1.0, 0.0, 2.0], grad=True)
    out = ops.relu(x)
    np.testing.assert_array_equal(out.data, [0, 0, 2])
    out.backward(np.array([5, 5, 5], dtype=np.float32))
    np.testing.assert_array_equal(x.grad, [0, 0, 5])


def test_relu_all_negative():
    assert not ops.relu(t(-np.arange(1, 7).reshape(1, 1, 2, 3))).data.any()


# -- max pool --------------------------------------------------------------------

def test_max_pool_2x2():
    out = ops.max_pool(t([[[[1, 2], [3, 4]]]]), 2, 2)
    np.testing.assert_array_equal(out.data, [[[[4]]]])


def test_max_pool_resnet_stem_shape():
    assert ops.max_pool(t(np.zeros((1, 1, 112, 112))), 3, 2, 1).shape == (1, 1, 56, 56)


def test_max_pool_tie_goes_to_first():
    x = t(np.array([[7.0, 7.0], [0.0, 0.0]]).reshape(1, 1, 2, 2), grad=True)
    out = ops.max_pool(x, 2, 2)
    out.backward(np.ones((1, 1, 1, 1), dtype=np.float32))
    np.testing.assert_array_equal(x.grad.reshape(-1), [1, 0, 0, 0])


@pytest.mark.parametrize("k,s", [(0, 1), (2, 0), (-1, 1)])
def test_max_pool_rejects_non_positive(k, s):
    with pytest.raises(ValueError):
        ops.max_pool(t(np.zeros((1, 1, 4, 4))), k, s)


# -- global average pool ---------------------------------------------------------

def test_gap_values_and_grad():
    np.testing.assert_array_equal(ops.global_avg_pool(t(np.full((1, 2, 3, 3), 2.5))).data, np.full((1, 2, 1, 1), 2.5))
    x = t(np.array([1, 2, 3, 4]).reshape(1, 1, 2, 2), grad=True)
    out = ops.global_avg_pool(x)
    assert out.data.item() == 2.5
    out.backward(np.full((1, 1, 1, 1), 8.0, dtype=np.float32))
    np.testing.assert_array_equal(x.grad, np.full((1, 1, 2, 2), 2.0))


# -- linear ------------------------------------------------------------------------

def test_linear_identity_and_zero():
    x = np.random.default_rng(3).standard_normal((2, 4)).astype(np.float32)
    np.testing.assert_array_equal(ops.linear(t(x), t(np.eye(4)), t(np.zeros(4))).data, x)
    out = ops.linear(t(x), t(np.zeros((3, 4))), t([1.0, 2.0, 3.0])).data
    np.testing.assert_array_equal(out, np.tile([1.0, 2.0, 3.0], (2, 1)))


def test_linear_matches_hand_product():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((3, 4))
    w = rng.standard_normal((2, 4))
    b = rng.standard_normal(2)
    ref = np.array([[sum(x[i, k] * w[j, k] for k in range(4)) + b[j] for j in range(2)] for i in range(3)])
    out = ops.linear(t(x, dtype=np.float64), t(w, dtype=np.float64), t(b, dtype=np.float64)).data
    np.testing.assert_allclose(out, ref, rtol=1e-12)


def test_linear_width_mismatch():
    with pytest.raises(ShapeError):
        ops.linear(t(np.zeros((2, 3))), t(np.zeros((2, 4))))


# -- add ------------------------------------------------------------------------------

def test_add_examples_and_grad():
    a = t(np.random.default_rng(5).standard_normal((1, 2, 2, 2)), grad=True)
    b = t(-a.data, grad=True)
    np.testing.assert_array_equal(ops.add(a, t(np.zeros(a.shape))).data, a.data)
    out = ops.add(a, b)
    assert not out.data.any()
    g = np.arange(8, dtype=np.float32).reshape(a.shape)
    out.backward(g)
    np.testing.assert_array_equal(a.grad, g)
    np.testing.assert_array_equal(b.grad, g)


def test_add_shape_mismatch():
    with pytest.raises(ShapeError):
        ops.add(t(np.zeros((1, 2, 2, 2))), t(np.zeros((1, 2, 2, 3))))


# -- upsample ----------------------------------------------------------------------------

def test_upsample_examples():
    np.testing.assert_array_equal(ops.upsample_nearest2x(t([[[[3.0]]]])).data, np.full((1, 1, 2, 2), 3.0))
    x = t(np.random.default_rng(6).standard_normal((1, 2, 3, 4)), grad=True)
    up = ops.upsample_nearest2x(x)
    back = up.data.reshape(1, 2, 3, 2, 4, 2).mean(axis=(3, 5))
    np.testing.assert_array_equal(back, x.data)
    up.backward(np.ones(up.shape, dtype=np.float32))
    np.testing.assert_array_equal(x.grad, np.full(x.shape, 4.0))


# -- softmax cross entropy -----------------------------------------------------------------

def test_xent_equal_logits():
    assert ops.softmax_cross_entropy(t(np.zeros((3, 7))), [0, 3, 6]).item() == pytest.approx(math.log(7), rel=1e-6)


def test_xent_large_margin():
    loss = ops.softmax_cross_entropy(t([[1000.0, 0.0, 0.0]]), [0]).item()
    assert 0 <= loss < 1e-6


def test_xent_closed_form():
    loss = ops.softmax_cross_entropy(t([[0.0, math.log(3)]], dtype=np.float64), [0]).item()
    assert loss == pytest.approx(1.3862944, abs=1e-6)


def test_xent_gradient_formula():
    z = np.random.default_rng(8).standard_normal((4, 5))
    labels = np.array([0, 4, 2, 2])
    zt = t(z, grad=True, dtype=np.float64)
    ops.softmax_cross_entropy(zt, labels).backward()
    p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    np.testing.assert_allclose(zt.grad, (p - np.eye(5)[labels]) / 4, rtol=1e-12)


@pytest.mark.parametrize("labels", [[0, 5], [-1, 0]])
def test_xent_label_range(labels):
    with pytest.raises(ValueError):
        ops.softmax_cross_entropy(t(np.zeros((2, 5))), labels)


# -- backward ---------------------------------------------------------------------------------

def test_backward_sum_gives_ones():
    x = t(np.random.default_rng(9).standard_normal((1, 2, 3, 3)), grad=True)
    ops.tensor_sum(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones(x.shape))


def test_backward_value_used_twice_accumulates():
    x = t(np.random.default_rng(10).standard_normal((1, 2, 3, 3)), grad=True)
    y = ops.relu(x)
    ops.tensor_sum(ops.add(y, x)).backward()
    np.testing.assert_array_equal(x.grad, 1.0 + (x.data > 0))


def test_backward_accumulates_across_calls():
    x = t([[1.0, 2.0]], grad=True)
    w = t([[1.0, 1.0]], grad=True)
    for _ in range(2):
        ops.linear(x, w).backward(np.ones((1, 1), dtype=np.float32))
    np.testing.assert_array_equal(w.grad, [[2.0, 4.0]])


def test_backward_before_forward():
    with pytest.raises(AutogradError):
        t([1.0, 2.0], grad=True).backward()


def test_no_grad_records_nothing():
    x = t([[1.0, -1.0]], grad=True)
    with no_grad():
        y = ops.relu(x)
    with pytest.raises(AutogradError):
        y.backward(np.ones((1, 2), dtype=np.float32))
