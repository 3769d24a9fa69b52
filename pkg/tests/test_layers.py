import numpy as np
import pytest

from landmarknet.errors import InvalidGeometryError, ShapeError
from landmarknet.nn import layers as L
from landmarknet.nn.gradcheck import max_relative_error, numeric_gradient
from landmarknet.nn.layers import Conv, FullyConnected, MaxPool, ReLU, output_shape, param_count, param_shapes


def conv_loops(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - k) // stride + 1
    ow = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, o, oh, ow))
    for s in range(n):
        for f in range(o):
            for i in range(oh):
                for j in range(ow):
                    patch = xp[s, :, i * stride:i * stride + k, j * stride:j * stride + k]
                    out[s, f, i, j] = np.sum(patch * w[f]) + b[f]
    return out


def test_relu_example():
    out = L.relu_forward(np.array([-2.0, 0.0, 3.0]))
    assert out.tolist() == [0.0, 0.0, 3.0]


def test_relu_idempotent_nonnegative():
    x = np.random.default_rng(0).standard_normal((2, 3, 4, 4))
    y = L.relu_forward(x)
    assert np.all(y >= 0)
    assert np.array_equal(L.relu_forward(y), y)


def test_first_vgg_conv_counts():
    (wshape, bshape) = param_shapes(Conv(64), (3, 224, 224))
    assert int(np.prod(wshape)) == 1728 and bshape == (64,)
    assert param_count(Conv(64), (3, 224, 224)) == 1728 + 64


def test_maxpool_vgg_shape():
    assert output_shape(MaxPool(2, 2), (64, 224, 224)) == (64, 112, 112)


def test_ones_kernel_on_ones():
    out = L.conv_forward(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), np.zeros(1), 1, 0)
    assert out.shape == (1, 1, 1, 1) and out[0, 0, 0, 0] == 9.0


@pytest.mark.parametrize("stride,pad,k,h,w", [(1, 1, 3, 9, 11), (1, 0, 3, 9, 11), (2, 1, 3, 9, 11),
                                              (2, 0, 2, 8, 10), (3, 2, 5, 10, 13)])
def test_conv_matches_loops(stride, pad, k, h, w):
    rng = np.random.default_rng(stride * 10 + pad)
    x = rng.standard_normal((2, 3, h, w))
    w = rng.standard_normal((4, 3, k, k))
    b = rng.standard_normal(4)
    got = L.conv_forward(x, w, b, stride, pad)
    np.testing.assert_allclose(got, conv_loops(x, w, b, stride, pad), rtol=1e-12, atol=1e-12)


def test_output_dims_formula():
    assert output_shape(Conv(5, 3, 2, 1), (3, 9, 9)) == (5, 5, 5)
    assert output_shape(FullyConnected(8), (256, 28, 28)) == (8, 1, 1)


def test_non_integral_geometry():
    with pytest.raises(InvalidGeometryError):
        output_shape(MaxPool(2, 2), (1, 5, 5))
    with pytest.raises(InvalidGeometryError):
        output_shape(Conv(1, 3, 2, 0), (1, 6, 6))


def test_bad_layer_geometry():
    with pytest.raises(InvalidGeometryError):
        Conv(4, 0)
    with pytest.raises(InvalidGeometryError):
        Conv(4, 3, 1, -1)


def test_param_count_formulas():
    assert param_count(Conv(7, 5), (3, 20, 20)) == 7 * 5 * 5 * 3 + 7
    assert param_count(FullyConnected(8), (4, 6, 6)) == 8 * 144 + 8
    assert param_count(ReLU(), (4, 6, 6)) == 0


def test_maxpool_ties_first_element():
    x = np.ones((1, 1, 2, 2))
    out, arg = L.maxpool_forward(x, 2, 2)
    g = L.maxpool_backward(x.shape, arg, np.array([[[[5.0]]]]), 2, 2)
    assert out[0, 0, 0, 0] == 1.0
    assert g[0, 0].tolist() == [[5.0, 0.0], [0.0, 0.0]]


def test_maxpool_routes_to_argmax():
    x = np.array([[[[1.0, 4.0], [2.0, 3.0]]]])
    out, arg = L.maxpool_forward(x, 2, 2)
    g = L.maxpool_backward(x.shape, arg, np.ones((1, 1, 1, 1)), 2, 2)
    assert out.item() == 4.0
    assert g[0, 0].tolist() == [[0.0, 1.0], [0.0, 0.0]]


def test_fc_single_sample_outer_product():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 2, 2, 2))
    w = rng.standard_normal((3, 2, 2, 2))
    g = rng.standard_normal((1, 3))
    _, gw, gb = L.fc_backward(x, w, g)
    np.testing.assert_allclose(gw.reshape(3, -1), np.outer(g[0], x.reshape(-1)), rtol=1e-14)
    np.testing.assert_array_equal(gb, g[0])


def test_fc_identity_passthrough():
    x = np.array([3.0, -1.5]).reshape(1, 2, 1, 1)
    out = L.fc_forward(x, np.eye(2).reshape(2, 2, 1, 1), np.zeros(2))
    assert out.reshape(-1).tolist() == [3.0, -1.5]


# -- finite differences --------------------------------------------------------

def _check(f, wrt, analytic):
    num = numeric_gradient(f, wrt, 1e-5)
    assert max_relative_error(analytic, num) < 1e-4


@pytest.mark.parametrize("stride,pad,size", [(1, 1, 8), (2, 1, 9), (1, 0, 8)])
def test_conv_gradients(stride, pad, size):
    rng = np.random.default_rng(stride + 5 * pad)
    x = rng.standard_normal((2, 3, size, size))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    out_shape = L.conv_forward(x, w, b, stride, pad).shape
    r = rng.standard_normal(out_shape)
    loss = lambda: float(np.sum(L.conv_forward(x, w, b, stride, pad) * r))
    gx, gw, gb = L.conv_backward(x, w, r, stride, pad)
    _check(loss, x, gx)
    _check(loss, w, gw)
    _check(loss, b, gb)


def test_relu_gradient():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 8, 8))
    x[np.abs(x) < 1e-3] = 0.5  # keep clear of the kink
    r = rng.standard_normal(x.shape)
    _check(lambda: float(np.sum(L.relu_forward(x) * r)), x, L.relu_backward(x, r))


def test_maxpool_gradient():
    rng = np.random.default_rng(2)
    x = rng.permutation(2 * 3 * 64).reshape(2, 3, 8, 8) * 0.01  # distinct values, no ties
    r = rng.standard_normal((2, 3, 4, 4))
    _, arg = L.maxpool_forward(x, 2, 2)
    _check(lambda: float(np.sum(L.maxpool_forward(x, 2, 2)[0] * r)), x,
           L.maxpool_backward(x.shape, arg, r, 2, 2))


def test_fc_gradients():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((3, 2, 8, 8))
    w = rng.standard_normal((5, 2, 8, 8))
    b = rng.standard_normal(5)
    r = rng.standard_normal((3, 5, 1, 1))
    loss = lambda: float(np.sum(L.fc_forward(x, w, b) * r))
    gx, gw, gb = L.fc_backward(x, w, r)
    _check(loss, x, gx)
    _check(loss, w, gw)
    _check(loss, b, gb)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        L.conv_forward(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)), np.zeros(1), 1, 1)
