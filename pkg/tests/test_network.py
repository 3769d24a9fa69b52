import numpy as np
import pytest

from landmarknet.errors import (ConsistencyError, InvalidArchitectureError, MissingWeightsError,
                                ShapeError)
from landmarknet.nn import (Constant, Conv, FullyConnected, Gaussian, LayerParams, LayerSpec, MaxPool,
                            NetworkSpec, PretrainedByName, ReLU, SUPPORTED_DEPTHS, Xavier, backward,
                            build_vgg_x_fc, forward, init_params, predict, squared_loss, xavier_limit)
from landmarknet.nn.gradcheck import max_relative_error, numeric_gradient

BLOCK_DIMS = {2: (64, 112, 112), 4: (128, 56, 56), 7: (256, 28, 28), 10: (512, 14, 14), 13: (512, 7, 7)}


def small_net(init=Xavier()):
    return NetworkSpec((2, 8, 8), [
        LayerSpec(Conv(3, 3, 1, 1), "conv", init=init),
        LayerSpec(ReLU(), "relu", init=None),
        LayerSpec(MaxPool(2, 2), "pool", init=None),
        LayerSpec(FullyConnected(4), "fc", init=init),
    ])


@pytest.mark.parametrize("x", SUPPORTED_DEPTHS)
def test_vgg_block_dims(x):
    assert build_vgg_x_fc(x, 8).feature_shape() == BLOCK_DIMS[x]


def test_vgg7_fc_weight_count():
    shapes = build_vgg_x_fc(7, 8).param_shapes()
    assert int(np.prod(shapes["fc8"][0])) == 1_605_632 == 28 * 28 * 256 * 8


def test_vgg_layer_names_and_defaults():
    net = build_vgg_x_fc(4, 8)
    names = [l.name for l in net.layers]
    assert names[:3] == ["conv1_1", "relu1_1", "conv1_2"]
    assert names[-2:] == ["pool2", "fc8"]
    fc = net.layers[-1]
    assert fc.init == Constant(0.0) and fc.weight_lr_multiplier == 100
    assert all(l.init == PretrainedByName() and l.weight_lr_multiplier == 0
               for l in net.layers if isinstance(l.kind, Conv))


@pytest.mark.parametrize("x", [0, 3, 5, 14])
def test_unsupported_depth(x):
    with pytest.raises(InvalidArchitectureError):
        build_vgg_x_fc(x, 8)


def test_width_override():
    net = build_vgg_x_fc(2, 8, (3, 56, 56), widths=(4, 6))
    assert net.feature_shape() == (6, 28, 28)


def test_spec_validation():
    with pytest.raises(InvalidArchitectureError):
        NetworkSpec((1, 4, 4), [LayerSpec(ReLU(), "r", init=None)])
    with pytest.raises(InvalidArchitectureError):
        NetworkSpec((1, 4, 4), [LayerSpec(FullyConnected(2), "a"), LayerSpec(FullyConnected(2), "a")])


def test_conv_fc_param_formulas():
    net = small_net()
    assert net.param_count() == (3 * 9 * 2 + 3) + (4 * 3 * 4 * 4 + 4)


def test_zero_net_predicts_zero():
    net = small_net(Constant(0.0))
    params = init_params(net, 0)
    out = forward(net, params, np.random.default_rng(0).standard_normal((2, 2, 8, 8))).predictions
    assert out.shape == (2, 4) and np.all(out == 0)


def test_vgg7_prediction_shape():
    net = build_vgg_x_fc(7, 8, conv_init=Gaussian())
    params = init_params(net, 0)
    out = forward(net, params, np.zeros((1, 3, 224, 224))).predictions
    assert out.shape == (1, 8)


def test_composed_net_gradients():
    rng = np.random.default_rng(0)
    net = small_net()
    params = init_params(net, 1)
    x = rng.standard_normal((3, 2, 8, 8))
    target = rng.standard_normal((3, 4))
    loss = lambda: squared_loss(forward(net, params, x).predictions, target)[0]
    acts = forward(net, params, x)
    _, g = squared_loss(acts.predictions, target)
    grads = backward(net, params, acts, g)
    for name in ("conv", "fc"):
        for attr in ("weights", "biases"):
            arr = getattr(params[name], attr)
            num = numeric_gradient(loss, arr)
            assert max_relative_error(getattr(grads.params[name], attr), num) < 1e-4
    assert max_relative_error(grads.inputs[0], numeric_gradient(loss, x)) < 1e-4


def test_zero_loss_gradient():
    net = small_net()
    params = init_params(net, 0)
    acts = forward(net, params, np.ones((1, 2, 8, 8)))
    grads = backward(net, params, acts, np.zeros((1, 4)))
    assert all(not np.any(p.weights) and not np.any(p.biases) for p in grads.params.values())


def test_stale_activations():
    a, b = small_net(), small_net()
    params = init_params(a, 0)
    acts = forward(a, params, np.ones((1, 2, 8, 8)))
    with pytest.raises(ConsistencyError):
        backward(b, params, acts, np.zeros((1, 4)))


def test_forward_shape_mismatch():
    net = small_net()
    with pytest.raises(ShapeError):
        forward(net, init_params(net, 0), np.zeros((1, 3, 8, 8)))


def test_forward_from_layer_matches_full_pass():
    net = small_net()
    params = init_params(net, 0)
    x = np.random.default_rng(1).standard_normal((2, 2, 8, 8))
    full = forward(net, params, x)
    part = forward(net, params, full.values[3], start=3)
    assert np.array_equal(full.predictions, part.predictions)


def test_predict_deterministic():
    net = small_net()
    params = init_params(net, 3)
    img = np.random.default_rng(2).standard_normal((2, 8, 8))
    assert np.array_equal(predict(net, params, img), predict(net, params, img))


# -- initialisation ------------------------------------------------------------

def test_constant_zero():
    params = init_params(small_net(Constant(0.0)), 0)
    assert all(not np.any(p.weights) and not np.any(p.biases) for p in params.values())


def test_gaussian_statistics():
    net = NetworkSpec((1000, 1, 1), [LayerSpec(FullyConnected(100), "fc", init=Gaussian(0.0, 0.01))])
    w = init_params(net, 0)["fc"].weights.reshape(-1)
    assert w.size >= 10 ** 5
    assert abs(w.mean()) < 3 * 0.01 / np.sqrt(w.size)
    assert abs(w.std() - 0.01) < 0.001
    assert not np.any(init_params(net, 0)["fc"].biases)


def test_xavier_fc_bounds():
    net = NetworkSpec((100, 1, 1), [LayerSpec(FullyConnected(8), "fc", init=Xavier())])
    w = init_params(net, 0)["fc"].weights
    limit = np.sqrt(6 / 108)
    assert xavier_limit(100, 8) == limit
    assert np.all(np.abs(w) <= limit)
    assert np.abs(w).max() > 0.9 * limit


def test_xavier_conv_fans():
    net = NetworkSpec((3, 4, 4), [LayerSpec(Conv(5, 3), "c", init=Xavier()), LayerSpec(FullyConnected(1), "f")])
    w = init_params(net, 0)["c"].weights
    assert np.all(np.abs(w) <= np.sqrt(6 / (27 + 45)))


def test_init_deterministic():
    a = init_params(small_net(), 7)
    b = init_params(small_net(), 7)
    assert all(np.array_equal(a[k].weights, b[k].weights) for k in a)


def test_pretrained_missing():
    net = build_vgg_x_fc(2, 8, (3, 8, 8), widths=(2, 2))
    with pytest.raises(MissingWeightsError):
        init_params(net, 0)
    with pytest.raises(MissingWeightsError):
        init_params(net, 0, {"conv1_1": LayerParams(np.zeros((2, 3, 3, 3)), np.zeros(2))})


def test_pretrained_shape_mismatch():
    net = build_vgg_x_fc(2, 8, (3, 8, 8), widths=(2, 2))
    archive = {"conv1_1": LayerParams(np.zeros((2, 3, 5, 5)), np.zeros(2)),
               "conv1_2": LayerParams(np.zeros((2, 2, 3, 3)), np.zeros(2))}
    with pytest.raises(ShapeError):
        init_params(net, 0, archive)


def test_pretrained_copied():
    net = build_vgg_x_fc(2, 8, (3, 8, 8), widths=(2, 2))
    rng = np.random.default_rng(0)
    archive = {"conv1_1": LayerParams(rng.standard_normal((2, 3, 3, 3)), rng.standard_normal(2)),
               "conv1_2": LayerParams(rng.standard_normal((2, 2, 3, 3)), rng.standard_normal(2))}
    params = init_params(net, 0, archive)
    assert np.array_equal(params["conv1_2"].weights, archive["conv1_2"].weights)
    assert not np.any(params["fc8"].weights)
