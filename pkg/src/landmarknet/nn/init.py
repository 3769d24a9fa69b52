"""Parameter initialisation."""

import numpy as np

from ..errors import MissingWeightsError, ShapeError
from .layers import Constant, Conv, Gaussian, PretrainedByName, Xavier
from .network import LayerParams


def xavier_limit(fan_in, fan_out):
    return np.sqrt(6.0 / (fan_in + fan_out))


def _fans(kind, weight_shape):
    fan_in = int(np.prod(weight_shape[1:]))
    if isinstance(kind, Conv):
        return fan_in, weight_shape[0] * kind.kernel_size ** 2
    return fan_in, weight_shape[0]


def init_params(net, rng_seed, archive=None):
    """Draw initial parameters for every learnable layer of ``net``.

    Each layer gets its own generator seeded from ``(rng_seed, layer index)``
    so adding or freezing a layer does not perturb the others. Layers with
    ``PretrainedByName`` are copied from ``archive`` (a mapping of layer name to
    ``LayerParams``, as returned by ``load_weight_archive``).
    """
    params = {}
    shapes = net.param_shapes()
    for index, layer in enumerate(net.layers):
        if not layer.learnable:
            continue
        wshape, bshape = shapes[layer.name]
        scheme = layer.init
        if isinstance(scheme, PretrainedByName):
            if archive is None or layer.name not in archive:
                raise MissingWeightsError(f"no pretrained weights for layer {layer.name!r}")
            src = archive[layer.name]
            if src.weights.shape != wshape or src.biases.shape != bshape:
                raise ShapeError(
                    f"archive layer {layer.name!r} has shapes {src.weights.shape}/{src.biases.shape}, "
                    f"network expects {wshape}/{bshape}"
                )
            params[layer.name] = LayerParams(np.array(src.weights, dtype=np.float64),
                                             np.array(src.biases, dtype=np.float64))
            continue
        rng = np.random.default_rng([int(rng_seed), index])
        if isinstance(scheme, Xavier):
            fan_in, fan_out = _fans(layer.kind, wshape)
            limit = xavier_limit(fan_in, fan_out)
            weights = rng.uniform(-limit, limit, size=wshape)
            biases = np.zeros(bshape)
        elif isinstance(scheme, Gaussian):
            weights = rng.normal(scheme.mean, scheme.stddev, size=wshape)
            biases = np.zeros(bshape)
        elif isinstance(scheme, Constant):
            weights = np.full(wshape, float(scheme.value))
            biases = np.full(bshape, float(scheme.value))
        else:
            raise ValueError(f"layer {layer.name!r} has no initialisation scheme")
        params[layer.name] = LayerParams(weights, biases)
    return params
