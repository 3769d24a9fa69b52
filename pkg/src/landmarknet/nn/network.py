"""Network description, VGG-X + FC builder, and forward/backward propagation."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import ConsistencyError, InvalidArchitectureError, ShapeError
from . import layers as L
from .layers import (Constant, Conv, FullyConnected, LayerSpec, MaxPool,
                     PretrainedByName, ReLU)

# Convolution widths of the 13-layer VGG 16 stack, grouped by block.
VGG16_BLOCKS = ((64, 64), (128, 128), (256, 256, 256), (512, 512, 512), (512, 512, 512))
SUPPORTED_DEPTHS = (2, 4, 7, 10, 13)


@dataclass
class LayerParams:
    weights: np.ndarray
    biases: np.ndarray

    def copy(self):
        return LayerParams(self.weights.copy(), self.biases.copy())

    @property
    def size(self):
        return self.weights.size + self.biases.size


# Learnable parameters keyed by layer name.
Parameters = Dict[str, LayerParams]


def copy_params(params):
    return {name: p.copy() for name, p in params.items()}


@dataclass
class NetworkSpec:
    input_shape: Tuple[int, int, int]
    layers: List[LayerSpec]

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise InvalidArchitectureError("layer names must be unique")
        if not self.layers or not isinstance(self.layers[-1].kind, FullyConnected):
            raise InvalidArchitectureError("the final layer must be FullyConnected")
        self.shapes()  # validates the geometry chain

    def shapes(self):
        """Per-sample shapes ``[input, after layer 0, after layer 1, ...]``."""
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(L.output_shape(layer.kind, shapes[-1]))
        return shapes

    @property
    def outputs(self):
        return self.layers[-1].kind.out_neurons

    def learnable(self):
        return [layer for layer in self.layers if layer.learnable]

    def param_shapes(self):
        shapes = self.shapes()
        return {layer.name: L.param_shapes(layer.kind, shapes[i])
                for i, layer in enumerate(self.layers) if layer.learnable}

    def param_count(self):
        shapes = self.shapes()
        return sum(L.param_count(layer.kind, shapes[i]) for i, layer in enumerate(self.layers))

    def multipliers(self):
        return {layer.name: (layer.weight_lr_multiplier, layer.bias_lr_multiplier)
                for layer in self.learnable()}

    def feature_shape(self):
        """Shape of the activation entering the final fully connected layer."""
        return self.shapes()[-2]


def build_vgg_x_fc(x, outputs, input_shape=(3, 224, 224), widths=None,
                   conv_init=None, fc_init=None, vgg_lr_multiplier=0.0,
                   fc_lr_multiplier=100.0):
    """Truncate VGG 16 after the pool following conv layer ``x`` and add an FC head.

    ``widths`` optionally overrides the per-conv channel counts (a sequence of
    length ``x``) for reduced-scale experiments. Layer names follow the VGG 16
    convention (``conv3_1``, ``pool2``, ...) so pretrained archives match by name;
    the head is named ``fc8``.
    """
    if x not in SUPPORTED_DEPTHS:
        raise InvalidArchitectureError(f"VGG depth must be one of {SUPPORTED_DEPTHS}, got {x}")
    if outputs < 1:
        raise InvalidArchitectureError("outputs must be >= 1")
    if widths is not None and len(widths) != x:
        raise InvalidArchitectureError(f"expected {x} conv widths, got {len(widths)}")
    conv_init = PretrainedByName() if conv_init is None else conv_init
    fc_init = Constant(0.0) if fc_init is None else fc_init

    layers = []
    count = 0
    for b, block in enumerate(VGG16_BLOCKS, start=1):
        for i, width in enumerate(block, start=1):
            if widths is not None:
                width = widths[count]
            layers.append(LayerSpec(Conv(width, 3, 1, 1), f"conv{b}_{i}",
                                    vgg_lr_multiplier, vgg_lr_multiplier, conv_init))
            layers.append(LayerSpec(ReLU(), f"relu{b}_{i}", init=None))
            count += 1
        layers.append(LayerSpec(MaxPool(2, 2), f"pool{b}", init=None))
        if count == x:
            break
    layers.append(LayerSpec(FullyConnected(outputs), "fc8", fc_lr_multiplier, fc_lr_multiplier, fc_init))
    return NetworkSpec(tuple(input_shape), layers)


# -- propagation -------------------------------------------------------------

def layer_forward(spec, params, x):
    """Apply one layer. Returns ``(output, cache)``; ``cache`` is only used by max pooling."""
    kind = spec.kind
    if isinstance(kind, Conv):
        if params is None:
            raise ShapeError(f"layer {spec.name} needs parameters")
        return L.conv_forward(x, params.weights, params.biases, kind.stride, kind.padding), None
    if isinstance(kind, ReLU):
        return L.relu_forward(x), None
    if isinstance(kind, MaxPool):
        return L.maxpool_forward(x, kind.window, kind.stride)
    if isinstance(kind, FullyConnected):
        if params is None:
            raise ShapeError(f"layer {spec.name} needs parameters")
        return L.fc_forward(x, params.weights, params.biases), None
    raise TypeError(f"unknown layer kind {kind!r}")


@dataclass
class Activations:
    """Inputs and outputs of every layer from one forward pass.

    ``values[0]`` is the batch; ``values[i + 1]`` is the output of layer ``i``.
    """
    net: NetworkSpec
    values: List[np.ndarray]
    caches: List[Optional[np.ndarray]] = field(default_factory=list)

    @property
    def predictions(self):
        out = self.values[-1]
        return out.reshape(out.shape[0], -1)


@dataclass
class Gradients:
    params: Parameters
    inputs: List[Optional[np.ndarray]]


def _check_batch(net, batch):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 4 or tuple(batch.shape[1:]) != net.input_shape:
        raise ShapeError(f"batch shape {batch.shape} does not match input {net.input_shape}")
    return batch


def forward(net, params, batch, start=0):
    """Run the layers from index ``start`` on; ``batch`` is then the input of that layer.

    Values and caches below ``start`` are left as ``None``.
    """
    if start == 0:
        x = _check_batch(net, batch)
    else:
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim != 4 or tuple(x.shape[1:]) != tuple(net.shapes()[start]):
            raise ShapeError(f"input of layer {start} should be {net.shapes()[start]}, got {x.shape[1:]}")
    values = [None] * start + [x]
    caches = [None] * start
    for layer in net.layers[start:]:
        out, cache = layer_forward(layer, params.get(layer.name) if layer.learnable else None, values[-1])
        values.append(out)
        caches.append(cache)
    return Activations(net, values, caches)


def backward(net, params, activations, loss_gradient, stop_at=0, bottom_input_grad=True):
    """Back-propagate ``loss_gradient`` (``n x outputs``) through the network.

    Gradients are computed for layers ``stop_at`` and above. The gradient with
    respect to the input of layer ``stop_at`` itself is skipped when
    ``bottom_input_grad`` is false (training never needs it).
    """
    if activations.net is not net or len(activations.values) != len(net.layers) + 1:
        raise ConsistencyError("activations were not produced by this network")
    shapes = net.shapes()
    for value, shape in zip(activations.values, shapes):
        if value is not None and tuple(value.shape[1:]) != tuple(shape):
            raise ConsistencyError("activation shapes do not match the network")
    if activations.values[stop_at] is None:
        raise ConsistencyError(f"forward pass did not reach down to layer {stop_at}")
    n = activations.values[-1].shape[0]
    grad = np.asarray(loss_gradient, dtype=np.float64)
    if grad.size != n * net.outputs:
        raise ShapeError(f"loss gradient has {grad.size} entries, expected {n * net.outputs}")
    grad = grad.reshape(activations.values[-1].shape)

    grads = {}
    inputs = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, stop_at - 1, -1):
        layer = net.layers[i]
        kind = layer.kind
        x = activations.values[i]
        need = i > stop_at or bottom_input_grad
        if isinstance(kind, Conv):
            p = params[layer.name]
            gx, gw, gb = L.conv_backward(x, p.weights, grad, kind.stride, kind.padding, need)
            grads[layer.name] = LayerParams(gw, gb)
        elif isinstance(kind, FullyConnected):
            gx, gw, gb = L.fc_backward(x, params[layer.name].weights, grad, need)
            grads[layer.name] = LayerParams(gw, gb)
        elif isinstance(kind, ReLU):
            gx = L.relu_backward(x, grad)
        else:
            gx = L.maxpool_backward(x.shape, activations.caches[i], grad, kind.window, kind.stride)
        inputs[i] = gx
        grad = gx
    return Gradients(grads, inputs)


def first_trainable_index(net):
    """Index of the lowest layer whose parameters have a nonzero multiplier."""
    for i, layer in enumerate(net.layers):
        if layer.learnable and (layer.weight_lr_multiplier > 0 or layer.bias_lr_multiplier > 0):
            return i
    return len(net.layers)
