"""Layer kinds and their forward/backward kernels.

All kernels operate on float64 ``(n, c, h, w)`` arrays. Convolution is
lowered to a matrix product (im2col); batches are split into sample chunks in
a fixed order so results are reproducible bit for bit.
"""

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import InvalidGeometryError, ShapeError


# -- layer kinds -------------------------------------------------------------

@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel_size: int = 3
    stride: int = 1
    padding: int = 1

    def __post_init__(self):
        if self.out_channels < 1 or self.kernel_size < 1 or self.stride < 1:
            raise InvalidGeometryError(f"invalid convolution geometry: {self}")
        if self.padding < 0:
            raise InvalidGeometryError(f"negative padding: {self}")


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool:
    window: int = 2
    stride: int = 2

    def __post_init__(self):
        if self.window < 1 or self.stride < 1:
            raise InvalidGeometryError(f"invalid pooling geometry: {self}")


@dataclass(frozen=True)
class FullyConnected:
    out_neurons: int

    def __post_init__(self):
        if self.out_neurons < 1:
            raise InvalidGeometryError(f"invalid neuron count: {self}")


LayerKind = Union[Conv, ReLU, MaxPool, FullyConnected]


# -- initialisation schemes --------------------------------------------------

@dataclass(frozen=True)
class PretrainedByName:
    pass


@dataclass(frozen=True)
class Xavier:
    pass


@dataclass(frozen=True)
class Gaussian:
    mean: float = 0.0
    stddev: float = 0.01


@dataclass(frozen=True)
class Constant:
    value: float = 0.0


InitScheme = Union[PretrainedByName, Xavier, Gaussian, Constant]


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    name: str
    weight_lr_multiplier: float = 1.0
    bias_lr_multiplier: float = 1.0
    init: Optional[InitScheme] = field(default_factory=Xavier)

    def __post_init__(self):
        if self.weight_lr_multiplier < 0 or self.bias_lr_multiplier < 0:
            raise ValueError(f"learning-rate multipliers must be >= 0 ({self.name})")

    @property
    def learnable(self):
        return isinstance(self.kind, (Conv, FullyConnected))


# -- shape algebra -----------------------------------------------------------

def _out_dim(size, window, stride, pad, what):
    span = size + 2 * pad - window
    if span < 0 or span % stride:
        raise InvalidGeometryError(
            f"{what}: (size {size} + 2*{pad} - {window}) is not a non-negative multiple of stride {stride}"
        )
    return span // stride + 1


def output_shape(kind, in_shape):
    """Per-sample output shape ``(c, h, w)`` of ``kind`` applied to ``in_shape``."""
    c, h, w = in_shape
    if isinstance(kind, Conv):
        k, s, p = kind.kernel_size, kind.stride, kind.padding
        return (kind.out_channels, _out_dim(h, k, s, p, "conv"), _out_dim(w, k, s, p, "conv"))
    if isinstance(kind, ReLU):
        return (c, h, w)
    if isinstance(kind, MaxPool):
        return (c, _out_dim(h, kind.window, kind.stride, 0, "pool"),
                _out_dim(w, kind.window, kind.stride, 0, "pool"))
    if isinstance(kind, FullyConnected):
        return (kind.out_neurons, 1, 1)
    raise TypeError(f"unknown layer kind {kind!r}")


def param_shapes(kind, in_shape):
    """``(weight_shape, bias_shape)`` for a learnable layer, else ``None``."""
    c, h, w = in_shape
    if isinstance(kind, Conv):
        k = kind.kernel_size
        return (kind.out_channels, c, k, k), (kind.out_channels,)
    if isinstance(kind, FullyConnected):
        return (kind.out_neurons, c, h, w), (kind.out_neurons,)
    return None


def param_count(kind, in_shape):
    shapes = param_shapes(kind, in_shape)
    if shapes is None:
        return 0
    return int(np.prod(shapes[0])) + int(np.prod(shapes[1]))


# -- kernels -----------------------------------------------------------------

def _window_slices(di, dj, out_h, out_w, stride):
    return (slice(di, di + stride * (out_h - 1) + 1, stride),
            slice(dj, dj + stride * (out_w - 1) + 1, stride))


# Upper bound on the im2col buffer, in elements; larger batches are processed in sample chunks.
IM2COL_BUDGET = 8_000_000


def _padded_nhwc(x, padding):
    xh = x.transpose(0, 2, 3, 1)
    if padding:
        xh = np.pad(xh, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    return xh


def _im2col(xh, k, stride, out_h, out_w):
    """Patch matrix with rows ``(sample, oy, ox)`` and columns ``(ky, kx, channel)``."""
    n, c = xh.shape[0], xh.shape[3]
    win = sliding_window_view(xh, (k, k), axis=(1, 2))[:, ::stride, ::stride][:, :out_h, :out_w]
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * out_h * out_w, k * k * c)


def _chunks(n, per_sample):
    step = max(1, IM2COL_BUDGET // max(per_sample, 1))
    return [(s, min(s + step, n)) for s in range(0, n, step)]


def conv_forward(x, weights, biases, stride, padding):
    n, c, h, w = x.shape
    o, wc, k, _ = weights.shape
    if wc != c:
        raise ShapeError(f"conv expects {wc} input channels, got {c}")
    out_h = _out_dim(h, k, stride, padding, "conv")
    out_w = _out_dim(w, k, stride, padding, "conv")
    xh = _padded_nhwc(x, padding)
    wmat = weights.transpose(0, 2, 3, 1).reshape(o, -1).T
    out = np.empty((n, o, out_h, out_w))
    for a, b in _chunks(n, out_h * out_w * c * k * k):
        res = _im2col(xh[a:b], k, stride, out_h, out_w) @ wmat
        res += biases
        out[a:b] = res.reshape(b - a, out_h, out_w, o).transpose(0, 3, 1, 2)
    return out


def conv_backward(x, weights, grad_out, stride, padding, need_input_grad=True):
    n, c, h, w = x.shape
    o, _, k, _ = weights.shape
    out_h, out_w = grad_out.shape[2:]
    xh = _padded_nhwc(x, padding)
    wmat = weights.transpose(0, 2, 3, 1).reshape(o, -1)
    grad_w = np.zeros((o, k * k * c))
    grad_b = np.zeros(o)
    grad_xh = np.zeros(xh.shape) if need_input_grad and stride > 1 else None
    for a, b in _chunks(n, out_h * out_w * c * k * k):
        g = grad_out[a:b].transpose(0, 2, 3, 1).reshape(-1, o)
        grad_w += g.T @ _im2col(xh[a:b], k, stride, out_h, out_w)
        grad_b += g.sum(axis=0)
        if need_input_grad and stride > 1:
            dcols = (g @ wmat).reshape(b - a, out_h, out_w, k, k, c)
            for di in range(k):
                for dj in range(k):
                    rs, cs = _window_slices(di, dj, out_h, out_w, stride)
                    grad_xh[a:b, rs, cs, :] += dcols[:, :, :, di, dj, :]
    grad_x = None
    if need_input_grad and stride == 1:
        # transposed convolution: flipped kernels with in/out channels swapped
        flipped = np.ascontiguousarray(weights[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        full = conv_forward(grad_out, flipped, np.zeros(c), 1, k - 1)
        grad_x = np.ascontiguousarray(full[:, :, padding:padding + h, padding:padding + w])
    elif need_input_grad:
        grad_x = np.ascontiguousarray(grad_xh[:, padding:padding + h, padding:padding + w, :].transpose(0, 3, 1, 2))
    return grad_x, grad_w.reshape(o, k, k, c).transpose(0, 3, 1, 2).copy(), grad_b


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(x, grad_out):
    return grad_out * (x > 0)


def maxpool_forward(x, window, stride):
    """Return ``(output, argmax)``; ``argmax`` holds the winning row-major window offset.

    Ties go to the first offset in row-major window order.
    """
    n, c, h, w = x.shape
    out_h = _out_dim(h, window, stride, 0, "pool")
    out_w = _out_dim(w, window, stride, 0, "pool")
    best = np.full((n, c, out_h, out_w), -np.inf)
    argmax = np.zeros((n, c, out_h, out_w), dtype=np.int32)
    for idx in range(window * window):
        di, dj = divmod(idx, window)
        rs, cs = _window_slices(di, dj, out_h, out_w, stride)
        cand = x[:, :, rs, cs]
        better = cand > best
        best = np.where(better, cand, best)
        argmax[better] = idx
    return best, argmax


def maxpool_backward(x_shape, argmax, grad_out, window, stride):
    grad_x = np.zeros(x_shape)
    out_h, out_w = grad_out.shape[2:]
    for idx in range(window * window):
        di, dj = divmod(idx, window)
        rs, cs = _window_slices(di, dj, out_h, out_w, stride)
        grad_x[:, :, rs, cs] += np.where(argmax == idx, grad_out, 0.0)
    return grad_x


def fc_forward(x, weights, biases):
    n = x.shape[0]
    flat = x.reshape(n, -1)
    wmat = weights.reshape(weights.shape[0], -1)
    if flat.shape[1] != wmat.shape[1]:
        raise ShapeError(f"fully connected layer expects {wmat.shape[1]} inputs, got {flat.shape[1]}")
    out = flat @ wmat.T + biases
    return out.reshape(n, -1, 1, 1)


def fc_backward(x, weights, grad_out, need_input_grad=True):
    n = x.shape[0]
    flat = x.reshape(n, -1)
    g = grad_out.reshape(n, -1)
    wmat = weights.reshape(weights.shape[0], -1)
    grad_w = (g.T @ flat).reshape(weights.shape)
    grad_b = g.sum(axis=0)
    grad_x = (g @ wmat).reshape(x.shape) if need_input_grad else None
    return grad_x, grad_w, grad_b
