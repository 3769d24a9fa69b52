"""Loss, SGD update and the mini-batch training loop."""

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from ..errors import DivergenceError, ShapeError
from .network import LayerParams, backward, copy_params, first_trainable_index, forward

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Solver settings. Defaults match the reference experiment."""

    base_learning_rate: float = 1e-12
    batch_size: int = 32
    iterations: int = 10_000
    train_log_window: int = 200
    test_eval_every: int = 500
    rng_seed: int = 0
    momentum: float = 0.0
    weight_decay: float = 0.0
    # step schedule: rate *= lr_gamma every lr_step_size iterations (off when None)
    lr_step_size: Optional[int] = None
    lr_gamma: float = 0.1
    snapshot_every: Optional[int] = None
    divergence_factor: float = 1e6
    # memory for reusing frozen-prefix outputs per batch index (0 disables)
    feature_cache_mb: float = 1024.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.base_learning_rate > 0:
            raise ValueError("base_learning_rate must be > 0")
        if self.train_log_window < 1 or self.test_eval_every < 1:
            raise ValueError("logging intervals must be >= 1")

    def samples_seen(self):
        return self.iterations * self.batch_size

    def learning_rate(self, iteration=0):
        """Base rate in effect at 0-based ``iteration``."""
        if self.lr_step_size:
            return self.base_learning_rate * self.lr_gamma ** (iteration // self.lr_step_size)
        return self.base_learning_rate


def iterations_per_epoch(n_samples, batch_size):
    return math.ceil(n_samples / batch_size)


def squared_loss(pred, target):
    """Mean squared Euclidean distance between rows; returns ``(loss, d loss / d pred)``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 2 or pred.shape[0] < 1:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} must be matching n x d arrays")
    n = pred.shape[0]
    diff = pred - target
    loss = float(np.sum(diff * diff) / n)
    return loss, (2.0 / n) * diff


def effective_rates(config, multipliers, iteration=0):
    base = config.learning_rate(iteration)
    return {name: (base * wm, base * bm) for name, (wm, bm) in multipliers.items()}


def sgd_step(params, grads, config, multipliers, iteration=0, velocity=None):
    """Return parameters after one update ``theta - rate * grad``.

    ``multipliers`` maps layer name to ``(weight_multiplier, bias_multiplier)``.
    Layers with a zero multiplier are passed through untouched. When
    ``config.momentum`` is nonzero, ``velocity`` (a dict, updated in place)
    carries the momentum buffers between calls.
    """
    rates = effective_rates(config, multipliers, iteration)
    updated = {}
    for name, p in params.items():
        wr, br = rates.get(name, (0.0, 0.0))
        if wr == 0 and br == 0:
            updated[name] = p
            continue
        g = grads[name]
        if g.weights.shape != p.weights.shape or g.biases.shape != p.biases.shape:
            raise ShapeError(f"gradient shapes for {name!r} do not match parameters")
        if not (np.all(np.isfinite(g.weights)) and np.all(np.isfinite(g.biases))):
            raise DivergenceError(f"non-finite gradient in layer {name!r}", iteration)
        new = []
        for kind, value, grad, rate in (("w", p.weights, g.weights, wr), ("b", p.biases, g.biases, br)):
            if rate == 0:
                new.append(value)
                continue
            if config.weight_decay:
                grad = grad + config.weight_decay * value
            step = rate * grad
            if config.momentum:
                key = (name, kind)
                v = velocity.get(key) if velocity is not None else None
                v = step if v is None else config.momentum * v + step
                if velocity is not None:
                    velocity[key] = v
                step = v
            new.append(value - step)
        updated[name] = LayerParams(*new)
    return updated


@dataclass
class LossHistory:
    """Per-iteration training losses and the logged (windowed / test) curve."""

    iteration_losses: List[float] = field(default_factory=list)
    records: List[tuple] = field(default_factory=list)  # (iteration, train_loss|None, test_loss|None)

    def train_curve(self):
        return [(it, tr) for it, tr, _ in self.records if tr is not None]

    def test_curve(self):
        return [(it, te) for it, _, te in self.records if te is not None]

    def final_train_loss(self):
        curve = self.train_curve()
        return curve[-1][1] if curve else None

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "train_loss", "test_loss"])
            for it, tr, te in self.records:
                writer.writerow([it, "" if tr is None else repr(tr), "" if te is None else repr(te)])

    @classmethod
    def from_csv(cls, path):
        hist = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                hist.records.append((int(row["iteration"]),
                                     float(row["train_loss"]) if row["train_loss"] else None,
                                     float(row["test_loss"]) if row["test_loss"] else None))
        return hist


def _as_batch(batch):
    data, labels = batch
    data = np.asarray(data, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64).reshape(data.shape[0], -1)
    return data, labels


def evaluate_loss(net, params, test_set, chunk=64):
    """Squared loss over a whole test set given as ``(data, labels)`` or a sequence of such batches."""
    if isinstance(test_set, tuple) and len(test_set) == 2 and np.ndim(test_set[0]) == 4:
        test_set = [test_set]
    total = 0.0
    count = 0
    for batch in test_set:
        data, labels = _as_batch(batch)
        for start in range(0, data.shape[0], chunk):
            pred = forward(net, params, data[start:start + chunk]).predictions
            diff = pred - labels[start:start + chunk]
            total += float(np.sum(diff * diff))
            count += diff.shape[0]
    if count == 0:
        raise ValueError("empty test set")
    return total / count


def train(net, params, train_batches, config, test_set=None,
          snapshot: Optional[Callable[[int, dict], None]] = None):
    """Run ``config.iterations`` SGD iterations over ``train_batches``.

    ``train_batches`` is a sequence of ``(data, labels)`` pairs visited in
    order and wrapped around. The windowed training loss is logged every
    ``train_log_window`` iterations and the test loss every
    ``test_eval_every`` iterations (and both at the final iteration).
    ``snapshot(iteration, params)`` is called every ``config.snapshot_every``
    iterations when given. Returns ``(params, LossHistory)``; the input
    parameters are not modified.
    """
    if len(train_batches) == 0:
        raise ValueError("no training batches")
    params = copy_params(params)
    multipliers = net.multipliers()
    stop_at = first_trainable_index(net)
    velocity = {}
    history = LossHistory()
    initial = None
    # Layers below stop_at never change, so their output for a given batch
    # index is fixed; reusing it gives the same numbers as recomputing.
    features = {}
    budget = config.feature_cache_mb * 2 ** 20

    for it in range(config.iterations):
        idx = it % len(train_batches)
        if idx in features:
            x, labels = features[idx]
            acts = forward(net, params, x, start=stop_at)
        else:
            data, labels = _as_batch(train_batches[idx])
            acts = forward(net, params, data)
            if 0 < stop_at < len(net.layers):
                x = acts.values[stop_at]
                if x.nbytes <= budget:
                    features[idx] = (x, labels)
                    budget -= x.nbytes
        loss, grad = squared_loss(acts.predictions, labels)
        step = it + 1
        if initial is None:
            initial = loss
        if not math.isfinite(loss) or (initial > 0 and loss > config.divergence_factor * initial):
            raise DivergenceError(f"training diverged at iteration {step}: loss {loss}", step)
        history.iteration_losses.append(loss)

        if stop_at < len(net.layers):
            grads = backward(net, params, acts, grad, stop_at=stop_at, bottom_input_grad=False)
            params = sgd_step(params, grads.params, config, multipliers, it, velocity)

        last = step == config.iterations
        train_loss = test_loss = None
        if step % config.train_log_window == 0 or last:
            window = history.iteration_losses[-config.train_log_window:]
            train_loss = math.fsum(window) / len(window)
        if test_set is not None and (step % config.test_eval_every == 0 or last):
            test_loss = evaluate_loss(net, params, test_set)
        if train_loss is not None or test_loss is not None:
            history.records.append((step, train_loss, test_loss))
            log.info("iter %d train %s test %s", step, train_loss, test_loss)
        if snapshot is not None and config.snapshot_every and step % config.snapshot_every == 0:
            snapshot(step, params)
    return params, history


def predict(net, params, image):
    """Forward one preprocessed image (``(c, h, w)`` or ``(1, c, h, w)``) to its output vector."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        image = image[None]
    if image.shape[0] != 1:
        raise ShapeError("predict takes a single image; use predict_batch for several")
    return forward(net, params, image).predictions[0]


def predict_batch(net, params, data, chunk=64):
    data = np.asarray(data, dtype=np.float64)
    out = [forward(net, params, data[s:s + chunk]).predictions for s in range(0, data.shape[0], chunk)]
    return np.concatenate(out, axis=0) if out else np.zeros((0, net.outputs))
