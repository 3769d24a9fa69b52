"""Glue between augmentation, preprocessing, training and evaluation."""

import numpy as np

from .augment import Geometry, original_sample
from .data import channel_means, preprocess
from .evaluate import INCLUDE_ALL, map_to_native, mae_per_landmark
from .nn.train import predict_batch, squared_loss


class PreparedSamples:
    """Mean-subtracted network inputs over an indexable sample source.

    ``source[i]`` must give an augmentation ``Sample``. Supports ``slice``
    and ``len`` so it can back ``storage.MiniBatches`` without writing files.
    """

    def __init__(self, source, means):
        self.source = source
        self.means = np.asarray(means, dtype=np.float64)

    def __len__(self):
        return len(self.source)

    def slice(self, start, stop):
        samples = [self.source[i] for i in range(start, stop)]
        data = np.concatenate([preprocess(s.image, self.means) for s in samples], axis=0)
        return data, np.stack([s.label for s in samples])


def dataset_means(dataset):
    """Per-channel means over the original (unaugmented) samples of an ``AugmentedDataset``."""
    return channel_means(dataset[i].image for i in range(dataset.n_original))


def centred_inputs(frames, image_loader, means, geometry=Geometry()):
    """Test-time inputs: one centred crop per frame.

    Returns ``(data, labels, crops)`` with labels in network-input pixels.
    """
    samples = [original_sample(f, image_loader(f), geometry) for f in frames]
    if not samples:
        return np.zeros((0, 3, geometry.out_h, geometry.out_w)), np.zeros((0, 8)), []
    data = np.concatenate([preprocess(s.image, means) for s in samples], axis=0)
    return data, np.stack([s.label for s in samples]), [s.crop for s in samples]


def annotate(net, params, frames, image_loader, means, geometry=Geometry()):
    """Predicted native-resolution landmarks, ``n x 8``."""
    data, _, crops = centred_inputs(frames, image_loader, means, geometry)
    if not crops:
        return np.zeros((0, 8))
    pred = predict_batch(net, params, data)
    return np.stack([map_to_native(p, c) for p, c in zip(pred, crops)])


def evaluate_frames(net, params, frames, image_loader, means, geometry=Geometry(),
                    occlusion_mode=INCLUDE_ALL):
    """Test loss (network-input pixels) and per-landmark MAE (native pixels) over ``frames``."""
    data, labels, crops = centred_inputs(frames, image_loader, means, geometry)
    pred = predict_batch(net, params, data)
    loss, _ = squared_loss(pred, labels)
    native = np.stack([map_to_native(p, c) for p, c in zip(pred, crops)])
    result = mae_per_landmark(native, np.stack([f.label for f in frames]),
                              np.array([f.occluded for f in frames]), occlusion_mode)
    result.test_loss = loss
    return result
