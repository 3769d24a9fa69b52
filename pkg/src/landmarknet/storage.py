"""On-disk containers: HDF5 batch files and weight archives.

Batch file layout (one HDF5 file per batch)::

    attrs  format = "landmarknet-batch", version = 1
    /data   float64, dims (w, h, c, n)   -- reverse of the in-memory (n, c, h, w)
    /label  float64, dims (d, 1, 1, n)   -- reverse of (n, 1, 1, d)

A plain-text list file (one batch path per line) accompanies a set of batch
files, mirroring what HDF5 data layers expect.

Weight archive layout::

    attrs  format = "landmarknet-weights", version = 1, layers = [names...]
    /<layer>/weights, /<layer>/biases   float64, in-memory dimension order
"""

import itertools
from pathlib import Path

import h5py
import numpy as np

from .errors import FormatError, MissingWeightsError, ShapeError
from .nn.network import LayerParams

BATCH_FORMAT = "landmarknet-batch"
WEIGHTS_FORMAT = "landmarknet-weights"
FORMAT_VERSION = 1


def _check_magic(fh, expected, path):
    if fh.attrs.get("format") != expected:
        raise FormatError(f"{path}: not a {expected} file")
    if int(fh.attrs.get("version", -1)) != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {fh.attrs.get('version')}")


def _reverse(a):
    return np.ascontiguousarray(np.transpose(a, tuple(range(a.ndim - 1, -1, -1))))


def write_batch_file(path, data, labels):
    data = np.asarray(data)
    labels = np.asarray(labels)
    if data.ndim != 4:
        raise ShapeError(f"data must be (n, c, h, w), got {data.shape}")
    labels = labels.reshape(labels.shape[0], 1, 1, -1)
    if labels.shape[0] != data.shape[0]:
        raise ShapeError(f"{data.shape[0]} samples but {labels.shape[0]} labels")
    with h5py.File(path, "w") as fh:
        fh.attrs["format"] = BATCH_FORMAT
        fh.attrs["version"] = FORMAT_VERSION
        fh.create_dataset("data", data=_reverse(data), track_times=False)
        fh.create_dataset("label", data=_reverse(labels), track_times=False)


def read_batch_file(path):
    """Return ``(data (n,c,h,w), labels (n,1,1,d))`` in memory order."""
    with h5py.File(path, "r") as fh:
        _check_magic(fh, BATCH_FORMAT, path)
        for key in ("data", "label"):
            if key not in fh:
                raise FormatError(f"{path}: missing /{key}")
        data, labels = fh["data"][()], fh["label"][()]
    if data.ndim != 4 or labels.ndim != 4:
        raise FormatError(f"{path}: datasets must be 4-dimensional")
    data, labels = _reverse(data), _reverse(labels)
    if data.shape[0] != labels.shape[0] or labels.shape[1:3] != (1, 1):
        raise FormatError(f"{path}: data {data.shape} and label {labels.shape} disagree")
    return data, labels


def write_batches(samples, labels, path, samples_per_file=1000, prefix="batch"):
    """Chunk samples into batch files under directory ``path``.

    ``samples`` and ``labels`` may be arrays or iterables of per-sample arrays
    (so large sets can be streamed). With ``labels=None``, ``samples`` yields
    ``(sample, label)`` pairs instead. Returns the written file paths; a list
    file ``<prefix>_list.txt`` names them in order.
    """
    if samples_per_file < 1:
        raise ValueError("samples_per_file must be >= 1")
    if labels is not None and hasattr(samples, "__len__") and hasattr(labels, "__len__") \
            and len(samples) != len(labels):
        raise ShapeError(f"{len(samples)} samples but {len(labels)} labels")
    out_dir = Path(path)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = iter(samples) if labels is None else _zip_strict(samples, labels)
    paths = []
    for index in itertools.count():
        chunk = list(itertools.islice(pairs, samples_per_file))
        if not chunk:
            break
        chunk_s, chunk_l = zip(*chunk)
        file_path = out_dir / f"{prefix}_{index:05d}.h5"
        write_batch_file(file_path, np.stack(chunk_s), np.stack([np.ravel(lbl) for lbl in chunk_l]))
        paths.append(file_path)
    (out_dir / f"{prefix}_list.txt").write_text("".join(f"{p.name}\n" for p in paths))
    return paths


def _zip_strict(a, b):
    sentinel = object()
    for x, y in itertools.zip_longest(a, b, fillvalue=sentinel):
        if x is sentinel or y is sentinel:
            raise ShapeError("sample and label streams have different lengths")
        yield x, y


def list_batch_files(path, prefix="batch"):
    path = Path(path)
    if path.is_dir():
        listing = path / f"{prefix}_list.txt"
        if not listing.exists():
            raise FormatError(f"{path}: no {listing.name}")
        path = listing
    if path.suffix == ".h5":
        return [path]
    return [path.parent / line.strip() for line in path.read_text().splitlines() if line.strip()]


class BatchStore:
    """Sample-level view over a set of batch files, loaded one file at a time."""

    def __init__(self, path, prefix="batch"):
        self.paths = list_batch_files(path, prefix)
        self.counts = []
        for p in self.paths:
            with h5py.File(p, "r") as fh:
                _check_magic(fh, BATCH_FORMAT, p)
                self.counts.append(fh["data"].shape[-1])
        self.offsets = np.concatenate([[0], np.cumsum(self.counts)]).astype(int)
        self._cached = (None, None)

    def __len__(self):
        return int(self.offsets[-1])

    def _file(self, i):
        if self._cached[0] != i:
            self._cached = (i, read_batch_file(self.paths[i]))
        return self._cached[1]

    def read_all(self):
        parts = [read_batch_file(p) for p in self.paths]
        return np.concatenate([d for d, _ in parts]), np.concatenate([lb for _, lb in parts])

    def slice(self, start, stop):
        data, labels = [], []
        pos = start
        while pos < stop:
            i = int(np.searchsorted(self.offsets, pos, side="right") - 1)
            d, lb = self._file(i)
            a = pos - self.offsets[i]
            b = min(stop, self.offsets[i + 1]) - self.offsets[i]
            data.append(d[a:b])
            labels.append(lb[a:b])
            pos = self.offsets[i] + b
        return np.concatenate(data), np.concatenate(labels).reshape(stop - start, -1)

    def minibatches(self, batch_size):
        return MiniBatches(self, batch_size)


class MiniBatches:
    """Sequence of ``(data, labels)`` mini-batches over anything with ``slice`` and ``len``."""

    def __init__(self, source, batch_size):
        self.source = source
        self.batch_size = batch_size

    def __len__(self):
        return -(-len(self.source) // self.batch_size)

    def __getitem__(self, i):
        if not 0 <= i < len(self):
            raise IndexError(i)
        start = i * self.batch_size
        return self.source.slice(start, min(start + self.batch_size, len(self.source)))


def read_batches(path, prefix="batch"):
    """Read every batch under ``path`` into ``(data, labels)`` arrays in memory order."""
    return BatchStore(path, prefix).read_all()


# -- weight archives -----------------------------------------------------------

def save_weight_archive(params, path):
    with h5py.File(path, "w") as fh:
        fh.attrs["format"] = WEIGHTS_FORMAT
        fh.attrs["version"] = FORMAT_VERSION
        fh.attrs["layers"] = list(params)
        for name, p in params.items():
            grp = fh.create_group(name)
            grp.create_dataset("weights", data=np.asarray(p.weights, dtype=np.float64), track_times=False)
            grp.create_dataset("biases", data=np.asarray(p.biases, dtype=np.float64), track_times=False)


def load_weight_archive(path):
    """Return a dict of layer name to ``LayerParams``."""
    out = {}
    with h5py.File(path, "r") as fh:
        _check_magic(fh, WEIGHTS_FORMAT, path)
        for name in fh.attrs["layers"]:
            name = name.decode() if isinstance(name, bytes) else str(name)
            grp = fh[name]
            out[name] = LayerParams(grp["weights"][()], grp["biases"][()])
    return out


def params_from_archive(net, archive):
    """Take every learnable layer of ``net`` from ``archive``, checking shapes."""
    params = {}
    for name, (wshape, bshape) in net.param_shapes().items():
        if name not in archive:
            raise MissingWeightsError(f"archive has no layer {name!r}")
        p = archive[name]
        if p.weights.shape != wshape or p.biases.shape != bshape:
            raise ShapeError(f"archive layer {name!r} has shape {p.weights.shape}, expected {wshape}")
        params[name] = p
    return params
