"""Annotation and calibration files, train/test splits, image preprocessing."""

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

from .errors import FormatError, ParseError, SizeError, ValidationError

LANDMARKS = ("head", "abdomen", "left_wing", "right_wing")
ANNOTATION_MAGIC = "# landmarknet-annotations v1"
CALIBRATION_MAGIC = "# landmarknet-calibration v1"
ANNOTATION_COLUMNS = ("frame_id", "image", "head_x", "head_y", "abd_x", "abd_y", "lw_x", "lw_y",
                      "rw_x", "rw_y", "occ_head", "occ_abd", "occ_lw", "occ_rw",
                      "bbox_x", "bbox_y", "bbox_w", "bbox_h")

# Native frame geometry: 600 rows by 800 columns.
FRAME_WIDTH = 800
FRAME_HEIGHT = 600


@dataclass
class AnnotatedFrame:
    frame_id: int
    image_ref: str
    landmarks: np.ndarray  # (4, 2) as (x, y), native pixels
    occluded: Tuple[bool, bool, bool, bool] = (False, False, False, False)
    bbox: Tuple[float, float, float, float] = (0.0, 0.0, FRAME_WIDTH, FRAME_HEIGHT)  # x, y, w, h

    def __post_init__(self):
        self.landmarks = np.asarray(self.landmarks, dtype=np.float64).reshape(4, 2)
        self.occluded = tuple(bool(o) for o in self.occluded)
        self.bbox = tuple(float(v) for v in self.bbox)

    @property
    def label(self):
        """The 8-vector ``(x0, y0, x1, y1, ...)``."""
        return self.landmarks.reshape(-1).copy()

    @property
    def any_occluded(self):
        return any(self.occluded)

    def validate(self, width=FRAME_WIDTH, height=FRAME_HEIGHT):
        xs, ys = self.landmarks[:, 0], self.landmarks[:, 1]
        if not (np.all(np.isfinite(self.landmarks)) and np.all((xs >= 0) & (xs < width))
                and np.all((ys >= 0) & (ys < height))):
            raise ValidationError(f"frame {self.frame_id}: landmark outside the {width}x{height} frame")
        bx, by, bw, bh = self.bbox
        if bw <= 0 or bh <= 0 or bx < 0 or by < 0 or bx + bw > width or by + bh > height:
            raise ValidationError(f"frame {self.frame_id}: bounding box {self.bbox} outside the frame")

    def load_image(self, base_dir=None):
        return load_image(resolve(self.image_ref, base_dir))


def resolve(ref, base_dir=None):
    path = Path(ref)
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    return path


def load_image(path):
    """Read an image file as an 8-bit array (``h x w`` or ``h x w x 3``)."""
    path = Path(path)
    if path.suffix == ".npy":
        img = np.load(path)
    else:
        from PIL import Image
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            img = np.asarray(im)
    if img.dtype != np.uint8:
        raise FormatError(f"{path}: expected an 8-bit image, got {img.dtype}")
    return img


def save_image(path, image):
    from PIL import Image
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path)


# -- annotation CSV ------------------------------------------------------------

def _parse_bool(text, line, col):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "y"):
        return True
    if t in ("0", "false", "no", "n", ""):
        return False
    raise ParseError(f"column {col}: cannot read {text!r} as a flag", line)


def load_annotations(path, width=FRAME_WIDTH, height=FRAME_HEIGHT):
    """Read an annotation CSV into frames sorted by ``frame_id``.

    Lines starting with ``#`` are comments (the writer emits a version line).
    """
    frames = []
    with open(path, newline="") as fh:
        lines = [(i, ln) for i, ln in enumerate(fh, start=1) if not ln.lstrip().startswith("#")]
    if not lines:
        raise ParseError("missing header", 1)
    header_line, header = lines[0]
    cols = [c.strip() for c in next(csv.reader([header]))]
    if tuple(cols) != ANNOTATION_COLUMNS:
        raise ParseError(f"unexpected header {cols}", header_line)
    for lineno, text in lines[1:]:
        if not text.strip():
            continue
        row = next(csv.reader([text]))
        if len(row) != len(ANNOTATION_COLUMNS):
            raise ParseError(f"expected {len(ANNOTATION_COLUMNS)} fields, got {len(row)}", lineno)
        try:
            frame_id = int(row[0])
            coords = [float(v) for v in row[2:10]]
            bbox = [float(v) for v in row[14:18]]
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        occ = [_parse_bool(v, lineno, ANNOTATION_COLUMNS[10 + i]) for i, v in enumerate(row[10:14])]
        frame = AnnotatedFrame(frame_id, row[1], np.reshape(coords, (4, 2)), tuple(occ), tuple(bbox))
        try:
            frame.validate(width, height)
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
        frames.append(frame)
    frames.sort(key=lambda f: f.frame_id)
    return frames


def save_annotations(frames, path):
    with open(path, "w", newline="") as fh:
        fh.write(ANNOTATION_MAGIC + "\n")
        writer = csv.writer(fh)
        writer.writerow(ANNOTATION_COLUMNS)
        for f in frames:
            writer.writerow([f.frame_id, f.image_ref, *[repr(float(v)) for v in f.label],
                             *[int(o) for o in f.occluded], *[repr(float(v)) for v in f.bbox]])


# -- splits --------------------------------------------------------------------

@dataclass(frozen=True)
class FirstHalf:
    pass


@dataclass(frozen=True)
class Interleaved:
    pass


@dataclass(frozen=True)
class RandomK:
    train_k: int
    test_k: int = 200
    seed: int = 0


def split(frames, strategy):
    """Partition frames into ``(train, test)`` lists."""
    frames = sorted(frames, key=lambda f: f.frame_id)
    n = len(frames)
    if isinstance(strategy, FirstHalf):
        cut = math.ceil(n / 2)
        return frames[:cut], frames[cut:]
    if isinstance(strategy, Interleaved):
        return ([f for f in frames if f.frame_id % 2 == 1],
                [f for f in frames if f.frame_id % 2 == 0])
    if isinstance(strategy, RandomK):
        if strategy.train_k < 0 or strategy.test_k < 0 or strategy.train_k + strategy.test_k > n:
            raise SizeError(f"cannot draw {strategy.train_k} train + {strategy.test_k} test from {n} frames")
        rng = np.random.default_rng(strategy.seed)
        test_idx = rng.choice(n, size=strategy.test_k, replace=False)
        rest = np.setdiff1d(np.arange(n), test_idx)
        train_idx = rng.choice(rest, size=strategy.train_k, replace=False)
        return ([frames[i] for i in sorted(train_idx)], [frames[i] for i in sorted(test_idx)])
    raise ValueError(f"unknown split strategy {strategy!r}")


def parse_split(name, train_k=600, test_k=200, seed=0):
    name = name.lower().replace("_", "-")
    if name == "first-half":
        return FirstHalf()
    if name == "interleaved":
        return Interleaved()
    if name == "random-k":
        return RandomK(train_k, test_k, seed)
    raise ValueError(f"unknown split {name!r}")


# -- preprocessing -------------------------------------------------------------

def _check_8bit(image):
    image = np.asarray(image)
    if image.dtype == np.uint8:
        return image.astype(np.float64)
    if np.issubdtype(image.dtype, np.floating):
        # resampled 8-bit images stay on the 0..255 scale
        if image.size and (np.nanmin(image) < 0 or np.nanmax(image) > 255 or not np.all(np.isfinite(image))):
            raise FormatError("floating-point image values must lie in [0, 255]")
        return image.astype(np.float64)
    raise FormatError(f"expected an 8-bit image, got dtype {image.dtype}")


def to_chw(image):
    """8-bit ``h x w`` or ``h x w x 3`` image to a float ``3 x h x w`` array (grey replicated)."""
    img = _check_8bit(image)
    if img.ndim == 2:
        return np.repeat(img[None], 3, axis=0)
    if img.ndim == 3 and img.shape[2] == 3:
        return np.ascontiguousarray(img.transpose(2, 0, 1))
    if img.ndim == 3 and img.shape[2] == 1:
        return np.repeat(img[None, :, :, 0], 3, axis=0)
    raise FormatError(f"unsupported image shape {img.shape}")


def preprocess(image, means):
    """Replicate grey to three channels and subtract per-channel means; returns ``1 x 3 x h x w``."""
    chw = to_chw(image)
    means = np.asarray(means, dtype=np.float64).reshape(3, 1, 1)
    return (chw - means)[None]


def unpreprocess(tensor, means):
    return np.asarray(tensor)[0] + np.asarray(means, dtype=np.float64).reshape(3, 1, 1)


def channel_means(images):
    """Per-channel mean over an iterable of 8-bit images."""
    total = np.zeros(3)
    count = 0
    for img in images:
        chw = to_chw(img)
        total += chw.reshape(3, -1).sum(axis=1)
        count += chw.shape[1] * chw.shape[2]
    if count == 0:
        raise ValueError("no images to average")
    return total / count


# -- calibration ---------------------------------------------------------------

def load_calibration(path):
    """Read a 3x4 projection matrix stored as 12 whitespace-separated numbers."""
    tokens = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0]
            tokens.extend(line.split())
    if len(tokens) != 12:
        raise FormatError(f"{path}: expected 12 numbers, found {len(tokens)}")
    try:
        return np.array([float(t) for t in tokens]).reshape(3, 4)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def save_calibration(matrix, path):
    m = np.asarray(matrix, dtype=np.float64).reshape(3, 4)
    with open(path, "w") as fh:
        fh.write(CALIBRATION_MAGIC + "\n")
        for row in m:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
