"""Label-consistent geometric augmentation: translated crops, rotation, scale.

Coordinates: origin at the top-left, x to the right, y down, pixel centres at
integer coordinates. A sample is produced by an optional similarity transform
about the body bounding-box centre (rotation or scale), followed by a
``crop_w x crop_h`` crop that is resized to ``out_w x out_h``. The whole
chain is recorded in a :class:`CropSpec`, so labels can be mapped back to the
native frame.
"""

import functools
import logging
import math
from dataclasses import asdict, dataclass
import numpy as np

from .data import FRAME_HEIGHT, FRAME_WIDTH
from .errors import InfeasibleAugmentationError, ShapeError

log = logging.getLogger(__name__)

CROP_W, CROP_H = 600, 400
OUT_W, OUT_H = 224, 224
ROTATION_RANGE = (-45.0, 45.0)
SCALE_RANGE = (0.5, 1.5)
_EPS = 1e-9


# -- resampling ----------------------------------------------------------------

def _as_hwc(image):
    # no dtype conversion here: 8-bit frames are only promoted after gathering
    img = np.asarray(image)
    if img.ndim == 2:
        return img[:, :, None], True
    if img.ndim == 3:
        return img, False
    raise ShapeError(f"expected an h x w or h x w x c image, got {img.shape}")


def _axis_weights(src, out):
    pos = (np.arange(out) + 0.5) * (src / out) - 0.5
    pos = np.clip(pos, 0.0, src - 1)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, src - 1)
    return i0, i1, pos - i0


def bilinear_resize(image, out_w, out_h):
    """Resize with centre-aligned bilinear interpolation (no anti-aliasing).

    Output pixel ``u`` samples source coordinate ``(u + 0.5) * src / out - 0.5``,
    clamped to the image, and blends the four surrounding pixels.
    """
    if out_w < 1 or out_h < 1:
        raise ShapeError(f"output size must be positive, got {out_w}x{out_h}")
    img, squeeze = _as_hwc(image)
    h, w = img.shape[:2]
    if h < 1 or w < 1:
        raise ShapeError("empty source image")
    y0, y1, fy = _axis_weights(h, out_h)
    x0, x1, fx = _axis_weights(w, out_w)
    fx = fx[None, :, None]
    top = img[y0]
    bot = img[y1]
    top = top[:, x0] * (1 - fx) + top[:, x1] * fx
    bot = bot[:, x0] * (1 - fx) + bot[:, x1] * fx
    fy = fy[:, None, None]
    out = top * (1 - fy) + bot * fy
    return out[:, :, 0] if squeeze else out


def bilinear_sample(image, xs, ys, fill):
    """Sample ``image`` at real coordinates; points outside ``[0, w-1] x [0, h-1]`` get ``fill``."""
    img, squeeze = _as_hwc(image)
    h, w, c = img.shape
    inside = (xs >= -_EPS) & (xs <= w - 1 + _EPS) & (ys >= -_EPS) & (ys <= h - 1 + _EPS)
    xc = np.clip(xs, 0, w - 1)
    yc = np.clip(ys, 0, h - 1)
    x0 = np.floor(xc).astype(int)
    y0 = np.floor(yc).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xc - x0)[..., None]
    fy = (yc - y0)[..., None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    out[~inside] = np.broadcast_to(np.asarray(fill, dtype=np.float64), (c,))
    return out[..., 0] if squeeze else out


def border_mean(image):
    """Per-channel mean of the outermost pixel ring."""
    img, _ = _as_hwc(image)
    ring = np.concatenate([img[0], img[-1], img[1:-1, 0], img[1:-1, -1]], axis=0)
    return ring.mean(axis=0, dtype=np.float64)


# -- crop geometry -------------------------------------------------------------

@dataclass
class CropSpec:
    """Native frame -> network input mapping for one sample.

    A native point ``p`` is first moved by the similarity transform
    ``c + scale * R(rotation) (p - c)`` about ``(center_x, center_y)``, then
    cropped at ``(origin_x, origin_y)`` and scaled by ``out / crop`` per axis.
    """
    origin_x: float
    origin_y: float
    crop_w: int = CROP_W
    crop_h: int = CROP_H
    out_w: int = OUT_W
    out_h: int = OUT_H
    rotation_deg: float = 0.0
    scale: float = 1.0
    center_x: float = 0.0
    center_y: float = 0.0

    @property
    def is_translation(self):
        return self.rotation_deg == 0 and self.scale == 1

    def _rotation(self):
        t = math.radians(self.rotation_deg)
        return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])

    def pre_transform(self, points):
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        if self.is_translation:
            return p.copy()
        c = np.array([self.center_x, self.center_y])
        return c + self.scale * (p - c) @ self._rotation().T

    def inverse_pre_transform(self, points):
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        if self.is_translation:
            return p.copy()
        c = np.array([self.center_x, self.center_y])
        return c + ((p - c) / self.scale) @ self._rotation()

    def to_output(self, points):
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return (p - [self.origin_x, self.origin_y]) * [self.out_w, self.out_h] / [self.crop_w, self.crop_h]

    def from_output(self, points):
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return p * [self.crop_w, self.crop_h] / [self.out_w, self.out_h] + [self.origin_x, self.origin_y]

    def forward_map(self, label):
        """Native 8-vector -> output-space 8-vector."""
        return self.to_output(self.pre_transform(label)).reshape(-1)

    def inverse_map(self, label):
        """Output-space 8-vector -> native 8-vector."""
        return self.inverse_pre_transform(self.from_output(label)).reshape(-1)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def effective_bbox(frame):
    """Body box as ``(x0, y0, x1, y1)``, grown if needed so every landmark lies inside.

    Boxes are half-open pixel ranges, so a landmark on the far edge grows the box by one pixel.
    """
    bx, by, bw, bh = frame.bbox
    lm = frame.landmarks
    return (min(bx, lm[:, 0].min()), min(by, lm[:, 1].min()),
            max(bx + bw, lm[:, 0].max() + 1), max(by + bh, lm[:, 1].max() + 1))


def _box_corners(box):
    x0, y0, x1, y1 = box
    return np.array([[x0, y0], [x1, y0], [x0, y1], [x1, y1]])


def origin_range(box, frame_w=FRAME_WIDTH, frame_h=FRAME_HEIGHT, crop_w=CROP_W, crop_h=CROP_H):
    """Integer crop origins keeping the crop inside the frame and ``box`` inside the crop.

    Returns ``((x_lo, x_hi), (y_lo, y_hi))``, both inclusive.
    """
    x0, y0, x1, y1 = box
    x_lo = max(0, math.ceil(x1 - crop_w - _EPS))
    y_lo = max(0, math.ceil(y1 - crop_h - _EPS))
    x_hi = min(frame_w - crop_w, math.floor(x0 + _EPS))
    y_hi = min(frame_h - crop_h, math.floor(y0 + _EPS))
    if x_lo > x_hi or y_lo > y_hi:
        raise InfeasibleAugmentationError(
            f"box {tuple(round(float(v), 2) for v in box)} does not fit a {crop_w}x{crop_h} crop inside the frame"
        )
    return (x_lo, x_hi), (y_lo, y_hi)


def _transformed_box(frame, spec):
    pts = spec.pre_transform(np.vstack([_box_corners(effective_bbox(frame)), frame.landmarks]))
    return (pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max()), pts[4:]


def centered_crop(frame, frame_w=FRAME_WIDTH, frame_h=FRAME_HEIGHT, crop_w=CROP_W, crop_h=CROP_H,
                  out_w=OUT_W, out_h=OUT_H):
    """Deterministic crop centred on the body box, clamped into the frame.

    When the box fits, the origin is additionally clamped to keep it inside the crop.
    """
    box = effective_bbox(frame)
    cx, cy = (box[0] + box[2]) / 2, (box[1] + box[3]) / 2
    ox = int(math.floor(cx - crop_w / 2 + 0.5))
    oy = int(math.floor(cy - crop_h / 2 + 0.5))
    try:
        (xl, xh), (yl, yh) = origin_range(box, frame_w, frame_h, crop_w, crop_h)
    except InfeasibleAugmentationError:
        (xl, xh), (yl, yh) = (0, frame_w - crop_w), (0, frame_h - crop_h)
    return CropSpec(min(max(ox, xl), xh), min(max(oy, yl), yh), crop_w, crop_h, out_w, out_h,
                    center_x=cx, center_y=cy)


def render(image, spec, fill=None):
    """Produce the ``out_h x out_w`` network image described by ``spec``."""
    img, squeeze = _as_hwc(image)
    h, w = img.shape[:2]
    ox, oy = spec.origin_x, spec.origin_y
    if spec.is_translation and float(ox).is_integer() and float(oy).is_integer():
        ox, oy = int(ox), int(oy)
        if ox < 0 or oy < 0 or ox + spec.crop_w > w or oy + spec.crop_h > h:
            raise InfeasibleAugmentationError("crop extends outside the image")
        window = img[oy:oy + spec.crop_h, ox:ox + spec.crop_w]
    else:
        # compose resize and inverse warp so each output pixel is interpolated once
        xs = np.clip((np.arange(spec.out_w) + 0.5) * (spec.crop_w / spec.out_w) - 0.5, 0, spec.crop_w - 1)
        ys = np.clip((np.arange(spec.out_h) + 0.5) * (spec.crop_h / spec.out_h) - 0.5, 0, spec.crop_h - 1)
        gx, gy = np.meshgrid(xs + ox, ys + oy)
        src = spec.inverse_pre_transform(np.stack([gx.ravel(), gy.ravel()], axis=1))
        fill = border_mean(img) if fill is None else fill
        out = bilinear_sample(img, src[:, 0].reshape(gx.shape), src[:, 1].reshape(gx.shape), fill)
        return out[:, :, 0] if squeeze else out
    out = bilinear_resize(window, spec.out_w, spec.out_h)
    return out[:, :, 0] if squeeze else out


# -- samples -------------------------------------------------------------------

@dataclass
class Sample:
    image: np.ndarray  # out_h x out_w (x 3), 0..255 scale
    label: np.ndarray  # 8-vector in output pixel coordinates
    crop: CropSpec
    frame_id: int = 0
    generated: bool = False


@dataclass(frozen=True)
class Geometry:
    frame_w: int = FRAME_WIDTH
    frame_h: int = FRAME_HEIGHT
    crop_w: int = CROP_W
    crop_h: int = CROP_H
    out_w: int = OUT_W
    out_h: int = OUT_H


def _sample(frame, image, rng, geometry, rotation_deg=0.0, scale=1.0):
    g = geometry
    box = effective_bbox(frame)
    spec = CropSpec(0, 0, g.crop_w, g.crop_h, g.out_w, g.out_h, rotation_deg, scale,
                    (box[0] + box[2]) / 2, (box[1] + box[3]) / 2)
    tbox, tlm = _transformed_box(frame, spec)
    if not spec.is_translation and (tlm.min() < 0 or tlm[:, 0].max() >= g.frame_w or tlm[:, 1].max() >= g.frame_h):
        raise InfeasibleAugmentationError("transformed landmarks leave the frame")
    (xl, xh), (yl, yh) = origin_range(tbox, g.frame_w, g.frame_h, g.crop_w, g.crop_h)
    spec.origin_x = int(rng.integers(xl, xh + 1))
    spec.origin_y = int(rng.integers(yl, yh + 1))
    if image is None:
        image = frame.load_image()
    return Sample(render(image, spec), spec.forward_map(frame.label), spec, frame.frame_id, True)


def make_translated_sample(frame, rng, image=None, geometry=Geometry()):
    """Random crop placing the body uniformly among all feasible crop positions."""
    return _sample(frame, image, rng, geometry)


def make_rotated_sample(frame, rng, image=None, geometry=Geometry(), angle_deg=None,
                        angle_range=ROTATION_RANGE):
    """Rotate about the bbox centre by a uniform random angle, then take a translated crop."""
    if angle_deg is None:
        angle_deg = float(rng.uniform(*angle_range))
    return _sample(frame, image, rng, geometry, rotation_deg=angle_deg)


def make_scaled_sample(frame, rng, image=None, geometry=Geometry(), factor=None,
                       scale_range=SCALE_RANGE):
    """Rescale about the bbox centre by a uniform random factor, then take a translated crop."""
    if factor is None:
        factor = float(rng.uniform(*scale_range))
    if factor <= 0:
        raise ValueError("scale factor must be positive")
    return _sample(frame, image, rng, geometry, scale=factor)


def original_sample(frame, image=None, geometry=Geometry()):
    g = geometry
    spec = centered_crop(frame, g.frame_w, g.frame_h, g.crop_w, g.crop_h, g.out_w, g.out_h)
    if image is None:
        image = frame.load_image()
    return Sample(render(image, spec), spec.forward_map(frame.label), spec, frame.frame_id, False)


# -- whole datasets --------------------------------------------------------------

SCHEMES = ("none", "t", "tr", "ts")


@dataclass(frozen=True)
class AugmentScheme:
    kind: str = "t"
    target_total: int = 200_000
    rng_seed: int = 0
    rotation_range_deg: tuple = ROTATION_RANGE
    scale_range: tuple = SCALE_RANGE
    geometry: Geometry = Geometry()

    def __post_init__(self):
        kind = self.kind.lower().replace("+", "").replace(" ", "")
        if kind not in SCHEMES:
            raise ValueError(f"augmentation kind must be one of {SCHEMES}, got {self.kind!r}")
        object.__setattr__(self, "kind", kind)


# Random transform redraws per generated sample before moving on to the next frame.
MAX_REDRAWS = 20


class AugmentedDataset:
    """Ordered, indexable stream of samples: originals first, then generated ones.

    Sample ``i`` depends only on ``(scheme.rng_seed, i)`` and the frames, so
    any subset can be produced independently and in any order.
    """

    def __init__(self, frames, scheme, image_loader=None, cache_size=256):
        if not frames:
            raise ValueError("no frames to augment")
        self.scheme = scheme
        g = scheme.geometry
        load = image_loader or (lambda f: f.load_image())
        self._load = functools.lru_cache(maxsize=cache_size)(lambda i: load(self.frames[i]))
        self.frames = []
        for f in frames:
            try:
                origin_range(effective_bbox(f), g.frame_w, g.frame_h, g.crop_w, g.crop_h)
            except InfeasibleAugmentationError as exc:
                log.warning("skipping frame %s: %s", f.frame_id, exc)
                continue
            self.frames.append(f)
        if not self.frames:
            raise InfeasibleAugmentationError("every frame is infeasible for augmentation")
        n = len(self.frames)
        if scheme.kind == "none":
            self.total = n
        else:
            if scheme.target_total < n:
                raise ValueError(f"target_total {scheme.target_total} is below the {n} source frames")
            self.total = scheme.target_total

    @property
    def n_original(self):
        return len(self.frames)

    @property
    def n_generated(self):
        return self.total - self.n_original

    def __len__(self):
        return self.total

    def __iter__(self):
        for i in range(self.total):
            yield self[i]

    def __getitem__(self, i):
        if not 0 <= i < self.total:
            raise IndexError(i)
        n = len(self.frames)
        if i < n:
            return original_sample(self.frames[i], self._load(i), self.scheme.geometry)
        rng = np.random.default_rng([self.scheme.rng_seed, i])
        j = i - n
        for shift in range(n):
            k = (j + shift) % n
            for _ in range(MAX_REDRAWS):
                try:
                    return self._generate(self.frames[k], self._load(k), rng)
                except InfeasibleAugmentationError:
                    continue
            log.warning("sample %d: no feasible %s transform for frame %s", i, self.scheme.kind,
                        self.frames[k].frame_id)
        raise InfeasibleAugmentationError(f"sample {i}: no frame admits a feasible transform")

    def _generate(self, frame, image, rng):
        s, g = self.scheme, self.scheme.geometry
        if s.kind == "t":
            return make_translated_sample(frame, rng, image, g)
        if s.kind == "tr":
            return make_rotated_sample(frame, rng, image, g, angle_range=s.rotation_range_deg)
        return make_scaled_sample(frame, rng, image, g, scale_range=s.scale_range)


def augment_dataset(frames, scheme, image_loader=None):
    return AugmentedDataset(frames, scheme, image_loader)
