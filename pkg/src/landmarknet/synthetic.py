"""Procedural test data: a moth-like figure with coloured landmark markers.

Frames are 600 x 800 RGB. A grey textured background carries a darker body
and two wings; each landmark is a saturated disc in its own colour (head red,
abdomen green, left wing tip blue, right wing tip cyan). The figure drifts
across the frame, beats its wings and the global brightness ramps slowly over
the sequence, so neighbouring frames look alike and distant ones differ.

``colour_detector_archive`` builds hand-set first-block weights that respond
to exactly one marker colour each. It stands in for imported feature weights
when no learned archive is available.
"""

import math
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .data import FRAME_HEIGHT, FRAME_WIDTH, AnnotatedFrame, save_annotations, save_image
from .multiview import CameraModel
from .nn.network import LayerParams

MARKER_COLOURS = np.array([[255, 40, 40], [40, 255, 40], [40, 40, 255], [40, 255, 255]], dtype=np.float64)
MARKER_RADIUS = 14.0
BODY_GREY = 70.0
WING_GREY = 95.0


def _background(rng, width, height):
    coarse = gaussian_filter(rng.standard_normal((height, width)), 24)
    fine = gaussian_filter(rng.standard_normal((height, width)), 3)
    tex = 120 + 25 * coarse / coarse.std() + 8 * fine / fine.std()
    return np.clip(tex, 20, 220)


def _disc_alpha(xx, yy, cx, cy, r):
    d = np.hypot(xx - cx, yy - cy)
    return np.clip(r + 0.5 - d, 0.0, 1.0)


def _ellipse_alpha(xx, yy, cx, cy, a, b, angle):
    c, s = math.cos(angle), math.sin(angle)
    u = ((xx - cx) * c + (yy - cy) * s) / a
    v = (-(xx - cx) * s + (yy - cy) * c) / b
    # roughly one pixel of soft edge
    return np.clip((1 - np.sqrt(u * u + v * v)) * min(a, b) + 0.5, 0.0, 1.0)


def _paint(canvas, alpha, value, x0, y0):
    h, w = alpha.shape
    view = canvas[y0:y0 + h, x0:x0 + w]
    view *= 1 - alpha[..., None]
    view += alpha[..., None] * value


def _patch(cx, cy, rx, ry, width, height):
    x0, x1 = max(0, int(cx - rx) - 2), min(width, int(cx + rx) + 3)
    y0, y1 = max(0, int(cy - ry) - 2), min(height, int(cy + ry) + 3)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    return xx.astype(np.float64), yy.astype(np.float64), x0, y0


def pose_at(t, n_frames):
    """Landmarks ``(4, 2)`` and body centre/heading for time index ``t``."""
    s = t / max(n_frames - 1, 1)
    cx = 290 + 220 * s + 25 * math.sin(2 * math.pi * t / 37)
    cy = 300 + 35 * math.sin(2 * math.pi * t / 53)
    heading = math.radians(12 * math.sin(2 * math.pi * t / 29))
    u = np.array([math.cos(heading), math.sin(heading)])
    c = np.array([cx, cy])
    head = c + 62 * u
    abdomen = c - 72 * u
    beat = math.radians(80 + 22 * math.sin(2 * math.pi * t / 7.3))
    base = c + 8 * u
    left = base + 118 * np.array([math.cos(heading - beat), math.sin(heading - beat)])
    right = base + 118 * np.array([math.cos(heading + beat), math.sin(heading + beat)])
    return np.array([head, abdomen, left, right]), c, heading


def render_frame(t, n_frames, background, rng, brightness_drift=0.04, noise=2.0):
    """Draw frame ``t``; returns ``(uint8 image, landmarks, bbox)``."""
    height, width = background.shape
    lm, c, heading = pose_at(t, n_frames)
    canvas = np.repeat(background[..., None], 3, axis=2).copy()
    base = c + 8 * np.array([math.cos(heading), math.sin(heading)])
    for tip in lm[2:]:
        mid = (base + tip) / 2
        ang = math.atan2(tip[1] - base[1], tip[0] - base[0])
        half = np.hypot(*(tip - base)) / 2 + 4
        xx, yy, x0, y0 = _patch(mid[0], mid[1], half, half, width, height)
        _paint(canvas, _ellipse_alpha(xx, yy, mid[0], mid[1], half, 24, ang), WING_GREY, x0, y0)
    xx, yy, x0, y0 = _patch(c[0], c[1], 80, 80, width, height)
    _paint(canvas, _ellipse_alpha(xx, yy, c[0], c[1], 76, 20, heading), BODY_GREY, x0, y0)
    for k in range(4):
        xx, yy, x0, y0 = _patch(lm[k, 0], lm[k, 1], MARKER_RADIUS, MARKER_RADIUS, width, height)
        _paint(canvas, _disc_alpha(xx, yy, lm[k, 0], lm[k, 1], MARKER_RADIUS), MARKER_COLOURS[k], x0, y0)
    level = 1 + brightness_drift * (t / max(n_frames - 1, 1) - 0.5)
    canvas = canvas * level + noise * rng.standard_normal(canvas.shape)
    image = np.clip(np.rint(canvas), 0, 255).astype(np.uint8)
    return image, lm, marker_bbox(lm, width, height)


def marker_bbox(lm, width=FRAME_WIDTH, height=FRAME_HEIGHT):
    """Integer ``(x, y, w, h)`` box around the landmark markers."""
    pad = MARKER_RADIUS + 4
    x0, y0 = max(0.0, math.floor(lm[:, 0].min() - pad)), max(0.0, math.floor(lm[:, 1].min() - pad))
    x1 = min(float(width), math.ceil(lm[:, 0].max() + pad))
    y1 = min(float(height), math.ceil(lm[:, 1].max() + pad))
    return (x0, y0, x1 - x0, y1 - y0)


class SyntheticSequence:
    """``n_frames`` frames (ids ``1..n``) rendered on demand from one seed."""

    def __init__(self, n_frames=200, seed=0, width=FRAME_WIDTH, height=FRAME_HEIGHT, brightness_drift=0.04):
        self.n_frames = n_frames
        self.seed = seed
        self.brightness_drift = brightness_drift
        self.background = _background(np.random.default_rng([seed, 0]), width, height)
        self.frames = []
        for t in range(n_frames):
            lm, _, _ = pose_at(t, n_frames)
            self.frames.append(AnnotatedFrame(t + 1, f"frame_{t + 1:05d}.png", lm,
                                              bbox=marker_bbox(lm, width, height)))

    def _render(self, t):
        return render_frame(t, self.n_frames, self.background, np.random.default_rng([self.seed, 1, t]),
                            self.brightness_drift)

    def image(self, frame):
        """Image loader keyed by frame; usable as ``image_loader`` for augmentation."""
        return self._render(frame.frame_id - 1)[0]

    def write(self, directory):
        """Save PNG frames plus ``annotations.csv``; returns the annotation path."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        for f in self.frames:
            save_image(out / f.image_ref, self.image(f))
        path = out / "annotations.csv"
        save_annotations(self.frames, path)
        return path


def colour_detector_archive(widths=(4, 4), threshold=110.0, gain=1.0 / 105):
    """Weights for ``conv1_1``/``conv1_2`` of a two-conv network with 4 channels each.

    ``conv1_1`` applies one opponent-colour filter per marker (centre tap
    only), thresholded by its bias so grey scenery gives zero after ReLU;
    ``conv1_2`` box-blurs each detector map in place. Marker interiors come
    out near 1.
    """
    if tuple(widths) != (4, 4):
        raise ValueError("the colour detector needs widths (4, 4)")
    opp = np.array([[1, -0.5, -0.5], [-0.5, 1, -0.5], [-0.5, -0.5, 1], [-1, 0.5, 0.5]])
    w1 = np.zeros((4, 3, 3, 3))
    w1[:, :, 1, 1] = opp * gain
    b1 = np.full(4, -threshold * gain)
    w2 = np.zeros((4, 4, 3, 3))
    for k in range(4):
        w2[k, k] = 1.0 / 9
    return {"conv1_1": LayerParams(w1, b1), "conv1_2": LayerParams(w2, np.zeros(4))}


def blob_images(n=8, size=56, seed=0):
    """Small RGB images each holding four coloured discs; labels are disc centres.

    Returns ``(images n x size x size x 3 uint8, labels n x 8)``.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    images, labels = [], []
    r = size / 14
    for _ in range(n):
        canvas = np.full((size, size, 3), 120.0) + 10 * rng.standard_normal((size, size, 1))
        pts = rng.uniform(r + 1, size - r - 2, size=(4, 2))
        for k in range(4):
            a = _disc_alpha(xx, yy, pts[k, 0], pts[k, 1], r)[..., None]
            canvas = canvas * (1 - a) + a * MARKER_COLOURS[k]
        images.append(np.clip(np.rint(canvas), 0, 255).astype(np.uint8))
        labels.append(pts.reshape(-1))
    return np.stack(images), np.stack(labels)


def look_at_camera(center, target, focal=800.0, principal=(400.0, 300.0), camera_id=""):
    """Pinhole camera at ``center`` looking at ``target`` (y of the image points down)."""
    center = np.asarray(center, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - center
    z /= np.linalg.norm(z)
    up = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    r = np.stack([x, y, z])
    k = np.array([[focal, 0, principal[0]], [0, focal, principal[1]], [0, 0, 1]])
    return CameraModel(k @ np.hstack([r, (-r @ center)[:, None]]), camera_id)


def stereo_rig(baseline=1.0, distance=5.0, camera_id_prefix="cam"):
    """Two cameras ``baseline`` apart, both looking at the origin from ``distance``."""
    c1 = np.array([-baseline / 2, -distance, 0.3])
    c2 = np.array([baseline / 2, -distance, 0.3])
    return (look_at_camera(c1, np.zeros(3), camera_id=f"{camera_id_prefix}1"),
            look_at_camera(c2, np.zeros(3), camera_id=f"{camera_id_prefix}2"))
