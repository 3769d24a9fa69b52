"""Two-view triangulation of landmarks and 3D distance-ratio metrics."""

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from .data import LANDMARKS, load_calibration
from .errors import DegenerateGeometryError, ProjectionError, ValidationError

log = logging.getLogger(__name__)

# A point is degenerate when its two rays meet at less than this angle ...
MIN_RAY_ANGLE_DEG = 0.1
# ... or the row-normalised linear system is this ill-conditioned.
MAX_CONDITION = 1e8


@dataclass
class CameraModel:
    projection: np.ndarray
    camera_id: str = ""

    def __post_init__(self):
        self.projection = np.asarray(self.projection, dtype=np.float64).reshape(3, 4)
        m = self.projection[:, :3]
        if not np.all(np.isfinite(self.projection)) or abs(np.linalg.det(m)) < 1e-12 * max(np.abs(m).max(), 1) ** 3:
            raise ValidationError(f"camera {self.camera_id!r}: left 3x3 block is singular")

    @classmethod
    def from_file(cls, path, camera_id=None):
        return cls(load_calibration(path), camera_id or str(path))

    @property
    def center(self):
        m, p4 = self.projection[:, :3], self.projection[:, 3]
        return -np.linalg.solve(m, p4)


def reproject(point3d, cam):
    x = cam.projection @ np.append(np.asarray(point3d, dtype=np.float64), 1.0)
    if x[2] == 0 or abs(x[2]) <= 1e-12 * np.abs(x).max():
        raise ProjectionError("point projects to infinity (zero homogeneous coordinate)")
    return x[:2] / x[2]


def _ray_angle_deg(point, c1, c2):
    a, b = point - c1, point - c2
    cos = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return math.degrees(math.acos(min(1.0, max(-1.0, cos))))


def triangulate(p1, p2, cam1, cam2, refine=False):
    """Linear two-view triangulation (smallest right singular vector of the 4x4 system).

    With ``refine`` the linear estimate is polished by minimising the
    reprojection error in both views.
    """
    rows = []
    for (x, y), cam in ((p1, cam1), (p2, cam2)):
        P = cam.projection
        rows.append(x * P[2] - P[0])
        rows.append(y * P[2] - P[1])
    a = np.array(rows)
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    _, s, vt = np.linalg.svd(a)
    if s[2] <= s[0] / MAX_CONDITION:
        raise DegenerateGeometryError(f"ill-conditioned triangulation (singular values {s})")
    h = vt[-1]
    if abs(h[3]) < 1e-12 * np.abs(h).max():
        raise DegenerateGeometryError("triangulated point is at infinity")
    point = h[:3] / h[3]
    angle = _ray_angle_deg(point, cam1.center, cam2.center)
    if not angle >= MIN_RAY_ANGLE_DEG:
        raise DegenerateGeometryError(f"rays meet at {angle:.3g} degrees")
    if refine:
        from scipy.optimize import least_squares
        obs = np.concatenate([np.asarray(p1, float), np.asarray(p2, float)])
        res = least_squares(lambda X: np.concatenate([reproject(X, cam1), reproject(X, cam2)]) - obs,
                            point, method="lm", xtol=1e-15, ftol=1e-15)
        point = res.x
    return point


def reprojection_residual(point3d, p1, p2, cam1, cam2):
    """Root-mean-square reprojection error over both views, in pixels."""
    e1 = reproject(point3d, cam1) - np.asarray(p1, float)
    e2 = reproject(point3d, cam2) - np.asarray(p2, float)
    return float(np.sqrt((e1 @ e1 + e2 @ e2) / 2))


@dataclass
class Pose3D:
    points: np.ndarray  # (4, 3); NaN rows for degenerate landmarks
    time_index: int
    valid: np.ndarray = None
    residuals: np.ndarray = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(4, 3)
        if self.valid is None:
            self.valid = np.all(np.isfinite(self.points), axis=1)
        if self.residuals is None:
            self.residuals = np.zeros(4)

    @property
    def partial(self):
        return not bool(np.all(self.valid))

    def distance(self, i, j):
        if not (self.valid[i] and self.valid[j]):
            return float("nan")
        return float(np.linalg.norm(self.points[i] - self.points[j]))


def reconstruct_pose(landmarks1, landmarks2, cam1, cam2, t, refine=False):
    l1 = np.asarray(landmarks1, dtype=np.float64).reshape(4, 2)
    l2 = np.asarray(landmarks2, dtype=np.float64).reshape(4, 2)
    points = np.full((4, 3), np.nan)
    residuals = np.full(4, np.nan)
    for k in range(4):
        try:
            points[k] = triangulate(l1[k], l2[k], cam1, cam2, refine)
            residuals[k] = reprojection_residual(points[k], l1[k], l2[k], cam1, cam2)
        except (DegenerateGeometryError, ProjectionError) as exc:
            log.warning("frame %s, %s: %s", t, LANDMARKS[k], exc)
    return Pose3D(points, t, np.all(np.isfinite(points), axis=1), residuals)


HEAD, ABDOMEN, LEFT_WING, RIGHT_WING = range(4)


def ratio_metrics(pred_poses, gt_poses):
    """Mean predicted/ground-truth ratios of head-abdomen and wingtip-wingtip 3D distances."""
    if len(pred_poses) != len(gt_poses):
        raise ValueError("pose sequences differ in length")
    ha, lr = [], []
    for pred, gt in zip(pred_poses, gt_poses):
        for pair, acc, name in (((HEAD, ABDOMEN), ha, "head-abdomen"), ((LEFT_WING, RIGHT_WING), lr, "wingtips")):
            ref = gt.distance(*pair)
            got = pred.distance(*pair)
            if not ref > 0 or not math.isfinite(got):
                log.warning("frame %s: skipping %s ratio (reference %s, predicted %s)", gt.time_index, name, ref, got)
                continue
            acc.append(got / ref)
    mean = lambda v: math.fsum(v) / len(v) if v else float("nan")
    return mean(ha), mean(lr)


POSE_COLUMNS = ("frame_id", "landmark", "X", "Y", "Z", "residual_px")


def write_poses(poses, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(POSE_COLUMNS)
        for pose in poses:
            for k, name in enumerate(LANDMARKS):
                w.writerow([pose.time_index, name, *[repr(float(v)) for v in pose.points[k]],
                            repr(float(pose.residuals[k]))])


def read_poses(path):
    rows = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            t = int(row["frame_id"])
            k = LANDMARKS.index(row["landmark"])
            pts, res = rows.setdefault(t, (np.full((4, 3), np.nan), np.full(4, np.nan)))
            pts[k] = [float(row["X"]), float(row["Y"]), float(row["Z"])]
            res[k] = float(row["residual_px"])
    return [Pose3D(pts, t, residuals=res) for t, (pts, res) in sorted(rows.items())]
