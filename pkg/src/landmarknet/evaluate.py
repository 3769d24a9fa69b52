"""Test loss in network-input space and per-landmark MAE at native resolution."""

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict

import numpy as np

from .data import LANDMARKS
from .errors import EvaluationError
from .nn.train import predict_batch, squared_loss
from .report import bar_chart_svg, line_chart_svg

# Reference total MAEs (native pixels) of three annotation methods, drawn as context lines.
REFERENCE_TOTAL_MAE = {"O": 80.2, "B": 36.5, "DNN": 31.6}

INCLUDE_ALL = "include-all"
EXCLUDE_OCCLUDED = "exclude-occluded-frames"


@dataclass
class EvalResult:
    mae: Dict[str, float]
    total_mae: float
    frames_evaluated: int
    occlusion_excluded: int
    test_loss: float = float("nan")

    def rows(self):
        return [(name, self.mae[name], self.frames_evaluated) for name in LANDMARKS]


def test_loss(net, params, test_samples):
    """Squared loss of the network over ``(data, labels)`` in network-input pixels."""
    data, labels = test_samples
    data = np.asarray(data)
    if data.shape[0] == 0:
        raise EvaluationError("empty test set")
    pred = predict_batch(net, params, data)
    loss, _ = squared_loss(pred, np.asarray(labels, dtype=np.float64).reshape(pred.shape))
    return loss


def map_to_native(pred, crop):
    """Undo the crop/resize (and any rotation/scale) recorded in ``crop``."""
    return crop.inverse_map(pred)


def mae_per_landmark(preds_native, gts_native, occluded=None, occlusion_mode=INCLUDE_ALL):
    """Mean Euclidean error per landmark over the retained frames.

    ``preds_native`` and ``gts_native`` are ``n x 8``; ``occluded`` is ``n x 4``
    booleans. With ``EXCLUDE_OCCLUDED`` any frame with an occluded landmark is
    dropped entirely.
    """
    preds = np.asarray(preds_native, dtype=np.float64).reshape(-1, 4, 2)
    gts = np.asarray(gts_native, dtype=np.float64).reshape(-1, 4, 2)
    if preds.shape != gts.shape:
        raise EvaluationError(f"{preds.shape[0]} predictions but {gts.shape[0]} ground-truth frames")
    total = preds.shape[0]
    keep = np.ones(total, dtype=bool)
    if occlusion_mode == EXCLUDE_OCCLUDED:
        if occluded is None:
            raise EvaluationError("occlusion flags are required to exclude occluded frames")
        keep = ~np.asarray(occluded, dtype=bool).reshape(total, 4).any(axis=1)
    elif occlusion_mode != INCLUDE_ALL:
        raise ValueError(f"unknown occlusion mode {occlusion_mode!r}")
    if not keep.any():
        raise EvaluationError("no frames left to evaluate")
    err = np.linalg.norm(preds[keep] - gts[keep], axis=2)  # (frames, 4)
    mae = {name: float(v) for name, v in zip(LANDMARKS, err.mean(axis=0))}
    return EvalResult(mae, float(sum(mae.values())), int(keep.sum()), int(total - keep.sum()))


def emit_report(path, results=None, history=None, references=True):
    """Write CSV and SVG summaries into directory ``path``.

    ``results`` maps a run name to an :class:`EvalResult`; ``history`` maps a
    run name to a ``LossHistory``. Returns the written paths.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    if not results and not history:
        raise ValueError("nothing to report")
    written = []
    for name, res in (results or {}).items():
        csv_path = out / f"mae_{name}.csv"
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["landmark", "mae_px", "n_frames"])
            for row in res.rows():
                w.writerow([row[0], repr(row[1]), row[2]])
        written.append(csv_path)
    if results:
        groups = {name: [res.mae[k] for k in LANDMARKS] for name, res in results.items()}
        ref = REFERENCE_TOTAL_MAE if references else None
        svg = bar_chart_svg(groups, LANDMARKS, "MAE per landmark (native px)", reference_totals=ref,
                            totals={name: res.total_mae for name, res in results.items()})
        svg_path = out / "mae.svg"
        svg_path.write_text(svg)
        written.append(svg_path)
    for name, hist in (history or {}).items():
        csv_path = out / f"loss_{name}.csv"
        hist.to_csv(csv_path)
        written.append(csv_path)
        series = {"train": hist.train_curve(), "test": hist.test_curve()}
        svg_path = out / f"loss_{name}.svg"
        svg_path.write_text(line_chart_svg({k: v for k, v in series.items() if v}, f"Loss ({name})",
                                           "iteration", "squared loss"))
        written.append(svg_path)
    return written
