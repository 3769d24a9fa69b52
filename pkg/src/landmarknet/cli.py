"""Command-line entry point: synth, augment, train, annotate, evaluate, triangulate, report.

Every command writes ``manifest_<command>.json`` into ``--out-dir`` with the
full effective configuration. A ``--config`` file of ``key = value`` lines
(keys are long flag names) supplies values that explicit flags override.

Exit codes: 0 success, 1 divergence or metric failure, 2 input error.
Set ``LANDMARKNET_THREADS`` to cap the BLAS/OpenMP thread count.
"""

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__

log = logging.getLogger("landmarknet")

THREAD_ENV = "LANDMARKNET_THREADS"
PREDICTION_COLUMNS = ("frame_id", "head_x", "head_y", "abd_x", "abd_y", "lw_x", "lw_y", "rw_x", "rw_y")

# Defaults of the reference experiment.
DEFAULTS = {
    "nts": 200_000,
    "da": "t",
    "arch": "vgg-7-fc8",
    "blr": 1e-12,
    "vgg_lrm": 0.0,
    "fc_lrm": 100.0,
    "iters": 10_000,
    "batch": 32,
    "finetune": False,
    "split": "first-half",
}


class InputError(Exception):
    pass


def _apply_thread_env():
    n = os.environ.get(THREAD_ENV)
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = n


def parse_arch(text):
    """``vgg-7-fc8`` -> 7."""
    parts = text.lower().split("-")
    if len(parts) != 3 or parts[0] != "vgg" or parts[2] != "fc8" or not parts[1].isdigit():
        raise argparse.ArgumentTypeError(f"architecture must look like vgg-<x>-fc8, got {text!r}")
    return int(parts[1])


def _widths(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"widths must be comma-separated integers, got {text!r}") from None


def _common(p):
    p.add_argument("--config", help="key = value file; explicit flags win")
    p.add_argument("--data-dir", default=".", help="input directory")
    p.add_argument("--out-dir", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="landmarknet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic annotated frame sequence")
    _common(p)
    p.add_argument("--frames", type=int, default=200)

    p = sub.add_parser("augment", help="split, augment and write batch files")
    _common(p)
    p.add_argument("--nts", type=int, default=DEFAULTS["nts"], help="target number of training samples")
    p.add_argument("--da", default=DEFAULTS["da"], choices=("none", "t", "tr", "ts"))
    p.add_argument("--split", default=DEFAULTS["split"], choices=("first-half", "interleaved", "random-k"))
    p.add_argument("--train-k", type=int, default=600)
    p.add_argument("--test-k", type=int, default=200)
    p.add_argument("--input-size", type=int, default=224)
    p.add_argument("--samples-per-file", type=int, default=1000)
    p.add_argument("--annotations", default="annotations.csv", help="relative to --data-dir")

    p = sub.add_parser("train", help="train on augmented batch files")
    _common(p)
    p.add_argument("--arch", type=parse_arch, default=DEFAULTS["arch"])
    p.add_argument("--widths", type=_widths, default=None, help="override conv widths, e.g. 4,4")
    p.add_argument("--blr", type=float, default=DEFAULTS["blr"])
    p.add_argument("--vgg-lrm", type=float, default=DEFAULTS["vgg_lrm"])
    p.add_argument("--fc-lrm", type=float, default=DEFAULTS["fc_lrm"])
    p.add_argument("--pretrained", default=None, help="weight archive for conv layers")
    p.add_argument("--init", default="pretrained", choices=("pretrained", "xavier", "gaussian"))
    p.add_argument("--iters", type=int, default=DEFAULTS["iters"])
    p.add_argument("--batch", type=int, default=DEFAULTS["batch"])
    p.add_argument("--finetune", action="store_true", help="train conv layers too (vgg-lrm 1 unless set)")
    p.add_argument("--momentum", type=float, default=0.0)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--log-window", type=int, default=200)
    p.add_argument("--test-every", type=int, default=500)
    p.add_argument("--snapshot-every", type=int, default=None)

    p = sub.add_parser("annotate", help="predict native landmarks for annotated or listed frames")
    _common(p)
    p.add_argument("--model-dir", required=True, help="output directory of a train run")
    p.add_argument("--annotations", default="annotations.csv", help="relative to --data-dir")
    p.add_argument("--output", default="predictions.csv", help="relative to --out-dir")

    p = sub.add_parser("evaluate", help="per-landmark MAE of predictions against annotations")
    _common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--annotations", default="annotations.csv", help="relative to --data-dir")
    p.add_argument("--occlusion", default="include-all", choices=("include-all", "exclude-occluded-frames"))
    p.add_argument("--name", default="eval")
    p.add_argument("--max-mae", type=float, default=None, help="exit 1 if any landmark MAE exceeds this")

    p = sub.add_parser("triangulate", help="3D landmark positions from two views")
    _common(p)
    p.add_argument("--view1", required=True, help="prediction or annotation CSV of camera 1")
    p.add_argument("--view2", required=True)
    p.add_argument("--cam1", required=True, help="calibration file of camera 1")
    p.add_argument("--cam2", required=True)
    p.add_argument("--gt-view1", default=None, help="ground truth for ratio metrics")
    p.add_argument("--gt-view2", default=None)
    p.add_argument("--refine", action="store_true")

    p = sub.add_parser("report", help="SVG and CSV summaries of loss histories and MAE tables")
    _common(p)
    p.add_argument("--history", action="append", default=[], metavar="NAME=CSV")
    p.add_argument("--mae", action="append", default=[], metavar="NAME=CSV")
    return parser


# -- config file -----------------------------------------------------------------

def _config_tokens(path, parser, command):
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[command]
    flags = {opt: a for a in sub._actions for opt in a.option_strings}
    tokens = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        action = flags.get(flag)
        if action is None or flag == "--config":
            raise InputError(f"{path}:{n}: unknown key {key!r} for {command}")
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() in ("1", "true", "yes", "on"):
                tokens.append(flag)
        elif isinstance(action, argparse._AppendAction):
            for item in value.split(";"):
                tokens += [flag, item.strip()]
        else:
            tokens += [flag, value]
    return tokens


def parse_args(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config:
        args = parser.parse_args([argv[0]] + _config_tokens(args.config, parser, args.command) + argv[1:])
    return args


def effective_config(args):
    cfg = {k: v for k, v in vars(args).items() if k not in ("config", "verbose")}
    if "arch" in cfg:
        cfg["arch"] = f"vgg-{cfg['arch']}-fc8"
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(cfg.items())}


def write_manifest(out_dir, args, extra=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"version": __version__, "command": args.command, "config": effective_config(args)}
    if extra:
        manifest.update(extra)
    path = out / f"manifest_{args.command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# -- prediction CSVs --------------------------------------------------------------

def write_predictions(path, frame_ids, coords):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PREDICTION_COLUMNS)
        for fid, row in zip(frame_ids, coords):
            w.writerow([int(fid), *[repr(float(v)) for v in row]])


def read_predictions(path):
    """``{frame_id: 8-vector}`` from a prediction CSV or an annotation CSV."""
    import numpy as np
    out = {}
    with open(path, newline="") as fh:
        rows = csv.DictReader(line for line in fh if not line.lstrip().startswith("#"))
        missing = [c for c in PREDICTION_COLUMNS if c not in (rows.fieldnames or [])]
        if missing:
            raise InputError(f"{path}: missing columns {missing}")
        for n, row in enumerate(rows, start=2):
            try:
                out[int(row["frame_id"])] = np.array([float(row[c]) for c in PREDICTION_COLUMNS[1:]])
            except ValueError as exc:
                raise InputError(f"{path}: row {n}: {exc}") from None
    return out


# -- commands ----------------------------------------------------------------------

def cmd_synth(args):
    from .synthetic import SyntheticSequence
    seq = SyntheticSequence(args.frames, seed=args.seed)
    path = seq.write(args.out_dir)
    write_manifest(args.out_dir, args)
    print(f"wrote {args.frames} frames and {path}")
    return 0


def _load_frames(data_dir, annotations):
    from .data import load_annotations
    path = Path(data_dir) / annotations
    if not path.exists():
        raise InputError(f"annotation file {path} not found")
    frames = load_annotations(path)
    base = path.parent
    for f in frames:
        f.image_ref = str((base / f.image_ref).resolve())
    return frames


def cmd_augment(args):
    import numpy as np
    from .augment import AugmentedDataset, AugmentScheme, Geometry
    from .data import parse_split, split
    from .pipeline import centred_inputs, dataset_means
    from .storage import write_batches

    frames = _load_frames(args.data_dir, args.annotations)
    train_frames, test_frames = split(frames, parse_split(args.split, args.train_k, args.test_k, args.seed))
    if not train_frames:
        raise InputError("the split leaves no training frames")
    geometry = Geometry(out_w=args.input_size, out_h=args.input_size)
    nts = max(args.nts, len(train_frames)) if args.da != "none" else args.nts
    if args.da != "none" and args.nts < len(train_frames):
        log.warning("nts %d is below the %d training frames; using originals only", args.nts, len(train_frames))
    dataset = AugmentedDataset(train_frames, AugmentScheme(args.da, nts, args.seed, geometry=geometry))
    means = dataset_means(dataset)
    out = Path(args.out_dir)
    (out / "train").mkdir(parents=True, exist_ok=True)

    def stream():
        with open(out / "train" / "crops.jsonl", "w") as side:
            for i, s in enumerate(dataset):
                side.write(json.dumps({"index": i, "frame_id": s.frame_id, "generated": s.generated,
                                       "crop": s.crop.to_dict()}) + "\n")
                yield s

    pairs = ((_prep(s.image, means), s.label) for s in stream())
    train_paths = write_batches(pairs, None, out / "train", args.samples_per_file)

    test_paths = []
    if test_frames:
        data, labels, crops = centred_inputs(test_frames, lambda f: f.load_image(), means, geometry)
        test_paths = write_batches(data.astype(np.float32), labels, out / "test", args.samples_per_file)
        with open(out / "test" / "crops.jsonl", "w") as side:
            for i, (f, c) in enumerate(zip(test_frames, crops)):
                side.write(json.dumps({"index": i, "frame_id": f.frame_id, "crop": c.to_dict()}) + "\n")
        from .data import save_annotations
        save_annotations(test_frames, out / "test" / "annotations.csv")
    write_manifest(out, args, {
        "means": [float(m) for m in means], "input_size": args.input_size,
        "train_frames": [f.frame_id for f in train_frames], "test_frames": [f.frame_id for f in test_frames],
        "skipped_frames": sorted(set(f.frame_id for f in train_frames) - set(f.frame_id for f in dataset.frames)),
        "samples": len(dataset), "generated": dataset.n_generated,
        "train_files": len(train_paths), "test_files": len(test_paths)})
    print(f"{len(dataset)} training samples ({dataset.n_generated} generated) in {len(train_paths)} files; "
          f"{len(test_frames)} test frames")
    return 0


def _prep(image, means):
    import numpy as np
    from .data import preprocess
    return preprocess(image, means)[0].astype(np.float32)


def _read_manifest(directory, command):
    path = Path(directory) / f"manifest_{command}.json"
    if not path.exists():
        raise InputError(f"{path} not found (run '{command}' first)")
    return json.loads(path.read_text())


def _build_net(arch, widths, input_size, init, vgg_lrm, fc_lrm):
    from .nn import build_vgg_x_fc
    from .nn.layers import Gaussian, PretrainedByName, Xavier
    conv_init = {"pretrained": PretrainedByName(), "xavier": Xavier(), "gaussian": Gaussian()}[init]
    return build_vgg_x_fc(arch, 8, (3, input_size, input_size), widths=widths or None, conv_init=conv_init,
                          vgg_lr_multiplier=vgg_lrm, fc_lr_multiplier=fc_lrm)


def cmd_train(args):
    from .nn import TrainConfig, init_params, train
    from .nn.layers import Conv
    from .storage import BatchStore, MiniBatches, load_weight_archive, save_weight_archive

    aug = _read_manifest(args.data_dir, "augment")
    vgg_lrm = args.vgg_lrm
    if args.finetune and vgg_lrm == 0:
        vgg_lrm = 1.0
    if args.init == "pretrained" and not args.pretrained:
        raise InputError("--init pretrained needs --pretrained ARCHIVE (or use --init xavier)")
    net = _build_net(args.arch, args.widths, aug["input_size"], args.init, vgg_lrm, args.fc_lrm)
    archive = load_weight_archive(args.pretrained) if args.pretrained else None
    params = init_params(net, args.seed, archive)
    store = BatchStore(Path(args.data_dir) / "train")
    test_dir = Path(args.data_dir) / "test"
    test_set = BatchStore(test_dir).read_all() if (test_dir / "batch_list.txt").exists() else None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = TrainConfig(base_learning_rate=args.blr, batch_size=args.batch, iterations=args.iters,
                         train_log_window=args.log_window, test_eval_every=args.test_every, rng_seed=args.seed,
                         momentum=args.momentum, weight_decay=args.weight_decay,
                         snapshot_every=args.snapshot_every)

    def snapshot(step, p):
        (out / "snapshots").mkdir(exist_ok=True)
        save_weight_archive(p, out / "snapshots" / f"iter_{step:07d}.h5")

    model = {"arch": args.arch, "widths": [layer.kind.out_channels for layer in net.layers
                                           if isinstance(layer.kind, Conv)],
             "input_size": aug["input_size"], "means": aug["means"], "outputs": 8}
    write_manifest(out, args, {"model": model, "effective_vgg_lrm": vgg_lrm})
    params, history = train(net, params, MiniBatches(store, args.batch), config, test_set, snapshot)
    save_weight_archive(params, out / "weights.h5")
    history.to_csv(out / "loss_history.csv")
    (out / "model.json").write_text(json.dumps(model, indent=2, sort_keys=True) + "\n")
    last = history.records[-1]
    print(f"trained {args.iters} iterations; final train loss {last[1]!r}, test loss {last[2]!r}")
    return 0


def _load_model(model_dir):
    from .storage import load_weight_archive, params_from_archive
    path = Path(model_dir) / "model.json"
    if not path.exists():
        raise InputError(f"{path} not found (train a model first)")
    model = json.loads(path.read_text())
    weights = Path(model_dir) / "weights.h5"
    if not weights.exists():
        raise InputError(f"{weights} not found")
    net = _build_net(model["arch"], tuple(model["widths"]), model["input_size"], "pretrained", 0.0, 0.0)
    params = params_from_archive(net, load_weight_archive(weights))
    return net, params, model


def cmd_annotate(args):
    import numpy as np
    from .augment import Geometry
    from .pipeline import annotate

    net, params, model = _load_model(args.model_dir)
    frames = _load_frames(args.data_dir, args.annotations)
    g = Geometry(out_w=model["input_size"], out_h=model["input_size"])
    coords = annotate(net, params, frames, lambda f: f.load_image(), np.array(model["means"]), g)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_predictions(out / args.output, [f.frame_id for f in frames], coords)
    write_manifest(out, args)
    print(f"annotated {len(frames)} frames -> {out / args.output}")
    return 0


def cmd_evaluate(args):
    import numpy as np
    from .evaluate import emit_report, mae_per_landmark

    frames = _load_frames(args.data_dir, args.annotations)
    preds = read_predictions(args.predictions)
    missing = [f.frame_id for f in frames if f.frame_id not in preds]
    if missing:
        raise InputError(f"no predictions for frames {missing[:10]}{'...' if len(missing) > 10 else ''}")
    result = mae_per_landmark(np.stack([preds[f.frame_id] for f in frames]), np.stack([f.label for f in frames]),
                              np.array([f.occluded for f in frames]), args.occlusion)
    emit_report(args.out_dir, {args.name: result})
    write_manifest(args.out_dir, args, {"mae": result.mae, "total_mae": result.total_mae,
                                        "frames_evaluated": result.frames_evaluated,
                                        "occlusion_excluded": result.occlusion_excluded})
    for name, mae, n in result.rows():
        print(f"{name:11s} {mae:10.3f} px  ({n} frames)")
    print(f"{'total':11s} {result.total_mae:10.3f} px")
    if args.max_mae is not None and max(result.mae.values()) > args.max_mae:
        print(f"MAE above {args.max_mae}", file=sys.stderr)
        return 1
    return 0


def cmd_triangulate(args):
    from .multiview import CameraModel, ratio_metrics, reconstruct_pose, write_poses

    cam1 = CameraModel.from_file(args.cam1, "cam1")
    cam2 = CameraModel.from_file(args.cam2, "cam2")
    v1, v2 = read_predictions(args.view1), read_predictions(args.view2)
    ids = sorted(set(v1) & set(v2))
    if not ids:
        raise InputError("the two views share no frame ids")
    poses = [reconstruct_pose(v1[t], v2[t], cam1, cam2, t, args.refine) for t in ids]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_poses(poses, out / "poses.csv")
    extra = {"frames": len(poses), "partial": sum(p.partial for p in poses)}
    if args.gt_view1 and args.gt_view2:
        g1, g2 = read_predictions(args.gt_view1), read_predictions(args.gt_view2)
        keep = [t for t in ids if t in g1 and t in g2]
        gt = [reconstruct_pose(g1[t], g2[t], cam1, cam2, t, args.refine) for t in keep]
        by_id = {p.time_index: p for p in poses}
        ha, lr = ratio_metrics([by_id[t] for t in keep], gt)
        extra.update({"head_abdomen_ratio": ha, "wingtip_ratio": lr})
        print(f"head-abdomen ratio {ha!r}, wingtip ratio {lr!r}")
    write_manifest(out, args, extra)
    print(f"triangulated {len(poses)} frames ({extra['partial']} partial) -> {out / 'poses.csv'}")
    return 0


def _named(items):
    out = {}
    for item in items:
        if "=" not in item:
            raise InputError(f"expected NAME=PATH, got {item!r}")
        name, path = item.split("=", 1)
        if not Path(path).exists():
            raise InputError(f"{path} not found")
        out[name] = path
    return out


def cmd_report(args):
    from .data import LANDMARKS
    from .evaluate import EvalResult, emit_report
    from .nn.train import LossHistory

    histories = {k: LossHistory.from_csv(v) for k, v in _named(args.history).items()}
    results = {}
    for name, path in _named(args.mae).items():
        with open(path, newline="") as fh:
            rows = {r["landmark"]: r for r in csv.DictReader(fh)}
        if set(rows) != set(LANDMARKS):
            raise InputError(f"{path}: expected one row per landmark")
        mae = {k: float(rows[k]["mae_px"]) for k in LANDMARKS}
        results[name] = EvalResult(mae, sum(mae.values()), int(rows[LANDMARKS[0]]["n_frames"]), 0)
    if not histories and not results:
        raise InputError("nothing to report: pass --history and/or --mae")
    written = emit_report(args.out_dir, results, histories)
    write_manifest(args.out_dir, args)
    for p in written:
        print(p)
    return 0


COMMANDS = {"synth": cmd_synth, "augment": cmd_augment, "train": cmd_train, "annotate": cmd_annotate,
            "evaluate": cmd_evaluate, "triangulate": cmd_triangulate, "report": cmd_report}


def main(argv=None):
    _apply_thread_env()
    try:
        args = parse_args(argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse usage errors
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .errors import DivergenceError, EvaluationError, LandmarkNetError
    try:
        return COMMANDS[args.command](args)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return 1
    except EvaluationError as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return 1
    except (InputError, LandmarkNetError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
