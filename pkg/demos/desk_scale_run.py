"""Train a landmark regressor on the synthetic moth sequence, twice.

Frames 1-100 train / 101-200 test, then odd train / even test. The first
block is the hand-set colour detector, frozen; only fc8 learns. Prints the
per-landmark MAE of both runs and writes CSV/SVG reports to ``demos/out``.

    python3 demos/desk_scale_run.py            # about two to three minutes
    python3 demos/desk_scale_run.py --iters 500
"""

import argparse
from pathlib import Path

from landmarknet.augment import AugmentedDataset, AugmentScheme, Geometry
from landmarknet.data import FirstHalf, Interleaved, split
from landmarknet.evaluate import emit_report
from landmarknet.nn import TrainConfig, build_vgg_x_fc, init_params, train
from landmarknet.pipeline import PreparedSamples, centred_inputs, dataset_means, evaluate_frames
from landmarknet.storage import MiniBatches
from landmarknet.synthetic import SyntheticSequence, colour_detector_archive


def run(seq, strategy, geometry, iters, nts):
    train_frames, test_frames = split(seq.frames, strategy)
    ds = AugmentedDataset(train_frames, AugmentScheme("t", nts, 0, geometry=geometry), image_loader=seq.image)
    means = dataset_means(ds)
    net = build_vgg_x_fc(2, 8, (3, geometry.out_h, geometry.out_w), widths=(4, 4))
    params = init_params(net, 0, colour_detector_archive())
    test = centred_inputs(test_frames, seq.image, means, geometry)[:2]
    cfg = TrainConfig(base_learning_rate=2.4e-4, batch_size=32, iterations=iters, test_eval_every=250)
    params, history = train(net, params, MiniBatches(PreparedSamples(ds, means), 32), cfg, test_set=test)
    return evaluate_frames(net, params, test_frames, seq.image, means, geometry), history


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iters", type=int, default=2000)
    ap.add_argument("--nts", type=int, default=5000)
    ap.add_argument("--size", type=int, default=112)
    args = ap.parse_args()

    seq = SyntheticSequence(200, seed=0)
    g = Geometry(out_w=args.size, out_h=args.size)
    results, histories = {}, {}
    for name, strategy in (("first_half", FirstHalf()), ("interleaved", Interleaved())):
        results[name], histories[name] = run(seq, strategy, g, args.iters, args.nts)
        r = results[name]
        print(f"{name:12s} test loss {r.test_loss:8.3f}   " +
              "  ".join(f"{k} {v:5.2f}" for k, v in r.mae.items()) + f"   total {r.total_mae:.2f} px")
    out = Path(__file__).parent / "out"
    for p in emit_report(out, results, histories, references=False):
        print("wrote", p)


if __name__ == "__main__":
    main()
