"""Render a few translated, rotated and scaled training samples with their labels.

Each PNG in ``demos/out/gallery`` is one 224x224 network input; the label
points are drawn as small white crosses, which should sit on the coloured
markers.
"""

from pathlib import Path

import numpy as np

from landmarknet.augment import make_rotated_sample, make_scaled_sample, make_translated_sample
from landmarknet.data import save_image
from landmarknet.synthetic import SyntheticSequence


def draw_crosses(image, label, arm=3):
    img = np.clip(np.rint(image), 0, 255).astype(np.uint8)
    h, w, _ = img.shape
    for x, y in np.asarray(label).reshape(4, 2):
        xi, yi = int(round(x)), int(round(y))
        img[yi, max(0, xi - arm):min(w, xi + arm + 1)] = 255
        img[max(0, yi - arm):min(h, yi + arm + 1), xi] = 255
    return img


def main():
    seq = SyntheticSequence(200, seed=0)
    out = Path(__file__).parent / "out" / "gallery"
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(1)
    for frame in seq.frames[::50]:
        image = seq.image(frame)
        for tag, make in (("t", make_translated_sample), ("r", make_rotated_sample), ("s", make_scaled_sample)):
            s = make(frame, rng, image)
            path = out / f"frame{frame.frame_id:03d}_{tag}.png"
            save_image(path, draw_crosses(s.image, s.label))
            print(path, f"rotation {s.crop.rotation_deg:+.1f} deg, scale {s.crop.scale:.2f}")


if __name__ == "__main__":
    main()
