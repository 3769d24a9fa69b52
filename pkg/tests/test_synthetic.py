import numpy as np

from landmarknet.data import load_annotations, load_image
from landmarknet.multiview import reproject
from landmarknet.nn import build_vgg_x_fc, forward, init_params
from landmarknet.synthetic import (MARKER_COLOURS, SyntheticSequence, blob_images, colour_detector_archive,
                                   marker_bbox, stereo_rig)


def test_frames_and_determinism():
    seq = SyntheticSequence(6, seed=2)
    assert [f.frame_id for f in seq.frames] == [1, 2, 3, 4, 5, 6]
    img = seq.image(seq.frames[3])
    assert img.shape == (600, 800, 3) and img.dtype == np.uint8
    assert np.array_equal(img, SyntheticSequence(6, seed=2).image(seq.frames[3]))
    assert not np.array_equal(img, SyntheticSequence(6, seed=3).image(seq.frames[3]))


def test_markers_at_landmarks():
    seq = SyntheticSequence(4, seed=0)
    for f in seq.frames:
        img = seq.image(f).astype(float)
        for k, (x, y) in enumerate(f.landmarks):
            px = img[int(round(y)), int(round(x))]
            assert np.abs(px - MARKER_COLOURS[k]).max() < 30


def test_bbox_contains_markers():
    seq = SyntheticSequence(50, seed=0)
    for f in seq.frames:
        x, y, w, h = f.bbox
        assert np.all(f.landmarks[:, 0] - 14 >= x) and np.all(f.landmarks[:, 0] + 14 <= x + w)
        assert np.all(f.landmarks[:, 1] - 14 >= y) and np.all(f.landmarks[:, 1] + 14 <= y + h)
    assert marker_bbox(np.array([[5.0, 5], [10, 10], [6, 6], [7, 7]])) == (0.0, 0.0, 28, 28)


def test_write(tmp_path):
    seq = SyntheticSequence(3, seed=1)
    path = seq.write(tmp_path)
    frames = load_annotations(path)
    assert [f.frame_id for f in frames] == [1, 2, 3]
    assert np.array_equal(load_image(tmp_path / frames[1].image_ref), seq.image(seq.frames[1]))


def test_colour_detector_selective():
    img = np.full((1, 3, 12, 12), 120.0)
    img[0, :, 4:8, 4:8] = MARKER_COLOURS[2][:, None, None]
    net = build_vgg_x_fc(2, 8, (3, 12, 12), widths=(4, 4))
    acts = forward(net, init_params(net, 0, colour_detector_archive()), img)
    relu2 = acts.values[4][0]
    assert relu2[2, 5:7, 5:7].min() > 0.9
    assert relu2[[0, 1, 3]].max() == 0
    assert relu2[2, 0, 0] == 0


def test_blob_images():
    imgs, labels = blob_images(3, 40, seed=1)
    assert imgs.shape == (3, 40, 40, 3) and labels.shape == (3, 8)
    assert np.all((labels > 0) & (labels < 40))
    x, y = labels[0, :2]
    assert imgs[0, int(round(y)), int(round(x)), 0] > 200


def test_stereo_rig_sees_origin():
    c1, c2 = stereo_rig()
    for cam in (c1, c2):
        assert np.allclose(reproject(np.zeros(3), cam), (400, 300))
    assert np.isclose(np.linalg.norm(c1.center - c2.center), 1.0)
