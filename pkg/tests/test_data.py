import numpy as np
import pytest

from landmarknet.data import (ANNOTATION_COLUMNS, AnnotatedFrame, FirstHalf, Interleaved, RandomK,
                              channel_means, load_annotations, load_calibration, load_image,
                              parse_split, preprocess, save_annotations, save_calibration, save_image,
                              split, to_chw, unpreprocess)
from landmarknet.errors import FormatError, ParseError, SizeError, ValidationError

HEADER = ",".join(ANNOTATION_COLUMNS) + "\n"
ROW = "3,img3.png,10,20,30,40,50,60,70,80,0,1,0,0,5,15,100,90\n"


def write(tmp_path, text):
    p = tmp_path / "a.csv"
    p.write_text(text)
    return p


def test_header_only(tmp_path):
    assert load_annotations(write(tmp_path, HEADER)) == []


def test_one_row(tmp_path):
    (f,) = load_annotations(write(tmp_path, HEADER + ROW))
    assert f.frame_id == 3 and f.image_ref == "img3.png"
    assert f.landmarks.tolist() == [[10, 20], [30, 40], [50, 60], [70, 80]]
    assert f.occluded == (False, True, False, False)
    assert f.bbox == (5, 15, 100, 90)


def test_x_outside_frame(tmp_path):
    with pytest.raises(ValidationError):
        load_annotations(write(tmp_path, HEADER + ROW.replace(",10,20,", ",900,20,")))


def test_parse_error_line_number(tmp_path):
    with pytest.raises(ParseError) as err:
        load_annotations(write(tmp_path, "# comment\n" + HEADER + ROW + "4,x.png,1,2\n"))
    assert err.value.line == 4


def test_bad_number(tmp_path):
    with pytest.raises(ParseError):
        load_annotations(write(tmp_path, HEADER + ROW.replace(",30,", ",abc,")))


def test_sorted_and_round_trip(tmp_path):
    text = HEADER + ROW + ROW.replace("3,img3", "1,img1")
    frames = load_annotations(write(tmp_path, text))
    assert [f.frame_id for f in frames] == [1, 3]
    save_annotations(frames, tmp_path / "b.csv")
    again = load_annotations(tmp_path / "b.csv")
    assert all(np.array_equal(a.landmarks, b.landmarks) and a.bbox == b.bbox and a.occluded == b.occluded
               for a, b in zip(frames, again))


def frames(n):
    return [AnnotatedFrame(i, f"{i}.png", np.zeros((4, 2))) for i in range(1, n + 1)]


def test_first_half_800():
    train, test = split(frames(800), FirstHalf())
    assert [f.frame_id for f in train] == list(range(1, 401))
    assert [f.frame_id for f in test] == list(range(401, 801))


def test_first_half_odd_count():
    train, test = split(frames(5), FirstHalf())
    assert (len(train), len(test)) == (3, 2)


def test_interleaved_800():
    train, test = split(frames(800), Interleaved())
    assert all(f.frame_id % 2 == 1 for f in train) and all(f.frame_id % 2 == 0 for f in test)
    assert len(train) == len(test) == 400


def test_random_k():
    train, test = split(frames(800), RandomK(600, seed=3))
    ids_tr, ids_te = {f.frame_id for f in train}, {f.frame_id for f in test}
    assert len(ids_tr) == 600 and len(ids_te) == 200 and not ids_tr & ids_te
    assert [f.frame_id for f in split(frames(800), RandomK(600, seed=3))[1]] == [f.frame_id for f in test]


def test_random_k_too_big():
    with pytest.raises(SizeError):
        split(frames(800), RandomK(601))


def test_parse_split():
    assert parse_split("first-half") == FirstHalf()
    assert parse_split("random_k", 200) == RandomK(200)
    with pytest.raises(ValueError):
        parse_split("shuffled")


def test_preprocess_constant_grey():
    out = preprocess(np.full((4, 5), 128, np.uint8), (128, 128, 128))
    assert out.shape == (1, 3, 4, 5) and not np.any(out)


def test_preprocess_replicates_grey():
    img = np.random.default_rng(0).integers(0, 256, (3, 4)).astype(np.uint8)
    chw = to_chw(img)
    assert np.array_equal(chw[0], chw[1]) and np.array_equal(chw[1], chw[2])


def test_preprocess_subtraction():
    out = preprocess(np.full((1, 1, 3), 200, np.uint8), (104.5, 0, 0))
    assert out[0, 0, 0, 0] == 95.5


def test_preprocess_invertible():
    img = np.random.default_rng(1).integers(0, 256, (6, 7, 3)).astype(np.uint8)
    means = (101.25, 99.5, 120.0)
    back = unpreprocess(preprocess(img, means), means)
    assert np.array_equal(back, img.transpose(2, 0, 1).astype(float))


def test_preprocess_rejects_non_8bit():
    with pytest.raises(FormatError):
        preprocess(np.zeros((2, 2), np.int32), (0, 0, 0))
    with pytest.raises(FormatError):
        preprocess(np.full((2, 2), 300.0), (0, 0, 0))


def test_channel_means():
    a = np.zeros((2, 2, 3), np.uint8)
    b = np.full((2, 2, 3), 10, np.uint8)
    assert channel_means([a, b]).tolist() == [5.0, 5.0, 5.0]


def test_image_round_trip(tmp_path):
    img = np.random.default_rng(2).integers(0, 256, (5, 6, 3)).astype(np.uint8)
    save_image(tmp_path / "x.png", img)
    assert np.array_equal(load_image(tmp_path / "x.png"), img)
    np.save(tmp_path / "y.npy", img.astype(np.float32))
    with pytest.raises(FormatError):
        load_image(tmp_path / "y.npy")


def test_calibration_round_trip(tmp_path):
    m = np.random.default_rng(3).standard_normal((3, 4))
    save_calibration(m, tmp_path / "c.txt")
    assert np.array_equal(load_calibration(tmp_path / "c.txt"), m)
    (tmp_path / "bad.txt").write_text("1 2 3\n")
    with pytest.raises(FormatError):
        load_calibration(tmp_path / "bad.txt")
