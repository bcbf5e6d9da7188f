import numpy as np
import pytest

from par.core import (clip_to_valid, gaussian_noise, is_rounded, l2_distance,
                      make_rng, round_for_query)
from par.errors import ContractViolation
from par.imgio import (heatmap_bytes, mask_to_text, read_parimg, read_pnm,
                       write_parimg, write_pgm, write_heatmap_pgm)


def test_l2_distance_hand_values():
    a = np.zeros((2, 2, 1))
    b = np.zeros((2, 2, 1))
    b[0, 0, 0] = 3.0
    b[1, 1, 0] = 4.0
    assert l2_distance(a, b) == pytest.approx(5.0, abs=1e-12)
    assert l2_distance(a, a) == 0.0


def test_l2_distance_shape_mismatch():
    with pytest.raises(ContractViolation):
        l2_distance(np.zeros((2, 2, 1)), np.zeros((2, 3, 1)))


def test_clip_bounds_and_identity():
    x = np.array([[[-5.0, 0.0, 12.5, 255.0, 300.0]]])
    out = clip_to_valid(x)
    assert out.tolist() == [[[0.0, 0.0, 12.5, 255.0, 255.0]]]
    inner = np.array([[[3.25, 200.0]]])
    assert np.array_equal(clip_to_valid(inner), inner)


def test_round_half_away_from_zero():
    x = np.array([0.5, 1.5, 2.5, 3.49, 3.51, 254.5, 0.0])
    out = round_for_query(x)
    assert out.tolist() == [1.0, 2.0, 3.0, 3.0, 4.0, 255.0, 0.0]
    # np.round is banker's rounding and would give 0.0 and 2.0 here
    assert np.round(np.array([0.5, 2.5])).tolist() == [0.0, 2.0]
    assert round_for_query(np.array([0.5, 2.5])).tolist() == [1.0, 3.0]


def test_round_idempotent_on_integers():
    x = np.arange(0, 256, dtype=np.float64).reshape(16, 16, 1)
    assert np.array_equal(round_for_query(x), x)


def test_round_random_grid_properties():
    rng = make_rng(11)
    x = rng.uniform(0, 255, size=(32, 32, 3))
    out = round_for_query(x)
    assert is_rounded(out)
    assert np.max(np.abs(out - x)) <= 0.5 + 1e-12


def test_gaussian_noise_contract():
    rng = make_rng(5)
    with pytest.raises(ContractViolation):
        gaussian_noise((4, 4, 1), 0.0, rng)
    with pytest.raises(ContractViolation):
        gaussian_noise((4, 4, 1), 2.0, "not an rng")


def test_gaussian_noise_moments_and_replay():
    noise = gaussian_noise((100, 100, 3), 7.0, make_rng(42))
    assert abs(float(noise.mean())) < 0.15
    assert abs(float(noise.std()) - 7.0) < 0.1
    again = gaussian_noise((100, 100, 3), 7.0, make_rng(42))
    assert np.array_equal(noise, again)


def test_make_rng_validation():
    for bad in (-1, 1.5, None):
        with pytest.raises(ContractViolation):
            make_rng(bad)


def test_parimg_round_trip(tmp_path):
    rng = make_rng(3)
    img = rng.uniform(-10, 300, size=(7, 5, 3))
    path = tmp_path / "x.pimg"
    write_parimg(path, img)
    back = read_parimg(path)
    assert back.dtype == np.float64
    assert np.array_equal(back, img)


def test_parimg_rejects_corruption(tmp_path):
    img = np.zeros((2, 2, 1))
    path = tmp_path / "x.pimg"
    write_parimg(path, img)
    raw = path.read_bytes()
    (tmp_path / "short.pimg").write_bytes(raw[:-8])
    with pytest.raises(ContractViolation):
        read_parimg(tmp_path / "short.pimg")
    (tmp_path / "magic.pimg").write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(ContractViolation):
        read_parimg(tmp_path / "magic.pimg")
    (tmp_path / "long.pimg").write_bytes(raw + b"\x00")
    with pytest.raises(ContractViolation):
        read_parimg(tmp_path / "long.pimg")


def test_pgm_round_trip(tmp_path):
    img = (np.arange(24, dtype=np.float64) * 10 % 256).reshape(4, 6)
    path = tmp_path / "g.pgm"
    write_pgm(path, img)
    back = read_pnm(path)
    assert back.shape == (4, 6, 1)
    assert np.array_equal(back[:, :, 0], img)


def test_ppm_reader_with_comments(tmp_path):
    pixels = bytes(range(2 * 2 * 3))
    raw = b"P6\n# a comment\n2 2\n# another\n255\n" + pixels
    path = tmp_path / "c.ppm"
    path.write_bytes(raw)
    img = read_pnm(path)
    assert img.shape == (2, 2, 3)
    assert img.ravel().tolist() == list(range(12))


def test_pnm_reader_rejects_16bit(tmp_path):
    path = tmp_path / "deep.pgm"
    path.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
    with pytest.raises(ContractViolation):
        read_pnm(path)


def test_heatmap_rescale():
    m = np.array([[0.0, 0.0], [0.0, 0.5]])
    out = heatmap_bytes(m)
    assert out[1, 1] == 255 and out.sum() == 255
    zero = heatmap_bytes(np.zeros((4, 4)))
    assert zero.sum() == 0
    # linearity: ratios preserved up to rounding
    m = np.array([[1.0, 2.0, 4.0]])
    out = heatmap_bytes(m)
    assert out.tolist() == [[64, 128, 255]]


def test_heatmap_pgm_file(tmp_path):
    path = tmp_path / "h.pgm"
    write_heatmap_pgm(path, np.array([[0.0, 3.0], [1.5, 0.0]]))
    img = read_pnm(path)
    assert img[0, 1, 0] == 255 and img[1, 0, 0] == 128


def test_mask_text_dump():
    text = mask_to_text(np.array([[1.0, 0.0], [2.5, 3.0]]))
    assert text == "1 0\n2.5 3\n"
