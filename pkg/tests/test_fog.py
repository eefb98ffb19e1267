import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from abcdwavenet.fog import FogParams, constant_depth, load_depth, synthesize_fog, transmission
from abcdwavenet.imageio import ImageFormatError, to_uint8, write_pfm, write_png16


def test_hand_pixel():
    out = synthesize_fog(np.full((1, 1), 0.5), np.ones((1, 1)), FogParams(math.log(2), 1.0))
    assert out[0, 0] == pytest.approx(0.75, abs=1e-7)
    assert to_uint8(out)[0, 0] == 191


def test_kappa_zero_is_identity_after_quantization(rng):
    img = rng.integers(0, 256, (8, 9, 3)).astype(np.float32) / 255
    depth = rng.uniform(0, 10, (8, 9))
    out = synthesize_fog(img, depth, FogParams(0.0, 0.7))
    np.testing.assert_array_equal(to_uint8(out), to_uint8(img))


def test_matches_per_pixel_formula(rng):
    img = rng.random((4, 5, 3))
    depth = rng.uniform(0, 3, (4, 5))
    out = synthesize_fog(img, depth, FogParams(0.8, 0.6))
    for i in range(4):
        for j in range(5):
            t = math.exp(-0.8 * depth[i, j])
            for c in range(3):
                assert out[i, j, c] == pytest.approx(img[i, j, c] * t + 0.6 * (1 - t), abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0, 5), st.floats(0, 1))
def test_output_between_scene_and_airlight(seed, kappa, a):
    r = np.random.default_rng(seed)
    img, depth = r.random((6, 6, 3)), r.uniform(0, 4, (6, 6))
    out = synthesize_fog(img, depth, FogParams(kappa, a)).astype(np.float64)
    lo, hi = np.minimum(img, a), np.maximum(img, a)
    assert np.all(out >= lo - 1e-6) and np.all(out <= hi + 1e-6)


def test_monotone_in_kappa(rng):
    img, depth = rng.random((6, 6, 3)), rng.uniform(0.1, 3, (6, 6))
    a = 0.9
    gaps = [np.abs(synthesize_fog(img, depth, FogParams(k, a)) - a) for k in (0, 0.5, 1, 2, 4)]
    for before, after in zip(gaps, gaps[1:]):
        assert np.all(after <= before + 1e-6)


def test_transmission_range_and_validation():
    t = transmission(np.array([[0.0, 1.0], [2.0, 50.0]]), FogParams(1.0))
    assert t[0, 0] == 1.0 and np.all((t > 0) & (t <= 1))
    with pytest.raises(ValueError):
        FogParams(kappa=-1)
    with pytest.raises(ValueError):
        FogParams(atmos_light=1.5)
    with pytest.raises(ValueError):
        transmission(np.array([[-1.0]]), FogParams())
    with pytest.raises(ValueError):
        synthesize_fog(np.zeros((2, 2, 3)), np.zeros((3, 2)), FogParams())
    with pytest.raises(ValueError):
        synthesize_fog(np.full((2, 2), 2.0), np.zeros((2, 2)), FogParams())


def test_grayscale_and_constant_depth():
    out = synthesize_fog(np.zeros((2, 3)), constant_depth(2, 3, 2.0), FogParams(1.0, 1.0))
    np.testing.assert_allclose(out, 1 - math.exp(-2), atol=1e-7)


def test_load_depth_png16_and_pfm(tmp_path):
    raw = np.array([[0, 65535], [32768, 1000]], np.uint16)
    write_png16(tmp_path / "d.png", raw)
    np.testing.assert_allclose(load_depth(tmp_path / "d.png", 10.0), raw / 65535.0 * 10.0)
    vals = np.array([[1.5, 2.0, 0.0], [3.0, 4.25, 9.0]])
    write_pfm(tmp_path / "d.pfm", vals)
    np.testing.assert_allclose(load_depth(tmp_path / "d.pfm", 2.0), vals * 2.0)
    (tmp_path / "d.txt").write_text("x")
    with pytest.raises(ImageFormatError):
        load_depth(tmp_path / "d.txt")
