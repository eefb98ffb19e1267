import numpy as np
import pytest

from abcdwavenet.complexity import model_complexity
from abcdwavenet.config import TINY, ConfigError, ModelConfig
from abcdwavenet.network import build_model, forward, load_model, predict_mask, save_model
from abcdwavenet.tensor_core import ShapeError
from abcdwavenet.weights import (
    WeightsError, dump_weights, init_weights, load_weights, param_specs, parse_weights,
    save_weights,
)

ABLATIONS = ("disable_bis", "disable_ass", "disable_psr", "disable_aacg", "disable_mia")


@pytest.fixture(scope="module")
def tiny():
    return build_model(TINY, seed=3)


def _image(n=1, side=64, seed=0):
    return np.random.default_rng(seed).random((n, 3, side, side)).astype(np.float32)


def test_forward_shape_range_and_determinism(tiny):
    x = _image(2)
    y = forward(tiny, x)
    assert y.shape == (2, 1, 64, 64) and y.dtype == np.float32
    assert np.all((y > 0) & (y < 1))
    np.testing.assert_array_equal(y, forward(tiny, x))
    np.testing.assert_array_equal(y, forward(build_model(TINY, seed=3), x))


def test_batch_split_matches(tiny):
    x = _image(2, seed=5)
    whole = forward(tiny, x)
    parts = np.concatenate([forward(tiny, x[:1]), forward(tiny, x[1:])])
    np.testing.assert_allclose(whole, parts, atol=1e-5)


def test_non_square_input(tiny):
    x = np.random.default_rng(1).random((1, 3, 32, 96)).astype(np.float32)
    assert forward(tiny, x).shape == (1, 1, 32, 96)


def test_input_validation(tiny):
    with pytest.raises(ShapeError):
        forward(tiny, _image(side=48))
    with pytest.raises(ShapeError):
        forward(tiny, np.zeros((1, 1, 64, 64), np.float32))
    with pytest.raises(ValueError):
        forward(tiny, _image() + 1.5)


def test_profile_sections(tiny):
    prof = {}
    forward(tiny, _image(), prof)
    assert {"enc1.ddc", "enc1.bis", "mia", "skip1", "head"} <= set(prof)
    assert all(v >= 0 for v in prof.values())


def test_seed_changes_weights():
    a, b = init_weights(TINY, 1), init_weights(TINY, 2)
    assert not a.same_as(b)
    assert a.same_as(init_weights(TINY, 1))


@pytest.mark.parametrize("flag", (None,) + ABLATIONS)
def test_store_count_matches_analytic_total(flag):
    cfg = TINY if flag is None else TINY.with_overrides(**{flag: True})
    assert init_weights(cfg, 0).scalar_count() == model_complexity(cfg, 64).total_params


def test_default_config_count_matches_analytic_total():
    cfg = ModelConfig()
    total = sum(int(np.prod(shape)) for _, shape, _, _ in param_specs(cfg))
    assert total == model_complexity(cfg).total_params


@pytest.mark.parametrize("flag", ABLATIONS)
def test_ablation_runs_and_reduces_params(flag):
    cfg = TINY.with_overrides(**{flag: True})
    y = forward(build_model(cfg, seed=0), _image(side=32))
    assert y.shape == (1, 1, 32, 32) and np.all((y > 0) & (y < 1))
    assert model_complexity(cfg).total_params < model_complexity(TINY).total_params
    full = ModelConfig()
    assert model_complexity(full.with_overrides(**{flag: True})).total_params < model_complexity(full).total_params


def test_weights_round_trip(tmp_path, tiny):
    path = tmp_path / "w.bin"
    save_model(tiny, path)
    loaded = load_model(path)
    assert loaded.config == TINY
    assert loaded.weights.same_as(tiny.weights)
    x = _image()
    np.testing.assert_array_equal(forward(loaded, x), forward(tiny, x))


def test_weights_corruption_detected(tmp_path, tiny):
    blob = dump_weights(tiny.weights, TINY)
    with pytest.raises(WeightsError, match="magic"):
        parse_weights(b"X" + blob[1:])
    with pytest.raises(WeightsError, match="truncated"):
        parse_weights(blob[:-5])
    with pytest.raises(WeightsError, match="trailing"):
        parse_weights(blob + b"\0")
    store = init_weights(TINY, 0)
    store["head.weight"] = store["head.weight"].reshape(-1)
    save_weights(store, TINY, tmp_path / "bad.bin")
    with pytest.raises(WeightsError, match="head.weight"):
        load_weights(tmp_path / "bad.bin")
    store = init_weights(TINY, 0)
    del store["mia.cca.w2"]
    save_weights(store, TINY, tmp_path / "missing.bin")
    with pytest.raises(WeightsError, match="missing"):
        load_weights(tmp_path / "missing.bin")


def test_weights_checked_against_other_config(tmp_path, tiny):
    save_model(tiny, tmp_path / "w.bin")
    with pytest.raises(WeightsError):
        load_weights(tmp_path / "w.bin", TINY.with_overrides(disable_bis=True))


def test_weights_are_read_only(tiny):
    with pytest.raises(ValueError):
        tiny.weights["head.weight"][0, 0, 0, 0] = 1.0


def test_predict_mask_strict_threshold():
    p = np.array([0.2, 0.5, 0.51], np.float32)
    np.testing.assert_array_equal(predict_mask(p), [0, 0, 1])


def test_config_text_round_trip_and_errors():
    cfg = TINY.with_overrides(disable_psr=True, threshold=0.25, psr_steps=2)
    assert ModelConfig.from_text(cfg.to_text()) == cfg
    assert ModelConfig.from_text("# defaults\n\n") == ModelConfig()
    with pytest.raises(ConfigError, match="unknown"):
        ModelConfig.from_text("bogus = 1")
    with pytest.raises(ConfigError, match="duplicate"):
        ModelConfig.from_text("seed = 1\nseed = 2")
    with pytest.raises(ConfigError):
        ModelConfig.from_text("stage_channels = 8, 16")
    with pytest.raises(ConfigError):
        ModelConfig(aacg_heads=3)
    with pytest.raises(ConfigError):
        ModelConfig.from_text("disable_bis = maybe")


def test_doubling_widths_roughly_quadruples_params():
    doubled = TINY.with_overrides(stage_channels=tuple(2 * c for c in TINY.stage_channels))
    ratio = model_complexity(doubled).total_params / model_complexity(TINY).total_params
    assert 3.5 <= ratio <= 4.5
