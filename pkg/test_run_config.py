"""
Configuration & Container Tests
RunConfig layering, validation, the DIF1 checkpoint format and image I/O helpers
"""

import json

import numpy as np
import pytest

from config.run_config import RunConfig, env_overrides, load_run_config
from utils.checkpoint import file_sha256, read_checkpoint, write_checkpoint
from utils.errors import CheckpointError, ConfigError, DataError, DimensionError
from utils.image_io import center_crop, list_images, load_image, normalize_to_unit, random_crop, save_image


# ----------------------------------------------------------------------
# RunConfig
# ----------------------------------------------------------------------

def test_defaults_validate():
    cfg = load_run_config(use_env=False)
    assert cfg == RunConfig()
    assert (cfg.margin, cfg.lr, cfg.steps, cfg.ema_decay, cfg.batch) == (0.01, 5e-4, 2000, 0.99, 8)
    assert (cfg.t_high, cfg.t_sym) == (80.0, 10.0)


def test_layering_file_env_flags(tmp_path, monkeypatch):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"margin": 0.02, "steps": 10, "seed": 3}))
    monkeypatch.setenv("DIF_STEPS", "20")
    monkeypatch.setenv("DIF_MARGIN_CLAMP", "true")
    cfg = load_run_config(str(path), {"seed": 9})
    assert cfg.margin == 0.02
    assert cfg.steps == 20
    assert cfg.margin_clamp is True
    assert cfg.seed == 9


def test_provenance_document_replays_config(tmp_path):
    original = RunConfig(margin=0.05, method="average")
    path = tmp_path / "provenance.json"
    path.write_text(json.dumps({"command": "extract", "config": original.to_dict(),
                                "config_hash": original.config_hash()}))
    assert load_run_config(str(path), use_env=False) == original


def test_config_hash_tracks_values():
    assert RunConfig().config_hash() == RunConfig().config_hash()
    assert RunConfig().config_hash() != RunConfig(seed=1).config_hash()


@pytest.mark.parametrize("overrides", [
    {"margin": 0.0},
    {"ema_decay": 1.0},
    {"steps": -1},
    {"sigma_lo": 20.0},
    {"gray": 1.5},
    {"t_high": 120.0},
    {"method": "median"},
    {"correlation_scope": "global"},
])
def test_validation_rejects(overrides):
    with pytest.raises(ConfigError):
        RunConfig().updated(overrides).validate()


def test_unknown_key_and_bad_types(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig().updated({"momentum": 0.9})
    with pytest.raises(ConfigError):
        RunConfig().updated({"steps": "many"})
    with pytest.raises(ConfigError):
        RunConfig().updated({"margin_clamp": "maybe"})
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_run_config(str(bad), use_env=False)


def test_env_overrides_ignore_unknown(monkeypatch):
    monkeypatch.setenv("DIF_NOT_A_KEY", "1")
    monkeypatch.setenv("DIF_BATCH", "4")
    overrides = env_overrides()
    assert overrides["batch"] == "4"
    assert "not_a_key" not in overrides


# ----------------------------------------------------------------------
# DIF1 checkpoints
# ----------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    path = str(tmp_path / "c.dif")
    arrays = {"w": np.arange(6, dtype=np.float64).reshape(2, 3), "b": np.array([0.5], np.float32)}
    digest = write_checkpoint(path, "model", {"note": "x"}, arrays)
    meta, loaded = read_checkpoint(path)
    assert meta["type"] == "model" and meta["note"] == "x"
    assert meta["content_hash"] == digest == file_sha256(path)
    assert loaded["w"].dtype == np.float32
    assert np.array_equal(loaded["w"], arrays["w"])
    assert open(path, "rb").read(4) == b"DIF1"


def test_checkpoint_rejects_bad_magic_and_truncation(tmp_path):
    path = tmp_path / "c.dif"
    write_checkpoint(str(path), "model", {}, {"w": np.ones(8)})
    blob = path.read_bytes()

    bad_magic = tmp_path / "magic.dif"
    bad_magic.write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(CheckpointError):
        read_checkpoint(str(bad_magic))

    truncated = tmp_path / "short.dif"
    truncated.write_bytes(blob[:-4])
    with pytest.raises(CheckpointError):
        read_checkpoint(str(truncated))

    with pytest.raises(CheckpointError):
        read_checkpoint(str(tmp_path / "absent.dif"))


# ----------------------------------------------------------------------
# Image I/O
# ----------------------------------------------------------------------

def test_png_round_trip_is_exact_on_the_uint8_grid(tmp_path):
    image = np.random.default_rng(0).integers(0, 256, size=(3, 8, 8)) / 255.0
    loaded = load_image(save_image(str(tmp_path / "a.png"), image))
    assert loaded.shape == (3, 8, 8)
    assert np.allclose(loaded, image, atol=1e-6)


def test_crops():
    image = np.arange(3 * 6 * 6, dtype=np.float32).reshape(3, 6, 6)
    assert np.array_equal(center_crop(image, 4), image[:, 1:5, 1:5])
    crop = random_crop(image, 3, np.random.default_rng(0))
    assert crop.shape == (3, 3, 3)
    with pytest.raises(DimensionError):
        center_crop(image, 7)


def test_list_images_and_missing_files(tmp_path):
    save_image(str(tmp_path / "b.png"), np.zeros((3, 4, 4)))
    save_image(str(tmp_path / "sub" / "a.jpg"), np.zeros((3, 4, 4)))
    (tmp_path / "notes.txt").write_text("x")
    assert [p.name for p in list_images(str(tmp_path))] == ["b.png", "a.jpg"]
    with pytest.raises(DataError):
        load_image(str(tmp_path / "absent.png"))
    with pytest.raises(DataError):
        list_images(str(tmp_path / "absent"))


def test_normalize_to_unit():
    assert np.allclose(normalize_to_unit(np.array([-2.0, 0.0, 2.0])), [0.0, 0.5, 1.0])
    assert np.all(normalize_to_unit(np.full(3, 7.0)) == 0.0)
