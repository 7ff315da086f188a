"""
Command Line Tests
End-to-end runs of dif.py commands on small synthetic corpora
"""

import json
import warnings
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from data.oracle import synth_real_images
from dif import build_parser, flag_overrides, main
from fingerprint.extractor import FingerprintRecord
from utils.checkpoint import file_sha256
from utils.image_io import save_image

QUIET = ["--no-env", "--quiet"]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """Oracle corpus (8 per class, 32×32) written through the CLI"""
    out = tmp_path_factory.mktemp("cli") / "oracle"
    assert main(["oracle", "--out", str(out), "--count", "8", "--size", "32", *QUIET]) == 0
    return out


@pytest.fixture(scope="module")
def fingerprint(corpus):
    fp = corpus.parent / "fp.dif"
    argv = ["extract", "--manifest", str(corpus / "manifest.json"), "--denoiser", "gaussian:3",
            "--method", "average", "--out", str(fp), *QUIET]
    assert main(argv) == 0
    return fp


def test_oracle_writes_corpus_and_provenance(corpus):
    manifest = json.loads((corpus / "manifest.json").read_text())
    assert manifest["working_size"] == 32
    assert len(manifest["entries"]) == 16
    provenance = json.loads((corpus / "provenance.json").read_text())
    assert provenance["command"] == "oracle"
    assert provenance["pattern"] == "checkerboard:2"
    assert provenance["outputs"][str(corpus / "manifest.json")] == file_sha256(str(corpus / "manifest.json"))


def test_extract_writes_record_and_provenance(corpus, fingerprint):
    record = FingerprintRecord.load(str(fingerprint))
    assert record.method == "average"
    assert record.working_size == 32
    assert record.source_model_id == "oracle"
    assert record.mu_gen > record.mu_real

    provenance = json.loads(Path(f"{fingerprint}.provenance.json").read_text())
    assert provenance["config"]["method"] == "average"
    assert provenance["inputs"]["gaussian:3"] is None
    assert provenance["inputs"][str(corpus / "manifest.json")] == file_sha256(str(corpus / "manifest.json"))
    assert provenance["outputs"][str(fingerprint)] == file_sha256(str(fingerprint))
    assert provenance["mu_gen"] == record.mu_gen


def test_detect_manifest_writes_metrics(corpus, fingerprint):
    assert main(["detect", "--fingerprint", str(fingerprint), "--denoiser", "gaussian:3",
                 "--manifest", str(corpus / "manifest.json"), *QUIET]) == 0
    metrics = json.loads(fingerprint.with_suffix(".metrics.json").read_text())
    assert metrics["n_total"] == 8
    assert metrics["accuracy"] >= 75.0
    per_image = fingerprint.with_suffix(".metrics.csv").read_text().splitlines()
    assert per_image[0] == "id,truth,prediction,rho"
    assert len(per_image) == 9


def test_detect_all_split(corpus, fingerprint, tmp_path):
    out = tmp_path / "all.json"
    assert main(["detect", "--fingerprint", str(fingerprint), "--denoiser", "gaussian:3",
                 "--manifest", str(corpus / "manifest.json"), "--split", "all", "--out", str(out), *QUIET]) == 0
    assert json.loads(out.read_text())["n_total"] == 16


def test_detect_single_image_prints_json(corpus, fingerprint, capsys):
    image = corpus / "generated" / "00000.png"
    assert main(["detect", "--fingerprint", str(fingerprint), "--denoiser", "gaussian:3",
                 "--image", str(image), *QUIET]) == 0
    result = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert result["label"] in ("Generated", "Real")
    assert -1.0 <= result["rho"] <= 1.0


def test_detect_single_image_without_out_writes_provenance(corpus, fingerprint):
    image = corpus / "real" / "00000.png"
    assert main(["detect", "--fingerprint", str(fingerprint), "--denoiser", "gaussian:3",
                 "--image", str(image), *QUIET]) == 0
    provenance = json.loads(fingerprint.with_suffix(".detect.provenance.json").read_text())
    assert provenance["command"] == "detect"
    assert provenance["label"] in ("Generated", "Real")
    assert provenance["image"] == str(image)
    assert provenance["inputs"][str(fingerprint)] == file_sha256(str(fingerprint))


def test_detect_with_other_filter_is_provenance_error(corpus, fingerprint, capsys):
    code = main(["detect", "--fingerprint", str(fingerprint), "--denoiser", "gaussian:1",
                 "--manifest", str(corpus / "manifest.json"), *QUIET])
    assert code == 3
    assert "❌" in capsys.readouterr().err


def test_config_replay_from_provenance(corpus, fingerprint, tmp_path):
    replay = tmp_path / "replay.dif"
    assert main(["extract", "--manifest", str(corpus / "manifest.json"), "--denoiser", "gaussian:3",
                 "--config", f"{fingerprint}.provenance.json", "--out", str(replay), *QUIET]) == 0
    original = FingerprintRecord.load(str(fingerprint))
    replayed = FingerprintRecord.load(str(replay))
    assert replayed.method == "average"
    assert np.array_equal(original.fingerprint, replayed.fingerprint)


def test_tiny_dif_extraction(corpus, tmp_path):
    fp = tmp_path / "dif.dif"
    argv = ["extract", "--manifest", str(corpus / "manifest.json"), "--denoiser", "gaussian:3",
            "--arch", "cnet", "--steps", "2", "--batch", "2", "--out", str(fp), *QUIET]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        assert main(argv) == 0
    record = FingerprintRecord.load(str(fp))
    assert record.method == "dif"
    assert len(record.loss_history) == 2


def _tiny_dif(corpus, out: Path) -> Path:
    argv = ["extract", "--manifest", str(corpus / "manifest.json"), "--denoiser", "gaussian:3",
            "--method", "dif", "--arch", "cnet", "--steps", "3", "--batch", "2", "--out", str(out), *QUIET]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        assert main(argv) == 0
    return out


def test_dif_extraction_is_byte_identical_across_runs(corpus, tmp_path):
    first = _tiny_dif(corpus, tmp_path / "first.dif")
    second = _tiny_dif(corpus, tmp_path / "second.dif")
    assert file_sha256(str(first)) == file_sha256(str(second))


def test_dif_extract_then_detect(corpus, tmp_path):
    fp = _tiny_dif(corpus, tmp_path / "dif.dif")
    out = tmp_path / "dif_metrics.json"
    assert main(["detect", "--fingerprint", str(fp), "--denoiser", "gaussian:3",
                 "--manifest", str(corpus / "manifest.json"), "--out", str(out), *QUIET]) == 0
    metrics = json.loads(out.read_text())
    assert metrics["n_total"] == 8
    assert 0.0 <= metrics["accuracy"] <= 100.0
    provenance = json.loads(Path(f"{out}.provenance.json").read_text())
    assert provenance["command"] == "detect"
    assert provenance["inputs"][str(fp)] == file_sha256(str(fp))
    assert provenance["outputs"][str(out)] == file_sha256(str(out))


@pytest.mark.slow
def test_dif_oracle_detection_and_small_training_sets(tmp_path):
    corpus = tmp_path / "oracle"
    assert main(["oracle", "--out", str(corpus), "--count", "256", "--size", "128", *QUIET]) == 0
    manifest = str(corpus / "manifest.json")
    fp = tmp_path / "oracle.dif"
    assert main(["extract", "--manifest", manifest, "--denoiser", "gaussian:3", "--method", "dif",
                 "--out", str(fp), *QUIET]) == 0
    metrics = tmp_path / "oracle_metrics.json"
    assert main(["detect", "--fingerprint", str(fp), "--denoiser", "gaussian:3", "--manifest", manifest,
                 "--out", str(metrics), *QUIET]) == 0
    assert json.loads(metrics.read_text())["accuracy"] >= 95.0

    sweep = tmp_path / "sweep.csv"
    assert main(["sweep-train-size", "--manifest", manifest, "--denoiser", "gaussian:3",
                 "--sizes", "128,256", "--out", str(sweep), *QUIET]) == 0
    frame = pd.read_csv(sweep).set_index("n_train")
    assert frame["accuracy"].max() - frame.loc[128, "accuracy"] <= 10.0


def test_config_errors_exit_2(corpus, tmp_path, capsys):
    manifest = str(corpus / "manifest.json")
    out = str(tmp_path / "x.dif")
    assert main(["extract", "--manifest", manifest, "--denoiser", "gaussian:abc", "--out", out, *QUIET]) == 2
    assert main(["extract", "--manifest", manifest, "--denoiser", "gaussian", "--margin", "0",
                 "--out", out, *QUIET]) == 2
    assert main(["extract", "--manifest", manifest, "--denoiser", "gaussian",
                 "--config", str(tmp_path / "absent.json"), "--out", out, *QUIET]) == 2
    assert "❌" in capsys.readouterr().err


def test_data_errors_exit_3(tmp_path):
    assert main(["extract", "--manifest", str(tmp_path / "absent.json"), "--denoiser", "gaussian",
                 "--out", str(tmp_path / "x.dif"), *QUIET]) == 3
    assert main(["jpeg-stats", "--in-dir", str(tmp_path / "absent"), *QUIET]) == 3


def test_cross_detect_and_lineage(corpus, fingerprint, tmp_path):
    matrix = tmp_path / "cross.csv"
    heatmap = tmp_path / "cross.png"
    correlations = tmp_path / "fp_corr.csv"
    assert main(["cross-detect", "--fingerprints", str(fingerprint), "--manifests", str(corpus / "manifest.json"),
                 "--denoiser", "gaussian:3", "--ids", "oracle", "--out", str(matrix),
                 "--heatmap", str(heatmap), "--fp-correlation", str(correlations), *QUIET]) == 0
    assert matrix.read_text().splitlines()[0] == "fingerprint,oracle"
    assert heatmap.stat().st_size > 0
    assert correlations.exists()

    assert main(["lineage", "--matrix", str(matrix), *QUIET]) == 0
    report = json.loads((tmp_path / "cross.lineage.json").read_text())
    assert report["clusters"] == []
    assert report["model_ids"] == ["oracle"]


def test_lineage_thresholds_from_flags(tmp_path):
    matrix = tmp_path / "m.csv"
    matrix.write_text("fingerprint,a,b,c\na,99,85,50\nb,88,99,50\nc,50,50,99\n")
    out = tmp_path / "lineage.json"
    assert main(["lineage", "--matrix", str(matrix), "--out", str(out), *QUIET]) == 0
    assert json.loads(out.read_text())["clusters"] == [["a", "b"]]
    assert main(["lineage", "--matrix", str(matrix), "--t-high", "90", "--out", str(out), *QUIET]) == 0
    assert json.loads(out.read_text())["clusters"] == []
    assert (tmp_path / "lineage.json.provenance.json").exists()


def test_perturb_command(corpus, tmp_path):
    out = tmp_path / "blurred"
    assert main(["perturb", "--in-dir", str(corpus / "real"), "--out-dir", str(out),
                 "--kind", "blur", "--sigma", "1.5", *QUIET]) == 0
    assert len(list(out.glob("*.png"))) == 8
    assert json.loads((out / "provenance.json").read_text())["perturbation"] == "blur1.5"


def test_jpeg_stats_command(tmp_path, capsys):
    for i, image in enumerate(synth_real_images(2, 16)):
        save_image(str(tmp_path / f"{i}.jpg"), image, quality=85)
    out = tmp_path / "stats.json"
    assert main(["jpeg-stats", "--in-dir", str(tmp_path), "--out", str(out), *QUIET]) == 0
    printed = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert printed["median"] == 85.0
    assert json.loads(out.read_text())["count"] == 2


def test_monochrome_lab_command(tmp_path):
    out = tmp_path / "lab"
    assert main(["monochrome-lab", "--arch", "cnet", "--size", "16", "--steps", "1", "--width", "4",
                 "--out", str(out), *QUIET]) == 0
    assert (out / "cnet_artifact.png").exists()
    assert (out / "cnet_spectrum.png").exists()
    provenance = json.loads((out / "provenance.json").read_text())
    assert provenance["config"]["lab_size"] == 16
    assert provenance["config"]["arch"] == "unet"


def test_flag_overrides_map_to_config_keys():
    args = build_parser().parse_args(["train-denoiser", "--manifest", "m.json", "--out", "d.dif",
                                      "--epochs", "3", "--depth", "5", "--seed", "2"])
    assert flag_overrides(args) == {"denoiser_epochs": 3, "dncnn_depth": 5, "seed": 2}
    args = build_parser().parse_args(["extract", "--manifest", "m", "--denoiser", "d", "--out", "o",
                                      "--margin-clamp"])
    assert flag_overrides(args) == {"margin_clamp": True}


def test_environment_overrides(corpus, tmp_path, monkeypatch):
    monkeypatch.setenv("DIF_SEED", "5")
    fp = tmp_path / "env.dif"
    assert main(["extract", "--manifest", str(corpus / "manifest.json"), "--denoiser", "gaussian:3",
                 "--method", "average", "--out", str(fp), "--quiet"]) == 0
    provenance = json.loads(Path(f"{fp}.provenance.json").read_text())
    assert provenance["config"]["seed"] == 5
    assert FingerprintRecord.load(str(fp)).seed == 5
