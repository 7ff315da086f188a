"""
Fingerprint Tests
Correlation identities, the sample loss, extraction and the two baselines
"""

import warnings

import numpy as np
import pytest

from data.oracle import parse_pattern, render_pattern
from fingerprint.baselines import average_fingerprint, average_record, fourier_record
from fingerprint.correlation import (
    PairBatch,
    batch_correlations,
    correlation,
    correlation_distance,
    fourier_correlation,
    normalize_stack,
    pair_index,
    pair_loss,
    sample_loss,
    zm_un,
)
from fingerprint.extractor import (
    ExtractionConfig,
    FingerprintRecord,
    extract_fingerprint,
    extract_with_method,
    finalize_record,
)
from models.denoiser import extract_residuals
from utils.errors import CheckpointError, ConfigError, DataError, DegenerateInputError, DimensionError
from utils.gradcheck import gradcheck
from utils.tensor import Tensor

SIZE = 16


def _pattern(size: int = SIZE) -> np.ndarray:
    return render_pattern(parse_pattern("checkerboard:2"), size)


def _oracle_residuals(n: int, amplitude: float, seed: int = 0, size: int = SIZE):
    """Real residuals are white noise; generated ones add the pattern"""
    rng = np.random.default_rng(seed)
    pattern = _pattern(size)
    real = [rng.standard_normal((3, size, size)).astype(np.float32) for _ in range(n)]
    gen = [(rng.standard_normal((3, size, size)) + amplitude * pattern).astype(np.float32) for _ in range(n)]
    return real, gen


def _small_cfg(**overrides) -> ExtractionConfig:
    values = dict(arch="cnet", hidden_width=4, steps=6, batch=3, lr=5e-3, seed=0)
    values.update(overrides)
    return ExtractionConfig(**values)


# ----------------------------------------------------------------------
# Correlation metric
# ----------------------------------------------------------------------

def test_zm_un_hand_example():
    x = np.array([[[1.0, -1.0], [1.0, -1.0]]])
    assert np.allclose(zm_un(x), [[[0.5, -0.5], [0.5, -0.5]]])


def test_zm_un_is_idempotent(rng):
    x = zm_un(rng.standard_normal((3, 8, 8)))
    assert np.allclose(zm_un(x), x, atol=1e-7)
    assert np.allclose(np.sum(x.reshape(3, -1) ** 2, axis=1), 1.0)


def test_zm_un_rejects_constant_channel(rng):
    x = rng.standard_normal((3, 4, 4))
    x[1] = 0.25
    with pytest.raises(DegenerateInputError):
        zm_un(x)


def test_correlation_identities(rng):
    f = rng.standard_normal((3, 8, 8))
    assert correlation(f, f) == pytest.approx(1.0, abs=1e-6)
    assert correlation(-f, f) == pytest.approx(-1.0, abs=1e-6)
    assert correlation(2.5 * f + 0.3, f) == pytest.approx(1.0, abs=1e-6)
    assert correlation(-0.5 * f + 7.0, f) == pytest.approx(-1.0, abs=1e-6)
    assert correlation(f, f, scope="tensor") == pytest.approx(1.0, abs=1e-6)


def test_correlation_orthogonal_example():
    r = np.array([[[1.0, -1.0], [1.0, -1.0]]])
    f = np.array([[[1.0, 1.0], [-1.0, -1.0]]])
    assert correlation(r, f) == pytest.approx(0.0, abs=1e-12)


def test_correlation_bounds_and_errors(rng):
    for _ in range(10):
        rho = correlation(rng.standard_normal((3, 4, 4)), rng.standard_normal((3, 4, 4)))
        assert -1.0 <= rho <= 1.0
    with pytest.raises(DimensionError):
        correlation(np.ones((3, 4, 4)), np.ones((3, 8, 8)))
    with pytest.raises(ConfigError):
        correlation(rng.standard_normal((3, 4, 4)), rng.standard_normal((3, 4, 4)), scope="global")


def test_correlation_distance():
    assert correlation_distance(0.3, 0.3) == 0.0
    assert correlation_distance(0.6, 0.59) == pytest.approx(0.01)
    assert correlation_distance(-1.0, 1.0) == 2.0


def test_sample_loss_boundaries():
    assert sample_loss(0.0, 1, 0.01) == 0.0
    assert sample_loss(0.01, 0, 0.01) == 0.0
    assert sample_loss(0.0, 0, 0.01) == 1.0
    assert sample_loss(0.005, 0, 0.01) == pytest.approx(0.5)


def test_sample_loss_margin_and_clamp():
    with pytest.raises(ConfigError):
        sample_loss(0.1, 0, 0.0)
    assert sample_loss(0.05, 0, 0.01) == pytest.approx(-4.0)
    assert sample_loss(0.05, 0, 0.01, clamp=True) == 0.0


def test_pair_index():
    assert pair_index([0, 0, 1]) == [(0, 1, 1), (0, 2, 0), (1, 2, 0)]


def test_batch_correlations_match_scalar(rng):
    residuals = [rng.standard_normal((3, 6, 6)) for _ in range(4)]
    f = rng.standard_normal((3, 6, 6))
    expected = [correlation(r, f) for r in residuals]
    assert np.allclose(batch_correlations(normalize_stack(residuals), f), expected)
    as_tensor = batch_correlations(normalize_stack(residuals), Tensor(f))
    assert np.allclose(as_tensor.data, expected)


def test_pair_batch_builds_pairs_and_matches_pair_loss(rng):
    residuals = normalize_stack([rng.standard_normal((3, 6, 6)) for _ in range(4)])
    labels = [0, 0, 1, 1]
    batch = PairBatch(residuals, labels)
    assert batch.pairs == pair_index(labels)
    f = Tensor(rng.standard_normal((3, 6, 6)))
    expected = pair_loss(batch_correlations(residuals, f), labels, margin=0.05)
    assert batch.loss(f, margin=0.05).item() == pytest.approx(expected.item())
    with pytest.raises(DimensionError):
        PairBatch(residuals, [0, 1])


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("clamp", [False, True])
def test_gradcheck_correlation_loss_pipeline(seed, clamp):
    rng = np.random.default_rng(seed)
    residuals = normalize_stack([rng.standard_normal((3, 4, 4)) for _ in range(4)])
    f = Tensor(rng.standard_normal((3, 4, 4)), requires_grad=True, name="F")
    labels = [0, 0, 1, 1]
    report = gradcheck(lambda: pair_loss(batch_correlations(residuals, f), labels, 0.05, clamp), [f])
    assert report.passed(1e-6), report.per_input


def test_fourier_correlation_is_shift_invariant(rng):
    f = rng.standard_normal((3, 16, 16))
    assert fourier_correlation(f, f) == pytest.approx(1.0, abs=1e-6)
    shifted = np.roll(f, (3, 5), axis=(1, 2))
    assert fourier_correlation(shifted, f) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("seed", range(20))
def test_fourier_correlation_of_white_noise_is_small(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, 3, 64, 64))
    assert abs(fourier_correlation(a, b)) <= 0.1


# ----------------------------------------------------------------------
# Baselines
# ----------------------------------------------------------------------

def test_average_fingerprint_basics(rng):
    p = rng.standard_normal((3, 4, 4)).astype(np.float32)
    assert np.array_equal(average_fingerprint([p]), p)
    assert np.allclose(average_fingerprint([p, -p]), 0.0)
    with pytest.raises(DataError):
        average_fingerprint([])
    with pytest.raises(DimensionError):
        average_fingerprint([p, np.zeros((3, 8, 8))])


def test_average_converges_to_pattern():
    rng = np.random.default_rng(0)
    pattern = _pattern(32)
    noisy = [4.0 / 255.0 * pattern + rng.standard_normal((3, 32, 32)) * 5.0 / 255.0 for _ in range(256)]
    assert correlation(average_fingerprint(noisy), pattern) >= 0.9


def test_average_record_separates_oracle():
    real, gen = _oracle_residuals(32, amplitude=0.5)
    record = average_record(real, gen, "gaussian-id", source_model_id="oracle")
    assert record.method == "average"
    assert record.mu_gen - record.mu_real >= 0.1
    assert (record.n_real, record.n_gen, record.working_size) == (32, 32, SIZE)


def test_fourier_record_uses_fourier_correlation():
    real, gen = _oracle_residuals(16, amplitude=0.5)
    record = fourier_record(real, gen, "gaussian-id")
    assert record.method == "fourier"
    assert record.correlate(gen[0]) == pytest.approx(fourier_correlation(gen[0], record.fingerprint))


# ----------------------------------------------------------------------
# Record finalization and persistence
# ----------------------------------------------------------------------

def test_finalize_orients_fingerprint():
    real, gen = _oracle_residuals(16, amplitude=0.5)
    record = finalize_record(-_pattern(), real, gen, "id")
    assert record.mu_gen > record.mu_real
    assert correlation(record.fingerprint, _pattern()) == pytest.approx(1.0, abs=1e-6)


def test_finalize_warns_when_means_do_not_separate():
    rng = np.random.default_rng(1)
    real = [rng.standard_normal((3, SIZE, SIZE)) for _ in range(8)]
    with pytest.warns(RuntimeWarning):
        finalize_record(_pattern(), real, real, "id")


def test_finalize_rejects_degenerate_residuals():
    real, gen = _oracle_residuals(4, amplitude=0.5)
    real[0] = np.zeros_like(real[0])
    with pytest.raises(DataError):
        finalize_record(_pattern(), real, gen, "id")


def test_record_round_trip(tmp_path):
    real, gen = _oracle_residuals(8, amplitude=0.5)
    record = average_record(real, gen, "abc", source_model_id="oracle", seed=4)
    path = str(tmp_path / "fp.dif")
    record.save(path)
    loaded = FingerprintRecord.load(path)
    assert np.array_equal(loaded.fingerprint, record.fingerprint)
    assert (loaded.mu_real, loaded.mu_gen) == (record.mu_real, record.mu_gen)
    assert loaded.source_model_id == "oracle"
    assert loaded.method == "average"


def test_record_load_rejects_denoiser(tiny_denoiser, tmp_path):
    path = str(tmp_path / "dncnn.dif")
    tiny_denoiser.save(path)
    with pytest.raises(CheckpointError):
        FingerprintRecord.load(path)


def test_record_shape_validation():
    with pytest.raises(DimensionError):
        FingerprintRecord(np.zeros((3, 8, 8)), 0.0, 0.1, 4, 4, working_size=16)
    with pytest.raises(ConfigError):
        FingerprintRecord(np.zeros((3, 8, 8)), 0.0, 0.1, 4, 4, working_size=8, method="median")


# ----------------------------------------------------------------------
# Extraction
# ----------------------------------------------------------------------

def test_extraction_produces_complete_record():
    real, gen = _oracle_residuals(6, amplitude=0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        record = extract_fingerprint(real, gen, "den-id", _small_cfg(), source_model_id="m1", verbose=False)
    assert record.fingerprint.shape == (3, SIZE, SIZE)
    assert np.all(np.isfinite(record.fingerprint))
    assert len(record.loss_history) == 6
    assert record.mu_gen >= record.mu_real
    assert (record.arch, record.method, record.denoiser_id, record.source_model_id) == ("cnet", "dif", "den-id", "m1")


def test_extraction_is_deterministic():
    real, gen = _oracle_residuals(6, amplitude=0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        first = extract_fingerprint(real, gen, "id", _small_cfg(), verbose=False)
        second = extract_fingerprint(real, gen, "id", _small_cfg(), verbose=False)
    assert np.array_equal(first.fingerprint, second.fingerprint)
    assert first.loss_history == second.loss_history


def test_zero_step_extraction_uses_single_candidate():
    real, gen = _oracle_residuals(4, amplitude=0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        record = extract_fingerprint(real, gen, "id", _small_cfg(steps=0), verbose=False)
    assert record.loss_history == []
    assert record.fingerprint.std() > 0


def test_extraction_input_errors():
    real, gen = _oracle_residuals(4, amplitude=0.5)
    with pytest.raises(DataError):
        extract_fingerprint([], gen, "id", _small_cfg(), verbose=False)
    with pytest.raises(DataError):
        extract_fingerprint(real[:2], gen, "id", _small_cfg(batch=3), verbose=False)
    with pytest.raises(ConfigError):
        extract_fingerprint(real, gen, "id", _small_cfg(margin=0.0), verbose=False)
    with pytest.raises(DimensionError):
        extract_fingerprint(real, [g[:, :8, :8] for g in gen], "id", _small_cfg(), verbose=False)


def test_extract_with_method_dispatch():
    real, gen = _oracle_residuals(8, amplitude=0.5)
    assert extract_with_method(real, gen, "id", method="average").method == "average"
    assert extract_with_method(real, gen, "id", method="fourier").method == "fourier"
    with pytest.raises(ConfigError):
        extract_with_method(real, gen, "id", method="median")


@pytest.mark.slow
def test_extraction_recovers_strong_pattern():
    real, gen = _oracle_residuals(24, amplitude=2.0, seed=3)
    cfg = _small_cfg(steps=600, batch=4, lr=5e-3, margin=0.05)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        record = extract_fingerprint(real, gen, "id", cfg, verbose=False)
    assert record.mu_gen - record.mu_real >= 0.1


@pytest.mark.slow
def test_extraction_beats_or_matches_averaging_on_weak_pattern(highpass):
    from data.oracle import synth_inject, synth_real_images
    from detection.detector import evaluate_residuals

    real = synth_real_images(256, 128, seed=0)
    bases = synth_real_images(256, 128, seed=1, noise_sigma=0.0)
    gen = synth_inject(bases, parse_pattern("checkerboard:2", amplitude=1.0), seed=2)
    res_real = extract_residuals(real, highpass)
    res_gen = extract_residuals(gen, highpass)
    train_r, test_r = res_real[:128], res_real[128:]
    train_g, test_g = res_gen[:128], res_gen[128:]
    labels = ["real"] * 128 + ["generated"] * 128

    dif = extract_fingerprint(train_r, train_g, highpass.content_hash(), ExtractionConfig(), verbose=False)
    avg = average_record(train_r, train_g, highpass.content_hash())
    acc_dif = evaluate_residuals(test_r + test_g, labels, dif).accuracy
    acc_avg = evaluate_residuals(test_r + test_g, labels, avg).accuracy
    assert acc_dif >= acc_avg
