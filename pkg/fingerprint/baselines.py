"""
Baseline Fingerprints
Residual averaging and Fourier-domain correlation, producing full records
so they run through the same detection path as extracted fingerprints
"""

from typing import Sequence

import numpy as np

from fingerprint.extractor import FingerprintRecord, finalize_record
from utils.errors import DataError, DimensionError


def average_fingerprint(residuals: Sequence) -> np.ndarray:
    """
    Elementwise mean of residuals (F_A)

    Args:
        residuals: Residual objects or 3×S×S arrays

    Returns:
        Mean residual as float32
    """
    arrays = [np.asarray(getattr(r, "data", r), dtype=np.float64) for r in residuals]
    if not arrays:
        raise DataError("averaging needs at least one residual")
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise DimensionError(f"residual shapes differ, first is {shape}")
    return np.mean(arrays, axis=0).astype(np.float32)


def average_record(
    res_real: Sequence,
    res_gen: Sequence,
    denoiser_id: str,
    source_model_id: str = "",
    seed: int = 0,
    scope: str = "channel",
) -> FingerprintRecord:
    """Averaging baseline: F = mean of the generated residuals, spatial correlation"""
    return finalize_record(
        average_fingerprint(res_gen), res_real, res_gen, denoiser_id,
        method="average", scope=scope, source_model_id=source_model_id, seed=seed,
    )


def fourier_record(
    res_real: Sequence,
    res_gen: Sequence,
    denoiser_id: str,
    source_model_id: str = "",
    seed: int = 0,
    scope: str = "channel",
) -> FingerprintRecord:
    """Fourier baseline: F = mean of the generated residuals, correlated via |FFT|"""
    return finalize_record(
        average_fingerprint(res_gen), res_real, res_gen, denoiser_id,
        method="fourier", scope=scope, source_model_id=source_model_id, seed=seed,
    )
