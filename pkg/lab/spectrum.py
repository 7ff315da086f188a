"""
Spectral Analysis
Mean-subtracted, DC-centered FFT log-magnitude maps and two artifact scores:
harmonic peaks (up-sampling) and the axis cross (boundary effects)
"""

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from scipy.fft import fft2, fftshift

from utils.errors import DimensionError

EPS = 1e-6


@dataclass
class SpectrumMap:
    """Per-channel log(1 + |FFT|), DC at (S//2, S//2)"""
    logmag: np.ndarray
    source_id: str = ""

    def mean_map(self) -> np.ndarray:
        """Channel-averaged 2D map"""
        return self.logmag.mean(axis=0) if self.logmag.ndim == 3 else self.logmag

    def save_png(self, path: str, title: str = "") -> str:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        fig, ax = plt.subplots(figsize=(4, 4))
        im = ax.imshow(self.mean_map(), cmap="magma", interpolation="nearest")
        fig.colorbar(im, ax=ax, fraction=0.046)
        ax.set_title(title or self.source_id or "log-magnitude spectrum")
        ax.axis("off")
        fig.tight_layout()
        fig.savefig(path, dpi=160)
        plt.close(fig)
        return path


def spectrum_logmag(image: np.ndarray, source_id: str = "") -> SpectrumMap:
    """
    Log-magnitude spectrum of an image

    Args:
        image: C×H×W (or H×W) array

    Returns:
        SpectrumMap with the per-channel mean removed before the FFT
    """
    data = np.asarray(image, dtype=np.float64)
    if data.ndim == 2:
        data = data[None]
    centered = data - data.mean(axis=(-2, -1), keepdims=True)
    magnitude = np.abs(fftshift(fft2(centered, axes=(-2, -1)), axes=(-2, -1)))
    return SpectrumMap(np.log1p(magnitude), source_id)


def _as_map(spectrum) -> np.ndarray:
    if isinstance(spectrum, SpectrumMap):
        return spectrum.mean_map()
    data = np.asarray(spectrum, dtype=np.float64)
    return data.mean(axis=0) if data.ndim == 3 else data


def _ratio(selected: np.ndarray, rest: np.ndarray) -> float:
    return float((selected.mean() + EPS) / (np.median(rest) + EPS))


def harmonic_peak_score(spectrum, period: int) -> float:
    """
    Mean log-magnitude at the harmonics of S/p on both axes over the median of all non-DC bins

    Returns 0 for an all-zero spectrum.
    """
    logmag = _as_map(spectrum)
    h, w = logmag.shape
    if period <= 0 or h % period or w % period:
        raise DimensionError(f"period {period} does not divide spectrum size {h}×{w}")
    if not np.any(logmag):
        return 0.0

    rows = (np.arange(period) * (h // period) + h // 2) % h
    cols = (np.arange(period) * (w // period) + w // 2) % w
    mask = np.zeros_like(logmag, dtype=bool)
    mask[np.ix_(rows, cols)] = True
    non_dc = np.ones_like(mask)
    non_dc[h // 2, w // 2] = False
    mask &= non_dc
    if not mask.any():
        return 0.0
    return _ratio(logmag[mask], logmag[non_dc])


def cross_line_score(spectrum) -> float:
    """
    Mean log-magnitude along the central row and column (DC excluded) over the median of the rest

    Returns 0 for an all-zero spectrum.
    """
    logmag = _as_map(spectrum)
    h, w = logmag.shape
    if not np.any(logmag):
        return 0.0
    cross = np.zeros_like(logmag, dtype=bool)
    cross[h // 2, :] = True
    cross[:, w // 2] = True
    cross[h // 2, w // 2] = False
    rest = ~cross
    rest[h // 2, w // 2] = False
    if not rest.any():
        return 0.0
    return _ratio(logmag[cross], logmag[rest])
