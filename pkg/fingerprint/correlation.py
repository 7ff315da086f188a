"""
Correlation Metric & Sample Loss
Zero-mean/unit-norm correlation, correlation distance, the contrastive
sample loss and the Fourier-domain correlation used by the baseline
"""

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from utils.errors import ConfigError, DegenerateInputError, DimensionError
from utils.tensor import Tensor

SCOPES = ("channel", "tensor")


def _as_data(x) -> np.ndarray:
    # Residual objects carry their map in .data
    return np.asarray(getattr(x, "data", x))


def _check_scope(scope: str):
    if scope not in SCOPES:
        raise ConfigError(f"correlation scope must be one of {SCOPES}, got {scope!r}")


def zm_un(x, scope: str = "channel") -> np.ndarray:
    """
    Zero-mean, unit-norm version of x

    Args:
        x: C×H×W array (or Residual)
        scope: "channel" normalizes each channel, "tensor" the whole array

    Returns:
        float64 array of the same shape
    """
    _check_scope(scope)
    data = _as_data(x).astype(np.float64)
    if scope == "tensor" or data.ndim < 3:
        centered = data - data.mean()
        norm = np.sqrt(np.sum(centered * centered))
        if np.ptp(data) == 0 or norm == 0:
            raise DegenerateInputError("input has zero variance")
        return centered / norm

    flat = data.reshape(data.shape[0], -1)
    centered = flat - flat.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.sum(centered * centered, axis=1, keepdims=True))
    flat_channels = np.ptp(flat, axis=1) == 0
    if flat_channels.any() or (norms == 0).any():
        raise DegenerateInputError(
            f"channel(s) {np.flatnonzero(flat_channels | (norms[:, 0] == 0)).tolist()} have zero variance"
        )
    return (centered / norms).reshape(data.shape)


def correlation(residual, fingerprint, scope: str = "channel") -> float:
    """
    Correlation ρ between a residual and a fingerprint

    Per channel: inner product of the zero-mean, unit-norm versions, then averaged
    over channels. With scope="tensor" the whole arrays are normalized at once.
    """
    r = _as_data(residual)
    f = _as_data(fingerprint)
    if r.shape != f.shape:
        raise DimensionError(f"correlation shape mismatch: residual {r.shape} vs fingerprint {f.shape}")
    a = zm_un(r, scope)
    b = zm_un(f, scope)
    if scope == "tensor" or a.ndim < 3:
        return float(np.clip(np.sum(a * b), -1.0, 1.0))
    per_channel = np.sum((a * b).reshape(a.shape[0], -1), axis=1)
    return float(np.clip(per_channel.mean(), -1.0, 1.0))


def correlation_distance(rho_i, rho_j):
    """D_ij = sqrt((ρ_i − ρ_j)²); accepts floats or Tensors"""
    if isinstance(rho_i, Tensor) or isinstance(rho_j, Tensor):
        rho_i = rho_i if isinstance(rho_i, Tensor) else Tensor(np.asarray(rho_i))
        return (rho_i - rho_j).abs()
    return abs(float(rho_i) - float(rho_j))


def sample_loss(distance, similar, margin: float, clamp: bool = False):
    """
    Contrastive sample loss (t·D + (1−t)·(m − D)) / m

    Args:
        distance: Correlation distance D (float, array or Tensor)
        similar: t = 1 for a same-class pair, 0 otherwise
        margin: m > 0
        clamp: Use max(0, m − D) for the negative-pair term

    Returns:
        Loss with the type of `distance`
    """
    if margin <= 0:
        raise ConfigError(f"margin must be > 0, got {margin}")
    if isinstance(distance, Tensor):
        t = np.asarray(similar, dtype=distance.dtype)
        push = (margin - distance).relu() if clamp else margin - distance
        return (distance * t + push * (1.0 - t)) / margin
    d = np.asarray(distance, dtype=np.float64)
    t = np.asarray(similar, dtype=np.float64)
    push = np.maximum(0.0, margin - d) if clamp else margin - d
    loss = (t * d + (1.0 - t) * push) / margin
    return float(loss) if loss.ndim == 0 else loss


def pair_index(labels: Sequence[int]) -> List[Tuple[int, int, int]]:
    """All within-batch pairs (i < j) with t_ij = 1 iff the labels agree"""
    return [
        (i, j, int(labels[i] == labels[j]))
        for i in range(len(labels))
        for j in range(i + 1, len(labels))
    ]


def normalize_stack(residuals: Sequence, scope: str = "channel") -> np.ndarray:
    """Stack zm_un residuals into an n × (C·H·W) matrix"""
    if len(residuals) == 0:
        return np.zeros((0, 0))
    return np.stack([zm_un(r, scope).reshape(-1) for r in residuals])


def fingerprint_unit(fingerprint: Tensor, scope: str = "channel") -> Tensor:
    """Differentiable zm_un of a C×H×W fingerprint tensor, flattened"""
    _check_scope(scope)
    channels = fingerprint.shape[0]
    if scope == "tensor":
        flat = fingerprint.reshape(1, -1)
    else:
        flat = fingerprint.reshape(channels, -1)
    centered = flat - flat.mean(axis=1, keepdims=True)
    norms = (centered * centered).sum(axis=1, keepdims=True).sqrt()
    if np.any(norms.data == 0):
        raise DegenerateInputError("fingerprint candidate has a zero-variance channel")
    return (centered / norms).reshape(-1)


def batch_correlations(normalized: np.ndarray, fingerprint, scope: str = "channel"):
    """
    ρ of every row of a normalize_stack matrix against one fingerprint

    A Tensor fingerprint gives a differentiable n-vector; an array gives a numpy one.
    """
    if isinstance(fingerprint, Tensor):
        unit = fingerprint_unit(fingerprint, scope)
        channels = 1 if scope == "tensor" else fingerprint.shape[0]
        if normalized.shape[1] != unit.shape[0]:
            raise DimensionError(f"residual matrix {normalized.shape} vs fingerprint {fingerprint.shape}")
        return Tensor(normalized.astype(unit.dtype)).matmul(unit) / float(channels)
    f = _as_data(fingerprint)
    unit = zm_un(f, scope).reshape(-1)
    if normalized.shape[1] != unit.shape[0]:
        raise DimensionError(f"residual matrix {normalized.shape} vs fingerprint {f.shape}")
    channels = 1 if scope == "tensor" else f.shape[0]
    return np.clip(normalized @ unit / channels, -1.0, 1.0)


def pair_loss(rhos: Tensor, labels: Sequence[int], margin: float, clamp: bool = False) -> Tensor:
    """Mean sample loss over all within-batch pairs of a ρ vector"""
    return _mean_pair_loss(rhos, pair_index(labels), margin, clamp)


def _mean_pair_loss(rhos: Tensor, pairs: Sequence[Tuple[int, int, int]], margin: float, clamp: bool) -> Tensor:
    if not pairs:
        raise DimensionError("pair loss needs at least two residuals")
    first = np.array([p[0] for p in pairs])
    second = np.array([p[1] for p in pairs])
    similar = np.array([p[2] for p in pairs], dtype=np.float64)
    distance = correlation_distance(rhos.take(first), rhos.take(second))
    return sample_loss(distance, similar, margin, clamp).mean()


@dataclass
class PairBatch:
    """
    One optimization batch

    Args:
        residuals: normalize_stack rows, one per residual
        labels: REAL (0) / GENERATED (1) per row
        pairs: (i, j, t_ij) for every i < j; built from labels when empty
    """
    residuals: np.ndarray
    labels: List[int]
    pairs: List[Tuple[int, int, int]] = field(default_factory=list)

    def __post_init__(self):
        if len(self.residuals) != len(self.labels):
            raise DimensionError(f"{len(self.residuals)} residuals vs {len(self.labels)} labels")
        if not self.pairs:
            self.pairs = pair_index(self.labels)

    def loss(self, fingerprint: Tensor, margin: float, scope: str = "channel", clamp: bool = False) -> Tensor:
        """Mean sample loss of this batch against a candidate fingerprint"""
        rhos = batch_correlations(self.residuals, fingerprint, scope)
        return _mean_pair_loss(rhos, self.pairs, margin, clamp)


def fourier_magnitude(x) -> np.ndarray:
    """Centered |FFT| per channel"""
    data = _as_data(x).astype(np.float64)
    return np.abs(np.fft.fftshift(np.fft.fft2(data, axes=(-2, -1)), axes=(-2, -1)))


def fourier_correlation(residual, fingerprint, scope: str = "channel") -> float:
    """Correlation of the centered FFT magnitude maps"""
    r = _as_data(residual)
    f = _as_data(fingerprint)
    if r.shape != f.shape:
        raise DimensionError(f"fourier correlation shape mismatch: {r.shape} vs {f.shape}")
    return correlation(fourier_magnitude(r), fourier_magnitude(f), scope)
