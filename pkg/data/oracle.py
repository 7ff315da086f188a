"""
Synthetic Oracle
Known patterns injected into synthetic real images, giving generated corpora
with ground-truth fingerprints
"""

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from data.dataset import DatasetManifest, ManifestEntry
from utils.errors import ConfigError, DegenerateInputError
from utils.image_io import save_image


class PatternKind(Enum):
    CHECKERBOARD = "checkerboard"
    AXIS_GRID = "grid"
    FIXED_RANDOM = "random"
    INTERPOLATED = "interp"


@dataclass(frozen=True)
class OraclePattern:
    """
    Synthetic fingerprint

    Args:
        kind: Pattern family
        period: Checkerboard / grid period in pixels
        seed: Seed of the fixed-random pattern
        a, b, t: Endpoints and weight of an interpolated pattern
        amplitude: Peak amplitude in 1/255 units
    """
    kind: PatternKind
    period: int = 2
    seed: int = 0
    a: Optional["OraclePattern"] = None
    b: Optional["OraclePattern"] = None
    t: float = 0.0
    amplitude: float = 4.0

    def __post_init__(self):
        if self.kind in (PatternKind.CHECKERBOARD, PatternKind.AXIS_GRID) and self.period < 2:
            raise ConfigError(f"pattern period must be >= 2, got {self.period}")
        if self.kind == PatternKind.CHECKERBOARD and self.period % 2:
            raise ConfigError(f"checkerboard period must be even, got {self.period}")
        if self.kind == PatternKind.INTERPOLATED:
            if self.a is None or self.b is None:
                raise ConfigError("interpolated pattern needs both endpoints")
            if not 0.0 <= self.t <= 1.0:
                raise ConfigError(f"interpolation weight must lie in [0, 1], got {self.t}")
        if self.amplitude < 0:
            raise ConfigError(f"amplitude must be >= 0, got {self.amplitude}")

    def describe(self) -> str:
        if self.kind == PatternKind.INTERPOLATED:
            return f"interp:{self.a.describe()};{self.b.describe()};{self.t:g}"
        if self.kind == PatternKind.FIXED_RANDOM:
            return f"random:{self.seed}"
        return f"{self.kind.value}:{self.period}"


def _normalize(pattern: np.ndarray) -> np.ndarray:
    centered = pattern - pattern.mean(axis=(1, 2), keepdims=True)
    peak = np.abs(centered).max()
    if peak == 0:
        raise DegenerateInputError("pattern is constant")
    return centered / peak


def render_pattern(pattern: OraclePattern, size: int) -> np.ndarray:
    """3×S×S pattern, zero mean per channel, unit peak"""
    yy, xx = np.mgrid[0:size, 0:size]
    if pattern.kind == PatternKind.CHECKERBOARD:
        half = pattern.period // 2
        plane = np.where(((yy // half) + (xx // half)) % 2 == 0, 1.0, -1.0)
        raw = np.repeat(plane[None], 3, axis=0)
    elif pattern.kind == PatternKind.AXIS_GRID:
        plane = ((yy % pattern.period == 0) | (xx % pattern.period == 0)).astype(np.float64)
        raw = np.repeat(plane[None], 3, axis=0)
    elif pattern.kind == PatternKind.FIXED_RANDOM:
        raw = np.random.default_rng(pattern.seed).standard_normal((3, size, size))
    else:
        raw = (1.0 - pattern.t) * render_pattern(pattern.a, size) + pattern.t * render_pattern(pattern.b, size)
    return _normalize(raw)


def parse_pattern(text: str, amplitude: float = 4.0) -> OraclePattern:
    """
    Parse "checkerboard:2", "grid:8", "random:7" or "interp:<a>;<b>;<t>"
    """
    kind, _, arg = text.strip().partition(":")
    try:
        tag = PatternKind(kind.lower())
    except ValueError as exc:
        raise ConfigError(f"Unknown pattern '{kind}'. Choose from: {[k.value for k in PatternKind]}") from exc
    try:
        if tag == PatternKind.INTERPOLATED:
            first, second, weight = arg.split(";")
            return OraclePattern(tag, a=parse_pattern(first), b=parse_pattern(second), t=float(weight),
                                 amplitude=amplitude)
        if tag == PatternKind.FIXED_RANDOM:
            return OraclePattern(tag, seed=int(arg or 0), amplitude=amplitude)
        default_period = 2 if tag == PatternKind.CHECKERBOARD else 8
        return OraclePattern(tag, period=int(arg or default_period), amplitude=amplitude)
    except ValueError as exc:
        raise ConfigError(f"Cannot parse pattern '{text}': {exc}") from exc


def synth_real_images(count: int, size: int, seed: int = 0, noise_sigma: float = 5.0) -> List[np.ndarray]:
    """
    Flat gray + smooth texture + sensor noise

    Args:
        noise_sigma: Noise std in 1/255 units
    """
    rng = np.random.default_rng(seed)
    images = []
    for _ in range(count):
        gray = rng.uniform(0.3, 0.7, size=(3, 1, 1))
        texture = gaussian_filter(rng.standard_normal((3, size, size)), sigma=(0, 6, 6), mode="wrap")
        texture *= 0.08 / max(texture.std(), 1e-12)
        noise = rng.standard_normal((3, size, size)) * noise_sigma / 255.0
        images.append(np.clip(gray + texture + noise, 0.0, 1.0).astype(np.float32))
    return images


def synth_inject(
    real_images: Sequence[np.ndarray],
    pattern: OraclePattern,
    noise_sigma: float = 5.0,
    seed: int = 0,
) -> List[np.ndarray]:
    """
    clamp(real + amplitude·P + N(0, noise_sigma)), amplitude and sigma in 1/255 units
    """
    if noise_sigma < 0:
        raise ConfigError(f"noise sigma must be >= 0, got {noise_sigma}")
    if not real_images:
        return []
    size = real_images[0].shape[-1]
    signal = render_pattern(pattern, size) * pattern.amplitude / 255.0
    rng = np.random.default_rng(seed)
    out = []
    for image in real_images:
        noisy = image + signal
        if noise_sigma > 0:
            noisy = noisy + rng.standard_normal(image.shape) * noise_sigma / 255.0
        out.append(np.clip(noisy, 0.0, 1.0).astype(np.float32))
    return out


def write_oracle_corpus(
    out_dir: str,
    pattern: OraclePattern,
    count: int,
    size: int,
    seed: int = 0,
    noise_sigma: float = 5.0,
    model_id: str = "oracle",
) -> str:
    """
    Write `count` real and `count` injected PNGs plus manifest.json

    Returns:
        Path of the manifest
    """
    root = Path(out_dir)
    real = synth_real_images(count, size, seed=seed, noise_sigma=noise_sigma)
    # clean bases so both classes carry the same noise level
    bases = synth_real_images(count, size, seed=seed + 1, noise_sigma=0.0)
    generated = synth_inject(bases, pattern, noise_sigma=noise_sigma, seed=seed + 2)
    entries = []
    for i, image in enumerate(real):
        name = f"real/{i:05d}.png"
        save_image(str(root / name), image)
        entries.append(ManifestEntry(name, "real", "real"))
    for i, image in enumerate(generated):
        name = f"generated/{i:05d}.png"
        save_image(str(root / name), image)
        entries.append(ManifestEntry(name, "generated", model_id))
    manifest = DatasetManifest(entries, split_seed=seed, working_size=size)
    return manifest.save(str(root / "manifest.json"))
