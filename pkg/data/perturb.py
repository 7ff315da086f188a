"""
Perturbation Suite
JPEG re-compression, half-size nearest-neighbor resampling, Gaussian blur and a
per-image random mix of the three
"""

import io
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter
from tqdm import tqdm

from utils.errors import ConfigError, DimensionError
from utils.image_io import list_images, load_image, save_image, to_uint8


class PerturbKind(Enum):
    NONE = "none"
    JPEG = "jpeg"
    RESIZE_HALF_NN = "resize"
    BLUR = "blur"
    MIXED = "mixed"


@dataclass(frozen=True)
class PerturbationSpec:
    """
    One perturbation

    Args:
        kind: Perturbation type
        quality: JPEG quality in [1, 100]
        sigma: Blur sigma (pixels), > 0
        seed: MixedRandom seed
    """
    kind: PerturbKind = PerturbKind.NONE
    quality: Optional[int] = None
    sigma: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind == PerturbKind.JPEG and (self.quality is None or not 1 <= self.quality <= 100):
            raise ConfigError(f"JPEG quality must lie in [1, 100], got {self.quality}")
        if self.kind == PerturbKind.BLUR and (self.sigma is None or self.sigma <= 0):
            raise ConfigError(f"blur sigma must be > 0, got {self.sigma}")

    @property
    def tag(self) -> str:
        if self.kind == PerturbKind.JPEG:
            return f"J{self.quality}"
        if self.kind == PerturbKind.BLUR:
            return f"blur{self.sigma:g}"
        return self.kind.value

    @classmethod
    def parse(cls, kind: str, quality: Optional[int] = None, sigma: Optional[float] = None,
              seed: int = 0) -> "PerturbationSpec":
        try:
            tag = PerturbKind(kind.lower())
        except ValueError as exc:
            raise ConfigError(f"Unknown perturbation '{kind}'. Choose from: {[k.value for k in PerturbKind]}") from exc
        if tag == PerturbKind.BLUR and sigma is None:
            sigma = 3.0
        if tag == PerturbKind.JPEG and quality is None:
            quality = 75
        return cls(tag, quality, sigma, seed)


# MixedRandom draws uniformly from these
MIXED_CHOICES = (
    PerturbationSpec(PerturbKind.NONE),
    PerturbationSpec(PerturbKind.JPEG, quality=75),
    PerturbationSpec(PerturbKind.JPEG, quality=50),
    PerturbationSpec(PerturbKind.RESIZE_HALF_NN),
    PerturbationSpec(PerturbKind.BLUR, sigma=3.0),
)


def jpeg_roundtrip(image: np.ndarray, quality: int) -> np.ndarray:
    """Baseline JPEG encode/decode with 4:2:0 chroma subsampling"""
    buffer = io.BytesIO()
    Image.fromarray(to_uint8(image)).save(buffer, "JPEG", quality=quality, subsampling="4:2:0")
    buffer.seek(0)
    with Image.open(buffer) as decoded:
        rgb = np.asarray(decoded.convert("RGB"), dtype=np.float32)
    return np.ascontiguousarray(rgb.transpose(2, 0, 1) / 255.0)


def resize_half_nn(image: np.ndarray) -> np.ndarray:
    """Nearest-neighbor down to S/2, then nearest-neighbor back up to S"""
    _, h, w = image.shape
    if h % 2 or w % 2:
        raise DimensionError(f"half-size resampling needs even dimensions, got {h}×{w}")
    small = image[:, ::2, ::2]
    return np.ascontiguousarray(small.repeat(2, axis=1).repeat(2, axis=2))


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    return gaussian_filter(image.astype(np.float64), sigma=(0, sigma, sigma), mode="mirror").astype(np.float32)


def perturb(image: np.ndarray, spec: PerturbationSpec, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Apply a perturbation to a 3×S×S image in [0, 1]

    MIXED draws its choice from `rng` (default: a generator seeded with spec.seed).
    """
    if spec.kind == PerturbKind.NONE:
        return image.copy()
    if spec.kind == PerturbKind.JPEG:
        return jpeg_roundtrip(image, spec.quality)
    if spec.kind == PerturbKind.RESIZE_HALF_NN:
        return resize_half_nn(image)
    if spec.kind == PerturbKind.BLUR:
        return gaussian_blur(image, spec.sigma)
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    choice = MIXED_CHOICES[int(rng.integers(len(MIXED_CHOICES)))]
    return perturb(image, choice)


def perturb_corpus(images: Sequence[np.ndarray], spec: PerturbationSpec) -> List[np.ndarray]:
    """Perturb a list; MIXED uses one seeded stream for the whole list"""
    rng = np.random.default_rng(spec.seed)
    return [perturb(img, spec, rng) for img in images]


def perturb_directory(in_dir: str, out_dir: str, spec: PerturbationSpec, verbose: bool = True) -> List[str]:
    """
    Write a perturbed copy of every image under in_dir into a mirrored tree

    Outputs are lossless PNG so the perturbation is the only degradation.
    """
    files = list_images(in_dir)
    rng = np.random.default_rng(spec.seed)
    written = []
    for path in tqdm(files, desc=f"Perturb {spec.tag}", disable=not verbose):
        relative = path.relative_to(in_dir).with_suffix(".png")
        out = perturb(load_image(str(path)), spec, rng)
        written.append(save_image(str(Path(out_dir) / relative), out))
    if verbose:
        print(f"✅ Wrote {len(written)} {spec.tag} images to {out_dir}")
    return written
