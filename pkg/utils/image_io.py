"""
Image I/O Utilities
Load/save C×H×W float images in [0, 1] and crop them without resampling
"""

from pathlib import Path
from typing import List, Optional

import numpy as np
from PIL import Image

from utils.errors import DataError, DimensionError

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp")


def load_image(path: str) -> np.ndarray:
    """
    Read an image file as float32 RGB

    Args:
        path: Image file path

    Returns:
        Array of shape 3×H×W with values in [0, 1]
    """
    try:
        with Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"), dtype=np.float32)
    except (FileNotFoundError, OSError) as exc:
        raise DataError(f"Cannot read image {path}: {exc}") from exc
    return np.ascontiguousarray(rgb.transpose(2, 0, 1) / 255.0)


def to_uint8(image: np.ndarray) -> np.ndarray:
    """C×H×W float image -> H×W×C uint8 (rounded, clipped)"""
    if image.ndim != 3:
        raise DimensionError(f"expected C×H×W image, got shape {image.shape}")
    hwc = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    return hwc[:, :, 0] if hwc.shape[2] == 1 else hwc


def save_image(path: str, image: np.ndarray, quality: Optional[int] = None) -> str:
    """
    Write a C×H×W float image; JPEG paths honor `quality` with 4:2:0 subsampling

    Returns:
        The written path
    """
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    pil = Image.fromarray(to_uint8(image))
    if out.suffix.lower() in (".jpg", ".jpeg"):
        pil.save(out, "JPEG", quality=quality or 95, subsampling="4:2:0")
    else:
        pil.save(out, "PNG")
    return str(out)


def center_crop(image: np.ndarray, size: int) -> np.ndarray:
    """Crop the central size×size window (never resamples)"""
    _, h, w = image.shape
    if h < size or w < size:
        raise DimensionError(f"image {image.shape} smaller than crop {size}×{size}")
    top = (h - size) // 2
    left = (w - size) // 2
    return np.ascontiguousarray(image[:, top:top + size, left:left + size])


def random_crop(image: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Crop a uniformly placed size×size window"""
    _, h, w = image.shape
    if h < size or w < size:
        raise DimensionError(f"image {image.shape} smaller than crop {size}×{size}")
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    return np.ascontiguousarray(image[:, top:top + size, left:left + size])


def list_images(directory: str) -> List[Path]:
    """Image files under a directory, recursively, in sorted order"""
    root = Path(directory)
    if not root.is_dir():
        raise DataError(f"Not a directory: {directory}")
    return sorted(p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS)


def normalize_to_unit(image: np.ndarray) -> np.ndarray:
    """Min-max normalize an array to [0, 1]; constant arrays map to 0"""
    lo, hi = float(image.min()), float(image.max())
    if hi - lo <= 0:
        return np.zeros_like(image, dtype=np.float32)
    return ((image - lo) / (hi - lo)).astype(np.float32)
