"""
JPEG Quality Scanner
Estimates the encoder quality of JPEG files from their quantization tables
"""

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from PIL import Image

from utils.errors import DataError

# Standard luminance / chrominance tables (quality 50)
STD_LUMINANCE = np.array([
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
])
STD_CHROMINANCE = np.array([
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
] + [99] * 32)


def scaled_table(base: np.ndarray, quality: int) -> np.ndarray:
    """Table the common encoder derives from `base` at a quality setting"""
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    return np.clip((base * scale + 50) // 100, 1, 255)


_REFERENCE = {
    q: (np.sort(scaled_table(STD_LUMINANCE, q)), np.sort(scaled_table(STD_CHROMINANCE, q)))
    for q in range(1, 101)
}


def estimate_quality(tables: Dict[int, List[int]]) -> int:
    """
    Closest standard quality for a set of quantization tables

    Values are compared sorted, so zigzag and natural ordering give the same answer.
    """
    luma = np.sort(np.asarray(tables[0]))
    chroma = np.sort(np.asarray(tables[1])) if 1 in tables else None

    def distance(q: int) -> float:
        ref_luma, ref_chroma = _REFERENCE[q]
        d = np.abs(luma - ref_luma).sum()
        if chroma is not None:
            d += np.abs(chroma - ref_chroma).sum()
        return float(d)

    return min(range(1, 101), key=distance)


def file_quality(path: str) -> Optional[int]:
    """Estimated quality, or None for a non-JPEG file"""
    try:
        with Image.open(path) as img:
            if img.format != "JPEG":
                return None
            tables = dict(img.quantization)
    except OSError:
        return None
    if 0 not in tables:
        return None
    return estimate_quality(tables)


@dataclass
class JpegQualityStats:
    mean: float
    median: float
    count: int
    skipped: int
    per_file: Dict[str, int] = field(default_factory=dict)


def jpeg_quality_stats(image_dir: str, verbose: bool = False) -> JpegQualityStats:
    """
    Mean and median estimated quality over the JPEG files under a directory

    Non-JPEG files are skipped and counted.
    """
    root = Path(image_dir)
    if not root.is_dir():
        raise DataError(f"Not a directory: {image_dir}")
    files = sorted(p for p in root.rglob("*") if p.is_file())
    per_file: Dict[str, int] = {}
    skipped = 0
    for path in files:
        quality = file_quality(str(path))
        if quality is None:
            skipped += 1
        else:
            per_file[str(path.relative_to(root))] = quality
    if skipped:
        warnings.warn(f"skipped {skipped} non-JPEG file(s) under {image_dir}", UserWarning)
    if not per_file:
        raise DataError(f"No JPEG files found under {image_dir}")

    values = np.array(list(per_file.values()), dtype=np.float64)
    stats = JpegQualityStats(float(values.mean()), float(np.median(values)), len(values), skipped, per_file)
    if verbose:
        print(f"📊 JPEG quality over {stats.count} files: mean {stats.mean:.1f}, median {stats.median:.1f}"
              f" ({skipped} skipped)")
    return stats
