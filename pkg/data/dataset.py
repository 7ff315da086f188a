"""
Dataset Manifests & Splits
JSON manifests of labeled image files and the deterministic 50/50 train/test split
"""

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from utils.errors import DataError, DimensionError
from utils.image_io import center_crop, load_image

LABELS = ("real", "generated")


@dataclass
class ManifestEntry:
    path: str
    label: str
    model_id: str = ""


@dataclass
class DatasetManifest:
    """
    Labeled image list with its split seed and working size

    Relative entry paths are resolved against the manifest's directory.
    """
    entries: List[ManifestEntry]
    split_seed: int = 0
    working_size: int = 128
    root: str = ""

    def __post_init__(self):
        if self.working_size <= 0:
            raise DataError(f"working_size must be > 0, got {self.working_size}")
        for entry in self.entries:
            if entry.label not in LABELS:
                raise DataError(f"entry {entry.path} has label {entry.label!r}; expected one of {LABELS}")

    def resolve(self, entry: ManifestEntry) -> Path:
        path = Path(entry.path)
        return path if path.is_absolute() or not self.root else Path(self.root) / path

    def check_paths(self):
        missing = [e.path for e in self.entries if not self.resolve(e).exists()]
        if missing:
            raise DataError(f"{len(missing)} manifest entries do not exist, e.g. {missing[:3]}")

    def model_ids(self, label: str = "generated") -> List[str]:
        return sorted({e.model_id for e in self.entries if e.label == label and e.model_id})

    @classmethod
    def load(cls, path: str) -> "DatasetManifest":
        try:
            document = json.loads(Path(path).read_text())
        except OSError as exc:
            raise DataError(f"Cannot read manifest {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"Manifest {path} is not valid JSON: {exc}") from exc
        try:
            entries = [
                ManifestEntry(e["path"], e["label"], e.get("model_id", "")) for e in document["entries"]
            ]
            manifest = cls(
                entries=entries,
                split_seed=int(document.get("split_seed", 0)),
                working_size=int(document["working_size"]),
                root=str(Path(path).resolve().parent),
            )
        except (KeyError, TypeError) as exc:
            raise DataError(f"Manifest {path} is missing field {exc}") from exc
        manifest.check_paths()
        return manifest

    def save(self, path: str) -> str:
        document = {
            "working_size": self.working_size,
            "split_seed": self.split_seed,
            "entries": [{"path": e.path, "label": e.label, "model_id": e.model_id} for e in self.entries],
        }
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(document, indent=2))
        return path


@dataclass
class ImageSet:
    """Cropped images with labels, ids and source model ids"""
    images: List[np.ndarray] = field(default_factory=list)
    labels: List[str] = field(default_factory=list)
    ids: List[str] = field(default_factory=list)
    model_ids: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.images)

    def of_label(self, label: str) -> List[np.ndarray]:
        return [img for img, lab in zip(self.images, self.labels) if lab == label]

    def subset(self, indices: Sequence[int]) -> "ImageSet":
        return ImageSet(
            [self.images[i] for i in indices],
            [self.labels[i] for i in indices],
            [self.ids[i] for i in indices],
            [self.model_ids[i] for i in indices],
        )

    def balanced_subset(self, per_class: int) -> "ImageSet":
        """First `per_class` images of each label (order preserved)"""
        picked: List[int] = []
        for label in LABELS:
            picked += [i for i, lab in enumerate(self.labels) if lab == label][:per_class]
        return self.subset(sorted(picked))

    @classmethod
    def concat(cls, sets: Sequence["ImageSet"]) -> "ImageSet":
        out = cls()
        for s in sets:
            out.images += s.images
            out.labels += s.labels
            out.ids += s.ids
            out.model_ids += s.model_ids
        return out


def _load_cropped(manifest: DatasetManifest, entry: ManifestEntry) -> Optional[np.ndarray]:
    image = load_image(str(manifest.resolve(entry)))
    try:
        return center_crop(image, manifest.working_size)
    except DimensionError:
        warnings.warn(
            f"skipping {entry.path}: {image.shape[1]}×{image.shape[2]} is smaller than "
            f"the working size {manifest.working_size}",
            UserWarning,
        )
        return None


def load_and_split(
    manifest: DatasetManifest,
    required: Sequence[str] = LABELS,
    workers: int = 1,
    verbose: bool = False,
) -> Dict[str, ImageSet]:
    """
    Deterministic, label-balanced 50/50 split

    Args:
        manifest: Validated manifest
        required: Labels that must be present (an empty class is an error)
        workers: Threads for image loading

    Returns:
        {"train": ImageSet, "test": ImageSet}; images are center-cropped, never resampled
    """
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            loaded = list(pool.map(lambda e: _load_cropped(manifest, e), manifest.entries))
    else:
        loaded = [_load_cropped(manifest, e) for e in manifest.entries]

    rng = np.random.default_rng(manifest.split_seed)
    splits = {"train": ImageSet(), "test": ImageSet()}
    for label in LABELS:
        usable = [i for i, e in enumerate(manifest.entries) if e.label == label and loaded[i] is not None]
        if not usable:
            if label in required:
                raise DataError(f"manifest has no usable '{label}' images")
            continue
        order = [usable[k] for k in rng.permutation(len(usable))]
        half = len(order) // 2
        for name, chosen in (("train", order[:half]), ("test", order[half:])):
            target = splits[name]
            for i in chosen:
                entry = manifest.entries[i]
                target.images.append(loaded[i])
                target.labels.append(label)
                target.ids.append(entry.path)
                target.model_ids.append(entry.model_id)

    if verbose:
        print(f"📊 Split: {len(splits['train'])} train / {len(splits['test'])} test images "
              f"at {manifest.working_size}×{manifest.working_size}")
    return splits
