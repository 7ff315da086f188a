"""
Hypothesis-Test Detector
Nearest-reference-mean classification, accuracy evaluation and cross-detection matrices
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from fingerprint.correlation import correlation
from fingerprint.extractor import FingerprintRecord
from models.denoiser import ResidualFilter, extract_residuals
from utils.errors import DataError, DegenerateInputError, DimensionError, ProvenanceError


class Label(Enum):
    """Detector decision"""
    GENERATED = "Generated"
    REAL = "Real"


GENERATED_LABELS = ("generated", "gen", "fake", "Generated", Label.GENERATED, True, 1)


def is_generated(label) -> bool:
    return label in GENERATED_LABELS


def decide(rho: float, mu_real: float, mu_gen: float) -> Label:
    """Generated iff ρ is strictly nearer μ_g than μ_r; ties and NaN are Real"""
    if rho is None or not np.isfinite(rho):
        return Label.REAL
    return Label.GENERATED if abs(rho - mu_gen) < abs(rho - mu_real) else Label.REAL


def score(residual, record: FingerprintRecord) -> Tuple[Label, Optional[float]]:
    """(label, ρ); ρ is None for a zero-variance residual"""
    data = np.asarray(getattr(residual, "data", residual))
    if data.shape != record.fingerprint.shape:
        raise DimensionError(f"residual shape {data.shape} vs fingerprint shape {record.fingerprint.shape}")
    try:
        rho = record.correlate(data)
    except DegenerateInputError:
        return Label.REAL, None
    return decide(rho, record.mu_real, record.mu_gen), rho


def classify(residual, record: FingerprintRecord) -> Label:
    """Parameter-free decision for one residual"""
    return score(residual, record)[0]


@dataclass
class DetectionMetrics:
    """Accuracy (percent) plus per-class rates and per-image scores"""
    accuracy: float
    tpr: float
    tnr: float
    n_total: int
    n_real: int
    n_gen: int
    correct: int
    ids: List[str] = field(default_factory=list)
    rhos: List[Optional[float]] = field(default_factory=list)
    predictions: List[str] = field(default_factory=list)
    truths: List[str] = field(default_factory=list)

    def summary(self) -> Dict[str, Any]:
        """Scalar metrics only"""
        data = asdict(self)
        for key in ("ids", "rhos", "predictions", "truths"):
            data.pop(key)
        return data

    def per_image_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "id": self.ids,
            "truth": self.truths,
            "prediction": self.predictions,
            "rho": self.rhos,
        })


def evaluate_residuals(
    residuals: Sequence,
    labels: Sequence,
    record: FingerprintRecord,
    ids: Optional[Sequence[str]] = None,
) -> DetectionMetrics:
    """
    Score precomputed residuals against a record

    Args:
        residuals: Residuals (or arrays) to classify
        labels: Ground truth per residual ("real"/"generated", Label or bool)
        record: Finalized fingerprint record
        ids: Optional per-image identifiers

    Returns:
        DetectionMetrics with accuracy = correct / total × 100
    """
    if len(residuals) == 0:
        raise DataError("cannot evaluate an empty dataset")
    if len(residuals) != len(labels):
        raise DimensionError(f"{len(residuals)} residuals vs {len(labels)} labels")
    ids = list(ids) if ids is not None else [getattr(r, "source_id", "") or str(i) for i, r in enumerate(residuals)]

    truths, predictions, rhos = [], [], []
    tp = tn = n_gen = n_real = 0
    for residual, label in zip(residuals, labels):
        predicted, rho = score(residual, record)
        generated = is_generated(label)
        truth = Label.GENERATED if generated else Label.REAL
        if generated:
            n_gen += 1
            tp += predicted == Label.GENERATED
        else:
            n_real += 1
            tn += predicted == Label.REAL
        truths.append(truth.value)
        predictions.append(predicted.value)
        rhos.append(rho)

    total = n_gen + n_real
    return DetectionMetrics(
        accuracy=100.0 * (tp + tn) / total,
        tpr=100.0 * tp / n_gen if n_gen else float("nan"),
        tnr=100.0 * tn / n_real if n_real else float("nan"),
        n_total=total,
        n_real=n_real,
        n_gen=n_gen,
        correct=int(tp + tn),
        ids=ids,
        rhos=rhos,
        predictions=predictions,
        truths=truths,
    )


def check_provenance(record: FingerprintRecord, denoiser: ResidualFilter):
    """Refuse to score residuals from a different filter than the record was built with"""
    if record.denoiser_id and record.denoiser_id != denoiser.content_hash():
        raise ProvenanceError(
            f"fingerprint was extracted with denoiser {record.denoiser_id[:12]}…, "
            f"got {denoiser.content_hash()[:12]}…"
        )


def evaluate(dataset, record: FingerprintRecord, denoiser: ResidualFilter, workers: int = 1,
             verbose: bool = False) -> DetectionMetrics:
    """
    Extract residuals for a labeled image set and score them

    Args:
        dataset: Object with `images`, `labels` and `ids` (e.g. ImageSet)
        record: Fingerprint record
        denoiser: Filter matching record.denoiser_id
    """
    check_provenance(record, denoiser)
    if len(dataset.images) == 0:
        raise DataError("cannot evaluate an empty dataset")
    residuals = extract_residuals(dataset.images, denoiser, ids=dataset.ids, workers=workers, verbose=verbose)
    return evaluate_residuals(residuals, dataset.labels, record, ids=dataset.ids)


@dataclass
class CrossDetectionMatrix:
    """acc[i][j]: accuracy of fingerprint i on dataset j (percent)"""
    model_ids: List[str]
    acc: np.ndarray

    def __post_init__(self):
        self.acc = np.asarray(self.acc, dtype=np.float64)
        n = len(self.model_ids)
        if self.acc.shape != (n, n):
            raise DimensionError(f"matrix shape {self.acc.shape} does not match {n} model ids")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.acc, index=self.model_ids, columns=self.model_ids)

    def to_csv(self, path: str) -> str:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index_label="fingerprint")
        return path

    @classmethod
    def from_csv(cls, path: str) -> "CrossDetectionMatrix":
        try:
            frame = pd.read_csv(path, index_col=0)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise DataError(f"Cannot read matrix {path}: {exc}") from exc
        rows = [str(i) for i in frame.index]
        cols = [str(c) for c in frame.columns]
        if rows != cols:
            raise DimensionError(f"matrix row ids {rows} do not match column ids {cols}")
        return cls(rows, frame.to_numpy(dtype=np.float64))

    def save_heatmap(self, path: str, title: str = "Cross-detection accuracy (%)") -> str:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        n = len(self.model_ids)
        fig, ax = plt.subplots(figsize=(2 + 0.9 * n, 1.5 + 0.8 * n))
        im = ax.imshow(self.acc, cmap="viridis", vmin=0, vmax=100, interpolation="nearest")
        ax.set_xticks(range(n), labels=self.model_ids, rotation=45, ha="right")
        ax.set_yticks(range(n), labels=self.model_ids)
        ax.set_xlabel("dataset")
        ax.set_ylabel("fingerprint")
        for i in range(n):
            for j in range(n):
                ax.text(j, i, f"{self.acc[i, j]:.1f}", ha="center", va="center",
                        color="white" if self.acc[i, j] < 60 else "black", fontsize=8)
        fig.colorbar(im, ax=ax)
        ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path, dpi=160)
        plt.close(fig)
        return path


def cross_detect(
    records: Sequence[FingerprintRecord],
    datasets: Sequence,
    denoiser: ResidualFilter,
    model_ids: Optional[Sequence[str]] = None,
    workers: int = 1,
    verbose: bool = True,
) -> CrossDetectionMatrix:
    """
    Evaluate every fingerprint on every dataset

    Args:
        records: One record per generator
        datasets: Matching labeled test sets (real half + generated half each)
        denoiser: Shared residual filter
        model_ids: Row/column labels (defaults to record.source_model_id)
    """
    if len(records) != len(datasets):
        raise DimensionError(f"{len(records)} fingerprints vs {len(datasets)} datasets")
    ids = list(model_ids) if model_ids else [r.source_model_id or f"model{i}" for i, r in enumerate(records)]
    for record in records:
        check_provenance(record, denoiser)
    for j, dataset in enumerate(datasets):
        for record in records:
            size = dataset.images[0].shape[-1] if len(dataset.images) else None
            if size != record.working_size:
                raise DimensionError(
                    f"dataset {ids[j]} working size {size} does not match fingerprint size {record.working_size}"
                )

    if verbose:
        print(f"📊 Cross-detection: {len(records)} fingerprints × {len(datasets)} datasets")
    residual_sets = [
        extract_residuals(d.images, denoiser, ids=d.ids, workers=workers, verbose=verbose) for d in datasets
    ]

    def cell(ij):
        i, j = ij
        return evaluate_residuals(residual_sets[j], datasets[j].labels, records[i]).accuracy

    cells = [(i, j) for i in range(len(records)) for j in range(len(datasets))]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(cell, cells))
    else:
        values = [cell(ij) for ij in cells]
    acc = np.array(values, dtype=np.float64).reshape(len(records), len(datasets))
    return CrossDetectionMatrix(ids, acc)


def fingerprint_cross_correlation(fingerprints: Sequence, scope: str = "channel") -> np.ndarray:
    """
    Pairwise |ρ(F_i, F_j)| between fingerprints

    Args:
        fingerprints: FingerprintRecords or 3×S×S arrays of equal shape

    Returns:
        Symmetric matrix; degenerate fingerprints correlate as 0
    """
    arrays = [np.asarray(getattr(f, "fingerprint", f), dtype=np.float64) for f in fingerprints]
    if arrays and any(a.shape != arrays[0].shape for a in arrays):
        raise DimensionError("fingerprints must share one shape")
    n = len(arrays)
    matrix = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            try:
                value = abs(correlation(arrays[i], arrays[j], scope))
            except DegenerateInputError:
                value = 0.0
            matrix[i, j] = matrix[j, i] = value
    return matrix
