"""
Model Lineage
Groups generators whose cross-detection is high in both directions
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from config.run_config import DETECTION_DEFAULTS
from detection.detector import CrossDetectionMatrix
from utils.errors import DimensionError


@dataclass
class RelatedPair:
    first: str
    second: str
    min_acc: float
    asymmetry: float


@dataclass
class LineageReport:
    """Related pairs, their transitive clusters and the thresholds used"""
    related_pairs: List[RelatedPair]
    clusters: List[List[str]]
    t_high: float
    t_sym: float
    model_ids: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def save_json(self, path: str) -> str:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))
        return path


def lineage_clusters(
    matrix: CrossDetectionMatrix,
    t_high: float = DETECTION_DEFAULTS["t_high"],
    t_sym: float = DETECTION_DEFAULTS["t_sym"],
) -> LineageReport:
    """
    Related iff min(acc_ij, acc_ji) ≥ t_high and |acc_ij − acc_ji| ≤ t_sym

    Args:
        matrix: Square cross-detection matrix
        t_high: Minimum accuracy in both directions (percent)
        t_sym: Maximum accuracy difference between the directions (points)

    Returns:
        LineageReport; clusters are the connected components with ≥ 2 members
    """
    acc = np.asarray(matrix.acc)
    n = len(matrix.model_ids)
    if acc.shape != (n, n):
        raise DimensionError(f"lineage needs a square matrix, got {acc.shape}")

    pairs: List[RelatedPair] = []
    adjacency = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            low = min(acc[i, j], acc[j, i])
            gap = abs(acc[i, j] - acc[j, i])
            if low >= t_high and gap <= t_sym:
                pairs.append(RelatedPair(matrix.model_ids[i], matrix.model_ids[j], float(low), float(gap)))
                adjacency[i, j] = True

    _, component = connected_components(csr_matrix(adjacency), directed=False)
    groups: Dict[int, List[str]] = {}
    for i in range(n):
        groups.setdefault(int(component[i]), []).append(matrix.model_ids[i])
    clusters = sorted((sorted(g) for g in groups.values() if len(g) > 1), key=lambda g: g[0])
    return LineageReport(pairs, clusters, float(t_high), float(t_sym), list(matrix.model_ids))
