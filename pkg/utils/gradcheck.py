"""
Finite-Difference Gradient Oracle
Compares reverse-mode gradients against central differences
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from utils.errors import DimensionError
from utils.tensor import Tensor


@dataclass
class GradcheckReport:
    """Worst relative error overall and per checked input"""
    max_rel_err: float
    per_input: Dict[str, float] = field(default_factory=dict)
    checked_elements: int = 0

    def passed(self, tol: float = 1e-6) -> bool:
        return self.max_rel_err < tol


def _scalar(out: Tensor) -> Tensor:
    return out if out.size == 1 else out.sum()


def gradcheck(
    fn: Callable[[], Tensor],
    inputs: List[Tensor],
    h: float = 1e-5,
    max_checks: Optional[int] = None,
    seed: int = 0,
    eps: float = 1e-3,
) -> GradcheckReport:
    """
    Check d sum(fn()) / d input against central differences

    The relative error of an element is |analytic − numeric| divided by
    max(|analytic|, |numeric|, eps). eps is an absolute floor just above the
    round-off level of a float64 central difference, so only elements whose
    true gradient is ~0 are measured in absolute terms.

    Args:
        fn: Zero-argument closure recomputing the output from `inputs`
        inputs: float64 tensors with requires_grad set
        h: Difference step
        max_checks: Check at most this many randomly chosen elements per input
        seed: RNG seed for the element sample
        eps: Absolute floor of the relative-error denominator

    Returns:
        GradcheckReport with the worst relative error
    """
    for t in inputs:
        if t.dtype != np.float64:
            raise DimensionError(f"gradcheck needs float64 inputs, got {t.dtype} for {t.name or t.shape}")

    for t in inputs:
        t.data = np.ascontiguousarray(t.data)
        t.zero_grad()
    _scalar(fn()).backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    rng = np.random.default_rng(seed)
    report = GradcheckReport(max_rel_err=0.0)
    for idx, (t, grad) in enumerate(zip(inputs, analytic)):
        flat = t.data.reshape(-1)
        positions = np.arange(flat.size)
        if max_checks is not None and flat.size > max_checks:
            positions = rng.choice(flat.size, size=max_checks, replace=False)

        numeric = np.empty(len(positions))
        for k, pos in enumerate(positions):
            original = flat[pos]
            flat[pos] = original + h
            plus = _scalar(fn()).item()
            flat[pos] = original - h
            minus = _scalar(fn()).item()
            flat[pos] = original
            numeric[k] = (plus - minus) / (2.0 * h)

        picked = grad.reshape(-1)[positions]
        denom = np.maximum(np.maximum(np.abs(picked), np.abs(numeric)), eps)
        worst = float(np.max(np.abs(picked - numeric) / denom)) if numeric.size else 0.0

        report.per_input[t.name or f"input{idx}"] = worst
        report.max_rel_err = max(report.max_rel_err, worst)
        report.checked_elements += len(positions)

    for t in inputs:
        t.zero_grad()
    return report
