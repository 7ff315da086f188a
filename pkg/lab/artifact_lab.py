"""
Monochrome Artifact Lab
Fit a generator to a constant gray image from a fixed random input and
measure what it cannot reproduce
"""

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from config.model_specs import ModelSpec, get_model_spec
from lab.spectrum import SpectrumMap, cross_line_score, harmonic_peak_score, spectrum_logmag
from models.zoo import build_model, to_unit_range
from utils.errors import ConfigError, DivergenceError
from utils.image_io import normalize_to_unit, save_image
from utils.optim import Adam
from utils.tensor import Tensor

HARMONIC_PERIOD = 16
LAB_ARCHS = ("unet", "cnet", "upnet", "u1net", "dnet")


@dataclass
class MonochromeRun:
    """
    One reconstruction of a constant image

    Args:
        spec: Generator architecture
        target_gray: Constant target value in [0, 1]
        steps: Optimization steps taken
        final_mse: MSE of the final output against the target
        artifact: Final output minus target, 3×S×S
    """
    spec: ModelSpec
    target_gray: float
    steps: int
    final_mse: float
    artifact: np.ndarray
    loss_history: List[float] = field(default_factory=list)

    def spectrum(self) -> SpectrumMap:
        return spectrum_logmag(self.artifact, source_id=self.spec.arch.value)

    def scores(self, period: int = HARMONIC_PERIOD) -> Dict[str, float]:
        spectrum = self.spectrum()
        return {
            "harmonic_score": harmonic_peak_score(spectrum, period),
            "cross_score": cross_line_score(spectrum),
        }


def reconstruct_monochrome(
    spec: ModelSpec,
    gray: float = 0.5,
    steps: int = 2000,
    seed: Optional[int] = None,
    lr: float = 5e-4,
    verbose: bool = False,
) -> MonochromeRun:
    """
    Optimize θ so that g_θ(Z) matches a constant gray image (MSE, Adam)

    Args:
        spec: Generator spec; `seed` overrides spec.seed when given
        gray: Target value in [0, 1]
        steps: Adam steps (0 returns the untrained output's artifact)
        seed: Seed for the weights and the fixed input Z
        lr: Adam learning rate

    Returns:
        MonochromeRun
    """
    if not 0.0 <= gray <= 1.0:
        raise ConfigError(f"gray must lie in [0, 1], got {gray}")
    if steps < 0:
        raise ConfigError(f"steps must be >= 0, got {steps}")
    if seed is not None:
        spec = replace(spec, seed=seed)

    model = build_model(spec).train()
    optimizer = Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng(spec.seed)
    z = Tensor(rng.uniform(0.0, 1.0, size=spec.input_shape()).astype(np.float32))

    history: List[float] = []
    progress = tqdm(range(steps), desc=f"Monochrome {spec.arch.value}", disable=not verbose)
    for step in progress:
        optimizer.zero_grad()
        diff = to_unit_range(model(z)) - gray
        loss = (diff * diff).mean()
        value = loss.item()
        if not np.isfinite(value):
            raise DivergenceError(step, value)
        loss.backward()
        optimizer.step()
        history.append(value)
        if step % 100 == 0:
            progress.set_postfix(mse=f"{value:.3e}")

    output = to_unit_range(model(z)).data.astype(np.float64)
    artifact = output - gray
    final_mse = float(np.mean(artifact * artifact))
    if not np.isfinite(final_mse):
        raise DivergenceError(steps, final_mse)
    if final_mse <= 0.0:
        warnings.warn(f"{spec.arch.value} reproduced the constant image exactly (final mse {final_mse:g})",
                      RuntimeWarning)
    return MonochromeRun(spec, float(gray), steps, final_mse, artifact.astype(np.float32), history)


def run_lab(
    archs: Sequence[str] = LAB_ARCHS,
    size: int = 128,
    steps: int = 2000,
    seed: int = 0,
    gray: float = 0.5,
    hidden_width: Optional[int] = None,
    out_dir: Optional[str] = None,
    verbose: bool = True,
) -> pd.DataFrame:
    """
    Run the monochrome experiment for several architectures

    Returns:
        One row per architecture: final_mse, harmonic_score, cross_score.
        With out_dir, writes <arch>_artifact.png, <arch>_spectrum.png and scores.json.
    """
    rows = []
    for arch in archs:
        spec = get_model_spec(arch, size, seed=seed, hidden_width=hidden_width)
        if verbose:
            print(f"🧪 {arch}: reconstructing gray={gray} at {size}×{size}, {steps} steps")
        run = reconstruct_monochrome(spec, gray, steps, verbose=verbose)
        scores = run.scores()
        rows.append({"arch": arch, "final_mse": run.final_mse, **scores})
        if verbose:
            print(f"   mse={run.final_mse:.3e}  harmonic={scores['harmonic_score']:.2f}  "
                  f"cross={scores['cross_score']:.2f}")
        if out_dir:
            save_image(str(Path(out_dir) / f"{arch}_artifact.png"), normalize_to_unit(run.artifact))
            run.spectrum().save_png(str(Path(out_dir) / f"{arch}_spectrum.png"), title=f"{arch} artifact spectrum")

    table = pd.DataFrame(rows)
    if out_dir:
        report = {
            "size": size, "steps": steps, "seed": seed, "gray": gray,
            "harmonic_period": HARMONIC_PERIOD, "runs": rows,
        }
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "scores.json").write_text(json.dumps(report, indent=2))
    return table
