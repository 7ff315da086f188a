"""
Fingerprint Extraction
Optimizes a generator so its output correlates with generated-class residuals
and not with real ones, accumulating the fingerprint by EMA
"""

import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from config.model_specs import get_model_spec
from config.run_config import RunConfig
from fingerprint.correlation import (
    PairBatch,
    batch_correlations,
    correlation,
    fourier_correlation,
    normalize_stack,
    pair_index,
)
from models.zoo import build_model
from utils.checkpoint import read_checkpoint, write_checkpoint
from utils.errors import (
    CheckpointError,
    ConfigError,
    DataError,
    DegenerateInputError,
    DimensionError,
    DivergenceError,
)
from utils.optim import Adam
from utils.tensor import Tensor

REAL = 0
GENERATED = 1

METHODS = ("dif", "average", "fourier")


@dataclass
class ExtractionConfig:
    """Settings for one extraction run"""
    arch: str = "unet"
    margin: float = 0.01
    lr: float = 5e-4
    steps: int = 2000
    ema_decay: float = 0.99
    batch: int = 8
    z_channels: int = 16
    correlation_scope: str = "channel"
    margin_clamp: bool = False
    hidden_width: Optional[int] = None
    seed: int = 0

    @classmethod
    def from_run_config(cls, cfg: RunConfig) -> "ExtractionConfig":
        return cls(
            arch=cfg.arch, margin=cfg.margin, lr=cfg.lr, steps=cfg.steps, ema_decay=cfg.ema_decay,
            batch=cfg.batch, z_channels=cfg.z_channels, correlation_scope=cfg.correlation_scope,
            margin_clamp=cfg.margin_clamp, seed=cfg.seed,
        )

    def validate(self) -> "ExtractionConfig":
        if self.margin <= 0:
            raise ConfigError(f"margin must be > 0, got {self.margin}")
        if self.steps < 0 or self.batch < 1 or self.lr <= 0:
            raise ConfigError(f"invalid extraction settings: steps={self.steps}, batch={self.batch}, lr={self.lr}")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ConfigError(f"ema_decay must lie in [0, 1), got {self.ema_decay}")
        return self


@dataclass
class FingerprintRecord:
    """
    Extracted fingerprint with its reference means

    Args:
        fingerprint: F, 3×S×S
        mu_real: Mean ρ of the real training residuals against F
        mu_gen: Mean ρ of the generated training residuals against F
        method: "dif" (extraction), "average" or "fourier" (baselines)
    """
    fingerprint: np.ndarray
    mu_real: float
    mu_gen: float
    n_real: int
    n_gen: int
    working_size: int
    margin: float = 0.01
    ema_decay: float = 0.99
    denoiser_id: str = ""
    source_model_id: str = ""
    seed: int = 0
    method: str = "dif"
    correlation_scope: str = "channel"
    arch: str = ""
    steps: int = 0
    loss_history: List[float] = field(default_factory=list)

    def __post_init__(self):
        self.fingerprint = np.asarray(self.fingerprint, dtype=np.float32)
        if self.fingerprint.shape != (3, self.working_size, self.working_size):
            raise DimensionError(
                f"fingerprint shape {self.fingerprint.shape} does not match working size {self.working_size}"
            )
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")

    def correlate(self, residual) -> float:
        """ρ of one residual against F using this record's method"""
        if self.method == "fourier":
            return fourier_correlation(residual, self.fingerprint, self.correlation_scope)
        return correlation(residual, self.fingerprint, self.correlation_scope)

    def metadata(self) -> Dict[str, Any]:
        meta = asdict(self)
        meta.pop("fingerprint")
        return meta

    def save(self, path: str) -> str:
        return write_checkpoint(path, "fingerprint", self.metadata(), {"fingerprint": self.fingerprint})

    @classmethod
    def load(cls, path: str) -> "FingerprintRecord":
        metadata, arrays = read_checkpoint(path)
        if metadata.get("type") != "fingerprint":
            raise CheckpointError(f"{path} holds a '{metadata.get('type')}' checkpoint, not a fingerprint")
        known = {k: v for k, v in metadata.items() if k in cls.__dataclass_fields__}
        return cls(fingerprint=arrays["fingerprint"], **known)


def _stack_residuals(residuals: Sequence, label: str) -> List[np.ndarray]:
    arrays = [np.asarray(getattr(r, "data", r), dtype=np.float32) for r in residuals]
    if not arrays:
        raise DataError(f"no {label} residuals")
    shape = arrays[0].shape
    if len(shape) != 3 or shape[0] != 3 or shape[1] != shape[2]:
        raise DimensionError(f"{label} residuals must be 3×S×S, got {shape}")
    for a in arrays:
        if a.shape != shape:
            raise DimensionError(f"{label} residual shapes differ: {shape} vs {a.shape}")
    return arrays


def _safe_normalize(arrays: List[np.ndarray], scope: str, label: str) -> np.ndarray:
    try:
        return normalize_stack(arrays, scope)
    except DegenerateInputError as exc:
        raise DataError(f"{label} residual set contains a zero-variance residual: {exc}") from exc


def reference_means(
    fingerprint: np.ndarray,
    res_real: Sequence,
    res_gen: Sequence,
    method: str = "dif",
    scope: str = "channel",
) -> tuple:
    """
    μ_r and μ_g: mean ρ of each training population against F

    Each mean divides by its own population size.
    """
    if method == "fourier":
        rho_r = np.array([fourier_correlation(r, fingerprint, scope) for r in res_real])
        rho_g = np.array([fourier_correlation(r, fingerprint, scope) for r in res_gen])
    else:
        rho_r = batch_correlations(_safe_normalize(list(res_real), scope, "real"), fingerprint, scope)
        rho_g = batch_correlations(_safe_normalize(list(res_gen), scope, "generated"), fingerprint, scope)
    return float(np.mean(rho_r)), float(np.mean(rho_g))


def finalize_record(
    fingerprint: np.ndarray,
    res_real: Sequence,
    res_gen: Sequence,
    denoiser_id: str,
    method: str = "dif",
    scope: str = "channel",
    **extra,
) -> FingerprintRecord:
    """Compute the reference means and orient F so that μ_g ≥ μ_r"""
    real = _stack_residuals(res_real, "real")
    gen = _stack_residuals(res_gen, "generated")
    fingerprint = np.asarray(fingerprint, dtype=np.float32)
    try:
        mu_real, mu_gen = reference_means(fingerprint, real, gen, method, scope)
    except DegenerateInputError as exc:
        raise DataError(f"fingerprint is degenerate: {exc}") from exc

    if mu_gen < mu_real and method != "fourier":
        # ρ(R, −F) = −ρ(R, F): both means flip, decisions do not change
        fingerprint = -fingerprint
        mu_real, mu_gen = -mu_real, -mu_gen
    if mu_gen <= mu_real:
        warnings.warn(
            f"reference means do not separate the classes (mu_real={mu_real:.4f}, mu_gen={mu_gen:.4f})",
            RuntimeWarning,
        )

    return FingerprintRecord(
        fingerprint=fingerprint,
        mu_real=mu_real,
        mu_gen=mu_gen,
        n_real=len(real),
        n_gen=len(gen),
        working_size=real[0].shape[-1],
        denoiser_id=denoiser_id,
        method=method,
        correlation_scope=scope,
        **extra,
    )


def _check_early_progress(history: List[float]):
    window = max(2, len(history) // 10)
    if len(history) >= 10 and history[window - 1] >= history[0]:
        warnings.warn(
            f"extraction loss did not decrease over the first {window} steps "
            f"({history[0]:.4f} -> {history[window - 1]:.4f})",
            RuntimeWarning,
        )


def extract_fingerprint(
    res_real: Sequence,
    res_gen: Sequence,
    denoiser_id: str,
    cfg: Optional[ExtractionConfig] = None,
    source_model_id: str = "",
    verbose: bool = True,
) -> FingerprintRecord:
    """
    Extract a deep image fingerprint

    Args:
        res_real: Residuals of real training images
        res_gen: Residuals of generated training images
        denoiser_id: Content hash of the filter that produced the residuals
        cfg: Extraction settings
        source_model_id: Generator the generated residuals came from
        verbose: Print progress

    Returns:
        FingerprintRecord with F = EMA of the per-step candidates
    """
    cfg = (cfg or ExtractionConfig()).validate()
    real = _stack_residuals(res_real, "real")
    gen = _stack_residuals(res_gen, "generated")
    if real[0].shape != gen[0].shape:
        raise DimensionError(f"real residuals {real[0].shape} vs generated residuals {gen[0].shape}")
    if len(real) < cfg.batch or len(gen) < cfg.batch:
        raise DataError(
            f"need at least {cfg.batch} residuals per class, got {len(real)} real / {len(gen)} generated"
        )

    size = real[0].shape[-1]
    spec = get_model_spec(cfg.arch, size, seed=cfg.seed, hidden_width=cfg.hidden_width)
    if spec.in_channels != cfg.z_channels:
        spec = replace(spec, in_channels=cfg.z_channels)
    model = build_model(spec).train()
    optimizer = Adam(model.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)

    real_mat = _safe_normalize(real, cfg.correlation_scope, "real")
    gen_mat = _safe_normalize(gen, cfg.correlation_scope, "generated")
    # residual scale, frozen before the first step
    scale = float(np.std(np.stack(real + gen)))
    if scale == 0:
        raise DataError("training residuals are all zero")
    labels = [REAL] * cfg.batch + [GENERATED] * cfg.batch
    pairs = pair_index(labels)

    if verbose:
        print(f"🔍 Extracting fingerprint: {spec.arch.value}, {len(real)} real / {len(gen)} generated, "
              f"{cfg.steps} steps, m={cfg.margin:g}")

    def candidate() -> Tensor:
        z = rng.uniform(0.0, 1.0, size=spec.input_shape()).astype(np.float32)
        return model(Tensor(z)) * scale

    ema: Optional[np.ndarray] = None
    history: List[float] = []
    progress = tqdm(range(cfg.steps), desc="Extraction", disable=not verbose)
    for step in progress:
        f_cand = candidate()
        picked_real = rng.choice(len(real), cfg.batch, replace=False)
        picked_gen = rng.choice(len(gen), cfg.batch, replace=False)
        batch = PairBatch(np.concatenate([real_mat[picked_real], gen_mat[picked_gen]]), labels, pairs)

        optimizer.zero_grad()
        try:
            loss = batch.loss(f_cand, cfg.margin, cfg.correlation_scope, cfg.margin_clamp)
        except DegenerateInputError as exc:
            raise DivergenceError(step, float("nan")) from exc
        value = loss.item()
        if not np.isfinite(value):
            raise DivergenceError(step, value)
        loss.backward()
        optimizer.step()

        cand = f_cand.data.astype(np.float64)
        ema = cand if ema is None else cfg.ema_decay * ema + (1.0 - cfg.ema_decay) * cand
        history.append(value)
        if step % 50 == 0:
            progress.set_postfix(loss=f"{value:.4f}")

    if ema is None:
        ema = candidate().data.astype(np.float64)
    _check_early_progress(history)

    record = finalize_record(
        ema, real, gen, denoiser_id, method="dif", scope=cfg.correlation_scope,
        margin=cfg.margin, ema_decay=cfg.ema_decay, source_model_id=source_model_id,
        seed=cfg.seed, arch=spec.arch.value, steps=cfg.steps, loss_history=history,
    )
    if verbose:
        print(f"✅ Fingerprint extracted: mu_real={record.mu_real:.4f}, mu_gen={record.mu_gen:.4f}")
    return record


def extract_with_method(
    res_real: Sequence,
    res_gen: Sequence,
    denoiser_id: str,
    method: str = "dif",
    cfg: Optional[ExtractionConfig] = None,
    source_model_id: str = "",
    verbose: bool = True,
) -> FingerprintRecord:
    """Dispatch between extraction and the two baselines"""
    if method == "dif":
        return extract_fingerprint(res_real, res_gen, denoiser_id, cfg, source_model_id, verbose)
    from fingerprint.baselines import average_record, fourier_record

    cfg = cfg or ExtractionConfig()
    builders = {"average": average_record, "fourier": fourier_record}
    if method not in builders:
        raise ConfigError(f"method must be one of {METHODS}, got {method!r}")
    return builders[method](res_real, res_gen, denoiser_id, source_model_id=source_model_id,
                            seed=cfg.seed, scope=cfg.correlation_scope)
