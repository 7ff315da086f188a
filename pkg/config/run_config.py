"""
Run Configuration
Default constants for every stage, plus the layered RunConfig
(defaults -> JSON file -> DIF_* environment -> command-line flags)
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

from utils.errors import ConfigError

# Fingerprint extraction
EXTRACTION_DEFAULTS = {
    "arch": "unet",
    "margin": 0.01,
    "lr": 5e-4,
    "steps": 2000,
    "ema_decay": 0.99,
    "batch": 8,
    "z_channels": 16,
    "correlation_scope": "channel",   # "channel" | "tensor"
    "margin_clamp": False,            # hinge form of the negative-pair term
    "method": "dif",                  # "dif" | "average" | "fourier"
}

# DnCNN-S training and residual post-processing
DENOISER_DEFAULTS = {
    "denoiser_epochs": 2000,
    "denoiser_lr": 1e-4,
    "crop": 48,
    "sigma_lo": 5.0,
    "sigma_hi": 15.0,
    "denoiser_images": 1024,
    "denoiser_batch": 16,
    "dncnn_depth": 17,
    "dncnn_width": 64,
    "pad": 10,
    "highpass_sigma": 3.0,
}

# Hypothesis test / lineage
DETECTION_DEFAULTS = {
    "t_high": 80.0,
    "t_sym": 10.0,
}

# Monochrome artifact lab
LAB_DEFAULTS = {
    "gray": 0.5,
    "lab_size": 128,
    "lab_steps": 2000,
    "toy_width": 32,
}

# Synthetic oracle (amplitudes and sigmas in 1/255 units)
ORACLE_DEFAULTS = {
    "amplitude": 4.0,
    "noise_sigma": 5.0,
}

GENERAL_DEFAULTS = {
    "seed": 0,
    "working_size": 128,
    "workers": 1,
}

ENV_PREFIX = "DIF_"

ALLOWED_VALUES = {
    "correlation_scope": ("channel", "tensor"),
    "method": ("dif", "average", "fourier"),
}


@dataclass
class RunConfig:
    """All tunables of a run; every value is echoed into run provenance"""
    seed: int = GENERAL_DEFAULTS["seed"]
    working_size: int = GENERAL_DEFAULTS["working_size"]
    workers: int = GENERAL_DEFAULTS["workers"]

    arch: str = EXTRACTION_DEFAULTS["arch"]
    margin: float = EXTRACTION_DEFAULTS["margin"]
    lr: float = EXTRACTION_DEFAULTS["lr"]
    steps: int = EXTRACTION_DEFAULTS["steps"]
    ema_decay: float = EXTRACTION_DEFAULTS["ema_decay"]
    batch: int = EXTRACTION_DEFAULTS["batch"]
    z_channels: int = EXTRACTION_DEFAULTS["z_channels"]
    correlation_scope: str = EXTRACTION_DEFAULTS["correlation_scope"]
    margin_clamp: bool = EXTRACTION_DEFAULTS["margin_clamp"]
    method: str = EXTRACTION_DEFAULTS["method"]

    denoiser_epochs: int = DENOISER_DEFAULTS["denoiser_epochs"]
    denoiser_lr: float = DENOISER_DEFAULTS["denoiser_lr"]
    crop: int = DENOISER_DEFAULTS["crop"]
    sigma_lo: float = DENOISER_DEFAULTS["sigma_lo"]
    sigma_hi: float = DENOISER_DEFAULTS["sigma_hi"]
    denoiser_images: int = DENOISER_DEFAULTS["denoiser_images"]
    denoiser_batch: int = DENOISER_DEFAULTS["denoiser_batch"]
    dncnn_depth: int = DENOISER_DEFAULTS["dncnn_depth"]
    dncnn_width: int = DENOISER_DEFAULTS["dncnn_width"]
    pad: int = DENOISER_DEFAULTS["pad"]
    highpass_sigma: float = DENOISER_DEFAULTS["highpass_sigma"]

    t_high: float = DETECTION_DEFAULTS["t_high"]
    t_sym: float = DETECTION_DEFAULTS["t_sym"]

    gray: float = LAB_DEFAULTS["gray"]
    lab_size: int = LAB_DEFAULTS["lab_size"]
    lab_steps: int = LAB_DEFAULTS["lab_steps"]
    toy_width: int = LAB_DEFAULTS["toy_width"]

    amplitude: float = ORACLE_DEFAULTS["amplitude"]
    noise_sigma: float = ORACLE_DEFAULTS["noise_sigma"]

    def validate(self) -> "RunConfig":
        """Raise ConfigError on any out-of-range value"""
        positive = ("working_size", "workers", "margin", "lr", "batch", "z_channels", "denoiser_lr",
                    "crop", "denoiser_images", "denoiser_batch", "dncnn_depth", "dncnn_width",
                    "highpass_sigma", "lab_size", "toy_width")
        for key in positive:
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be > 0, got {getattr(self, key)}")
        non_negative = ("steps", "denoiser_epochs", "pad", "lab_steps", "amplitude", "noise_sigma")
        for key in non_negative:
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be >= 0, got {getattr(self, key)}")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ConfigError(f"ema_decay must lie in [0, 1), got {self.ema_decay}")
        if not 0.0 < self.sigma_lo <= self.sigma_hi:
            raise ConfigError(f"sigma range must satisfy 0 < lo <= hi, got [{self.sigma_lo}, {self.sigma_hi}]")
        if not 0.0 <= self.gray <= 1.0:
            raise ConfigError(f"gray must lie in [0, 1], got {self.gray}")
        if not (0 <= self.t_high <= 100 and self.t_sym >= 0):
            raise ConfigError(f"lineage thresholds out of range: t_high={self.t_high}, t_sym={self.t_sym}")
        for key, allowed in ALLOWED_VALUES.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {getattr(self, key)!r}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()

    def updated(self, overrides: Dict[str, Any]) -> "RunConfig":
        """Return a copy with `overrides` applied (None values ignored)"""
        data = self.to_dict()
        known = {f.name: f.type for f in fields(self)}
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in known:
                raise ConfigError(f"Unknown config key '{key}'")
            data[key] = _coerce(key, value, type(data[key]))
        return RunConfig(**data)


def _coerce(key: str, value: Any, target: type) -> Any:
    try:
        if target is bool:
            if isinstance(value, str):
                lowered = value.strip().lower()
                if lowered not in ("1", "0", "true", "false", "yes", "no"):
                    raise ValueError(value)
                return lowered in ("1", "true", "yes")
            return bool(value)
        return target(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"Config key '{key}' expects {target.__name__}, got {value!r}") from exc


def env_overrides(env_file: Optional[str] = None) -> Dict[str, Any]:
    """Collect DIF_<KEY> variables (a .env file is loaded first if present)"""
    load_dotenv(env_file)
    known = {f.name for f in fields(RunConfig)}
    overrides = {}
    for name, value in os.environ.items():
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower()
            if key in known:
                overrides[key] = value
    return overrides


def load_run_config(
    config_file: Optional[str] = None,
    flag_overrides: Optional[Dict[str, Any]] = None,
    use_env: bool = True,
) -> RunConfig:
    """
    Build the effective configuration

    Args:
        config_file: Optional JSON file with config keys
        flag_overrides: Values given explicitly on the command line
        use_env: Read DIF_* environment variables

    Returns:
        Validated RunConfig
    """
    config = RunConfig()
    if config_file:
        path = Path(config_file)
        if not path.exists():
            raise ConfigError(f"Config file not found: {config_file}")
        try:
            file_values = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"Config file is not valid JSON: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError(f"Config file must hold a JSON object: {config_file}")
        # a provenance document replays its config echo
        if "config" in file_values and "config_hash" in file_values:
            file_values = file_values["config"]
        config = config.updated(file_values)
    if use_env:
        config = config.updated(env_overrides())
    if flag_overrides:
        config = config.updated(flag_overrides)
    return config.validate()
