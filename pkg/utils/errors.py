"""
Error Types
Exception hierarchy shared by every module; each class carries its CLI exit code
"""


class DIFError(Exception):
    """Base class for all fingerprint-toolkit errors"""
    exit_code = 1


class ConfigError(DIFError):
    """Invalid configuration value or unknown key"""
    exit_code = 2


class SpecError(ConfigError):
    """Architecture spec inconsistent with the requested working size"""


class DataError(DIFError):
    """Input data is missing, empty or unusable"""
    exit_code = 3


class DimensionError(DataError, ValueError):
    """Shape mismatch between operands"""


class DegenerateInputError(DataError):
    """Zero-variance input where a normalization is required"""


class ProvenanceError(DataError):
    """Artifacts produced with different denoisers were mixed"""


class CheckpointError(DataError):
    """Checkpoint container is malformed or truncated"""


class NonFiniteGradientError(DIFError):
    """NaN or Inf gradient reached the optimizer"""

    def __init__(self, param_name: str):
        super().__init__(f"Non-finite gradient for parameter '{param_name}'")
        self.param_name = param_name


class DivergenceError(DIFError):
    """Loss became NaN during optimization"""

    def __init__(self, step: int, loss: float):
        super().__init__(f"Optimization diverged at step {step} (loss={loss})")
        self.step = step
        self.loss = loss
