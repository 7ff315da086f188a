"""
Architecture Definitions
Declarative descriptors for the generator nets and the DnCNN denoiser
"""

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple

from utils.errors import SpecError


class Arch(Enum):
    """Supported architectures"""
    UNET = "unet"
    U1NET = "u1net"
    CNET = "cnet"
    UPNET = "upnet"
    DNET = "dnet"
    DNCNN = "dncnn"


# Per-architecture configuration
ARCH_CONFIGS: Dict[Arch, Dict[str, Any]] = {
    Arch.UNET: {
        "name": "U-Net",
        "description": "Encoder/decoder with skip connections, 3x3 convs, max-pool down, 2x2 deconv up",
        "in_channels": 16,
        "input_scale": 1,
        "hidden_width": 32,
        "size_multiple": 16,
    },
    Arch.U1NET: {
        "name": "U1-Net",
        "description": "U-Net with every conv reduced to 1x1 (no padding): up-sampling artifacts only",
        "in_channels": 16,
        "input_scale": 1,
        "hidden_width": 32,
        "size_multiple": 16,
    },
    Arch.CNET: {
        "name": "C-Net",
        "description": "Eight 3x3 zero-padded convs, no resampling: boundary artifacts only",
        "in_channels": 16,
        "input_scale": 1,
        "hidden_width": 32,
        "size_multiple": 1,
    },
    Arch.UPNET: {
        "name": "Up-Net",
        "description": "Four blocks of 1x1 conv + 2x2 stride-2 deconv, no padding: up-sampling artifacts only",
        "in_channels": 16,
        "input_scale": 16,
        "hidden_width": 32,
        "size_multiple": 16,
    },
    Arch.DNET: {
        "name": "D-Net",
        "description": "The U-Net decoder stack alone, fed at working-size/16, no skips",
        "in_channels": 16,
        "input_scale": 16,
        "hidden_width": 32,
        "size_multiple": 16,
    },
    Arch.DNCNN: {
        "name": "DnCNN-S",
        "description": "17-layer residual denoiser predicting the noise map",
        "in_channels": 3,
        "input_scale": 1,
        "hidden_width": 64,
        "size_multiple": 1,
        "depth": 17,
    },
}

GENERATOR_ARCHS = (Arch.UNET, Arch.U1NET, Arch.CNET, Arch.UPNET, Arch.DNET)


@dataclass(frozen=True)
class ModelSpec:
    """
    Architecture descriptor

    Args:
        arch: Architecture tag
        in_channels: Input channels (16 for Z-fed generators, 3 for DnCNN)
        working_size: Output height = width
        hidden_width: Width of the hidden layers; None takes the ARCH_CONFIGS default
        seed: Weight-initialization seed
        depth: DnCNN depth (ignored by other architectures)
    """
    arch: Arch
    in_channels: int
    working_size: int
    hidden_width: Optional[int] = None
    seed: int = 0
    depth: int = 17

    def __post_init__(self):
        if self.hidden_width is None:
            object.__setattr__(self, "hidden_width", ARCH_CONFIGS[self.arch]["hidden_width"])
        multiple = ARCH_CONFIGS[self.arch]["size_multiple"]
        if self.working_size <= 0 or self.working_size % multiple:
            raise SpecError(
                f"{ARCH_CONFIGS[self.arch]['name']} needs a working size divisible by {multiple}, "
                f"got {self.working_size}"
            )
        if self.arch == Arch.DNCNN and self.in_channels != 3:
            raise SpecError(f"DnCNN maps 3 channels to 3 channels, got in_channels={self.in_channels}")
        if self.arch == Arch.DNCNN and self.depth < 2:
            raise SpecError(f"DnCNN depth must be >= 2, got {self.depth}")
        if self.hidden_width <= 0 or self.in_channels <= 0:
            raise SpecError("channel counts must be positive")

    def input_shape(self) -> Tuple[int, int, int]:
        """Shape of the Z (or image) tensor this architecture consumes"""
        side = self.working_size // ARCH_CONFIGS[self.arch]["input_scale"]
        return (self.in_channels, side, side)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["arch"] = self.arch.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelSpec":
        data = dict(data)
        data["arch"] = Arch(data["arch"])
        return cls(**data)


def get_model_spec(arch: str, working_size: int, seed: int = 0, hidden_width: int = None, depth: int = None) -> ModelSpec:
    """Build a ModelSpec with the architecture's default channel settings"""
    try:
        tag = Arch(arch.lower().replace("-", ""))
    except ValueError as exc:
        raise SpecError(f"Unknown architecture '{arch}'. Choose from: {[a.value for a in Arch]}") from exc
    config = ARCH_CONFIGS[tag]
    return ModelSpec(
        arch=tag,
        in_channels=config["in_channels"],
        working_size=working_size,
        hidden_width=hidden_width or config["hidden_width"],
        seed=seed,
        depth=depth or config.get("depth", 17),
    )
