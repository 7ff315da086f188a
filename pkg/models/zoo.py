"""
Model Zoo
Model container and constructors for U-Net, U1-Net, C-Net, Up-Net, D-Net and DnCNN-S
"""

from typing import Callable, Dict, List, Optional

import numpy as np

from config.model_specs import ARCH_CONFIGS, Arch, ModelSpec
from utils.errors import DimensionError, SpecError
from utils.layers import LayerKind, LayerParams, apply_layer
from utils.tensor import Tensor, concat

UNET_ENCODER = (32, 64, 128, 256)
UNET_DECODER = (128, 64, 32, 32)


class Model:
    """
    Ordered layer list with skip wiring

    Args:
        spec: Architecture descriptor the model was built from
        layers: Declared layers in execution order
    """

    def __init__(self, spec: ModelSpec, layers: List[LayerParams]):
        self.spec = spec
        self.layers = layers
        self.training = True

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def forward(self, x: Tensor) -> Tensor:
        channel_axis = 1 if x.ndim == 4 else 0
        if x.ndim not in (3, 4) or x.shape[channel_axis] != self.spec.in_channels:
            raise DimensionError(
                f"{ARCH_CONFIGS[self.spec.arch]['name']} expects {self.spec.in_channels} input channels, "
                f"got shape {x.shape}"
            )
        saved: Dict[str, Tensor] = {}
        for layer in self.layers:
            if layer.concat_from is not None:
                x = concat([x, saved[layer.concat_from]], axis=channel_axis)
            x = apply_layer(x, layer, self.training)
            if layer.save_as is not None:
                saved[layer.save_as] = x
        return x

    def train(self) -> "Model":
        self.training = True
        return self

    def eval(self) -> "Model":
        self.training = False
        return self

    def parameters(self) -> Dict[str, Tensor]:
        named: Dict[str, Tensor] = {}
        for layer in self.layers:
            named.update(layer.tensors())
        return named

    def buffers(self) -> Dict[str, np.ndarray]:
        named: Dict[str, np.ndarray] = {}
        for layer in self.layers:
            named.update(layer.buffers())
        return named

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters().values()))

    def zero_grad(self):
        for p in self.parameters().values():
            p.zero_grad()

    def to_dtype(self, dtype) -> "Model":
        """Cast every parameter and buffer (float64 for gradient checks)"""
        for layer in self.layers:
            for attr in ("weight", "bias"):
                tensor = getattr(layer, attr)
                if tensor is not None:
                    tensor.data = tensor.data.astype(dtype)
                    tensor.zero_grad()
            if layer.running_mean is not None:
                layer.running_mean = layer.running_mean.astype(dtype)
                layer.running_var = layer.running_var.astype(dtype)
        return self

    def state_arrays(self) -> Dict[str, np.ndarray]:
        """Parameters and buffers as plain arrays"""
        arrays = {name: p.data for name, p in self.parameters().items()}
        arrays.update(self.buffers())
        return arrays

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]) -> "Model":
        params = self.parameters()
        missing = [name for name in list(params) + list(self.buffers()) if name not in arrays]
        if missing:
            raise DimensionError(f"state is missing {len(missing)} entries, e.g. {missing[:3]}")
        for name, tensor in params.items():
            if arrays[name].shape != tensor.shape:
                raise DimensionError(f"{name}: stored shape {arrays[name].shape} vs model shape {tensor.shape}")
            tensor.data = np.array(arrays[name], dtype=tensor.dtype)
        for layer in self.layers:
            if layer.kind == LayerKind.BATCHNORM2D:
                layer.running_mean = np.array(arrays[f"{layer.name}.running_mean"], dtype=layer.weight.dtype)
                layer.running_var = np.array(arrays[f"{layer.name}.running_var"], dtype=layer.weight.dtype)
        return self

    def summary(self) -> str:
        """One line per layer: name, kind, tensor shapes, skip tags"""
        lines = [f"{ARCH_CONFIGS[self.spec.arch]['name']} (working size {self.spec.working_size})"]
        for layer in self.layers:
            shapes = ", ".join(f"{n.split('.')[-1]}={tuple(t.shape)}" for n, t in layer.tensors().items())
            tags = ""
            if layer.concat_from:
                tags += f" +{layer.concat_from}"
            if layer.save_as:
                tags += f" ->{layer.save_as}"
            lines.append(f"  {layer.name:<18} {layer.kind.value:<16} {shapes}{tags}")
        lines.append(f"  total parameters: {self.num_parameters():,}")
        return "\n".join(lines)


class _LayerStack:
    """Appends layers with fan-in scaled initialization from one seeded stream"""

    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)
        self.layers: List[LayerParams] = []

    def conv(self, name: str, c_in: int, c_out: int, kernel: int, padding: int, concat_from: Optional[str] = None):
        std = np.sqrt(2.0 / (c_in * kernel * kernel))
        weight = self.rng.normal(0.0, std, size=(c_out, c_in, kernel, kernel)).astype(np.float32)
        self.layers.append(LayerParams(
            kind=LayerKind.CONV2D, name=name, kernel=kernel, stride=1, padding=padding,
            weight=Tensor(weight, requires_grad=True, name=f"{name}.weight"),
            bias=Tensor(np.zeros(c_out, np.float32), requires_grad=True, name=f"{name}.bias"),
            concat_from=concat_from,
        ))

    def deconv(self, name: str, c_in: int, c_out: int):
        std = np.sqrt(2.0 / c_in)
        weight = self.rng.normal(0.0, std, size=(c_in, c_out, 2, 2)).astype(np.float32)
        self.layers.append(LayerParams(
            kind=LayerKind.CONV_TRANSPOSE2D, name=name, kernel=2, stride=2, padding=0,
            weight=Tensor(weight, requires_grad=True, name=f"{name}.weight"),
            bias=Tensor(np.zeros(c_out, np.float32), requires_grad=True, name=f"{name}.bias"),
        ))

    def bn(self, name: str, channels: int):
        self.layers.append(LayerParams(
            kind=LayerKind.BATCHNORM2D, name=name,
            weight=Tensor(np.ones(channels, np.float32), requires_grad=True, name=f"{name}.weight"),
            bias=Tensor(np.zeros(channels, np.float32), requires_grad=True, name=f"{name}.bias"),
            running_mean=np.zeros(channels, np.float32),
            running_var=np.ones(channels, np.float32),
        ))

    def act(self, name: str, kind: LayerKind, save_as: Optional[str] = None):
        self.layers.append(LayerParams(kind=kind, name=name, save_as=save_as))

    def pool(self, name: str):
        self.layers.append(LayerParams(kind=LayerKind.MAXPOOL2X2, name=name, kernel=2, stride=2))


def _check_arch(spec: ModelSpec, *expected: Arch):
    if spec.arch not in expected:
        raise SpecError(f"spec is for {spec.arch.value}, expected {[a.value for a in expected]}")


def _conv_block(stack: _LayerStack, prefix: str, c_in: int, c_out: int, kernel: int, padding: int,
                concat_from: Optional[str] = None, save_as: Optional[str] = None):
    """Two conv + BN + LeakyReLU layers"""
    stack.conv(f"{prefix}.conv1", c_in, c_out, kernel, padding, concat_from=concat_from)
    stack.bn(f"{prefix}.bn1", c_out)
    stack.act(f"{prefix}.act1", LayerKind.LEAKY_RELU)
    stack.conv(f"{prefix}.conv2", c_out, c_out, kernel, padding)
    stack.bn(f"{prefix}.bn2", c_out)
    stack.act(f"{prefix}.act2", LayerKind.LEAKY_RELU, save_as=save_as)


def _unet_layers(spec: ModelSpec, kernel: int, padding: int) -> List[LayerParams]:
    stack = _LayerStack(spec.seed)
    c_in = spec.in_channels
    for i, c_out in enumerate(UNET_ENCODER, start=1):
        _conv_block(stack, f"enc{i}", c_in, c_out, kernel, padding, save_as=f"skip{i}")
        stack.pool(f"enc{i}.pool")
        c_in = c_out

    for j, c_out in enumerate(UNET_DECODER, start=1):
        skip = f"skip{len(UNET_ENCODER) + 1 - j}"
        stack.deconv(f"dec{j}.up", c_in, c_in)
        # input = upsampled features + same-resolution encoder features
        _conv_block(stack, f"dec{j}", 2 * c_in, c_out, kernel, padding, concat_from=skip)
        c_in = c_out

    stack.conv("head.conv", c_in, 3, kernel, padding)
    stack.act("head.tanh", LayerKind.TANH)
    return stack.layers


def build_unet(spec: ModelSpec) -> Model:
    """
    U-Net generator: encoder 16→32→64→128→256 with max-pooling, decoder with
    2×2 stride-2 deconvolutions and same-resolution skip concatenation,
    3×3 zero-padded convolutions, Tanh head
    """
    _check_arch(spec, Arch.UNET)
    return Model(spec, _unet_layers(spec, kernel=3, padding=1))


def build_u1net(spec: ModelSpec) -> Model:
    """U-Net with every convolution reduced to 1×1, no padding"""
    _check_arch(spec, Arch.U1NET)
    return Model(spec, _unet_layers(spec, kernel=1, padding=0))


def build_dnet(spec: ModelSpec) -> Model:
    """The U-Net decoder stack alone, fed by Z at working-size/16"""
    _check_arch(spec, Arch.DNET)
    stack = _LayerStack(spec.seed)
    c_in = spec.in_channels
    width_in = UNET_ENCODER[-1]
    for j, c_out in enumerate(UNET_DECODER, start=1):
        stack.deconv(f"dec{j}.up", c_in, width_in)
        _conv_block(stack, f"dec{j}", width_in, c_out, 3, 1)
        c_in = width_in = c_out
    stack.conv("head.conv", c_in, 3, 3, 1)
    stack.act("head.tanh", LayerKind.TANH)
    return Model(spec, stack.layers)


def build_cnet(spec: ModelSpec) -> Model:
    """Eight 3×3 zero-padded convolutions, no resampling"""
    _check_arch(spec, Arch.CNET)
    stack = _LayerStack(spec.seed)
    width = spec.hidden_width
    c_in = spec.in_channels
    for i in range(1, 8):
        stack.conv(f"conv{i}", c_in, width, 3, 1)
        stack.act(f"act{i}", LayerKind.LEAKY_RELU)
        c_in = width
    stack.conv("conv8", c_in, 3, 3, 1)
    stack.act("head.tanh", LayerKind.TANH)
    return Model(spec, stack.layers)


def build_upnet(spec: ModelSpec) -> Model:
    """Four blocks of 1×1 conv + 2×2 stride-2 deconv; no padding anywhere"""
    _check_arch(spec, Arch.UPNET)
    stack = _LayerStack(spec.seed)
    width = spec.hidden_width
    c_in = spec.in_channels
    for i in range(1, 5):
        last = i == 4
        stack.conv(f"block{i}.conv", c_in, width, 1, 0)
        stack.act(f"block{i}.act1", LayerKind.LEAKY_RELU)
        stack.deconv(f"block{i}.up", width, 3 if last else width)
        stack.act(f"block{i}.act2", LayerKind.TANH if last else LayerKind.LEAKY_RELU)
        c_in = width
    return Model(spec, stack.layers)


def build_dncnn(spec: ModelSpec) -> Model:
    """
    DnCNN-S: conv+ReLU, (depth−2) × conv+BN+ReLU, conv to 3 channels.
    The network predicts the noise; denoised = x − model(x)
    """
    _check_arch(spec, Arch.DNCNN)
    stack = _LayerStack(spec.seed)
    width = spec.hidden_width
    stack.conv("conv1", spec.in_channels, width, 3, 1)
    stack.act("act1", LayerKind.RELU)
    for i in range(2, spec.depth):
        stack.conv(f"conv{i}", width, width, 3, 1)
        stack.bn(f"bn{i}", width)
        stack.act(f"act{i}", LayerKind.RELU)
    stack.conv(f"conv{spec.depth}", width, 3, 3, 1)
    return Model(spec, stack.layers)


BUILDERS: Dict[Arch, Callable[[ModelSpec], Model]] = {
    Arch.UNET: build_unet,
    Arch.U1NET: build_u1net,
    Arch.CNET: build_cnet,
    Arch.UPNET: build_upnet,
    Arch.DNET: build_dnet,
    Arch.DNCNN: build_dncnn,
}


def build_model(spec: ModelSpec) -> Model:
    """Dispatch on spec.arch"""
    return BUILDERS[spec.arch](spec)


def to_unit_range(y: Tensor) -> Tensor:
    """Fixed affine map of the Tanh range [−1, 1] onto [0, 1]"""
    return (y + 1.0) * 0.5
