"""
Layer Kernels
Differentiable conv / transposed-conv / pooling / batch-norm kernels and the
LayerParams record the model zoo is declared with
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from utils.errors import DimensionError
from utils.tensor import Tensor

LEAKY_SLOPE = 0.2
BN_MOMENTUM = 0.1
BN_EPS = 1e-5


class LayerKind(Enum):
    """Layer types used by the model zoo"""
    CONV2D = "Conv2d"
    CONV_TRANSPOSE2D = "ConvTranspose2d"
    BATCHNORM2D = "BatchNorm2d"
    MAXPOOL2X2 = "MaxPool2x2"
    LEAKY_RELU = "LeakyReLU"
    RELU = "ReLU"
    TANH = "Tanh"


def _as_batch(x: Tensor) -> Tuple[Tensor, bool]:
    if x.ndim == 3:
        return x.reshape((1,) + x.shape), True
    if x.ndim != 4:
        raise DimensionError(f"expected C×H×W or N×C×H×W input, got shape {x.shape}")
    return x, False


def _restore(out: Tensor, squeezed: bool) -> Tensor:
    return out.reshape(out.shape[1:]) if squeezed else out


# ----------------------------------------------------------------------
# Convolution
# ----------------------------------------------------------------------

def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    """
    2D cross-correlation with zero padding

    Args:
        x: Input, C_in×H×W or N×C_in×H×W
        weight: Kernel, C_out×C_in×k×k
        bias: Optional per-output-channel bias
        stride: Spatial stride
        padding: Zero padding on every side

    Returns:
        Output with H' = (H + 2·pad − k)/stride + 1
    """
    if padding < 0 or stride < 1:
        raise DimensionError(f"invalid conv geometry: stride={stride}, padding={padding}")
    xb, squeezed = _as_batch(x)
    n, c_in, h, w = xb.shape
    c_out, w_in, kh, kw = weight.shape
    if w_in != c_in:
        raise DimensionError(f"conv2d channel mismatch: input {x.shape} vs weight {weight.shape}")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise DimensionError(f"conv2d kernel larger than padded input: input {x.shape} vs weight {weight.shape}")

    padded = np.pad(xb.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    h_out, w_out = windows.shape[2], windows.shape[3]
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)
    out = np.ascontiguousarray(out)

    parents = (xb, weight) if bias is None else (xb, weight, bias)

    def backward(g):
        if weight.requires_grad:
            weight._accumulate(np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3])))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))
        if xb.requires_grad:
            cols = np.tensordot(g, weight.data, axes=([1], [0]))  # N×H'×W'×C_in×k×k
            dpad = np.zeros_like(padded)
            for i in range(kh):
                for j in range(kw):
                    dpad[:, :, i:i + stride * (h_out - 1) + 1:stride, j:j + stride * (w_out - 1) + 1:stride] += (
                        cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                    )
            xb._accumulate(dpad[:, :, padding:padding + h, padding:padding + w])

    return _restore(Tensor._result(out, parents, backward, "conv2d"), squeezed)


def conv_transpose2d_k2s2(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    Transposed convolution with kernel 2, stride 2, no padding

    Each input pixel expands into one 2×2 output block (kernel × pixel + bias);
    blocks never overlap, so the output is exactly twice the input size.

    Args:
        x: Input, C_in×H×W or N×C_in×H×W
        weight: Kernel, C_in×C_out×2×2
        bias: Optional per-output-channel bias
    """
    xb, squeezed = _as_batch(x)
    n, c_in, h, w = xb.shape
    if min(n, c_in, h, w) <= 0:
        raise DimensionError(f"conv_transpose2d needs positive dims, got {x.shape}")
    if weight.shape[0] != c_in or weight.shape[2:] != (2, 2):
        raise DimensionError(f"conv_transpose2d mismatch: input {x.shape} vs weight {weight.shape}")
    c_out = weight.shape[1]

    # N×H×W×C_out×2×2 -> N×C_out×H×2×W×2
    blocks = np.tensordot(xb.data, weight.data, axes=([1], [0]))
    out = blocks.transpose(0, 3, 1, 4, 2, 5).reshape(n, c_out, 2 * h, 2 * w)
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)
    out = np.ascontiguousarray(out)

    parents = (xb, weight) if bias is None else (xb, weight, bias)

    def backward(g):
        gb = g.reshape(n, c_out, h, 2, w, 2).transpose(0, 2, 4, 1, 3, 5)  # N×H×W×C_out×2×2
        if xb.requires_grad:
            xb._accumulate(np.tensordot(gb, weight.data, axes=([3, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2))
        if weight.requires_grad:
            weight._accumulate(np.tensordot(xb.data, gb, axes=([0, 2, 3], [0, 1, 2])))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))

    return _restore(Tensor._result(out, parents, backward, "conv_transpose2d"), squeezed)


# ----------------------------------------------------------------------
# Pooling / normalization / activations
# ----------------------------------------------------------------------

def maxpool2x2(x: Tensor) -> Tensor:
    """2×2 max-pooling with stride 2"""
    xb, squeezed = _as_batch(x)
    n, c, h, w = xb.shape
    if h % 2 or w % 2:
        raise DimensionError(f"maxpool2x2 needs even spatial dims, got {x.shape}")
    tiles = xb.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    winner = tiles.argmax(axis=-1)
    out = np.take_along_axis(tiles, winner[..., None], axis=-1)[..., 0]

    def backward(g):
        routed = np.zeros(tiles.shape, dtype=g.dtype)
        np.put_along_axis(routed, winner[..., None], g[..., None], axis=-1)
        routed = routed.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        xb._accumulate(routed)

    return _restore(Tensor._result(np.ascontiguousarray(out), (xb,), backward, "maxpool2x2"), squeezed)


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
) -> Tensor:
    """
    Batch normalization over (N, H, W) per channel

    Training mode normalizes with batch statistics and updates the running
    buffers in place; eval mode normalizes with the running buffers.
    """
    xb, squeezed = _as_batch(x)
    n, c, h, w = xb.shape
    if gamma.shape != (c,):
        raise DimensionError(f"batchnorm2d channel mismatch: input {x.shape} vs gamma {gamma.shape}")
    shape = (1, c, 1, 1)

    if training:
        count = n * h * w
        mean = xb.data.mean(axis=(0, 2, 3))
        var = xb.data.var(axis=(0, 2, 3))
        unbiased = var * count / max(count - 1, 1)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        mean, var = running_mean, running_var

    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (xb.data - mean.reshape(shape)) * inv_std.reshape(shape)
    out = (gamma.data.reshape(shape) * x_hat + beta.data.reshape(shape)).astype(xb.dtype, copy=False)

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * x_hat).sum(axis=(0, 2, 3)))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=(0, 2, 3)))
        if xb.requires_grad:
            d_hat = g * gamma.data.reshape(shape)
            if training:
                m = n * h * w
                dx = (inv_std.reshape(shape) / m) * (
                    m * d_hat
                    - d_hat.sum(axis=(0, 2, 3), keepdims=True)
                    - x_hat * (d_hat * x_hat).sum(axis=(0, 2, 3), keepdims=True)
                )
            else:
                dx = d_hat * inv_std.reshape(shape)
            xb._accumulate(dx)

    return _restore(Tensor._result(out, (xb, gamma, beta), backward, "batchnorm2d"), squeezed)


def activation(x: Tensor, kind: LayerKind, slope: float = LEAKY_SLOPE) -> Tensor:
    """Apply a pointwise activation"""
    if kind == LayerKind.LEAKY_RELU:
        return x.leaky_relu(slope)
    if kind == LayerKind.RELU:
        return x.relu()
    if kind == LayerKind.TANH:
        return x.tanh()
    raise DimensionError(f"{kind.value} is not an activation")


# ----------------------------------------------------------------------
# Declarative layer record
# ----------------------------------------------------------------------

@dataclass
class LayerParams:
    """
    One layer of a model, with its tensors and skip-wiring tags

    `concat_from` names a saved activation concatenated (channel axis) onto the
    input before the layer runs; `save_as` stores the layer output under a name.
    """
    kind: LayerKind
    name: str
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    weight: Optional[Tensor] = None
    bias: Optional[Tensor] = None
    running_mean: Optional[np.ndarray] = None
    running_var: Optional[np.ndarray] = None
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS
    slope: float = LEAKY_SLOPE
    concat_from: Optional[str] = None
    save_as: Optional[str] = None
    extras: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == LayerKind.CONV2D and self.padding < 0:
            raise DimensionError(f"{self.name}: Conv2d padding must be >= 0")
        if self.kind == LayerKind.CONV_TRANSPOSE2D and (self.kernel, self.stride, self.padding) != (2, 2, 0):
            raise DimensionError(f"{self.name}: ConvTranspose2d must be kernel 2, stride 2, no padding")
        if self.kind == LayerKind.BATCHNORM2D and self.eps <= 0:
            raise DimensionError(f"{self.name}: BatchNorm eps must be > 0")

    def tensors(self) -> Dict[str, Tensor]:
        """Trainable tensors keyed by their qualified name"""
        named = {}
        if self.weight is not None:
            named[f"{self.name}.weight"] = self.weight
        if self.bias is not None:
            named[f"{self.name}.bias"] = self.bias
        return named

    def buffers(self) -> Dict[str, np.ndarray]:
        if self.kind != LayerKind.BATCHNORM2D:
            return {}
        return {f"{self.name}.running_mean": self.running_mean, f"{self.name}.running_var": self.running_var}


def apply_layer(x: Tensor, p: LayerParams, training: bool) -> Tensor:
    """Run one declared layer"""
    if p.kind == LayerKind.CONV2D:
        return conv2d(x, p.weight, p.bias, stride=p.stride, padding=p.padding)
    if p.kind == LayerKind.CONV_TRANSPOSE2D:
        return conv_transpose2d_k2s2(x, p.weight, p.bias)
    if p.kind == LayerKind.MAXPOOL2X2:
        return maxpool2x2(x)
    if p.kind == LayerKind.BATCHNORM2D:
        # weight/bias hold gamma/beta
        return batchnorm2d(x, p.weight, p.bias, p.running_mean, p.running_var, training, p.momentum, p.eps)
    return activation(x, p.kind, p.slope)
