"""
Denoising Filters
DnCNN-S training, padded residual extraction with the denoiser's own bias
subtracted, and the Gaussian high-pass reference filter
"""

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.ndimage import gaussian_filter
from tqdm import tqdm

from config.model_specs import Arch, ModelSpec
from config.run_config import RunConfig
from models.zoo import Model, build_dncnn
from utils.checkpoint import read_checkpoint, write_checkpoint
from utils.errors import CheckpointError, ConfigError, DataError, DimensionError, DivergenceError
from utils.image_io import random_crop
from utils.optim import Adam
from utils.tensor import Tensor


@dataclass
class Residual:
    """High-frequency map of one image"""
    data: np.ndarray
    source_id: str = ""
    filter_id: str = ""


@dataclass
class DenoiserTrainConfig:
    """DnCNN-S training settings (sigmas in 1/255 units)"""
    epochs: int = 2000
    lr: float = 1e-4
    crop: int = 48
    sigma_range: Tuple[float, float] = (5.0, 15.0)
    n_images: int = 1024
    batch_size: int = 16
    depth: int = 17
    width: int = 64
    pad: int = 10
    seed: int = 0

    @classmethod
    def from_run_config(cls, cfg: RunConfig) -> "DenoiserTrainConfig":
        return cls(
            epochs=cfg.denoiser_epochs, lr=cfg.denoiser_lr, crop=cfg.crop,
            sigma_range=(cfg.sigma_lo, cfg.sigma_hi), n_images=cfg.denoiser_images,
            batch_size=cfg.denoiser_batch, depth=cfg.dncnn_depth, width=cfg.dncnn_width,
            pad=cfg.pad, seed=cfg.seed,
        )

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode("utf-8")).hexdigest()


class DenoiserBundle:
    """
    Trained DnCNN plus its fingerprint F_DnCNN

    Args:
        model: DnCNN model (noise predictor)
        dncnn_fingerprint: Mean noise map over the training set, 3×S×S
        train_config_hash: Hash of the training configuration
        sigma_range: Training noise range in 1/255 units
        pad: Reflection margin applied before inference
    """

    filter_id = "dncnn"

    def __init__(
        self,
        model: Model,
        dncnn_fingerprint: np.ndarray,
        train_config_hash: str,
        sigma_range: Tuple[float, float],
        pad: int = 10,
        loss_history: Optional[List[float]] = None,
    ):
        self.model = model.eval()
        self.dncnn_fingerprint = np.asarray(dncnn_fingerprint, dtype=np.float32)
        self.train_config_hash = train_config_hash
        self.sigma_range = tuple(sigma_range)
        self.pad = pad
        self.loss_history = list(loss_history or [])
        if self.dncnn_fingerprint.shape != (3, self.working_size, self.working_size):
            raise DimensionError(
                f"F_DnCNN shape {self.dncnn_fingerprint.shape} does not match working size {self.working_size}"
            )

    @property
    def working_size(self) -> int:
        return self.model.spec.working_size

    def noise_map(self, image: np.ndarray, pad: Optional[int] = None) -> np.ndarray:
        """Reflection-pad, predict the noise, crop back (no F_DnCNN correction)"""
        pad = self.pad if pad is None else pad
        padded = np.pad(image.astype(np.float32), ((0, 0), (pad, pad), (pad, pad)), mode="reflect")
        out = self.model(Tensor(padded)).data
        h, w = image.shape[1:]
        return out[:, pad:pad + h, pad:pad + w]

    def extract(self, image: np.ndarray, source_id: str = "") -> Residual:
        if image.shape != (3, self.working_size, self.working_size):
            raise DimensionError(
                f"image shape {image.shape} does not match denoiser working size "
                f"(3, {self.working_size}, {self.working_size})"
            )
        return Residual(self.noise_map(image) - self.dncnn_fingerprint, source_id, self.filter_id)

    def denoise(self, image: np.ndarray) -> np.ndarray:
        """Denoised image x − f_D(x)"""
        return image - self.noise_map(image)

    def content_hash(self) -> str:
        digest = hashlib.sha256()
        digest.update(json.dumps(self.metadata(), sort_keys=True).encode("utf-8"))
        for name, array in sorted(self.arrays().items()):
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(array, dtype="<f4").tobytes())
        return digest.hexdigest()

    def metadata(self) -> Dict[str, Any]:
        return {
            "model_spec": self.model.spec.to_dict(),
            "train_config_hash": self.train_config_hash,
            "sigma_range": list(self.sigma_range),
            "pad": self.pad,
            "loss_history": self.loss_history,
        }

    def arrays(self) -> Dict[str, np.ndarray]:
        arrays = {f"model.{k}": v for k, v in self.model.state_arrays().items()}
        arrays["dncnn_fingerprint"] = self.dncnn_fingerprint
        return arrays

    def save(self, path: str) -> str:
        return write_checkpoint(path, "denoiser", self.metadata(), self.arrays())

    @classmethod
    def load(cls, path: str) -> "DenoiserBundle":
        metadata, arrays = read_checkpoint(path)
        if metadata.get("type") != "denoiser":
            raise CheckpointError(f"{path} holds a '{metadata.get('type')}' checkpoint, not a denoiser")
        model = build_dncnn(ModelSpec.from_dict(metadata["model_spec"]))
        model.load_state_arrays({k[len("model."):]: v for k, v in arrays.items() if k.startswith("model.")})
        return cls(
            model,
            arrays["dncnn_fingerprint"],
            metadata["train_config_hash"],
            tuple(metadata["sigma_range"]),
            metadata["pad"],
            metadata.get("loss_history"),
        )


class GaussianHighpass:
    """Reference filter: R = X − gaussian_blur(X, σ)"""

    working_size = None

    def __init__(self, sigma: float = 3.0):
        if sigma <= 0:
            raise ConfigError(f"high-pass sigma must be > 0, got {sigma}")
        self.sigma = float(sigma)
        self.filter_id = f"gaussian:{self.sigma:g}"

    def extract(self, image: np.ndarray, source_id: str = "") -> Residual:
        blurred = gaussian_filter(image.astype(np.float64), sigma=(0, self.sigma, self.sigma), mode="mirror")
        return Residual((image - blurred).astype(np.float32), source_id, self.filter_id)

    def content_hash(self) -> str:
        return hashlib.sha256(self.filter_id.encode("utf-8")).hexdigest()


ResidualFilter = Union[DenoiserBundle, GaussianHighpass]


def _validate_training_images(images: Sequence[np.ndarray], crop: int) -> int:
    if len(images) == 0:
        raise DataError("DnCNN training needs at least one real image")
    size = images[0].shape[-1]
    for i, img in enumerate(images):
        if img.ndim != 3 or img.shape[0] != 3 or img.shape[1] != img.shape[2] or img.shape[1] != size:
            raise DataError(f"training image {i} has shape {img.shape}; expected 3×{size}×{size}")
        if size < crop:
            raise DataError(f"training images ({size}×{size}) are smaller than the crop ({crop}×{crop})")
    return size


def train_dncnn(real_images: Sequence[np.ndarray], cfg: DenoiserTrainConfig, verbose: bool = True) -> DenoiserBundle:
    """
    Train DnCNN-S on real images to predict additive Gaussian noise

    Args:
        real_images: 3×S×S float images in [0, 1], all at the working size
        cfg: Training settings
        verbose: Print progress

    Returns:
        DenoiserBundle with F_DnCNN averaged over the full-size training images
    """
    size = _validate_training_images(real_images, cfg.crop)
    images = list(real_images)[:cfg.n_images]
    lo, hi = cfg.sigma_range
    if not 0 < lo <= hi:
        raise ConfigError(f"invalid sigma range {cfg.sigma_range}")

    spec = ModelSpec(arch=Arch.DNCNN, in_channels=3, working_size=size, hidden_width=cfg.width,
                     seed=cfg.seed, depth=cfg.depth)
    model = build_dncnn(spec).train()
    optimizer = Adam(model.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)

    if verbose:
        print(f"🧠 Training DnCNN-S: {len(images)} images, {cfg.epochs} epochs, crop {cfg.crop}, "
              f"sigma [{lo:g}, {hi:g}]/255")

    history: List[float] = []
    progress = tqdm(range(cfg.epochs), desc="DnCNN", disable=not verbose)
    for epoch in progress:
        order = rng.permutation(len(images))
        epoch_loss = 0.0
        batches = 0
        for start in range(0, len(order), cfg.batch_size):
            picked = order[start:start + cfg.batch_size]
            crops = np.stack([random_crop(images[i], cfg.crop, rng) for i in picked])
            sigmas = rng.uniform(lo, hi, size=(len(picked), 1, 1, 1)) / 255.0
            noise = (rng.standard_normal(crops.shape) * sigmas).astype(np.float32)

            optimizer.zero_grad()
            diff = model(Tensor(crops + noise)) - noise
            loss = (diff * diff).mean()
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(epoch, value)
            loss.backward()
            optimizer.step()
            epoch_loss += value
            batches += 1
        history.append(epoch_loss / max(batches, 1))
        progress.set_postfix(loss=f"{history[-1]:.3e}")

    model.eval()
    bundle = DenoiserBundle(model, np.zeros((3, size, size), np.float32), cfg.config_hash(),
                            cfg.sigma_range, cfg.pad, history)
    bundle.dncnn_fingerprint = np.mean([bundle.noise_map(img) for img in images], axis=0).astype(np.float32)

    if verbose:
        if len(history) > 1:
            print(f"✅ DnCNN trained: loss {history[0]:.3e} -> {history[-1]:.3e}")
        print(f"   F_DnCNN std: {bundle.dncnn_fingerprint.std():.3e}")
    return bundle


def extract_residual(image: np.ndarray, bundle: ResidualFilter, source_id: str = "") -> Residual:
    """R = f_D(X) − F_DnCNN (or X − blur(X) for the Gaussian filter)"""
    return bundle.extract(image, source_id)


def gaussian_highpass_residual(image: np.ndarray, sigma: float = 3.0) -> Residual:
    """R = X − gaussian_blur(X, σ), no bias correction"""
    return GaussianHighpass(sigma).extract(image)


def extract_residuals(
    images: Sequence[np.ndarray],
    bundle: ResidualFilter,
    ids: Optional[Sequence[str]] = None,
    workers: int = 1,
    verbose: bool = False,
) -> List[Residual]:
    """Residuals for a list of images; optionally on a thread pool"""
    ids = list(ids) if ids is not None else [str(i) for i in range(len(images))]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(bundle.extract, images, ids))
    progress = tqdm(zip(images, ids), total=len(images), desc="Residuals", disable=not verbose)
    return [bundle.extract(img, sid) for img, sid in progress]


def load_residual_filter(spec: str) -> ResidualFilter:
    """
    Resolve a --denoiser argument

    Args:
        spec: "gaussian", "gaussian:<sigma>" or a DIF1 denoiser checkpoint path
    """
    if spec.startswith("gaussian"):
        _, _, sigma = spec.partition(":")
        try:
            return GaussianHighpass(float(sigma) if sigma else 3.0)
        except ValueError as exc:
            raise ConfigError(f"Invalid gaussian filter spec '{spec}'") from exc
    return DenoiserBundle.load(spec)


def psnr(reference: np.ndarray, estimate: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] images"""
    mse = float(np.mean((reference.astype(np.float64) - estimate) ** 2))
    return float("inf") if mse == 0 else 10.0 * np.log10(1.0 / mse)
