"""Grad-CAM heatmaps and the occlusion-sensitivity cross-check"""
import logging
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.ndimage import zoom

from ..backbone.model import MkfaNetModel, available_taps, forward
from ..data.image_io import write_ppm
from ..tensor.core import Tape, Tensor, no_tape
from ..tensor.ops import select_logit
from ..utils.errors import ConfigError, ShapeError
from .trainer import FAKE_CLASS, images_to_tensor

log = logging.getLogger(__name__)

OCCLUSION_PATCH = 8


def default_tap(model: MkfaNetModel) -> str:
    """Last block of stage 3"""
    return f"stage3.block{model.config.depths[2]}"


def _upsample(cam: np.ndarray, height: int, width: int) -> np.ndarray:
    if cam.shape == (height, width):
        return cam
    factors = (height / cam.shape[0], width / cam.shape[1])
    return zoom(cam, factors, order=1, mode='nearest', grid_mode=True)


def _max_normalize(cam: np.ndarray) -> np.ndarray:
    peak = cam.max()
    if peak <= 0:
        return np.zeros_like(cam)
    return np.clip(cam / peak, 0.0, 1.0)


def _check_target(model: MkfaNetModel, target_class: int) -> None:
    if not 0 <= target_class < model.config.num_classes:
        raise ConfigError(f"target class {target_class} outside [0, {model.config.num_classes})")


def gradcam(
    model: MkfaNetModel,
    image: np.ndarray,
    target_class: int = FAKE_CLASS,
    tap: Optional[str] = None,
) -> np.ndarray:
    """
    Class-activation map of one H×W×3 uint8 image

    Channel weights are the spatial mean of ∂logit/∂A at the tap; the map is
    relu(Σ_c w_c·A_c), bilinearly upsampled to H×W and divided by its maximum.
    """
    _check_target(model, target_class)
    tap = tap or default_tap(model)
    if tap not in available_taps(model.config) or tap == 'head.pool':
        raise ConfigError(f"invalid Grad-CAM tap '{tap}'")
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"gradcam: expected H×W×3 image, got {image.shape}")

    with Tape() as tape:
        logits, features = forward(model, images_to_tensor(image), taps=[tap])
        score = select_logit(logits, target_class)
    activation = features[tap]
    if score.requires_grad:
        tape.backward(score)
    model.zero_grad()

    grad = tape.grad(activation) if score.requires_grad else None
    h, w = image.shape[:2]
    if grad is None:
        return np.zeros((h, w))
    weights = grad[0].astype(np.float64).mean(axis=(1, 2))
    cam = np.maximum(np.tensordot(weights, activation.data[0].astype(np.float64), axes=1), 0.0)
    return _max_normalize(_upsample(cam, h, w))


def occlusion_map(
    model: MkfaNetModel,
    image: np.ndarray,
    target_class: int = FAKE_CLASS,
    patch: int = OCCLUSION_PATCH,
    batch_size: int = 32,
) -> np.ndarray:
    """
    Drop in the target logit when each patch×patch tile is set to mid-gray

    Every pixel of a tile carries the tile's drop.
    """
    _check_target(model, target_class)
    h, w = image.shape[:2]
    if patch < 1 or h % patch or w % patch:
        raise ShapeError(f"occlusion patch {patch} must tile a {h}x{w} image")
    x = images_to_tensor(image).data[0]
    tiles = [(i, j) for i in range(0, h, patch) for j in range(0, w, patch)]

    with no_tape():
        base = forward(model, images_to_tensor(image))[0].data[0, target_class]
        drops = np.zeros(len(tiles))
        for start in range(0, len(tiles), batch_size):
            chunk = tiles[start:start + batch_size]
            batch = np.repeat(x[None], len(chunk), axis=0)
            for b, (i, j) in enumerate(chunk):
                batch[b, :, i:i + patch, j:j + patch] = 0.0
            logits = forward(model, Tensor(batch))[0].data
            drops[start:start + len(chunk)] = base - logits[:, target_class]

    result = np.zeros((h, w))
    for drop, (i, j) in zip(drops, tiles):
        result[i:i + patch, j:j + patch] = drop
    return result


def top_quartile_overlap(a: np.ndarray, b: np.ndarray) -> float:
    """|top-25% of a ∩ top-25% of b| / |top-25% of a|"""
    if a.shape != b.shape:
        raise ShapeError(f"maps differ in shape: {a.shape} vs {b.shape}")
    mask_a = a >= np.quantile(a, 0.75)
    mask_b = b >= np.quantile(b, 0.75)
    return float((mask_a & mask_b).sum() / max(mask_a.sum(), 1))


def heat_overlay(image: np.ndarray, cam: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Blend a blue→red heat ramp over the image"""
    heat = np.stack([cam, 1.0 - np.abs(2.0 * cam - 1.0), 1.0 - cam], axis=-1) * 255.0
    blended = (1.0 - alpha) * image.astype(np.float64) + alpha * heat
    return np.clip(np.rint(blended), 0, 255).astype(np.uint8)


def write_gradcam(out_dir, name: str, image: np.ndarray, cam: np.ndarray) -> tuple:
    """Writes <name>.cam.ppm (overlay) and <name>.cam.csv (raw grid)"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ppm_path = write_ppm(out_dir / f"{name}.cam.ppm", heat_overlay(image, cam))
    csv_path = out_dir / f"{name}.cam.csv"
    np.savetxt(csv_path, cam, fmt='%.6f', delimiter=',')
    log.info(f"✅ Grad-CAM written to {ppm_path} and {csv_path}")
    return ppm_path, csv_path
