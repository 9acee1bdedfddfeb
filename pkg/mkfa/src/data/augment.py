"""Training-time image augmentations on H×W×3 uint8 images"""
import logging
from typing import Dict, Sequence, Tuple

import numpy as np
from scipy.fft import dctn, idctn
from scipy.ndimage import gaussian_filter, rotate as nd_rotate

from ..tensor.rng import SeededRng
from ..utils.errors import ConfigError

log = logging.getLogger(__name__)

MAX_ROTATION = 15.0
MAX_BLUR_SIGMA = 3.0
QUALITY_RANGE = (10, 100)
BLOCK = 8

# standard JPEG luminance quantization table
LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


def _to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(image), 0, 255).astype(np.uint8)


def hflip(image: np.ndarray) -> np.ndarray:
    return image[:, ::-1].copy()


def rotate(image: np.ndarray, degrees: float) -> np.ndarray:
    """Bilinear rotation about the center, edge-replicate fill"""
    if abs(degrees) > MAX_ROTATION:
        raise ConfigError(f"rotation must be within ±{MAX_ROTATION}°, got {degrees}")
    if degrees == 0:
        return image.copy()
    out = nd_rotate(image.astype(np.float64), degrees, axes=(1, 0), reshape=False, order=1, mode='nearest')
    return _to_uint8(out)


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    if not 0.0 <= sigma <= MAX_BLUR_SIGMA:
        raise ConfigError(f"blur sigma must be in [0, {MAX_BLUR_SIGMA}], got {sigma}")
    if sigma == 0:
        return image.copy()
    return _to_uint8(gaussian_filter(image.astype(np.float64), sigma=(sigma, sigma, 0), mode='nearest'))


def brightness_contrast(image: np.ndarray, brightness: float, contrast: float) -> np.ndarray:
    """x·contrast + brightness·255"""
    if not -1.0 <= brightness <= 1.0:
        raise ConfigError(f"brightness must be in [-1, 1], got {brightness}")
    if not 0.0 < contrast <= 3.0:
        raise ConfigError(f"contrast must be in (0, 3], got {contrast}")
    if brightness == 0 and contrast == 1:
        return image.copy()
    return _to_uint8(image.astype(np.float64) * contrast + brightness * 255.0)


def quality_table(quality: int) -> np.ndarray:
    """Luminance table scaled the way libjpeg scales quality; q=100 gives all ones"""
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    return np.maximum(np.floor((LUMA_TABLE * scale + 50.0) / 100.0), 1.0)


def block_dct_compress(image: np.ndarray, quality: int) -> np.ndarray:
    """8×8 block DCT quantize/dequantize per channel"""
    lo, hi = QUALITY_RANGE
    if not lo <= quality <= hi:
        raise ConfigError(f"compression quality must be in [{lo}, {hi}], got {quality}")
    h, w, c = image.shape
    pad_h, pad_w = (-h) % BLOCK, (-w) % BLOCK
    data = np.pad(image.astype(np.float64) - 128.0, ((0, pad_h), (0, pad_w), (0, 0)), mode='edge')
    bh, bw = data.shape[0] // BLOCK, data.shape[1] // BLOCK

    blocks = data.reshape(bh, BLOCK, bw, BLOCK, c).transpose(0, 2, 4, 1, 3)
    table = quality_table(quality)
    coeffs = dctn(blocks, type=2, axes=(-2, -1), norm='ortho')
    restored = idctn(np.round(coeffs / table) * table, type=2, axes=(-2, -1), norm='ortho')
    out = restored.transpose(0, 3, 1, 4, 2).reshape(bh * BLOCK, bw * BLOCK, c)[:h, :w]
    return _to_uint8(out + 128.0)


OPS = {
    'hflip': hflip,
    'rotate': rotate,
    'blur': gaussian_blur,
    'brightness_contrast': brightness_contrast,
    'compress': block_dct_compress,
}


def augment(image: np.ndarray, ops: Sequence[Tuple[str, tuple]]) -> np.ndarray:
    """Apply (name, args) transforms in order"""
    out = image
    for name, args in ops:
        if name not in OPS:
            raise ConfigError(f"unknown augmentation '{name}', expected one of {sorted(OPS)}")
        out = OPS[name](out, *args)
    return out


def random_ops(toggles: Dict[str, bool], rng: SeededRng) -> list:
    """Draw a transform chain from the enabled toggles"""
    ops = []
    if toggles.get('hflip'):
        if rng.uniform() < 0.5:
            ops.append(('hflip', ()))
    if toggles.get('rotate'):
        ops.append(('rotate', (float(rng.uniform(-MAX_ROTATION, MAX_ROTATION)),)))
    if toggles.get('blur'):
        ops.append(('blur', (float(rng.uniform(0.0, 1.5)),)))
    if toggles.get('brightness_contrast'):
        ops.append(('brightness_contrast', (float(rng.uniform(-0.1, 0.1)), float(rng.uniform(0.8, 1.2)))))
    if toggles.get('compress'):
        ops.append(('compress', (int(rng.integers(40, 101)),)))
    return ops


def random_augment(image: np.ndarray, toggles: Dict[str, bool], rng: SeededRng) -> np.ndarray:
    return augment(image, random_ops(toggles, rng))
