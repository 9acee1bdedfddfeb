"""
Procedural real/fake images

Real images: a soft oval over a flat background, a few Gaussian blobs and a
1/f^α noise field. Fakes start from a real image and add one artifact family:
splice (hard-edged paste), grid (checkerboard upsampling trace), smooth
(regional low-pass) or spectral_peak (fixed high-frequency sinusoids).
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.special import expit
from tqdm import tqdm

from ..tensor.rng import SeededRng
from ..utils.errors import ConfigError, CorpusError
from .image_io import write_ppm
from .manifest import MANIFEST_NAME, Manifest, SampleRecord

log = logging.getLogger(__name__)

KINDS = ('splice', 'grid', 'smooth', 'spectral_peak')
IMAGE_SIZES = (32, 64, 128, 256)

NOISE_STD = 24.0
OVAL_SOFTNESS = 0.15
GRID_AMPLITUDE = 12.0
PEAK_AMPLITUDE = 10.0
# cycles per pixel of the injected sinusoids
PEAK_FREQUENCIES = ((3 / 8, 1 / 8), (7 / 16, 5 / 16))
SMOOTH_SIGMA = 2.0


@dataclass(frozen=True)
class GeneratorSpec:
    image_size: int = 64
    blob_count: Tuple[int, int] = (3, 8)
    alpha: float = 1.2
    kinds: Tuple[str, ...] = KINDS
    intensity: float = 1.0
    seed: int = 7

    def validate(self) -> "GeneratorSpec":
        if self.image_size not in IMAGE_SIZES:
            raise ConfigError(f"image_size must be one of {IMAGE_SIZES}, got {self.image_size}")
        if not 0.0 < self.intensity <= 1.0:
            raise ConfigError(f"intensity must be in (0, 1], got {self.intensity}")
        lo, hi = self.blob_count
        if lo < 0 or hi < lo:
            raise ConfigError(f"blob_count must be a range lo <= hi with lo >= 0, got {self.blob_count}")
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not self.kinds:
            raise ConfigError("at least one artifact kind is required")
        unknown = [k for k in self.kinds if k not in KINDS]
        if unknown:
            raise ConfigError(f"unknown artifact kinds {unknown}, expected a subset of {KINDS}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        return self

    def to_dict(self) -> dict:
        data = asdict(self)
        data['blob_count'] = list(self.blob_count)
        data['kinds'] = list(self.kinds)
        return data


def _grid(size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Pixel-center coordinates on [-1, 1]"""
    axis = (np.arange(size) + 0.5) / size * 2 - 1
    return np.meshgrid(axis, axis, indexing='ij')


def _to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(image), 0, 255).astype(np.uint8)


def power_law_noise(size: int, alpha: float, rng: SeededRng) -> np.ndarray:
    """Zero-mean, unit-std field whose amplitude spectrum falls as f^-α"""
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    radius = np.hypot(fy, fx)
    weight = np.zeros_like(radius)
    weight[radius > 0] = radius[radius > 0] ** -alpha
    field = np.real(np.fft.ifft2(np.fft.fft2(rng.normal((size, size))) * weight))
    return (field - field.mean()) / field.std()


def _ellipse(yy, xx, rng: SeededRng, radius_range: Tuple[float, float]) -> np.ndarray:
    cy, cx = rng.uniform(-0.2, 0.2, 2)
    ry, rx = rng.uniform(*radius_range, 2)
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2


def _real_float(spec: GeneratorSpec, rng: SeededRng) -> np.ndarray:
    size = spec.image_size
    yy, xx = _grid(size)

    background = rng.uniform(80, 150, 3)
    face = rng.uniform(120, 180, 3)
    oval = expit((1.0 - _ellipse(yy, xx, rng.split('oval'), (0.5, 0.75))) / OVAL_SOFTNESS)
    image = background + oval[..., None] * (face - background)

    blobs = rng.split('blobs')
    lo, hi = spec.blob_count
    for _ in range(int(blobs.integers(lo, hi + 1))):
        cy, cx = blobs.uniform(-0.7, 0.7, 2)
        sigma = blobs.uniform(0.12, 0.3)
        amplitude = blobs.uniform(-25, 25) * blobs.uniform(0.7, 1.0, 3)
        bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
        image = image + bump[..., None] * amplitude

    noise = rng.split('noise')
    luminance = power_law_noise(size, spec.alpha, noise.split('luma'))
    chroma = np.stack([power_law_noise(size, spec.alpha, noise.split('chroma', c)) for c in range(3)], axis=-1)
    return image + NOISE_STD * (luminance[..., None] + 0.25 * chroma)


def gen_real(spec: GeneratorSpec, rng: SeededRng) -> np.ndarray:
    """H×W×3 uint8 'real' image"""
    return _to_uint8(_real_float(spec.validate(), rng))


def _splice(base, yy, xx, intensity, rng, spec):
    donor = gen_real(spec, rng.split('donor')).astype(np.float64)
    mask = (_ellipse(yy, xx, rng.split('region'), (0.25, 0.4)) <= 1.0).astype(np.float64)
    return base + intensity * mask[..., None] * (donor - base)


def _grid_artifact(base, yy, xx, intensity, rng, spec):
    rows, cols = np.indices(base.shape[:2])
    period2 = np.where((rows + cols) % 2, -1.0, 1.0)
    period4 = np.where((rows // 2 + cols // 2) % 2, -1.0, 1.0)
    field = GRID_AMPLITUDE * intensity * (0.7 * period2 + 0.3 * period4)
    return base + field[..., None]


def _smooth(base, yy, xx, intensity, rng, spec):
    blurred = gaussian_filter(base, sigma=(SMOOTH_SIGMA, SMOOTH_SIGMA, 0), mode='nearest')
    mask = (_ellipse(yy, xx, rng.split('region'), (0.5, 0.7)) <= 1.0).astype(np.float64)
    return base + intensity * mask[..., None] * (blurred - base)


def _spectral_peak(base, yy, xx, intensity, rng, spec):
    rows, cols = np.indices(base.shape[:2])
    field = np.zeros(base.shape[:2])
    for (fy, fx), phase in zip(PEAK_FREQUENCIES, rng.uniform(0, 2 * np.pi, len(PEAK_FREQUENCIES))):
        field += np.cos(2 * np.pi * (fy * rows + fx * cols) + phase)
    return base + PEAK_AMPLITUDE * intensity * field[..., None]


_ARTIFACTS = {
    'splice': _splice,
    'grid': _grid_artifact,
    'smooth': _smooth,
    'spectral_peak': _spectral_peak,
}


def gen_fake(
    real_image: np.ndarray,
    kind: str,
    intensity: float,
    rng: SeededRng,
    spec: Optional[GeneratorSpec] = None,
) -> np.ndarray:
    """Apply one artifact family to a real image"""
    if kind not in _ARTIFACTS:
        raise ConfigError(f"unknown artifact kind '{kind}', expected one of {KINDS}")
    if not 0.0 < intensity <= 1.0:
        raise ConfigError(f"intensity must be in (0, 1], got {intensity}")
    size = real_image.shape[0]
    spec = spec or GeneratorSpec(image_size=size)
    if spec.image_size != size or real_image.shape != (size, size, 3):
        raise ConfigError(f"image shape {real_image.shape} does not match image_size {spec.image_size}")
    yy, xx = _grid(size)
    out = _ARTIFACTS[kind](real_image.astype(np.float64), yy, xx, intensity, rng, spec)
    return _to_uint8(out)


def sample_image(spec: GeneratorSpec, index: int, kind: Optional[str]) -> np.ndarray:
    """Image for one corpus index; depends only on (spec, index, kind)"""
    rng = SeededRng(spec.seed).split('sample', index)
    base = gen_real(spec, rng.split('base'))
    if kind is None:
        return base
    return gen_fake(base, kind, spec.intensity, rng.split('artifact'), spec)


def gen_corpus(
    spec: GeneratorSpec,
    n_real: int,
    n_fake: int,
    split_fraction: float,
    out_dir,
    threads: int = 1,
) -> Manifest:
    """
    Write NNNNNN.ppm images and manifest.json

    Reals take indices [0, n_real), fakes [n_real, n_real + n_fake) with kinds
    cycled round-robin. Within each label the first round(n·split_fraction)
    samples are train, the rest test.
    """
    spec.validate()
    if n_real <= 0 or n_fake <= 0:
        raise CorpusError(f"counts must be positive, got n_real={n_real}, n_fake={n_fake}")
    if not 0.0 <= split_fraction <= 1.0:
        raise CorpusError(f"split_fraction must be in [0, 1], got {split_fraction}")

    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CorpusError(f"cannot create corpus directory {out_dir}: {e}") from e

    n_train_real = round(n_real * split_fraction)
    n_train_fake = round(n_fake * split_fraction)
    plan = []
    for i in range(n_real):
        plan.append((i, None, 'train' if i < n_train_real else 'test'))
    for j in range(n_fake):
        plan.append((n_real + j, spec.kinds[j % len(spec.kinds)], 'train' if j < n_train_fake else 'test'))

    def produce(item) -> SampleRecord:
        index, kind, split = item
        name = f"{index:06d}.ppm"
        try:
            write_ppm(out_dir / name, sample_image(spec, index, kind))
        except OSError as e:
            raise CorpusError(f"cannot write {out_dir / name}: {e}") from e
        return SampleRecord(path=name, label=int(kind is not None), kind=kind, split=split, seed_index=index)

    log.info(f"📦 generating {n_real} real + {n_fake} fake images of {spec.image_size}px into {out_dir}")
    progress = tqdm(total=len(plan), desc="gen-data", unit="img", disable=None)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        records = []
        for record in pool.map(produce, plan):
            records.append(record)
            progress.update()
    progress.close()

    manifest = Manifest(spec=spec.to_dict(), samples=records, root=out_dir)
    manifest.save(out_dir / MANIFEST_NAME)
    log.info(f"✅ corpus written: {manifest.counts}")
    return manifest
