"""
Frequency-domain analyses

Amplitude spectra, radial profiles and relative log amplitudes for corpora and
for intermediate feature maps, plus DC/HC energy accounting.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ..backbone.model import MkfaNetModel, available_taps, forward
from ..data.image_io import read_ppm
from ..data.manifest import Manifest
from ..tensor.core import Tensor, no_tape
from ..utils.errors import SpectrumError

log = logging.getLogger(__name__)

DEFAULT_BINS = 32
DEFAULT_EPS = 1e-8
METHODS = ('direct', 'fft')


@dataclass
class SpectrumReport:
    """Named per-bin curves over normalized radial frequency"""
    bins: int
    freq: np.ndarray
    series: Dict[str, np.ndarray] = field(default_factory=dict)
    empty: Optional[np.ndarray] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def add(self, name: str, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.bins,):
            raise SpectrumError(f"series '{name}' has {values.shape} values, report has {self.bins} bins")
        self.series[name] = values


class RadialProfile(NamedTuple):
    values: np.ndarray
    empty: np.ndarray


def bin_frequencies(bins: int) -> np.ndarray:
    """Bin midpoints on [0, 1]"""
    return (np.arange(bins) + 0.5) / bins


@lru_cache(maxsize=16)
def dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def amplitude_spectrum(maps: np.ndarray, method: str = 'direct') -> np.ndarray:
    """
    Centered |DFT| of one H×W map or a stack (..., H, W)

    DC lands at (H//2, W//2). `direct` applies the separable DFT matrices,
    `fft` uses numpy's FFT.
    """
    a = np.asarray(maps, dtype=np.float64)
    if a.ndim < 2 or min(a.shape[-2:]) < 2:
        raise SpectrumError(f"amplitude_spectrum needs maps of at least 2x2, got shape {a.shape}")
    if method == 'direct':
        h, w = a.shape[-2:]
        spectrum = dft_matrix(h) @ a @ dft_matrix(w).T
    elif method == 'fft':
        spectrum = np.fft.fft2(a)
    else:
        raise SpectrumError(f"unknown spectrum method '{method}', expected one of {METHODS}")
    return np.abs(np.fft.fftshift(spectrum, axes=(-2, -1)))


def radial_profile(amplitude: np.ndarray, bins: int = DEFAULT_BINS) -> RadialProfile:
    """Mean amplitude in equal-width bins of r / r_max; empty bins repeat the previous bin"""
    if bins < 2:
        raise SpectrumError(f"radial_profile needs at least 2 bins, got {bins}")
    amplitude = np.asarray(amplitude, dtype=np.float64)
    h, w = amplitude.shape
    yy, xx = np.indices((h, w))
    radius = np.hypot(yy - h // 2, xx - w // 2)
    index = np.minimum((radius / radius.max() * bins).astype(np.int64), bins - 1).ravel()
    sums = np.bincount(index, weights=amplitude.ravel(), minlength=bins)
    counts = np.bincount(index, minlength=bins)

    values = np.zeros(bins)
    empty = counts == 0
    for b in range(bins):
        values[b] = values[b - 1] if empty[b] else sums[b] / counts[b]
    return RadialProfile(values, empty)


def relative_log_amplitude(profile: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """log(A(f) + ε) − log(A(0) + ε)"""
    profile = np.asarray(profile, dtype=np.float64)
    if profile[0] <= 0:
        raise SpectrumError(f"bin-0 amplitude must be positive, got {profile[0]}")
    delta = np.log(profile + eps) - np.log(profile[0] + eps)
    delta[0] = 0.0
    return delta


def grayscale(image: np.ndarray) -> np.ndarray:
    """Unweighted RGB mean of an H×W×3 image"""
    return np.asarray(image, dtype=np.float64).mean(axis=-1)


def image_log_profile(
    image: np.ndarray,
    bins: int = DEFAULT_BINS,
    eps: float = DEFAULT_EPS,
    method: str = 'direct',
) -> np.ndarray:
    amplitude = amplitude_spectrum(grayscale(image), method)
    return relative_log_amplitude(radial_profile(amplitude, bins).values, eps)


def _profiles_for(paths: Sequence[Path], bins: int, eps: float, method: str, threads: int) -> np.ndarray:
    def one(path: Path) -> np.ndarray:
        return image_log_profile(read_ppm(path), bins, eps, method)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            profiles = list(pool.map(one, paths))
    else:
        profiles = [one(p) for p in paths]
    return np.stack(profiles)


def corpus_spectrum_stats(
    manifest: Manifest,
    labels: Sequence[int] = (0, 1),
    kinds: Optional[Sequence[str]] = None,
    split: Optional[str] = None,
    bins: int = DEFAULT_BINS,
    eps: float = DEFAULT_EPS,
    method: str = 'direct',
    threads: int = 1,
) -> SpectrumReport:
    """
    Mean relative log amplitude of real and fake images

    Args:
        manifest: loaded corpus
        labels: which label groups to include (0 real, 1 fake)
        kinds: restrict fakes to these artifact kinds
        split: restrict to 'train' or 'test'
        threads: worker cap for per-image spectra

    Returns:
        Report with real_mean / fake_mean and, when both are present, fake_minus_real
    """
    report = SpectrumReport(bins=bins, freq=bin_frequencies(bins), meta={'corpus': str(manifest.root)})
    names = {0: 'real_mean', 1: 'fake_mean'}
    for label in labels:
        records = manifest.select(label=label, split=split, kinds=kinds if label == 1 else None)
        if not records:
            raise SpectrumError(f"no samples with label={label} split={split} kinds={kinds}")
        profiles = _profiles_for([manifest.root / r.path for r in records], bins, eps, method, threads)
        report.add(names[label], profiles.mean(axis=0))
        report.meta[f"n_{names[label].split('_')[0]}"] = len(records)
        log.info(f"📊 {names[label]}: {len(records)} images")

    if 'real_mean' in report.series and 'fake_mean' in report.series:
        report.add('fake_minus_real', report.series['fake_mean'] - report.series['real_mean'])
    report.meta['count'] = sum(v for k, v in report.meta.items() if k.startswith('n_'))
    return report


def feature_map_profile(
    features: np.ndarray,
    bins: int = DEFAULT_BINS,
    eps: float = DEFAULT_EPS,
    method: str = 'direct',
) -> np.ndarray:
    """Relative log amplitude of channel- and sample-averaged spectra of an N×C×h×w map"""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 4:
        raise SpectrumError(f"feature map must be N×C×h×w, got {features.shape}")
    mean_amplitude = amplitude_spectrum(features, method).mean(axis=(0, 1))
    return relative_log_amplitude(radial_profile(mean_amplitude, bins).values, eps)


def feature_depth_profile(
    model: MkfaNetModel,
    images: Tensor,
    taps: Sequence[str],
    bins: int = DEFAULT_BINS,
    eps: float = DEFAULT_EPS,
    method: str = 'direct',
) -> SpectrumReport:
    """One series per tap, ordered shallow to deep"""
    order = available_taps(model.config)
    unknown = [t for t in taps if t not in order]
    if unknown:
        raise SpectrumError(f"invalid taps {unknown}")
    ordered = sorted(set(taps), key=order.index)

    with no_tape():
        _, features = forward(model, images, ordered)

    report = SpectrumReport(bins=bins, freq=bin_frequencies(bins), meta={'count': images.shape[0]})
    for name in ordered:
        fmap = features[name].data
        if min(fmap.shape[2:]) < 2:
            raise SpectrumError(f"tap '{name}' has spatial extent {fmap.shape[2:]}, too small for a spectrum")
        report.add(name, feature_map_profile(fmap, bins, eps, method))
    return report


def dc_hc_energy(x) -> np.ndarray:
    """Per-(n, c) [H·W·mean², Σ(x − mean)²] for an N×C×H×W map, shape N×C×2"""
    data = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    if data.ndim != 4:
        raise SpectrumError(f"dc_hc_energy needs an N×C×H×W map, got {data.shape}")
    h, w = data.shape[2:]
    mean = data.mean(axis=(2, 3), keepdims=True)
    dc = h * w * mean[..., 0, 0] ** 2
    hc = ((data - mean) ** 2).sum(axis=(2, 3))
    return np.stack([dc, hc], axis=-1)


def spectral_peaks(amplitude: np.ndarray, k: int = 4) -> List[Tuple[int, int, float]]:
    """k largest non-DC coefficients as (row offset, col offset, amplitude) from the center"""
    amplitude = np.asarray(amplitude, dtype=np.float64)
    h, w = amplitude.shape
    cy, cx = h // 2, w // 2
    masked = amplitude.copy()
    masked[cy, cx] = -np.inf
    flat = masked.ravel()
    # stable sort keeps row-major order among equal amplitudes
    order = np.argsort(-flat, kind='stable')[:k]
    return [(int(i // w) - cy, int(i % w) - cx, float(flat[i])) for i in order]


def high_band_mean(series: np.ndarray, freq: np.ndarray, cutoff: float = 0.5) -> float:
    return float(np.asarray(series)[np.asarray(freq) > cutoff].mean())
