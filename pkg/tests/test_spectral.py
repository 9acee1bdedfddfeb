"""
Tests for amplitude spectra, radial profiles and corpus / feature spectrum reports
"""
import math

import numpy as np
import pytest

from mkfa.src.backbone.config import preset
from mkfa.src.backbone.model import build, forward
from mkfa.src.data.generator import GeneratorSpec, gen_corpus
from mkfa.src.spectral.analysis import (
    SpectrumReport, amplitude_spectrum, bin_frequencies, corpus_spectrum_stats, dc_hc_energy,
    feature_depth_profile, feature_map_profile, high_band_mean, radial_profile, relative_log_amplitude,
    spectral_peaks,
)
from mkfa.src.spectral.report import read_csv, write_csv
from mkfa.src.tensor.core import Tensor, no_tape
from mkfa.src.tensor.rng import SeededRng
from mkfa.src.utils.errors import SpectrumError


@pytest.fixture
def rng():
    return SeededRng(2024)


@pytest.fixture(scope="module")
def grid_corpus(tmp_path_factory):
    spec = GeneratorSpec(image_size=32, kinds=('grid',), seed=11)
    return gen_corpus(spec, 24, 24, 0.5, tmp_path_factory.mktemp("grid"))


@pytest.fixture(scope="module")
def smooth_corpus(tmp_path_factory):
    spec = GeneratorSpec(image_size=32, kinds=('smooth',), seed=11)
    return gen_corpus(spec, 24, 24, 0.5, tmp_path_factory.mktemp("smooth"))


class TestAmplitudeSpectrum:

    def test_constant_map_only_dc(self):
        amp = amplitude_spectrum(np.full((8, 6), 2.5))
        assert amp[4, 3] == pytest.approx(8 * 6 * 2.5)
        amp[4, 3] = 0.0
        np.testing.assert_allclose(amp, 0.0, atol=1e-9)

    def test_cosine_gives_symmetric_peaks(self):
        h, w = 16, 32
        cols = np.arange(w)
        image = np.tile(np.cos(2 * np.pi * 4 * cols / w), (h, 1))
        amp = amplitude_spectrum(image)
        assert amp[h // 2, w // 2 + 4] == pytest.approx(h * w / 2)
        assert amp[h // 2, w // 2 - 4] == pytest.approx(h * w / 2)
        peaks = spectral_peaks(amp, k=2)
        assert {(dy, dx) for dy, dx, _ in peaks} == {(0, 4), (0, -4)}

    def test_parseval(self, rng):
        x = rng.normal((12, 20))
        amp = amplitude_spectrum(x)
        assert (amp ** 2).sum() == pytest.approx(12 * 20 * (x ** 2).sum(), rel=1e-6)

    @pytest.mark.parametrize("shape", [(8, 8), (16, 12), (3, 5, 32, 32)])
    def test_fft_matches_direct(self, rng, shape):
        x = rng.normal(shape)
        np.testing.assert_allclose(
            amplitude_spectrum(x, 'fft'), amplitude_spectrum(x, 'direct'), rtol=1e-9, atol=1e-9,
        )

    def test_rejects_tiny_maps(self):
        with pytest.raises(SpectrumError):
            amplitude_spectrum(np.ones((1, 8)))

    def test_unknown_method(self):
        with pytest.raises(SpectrumError, match="method"):
            amplitude_spectrum(np.ones((4, 4)), 'wavelet')


class TestRadialProfile:

    def test_dc_only_spectrum(self):
        amp = np.zeros((8, 8))
        amp[4, 4] = 5.0
        profile = radial_profile(amp, bins=16)
        assert profile.values[0] == 5.0
        assert profile.empty[1]
        filled = ~profile.empty
        filled[0] = False
        np.testing.assert_array_equal(profile.values[filled], 0.0)

    def test_empty_bins_repeat_previous(self):
        profile = radial_profile(np.arange(16.0).reshape(4, 4), bins=32)
        for b in np.flatnonzero(profile.empty):
            assert profile.values[b] == profile.values[b - 1]

    def test_ring_lands_in_one_bin(self):
        size, bins = 64, 16
        yy, xx = np.indices((size, size))
        radius = np.hypot(yy - size // 2, xx - size // 2)
        r = radius / radius.max()
        amp = ((r >= 0.51) & (r <= 0.55)).astype(np.float64)
        assert int(np.argmax(radial_profile(amp, bins).values)) == 8

    def test_white_noise_profile_is_flat(self, rng):
        maps = rng.normal((400, 32, 32))
        mean_amp = amplitude_spectrum(maps, 'fft').mean(axis=0)
        values = radial_profile(mean_amp, bins=32).values[1:]
        np.testing.assert_allclose(values / values.mean(), 1.0, atol=0.1)

    def test_needs_two_bins(self):
        with pytest.raises(SpectrumError):
            radial_profile(np.ones((4, 4)), bins=1)


class TestRelativeLogAmplitude:

    def test_two_bins(self):
        delta = relative_log_amplitude(np.array([10.0, 1.0]))
        assert delta[0] == 0.0
        assert delta[1] == pytest.approx(math.log(0.1), abs=1e-6)

    def test_uniform_profile_is_zero(self):
        np.testing.assert_array_equal(relative_log_amplitude(np.full(8, 3.0)), 0.0)

    def test_bin_zero_exactly_zero(self, rng):
        assert relative_log_amplitude(rng.uniform(0.1, 5.0, 32))[0] == 0.0

    def test_non_positive_dc(self):
        with pytest.raises(SpectrumError):
            relative_log_amplitude(np.array([0.0, 1.0]))


class TestDcHcEnergy:

    def test_constant_map_has_no_hc(self):
        energy = dc_hc_energy(np.full((1, 2, 4, 4), 3.0))
        np.testing.assert_allclose(energy[..., 1], 0.0)
        np.testing.assert_allclose(energy[..., 0], 16 * 9.0)

    def test_zero_mean_map_has_no_dc(self, rng):
        x = rng.normal((2, 3, 5, 5))
        x -= x.mean(axis=(2, 3), keepdims=True)
        np.testing.assert_allclose(dc_hc_energy(x)[..., 0], 0.0, atol=1e-20)

    def test_energy_identity(self, rng):
        x = Tensor(rng.normal((2, 3, 6, 6), loc=0.7))
        energy = dc_hc_energy(x)
        total = (x.data.astype(np.float64) ** 2).sum(axis=(2, 3))
        np.testing.assert_allclose(energy.sum(axis=-1), total, rtol=1e-5)


class TestSpectrumCsv:

    def test_round_trip(self, tmp_path, rng):
        report = SpectrumReport(bins=8, freq=bin_frequencies(8))
        report.add('real_mean', rng.normal(8))
        report.add('fake_mean', rng.normal(8))
        path = write_csv(report, tmp_path / "spectrum.csv")
        assert path.read_text().splitlines()[0] == "bin,freq,real_mean,fake_mean"
        loaded = read_csv(path)
        np.testing.assert_array_equal(loaded.freq, report.freq)
        for name in ('real_mean', 'fake_mean'):
            np.testing.assert_array_equal(loaded.series[name], report.series[name])

    def test_series_length_checked(self):
        report = SpectrumReport(bins=4, freq=bin_frequencies(4))
        with pytest.raises(SpectrumError, match="4 bins"):
            report.add('x', np.zeros(5))

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(SpectrumError, match="bin,freq"):
            read_csv(path)


class TestCorpusSpectrum:

    def test_counts_and_difference(self, grid_corpus):
        report = corpus_spectrum_stats(grid_corpus, bins=16)
        assert report.meta['n_real'] == 24
        assert report.meta['n_fake'] == 24
        assert report.meta['count'] == 48
        np.testing.assert_array_equal(
            report.series['fake_minus_real'], report.series['fake_mean'] - report.series['real_mean'],
        )

    def test_thread_count_does_not_change_result(self, grid_corpus):
        single = corpus_spectrum_stats(grid_corpus, bins=16, threads=1)
        pooled = corpus_spectrum_stats(grid_corpus, bins=16, threads=3)
        for name in single.series:
            np.testing.assert_array_equal(single.series[name], pooled.series[name])

    def test_split_selection(self, grid_corpus):
        report = corpus_spectrum_stats(grid_corpus, labels=(0,), split='test', bins=16)
        assert list(report.series) == ['real_mean']
        assert report.meta['count'] == 12

    def test_grid_raises_high_band(self, grid_corpus):
        report = corpus_spectrum_stats(grid_corpus, bins=16)
        assert high_band_mean(report.series['fake_minus_real'], report.freq) > 0

    def test_smoothing_lowers_high_band(self, smooth_corpus):
        report = corpus_spectrum_stats(smooth_corpus, bins=16)
        assert high_band_mean(report.series['fake_minus_real'], report.freq) < 0

    def test_unknown_kind_selects_nothing(self, grid_corpus):
        with pytest.raises(SpectrumError, match="no samples"):
            corpus_spectrum_stats(grid_corpus, labels=(1,), kinds=['smooth'])


class TestFeatureSpectrum:

    @pytest.fixture(scope="class")
    def micro(self):
        return build(preset('micro'), SeededRng(5))

    @pytest.fixture
    def images(self, rng):
        return Tensor(rng.uniform(-1, 1, (2, 3, 64, 64)))

    def test_one_tap_one_series(self, micro, images):
        report = feature_depth_profile(micro, images, ['stage1'], bins=8)
        assert list(report.series) == ['stage1']
        assert report.meta['count'] == 2

    def test_series_ordered_shallow_to_deep(self, micro, images):
        report = feature_depth_profile(micro, images, ['stage2', 'stage1.block1', 'stage1'], bins=8)
        assert list(report.series) == ['stage1.block1', 'stage1', 'stage2']

    def test_matches_composition(self, micro, images):
        report = feature_depth_profile(micro, images, ['stage1'], bins=8)
        with no_tape():
            _, features = forward(micro, images, ['stage1'])
        amp = amplitude_spectrum(features['stage1'].data.astype(np.float64)).mean(axis=(0, 1))
        expected = relative_log_amplitude(radial_profile(amp, 8).values)
        np.testing.assert_allclose(report.series['stage1'], expected, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(feature_map_profile(features['stage1'].data, 8), expected, rtol=1e-12)

    def test_identity_block_keeps_curve(self, images):
        model = build(preset('micro'), SeededRng(5))
        mka, mfa = model.stages[0][0]
        for param in (mka.gate.weight, mka.gate.bias, mfa.fc2.weight, mfa.fc2.bias):
            param.data[...] = 0.0
        report = feature_depth_profile(model, images, ['stage1.stem', 'stage1.block1'], bins=8)
        np.testing.assert_array_equal(report.series['stage1.stem'], report.series['stage1.block1'])

    def test_invalid_tap(self, micro, images):
        with pytest.raises(SpectrumError, match="invalid taps"):
            feature_depth_profile(micro, images, ['stage9'])

    def test_too_small_map(self, micro, images):
        with pytest.raises(SpectrumError, match="too small"):
            feature_depth_profile(micro, Tensor(np.zeros((1, 3, 32, 32))), ['stage4'])
