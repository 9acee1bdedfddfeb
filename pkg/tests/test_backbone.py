"""
Tests for presets, model assembly, forward taps and parameter accounting
"""
import numpy as np
import pytest

from mkfa.src.backbone.config import PRESET_NAMES, ArchConfig, preset
from mkfa.src.backbone.count import count_params
from mkfa.src.backbone.model import available_taps, build, forward
from mkfa.src.tensor.core import Tensor
from mkfa.src.tensor.rng import SeededRng
from mkfa.src.utils.errors import ConfigError, ShapeError

TINY_PARAMS = 4_207_010
SMALL_PARAMS = 18_978_370


@pytest.fixture(scope="module")
def micro():
    return build(preset('micro'), SeededRng(0))


@pytest.fixture
def rng():
    return SeededRng(17)


def _random_config(rng: SeededRng) -> ArchConfig:
    dims = tuple(int(2 * rng.integers(2, 24)) for _ in range(4))
    return ArchConfig(
        dims=dims,
        depths=tuple(int(rng.integers(1, 4)) for _ in range(4)),
        mlp_ratios=tuple(int(rng.integers(1, 5)) for _ in range(4)),
        mf_variant=('literal_dc', 'two_param')[int(rng.integers(0, 2))],
        mka_variant=('multi_dw7', 'single_dw7', 'gating_only')[int(rng.integers(0, 3))],
        mfa_variant=('ffn_mf', 'ffn_only')[int(rng.integers(0, 2))],
    )


class TestPresets:

    def test_tiny(self):
        config = preset('tiny')
        assert config.dims == (32, 64, 128, 256)
        assert config.depths == (3, 3, 12, 2)
        assert config.mlp_ratios == (8, 8, 4, 4)

    def test_small(self):
        config = preset('small')
        assert config.dims == (64, 128, 320, 512)
        assert config.depths == (2, 3, 10, 2)

    def test_micro_is_desk_scale(self):
        config = preset('micro')
        assert config.dims == (16, 32, 64, 128)
        assert config.mlp_ratios == (4, 4, 4, 4)
        assert config.provenance == 'desk'
        assert preset('tiny').provenance != 'desk'

    def test_unknown(self):
        with pytest.raises(ConfigError, match="unknown preset"):
            preset('huge')

    def test_json_round_trip(self):
        config = preset('small')
        assert ArchConfig.from_dict(config.to_dict()) == config

    @pytest.mark.parametrize("override", [
        {'dims': (16, 32, 64)}, {'depths': (1, 0, 1, 1)}, {'mlp_ratios': (0, 4, 4, 4)},
        {'split_proportions': (0.5, 0.5, 0.5)}, {'mf_variant': 'both'}, {'dims': (15, 32, 64, 128)},
    ])
    def test_invalid_fields(self, override):
        data = preset('micro').to_dict()
        data.update({k: list(v) if isinstance(v, tuple) else v for k, v in override.items()})
        with pytest.raises(ConfigError):
            ArchConfig.from_dict(data)


class TestCountParams:

    def test_published_presets_pinned(self):
        assert count_params(preset('tiny'))[0] == TINY_PARAMS
        assert count_params(preset('small'))[0] == SMALL_PARAMS

    @pytest.mark.parametrize("name,reported", [('tiny', 5_200_000), ('small', 19_800_000)])
    def test_within_tolerance_of_reported(self, name, reported):
        total, _ = count_params(preset(name))
        assert abs(total - reported) <= 0.3 * reported

    def test_breakdown_sums_to_total(self):
        total, breakdown = count_params(preset('tiny'))
        assert sum(breakdown.values()) == total
        assert set(breakdown) >= {'stem1', 'stage3.mka', 'stage4.mfa', 'head'}

    def test_micro_matches_registry(self, micro):
        assert count_params(micro.config)[0] == micro.num_params()

    def test_random_configs_match_registry(self, rng):
        for i in range(20):
            config = _random_config(rng.split(i))
            model = build(config, SeededRng(i))
            assert count_params(config)[0] == model.num_params(), config

    @pytest.mark.slow
    @pytest.mark.parametrize("name", ['tiny', 'small'])
    def test_published_presets_match_registry(self, name):
        config = preset(name)
        assert count_params(config)[0] == build(config, SeededRng(0)).num_params()

    def test_mka_variant_ordering(self):
        base = preset('micro')
        counts = {v: count_params(base.with_variants(v, 'ffn_mf'))[0]
                  for v in ('gating_only', 'single_dw7', 'multi_dw7')}
        assert counts['gating_only'] < counts['single_dw7'] <= counts['multi_dw7']


class TestBuild:

    def test_same_seed_same_weights(self):
        a = build(preset('micro'), SeededRng(3)).state_dict()
        b = build(preset('micro'), SeededRng(3)).state_dict()
        assert list(a) == list(b)
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_registry_names(self, micro):
        names = list(micro.registry)
        assert len(names) == len(set(names))
        assert 'stage1.block1.mka.gate.weight' in names
        assert 'stage4.block2.mfa.gamma' in names
        assert 'stem1.conv2.weight' in names
        assert sum(p.data.size for p in micro.parameters()) == micro.num_params()

    def test_gamma_initialized_to_zero(self, micro):
        for name, param in micro.registry.items():
            if name.endswith('.gamma'):
                np.testing.assert_array_equal(param.data, 0.0)

    def test_load_state_dict_checks_names(self, micro):
        state = micro.state_dict()
        state.pop('head.fc.bias')
        with pytest.raises(ConfigError, match="missing"):
            build(preset('micro'), SeededRng(1)).load_state_dict(state)


class TestForward:

    def test_micro_shapes(self, micro, rng):
        logits, features = forward(micro, Tensor(rng.uniform(-1, 1, (2, 3, 64, 64))), taps=['stage4'])
        assert logits.shape == (2, 2)
        assert features['stage4'].shape == (2, 128, 2, 2)

    def test_resolution_ladder(self, micro, rng):
        taps = ['stage1', 'stage2', 'stage3', 'stage4']
        _, features = forward(micro, Tensor(rng.uniform(-1, 1, (1, 3, 128, 128))), taps=taps)
        assert [features[t].shape[2] for t in taps] == [32, 16, 8, 4]

    @pytest.mark.slow
    def test_tiny_at_256(self, rng):
        model = build(preset('tiny'), SeededRng(0))
        taps = ['stage1', 'stage2', 'stage3', 'stage4']
        logits, features = forward(model, Tensor(rng.uniform(-1, 1, (1, 3, 256, 256))), taps=taps)
        assert logits.shape == (1, 2)
        assert [features[t].shape[2:] for t in taps] == [(64, 64), (32, 32), (16, 16), (8, 8)]

    def test_taps_do_not_change_logits(self, micro, rng):
        images = Tensor(rng.uniform(-1, 1, (2, 3, 32, 32)))
        plain, _ = forward(micro, images)
        tapped, features = forward(micro, images, taps=available_taps(micro.config))
        np.testing.assert_array_equal(plain.data, tapped.data)
        assert set(features) == set(available_taps(micro.config))

    def test_batch_consistency(self, micro, rng):
        images = rng.uniform(-1, 1, (3, 3, 32, 32))
        batched, _ = forward(micro, Tensor(images))
        for i in range(3):
            single, _ = forward(micro, Tensor(images[i:i + 1]))
            np.testing.assert_allclose(single.data[0], batched.data[i], atol=1e-5)

    def test_zero_weights_give_head_bias(self, rng):
        model = build(preset('micro'), SeededRng(2))
        for param in model.parameters():
            param.data[...] = 0.0
        model.head.bias.data[...] = [0.25, -0.5]
        logits, _ = forward(model, Tensor(rng.uniform(-1, 1, (3, 3, 32, 32))))
        np.testing.assert_array_equal(logits.data, np.tile([0.25, -0.5], (3, 1)).astype(logits.dtype))

    @pytest.mark.parametrize("shape", [(1, 3, 48, 64), (1, 1, 64, 64), (3, 64, 64)])
    def test_rejects_bad_input(self, micro, shape):
        with pytest.raises(ShapeError):
            forward(micro, Tensor(np.zeros(shape)))

    def test_unknown_tap(self, micro):
        with pytest.raises(ConfigError, match="unknown taps"):
            forward(micro, Tensor(np.zeros((1, 3, 32, 32))), taps=['stage5'])

    def test_available_taps_order(self):
        taps = available_taps(preset('micro'))
        assert taps[0] == 'stage1.stem'
        assert taps[-1] == 'head.pool'
        assert taps.index('stage1') < taps.index('stage2.stem')


def test_preset_names():
    assert set(PRESET_NAMES) == {'tiny', 'small', 'micro'}
