"""
Tests for the tensor engine: ops, tape and gradient checker
"""
import math

import numpy as np
import pytest

from mkfa.src.tensor.core import Parameter, Tape, Tensor, float64_mode, is_float64, no_tape
from mkfa.src.tensor.gradcheck import grad_check, relative_error
from mkfa.src.tensor.ops import (
    activation, concat_channels, conv2d, cross_entropy_smoothed, elementwise, linear,
    norm_channels, select_logit, spatial_mean, split_channels, sum_all,
)
from mkfa.src.tensor.rng import SeededRng
from mkfa.src.utils.errors import NonFiniteError, ShapeError, TapeError


@pytest.fixture
def rng():
    return SeededRng(1234)


@pytest.fixture
def grid3():
    return Tensor(np.arange(1, 10, dtype=np.float64).reshape(1, 1, 3, 3))


def _ones_kernel():
    return Tensor(np.ones((1, 1, 3, 3)))


class TestConv2d:
    """Sliding-window cross-correlation"""

    def test_same_padding_sums(self, grid3):
        out = conv2d(grid3, _ones_kernel(), padding=1, groups=1).data
        assert out.shape == (1, 1, 3, 3)
        assert out[0, 0, 1, 1] == pytest.approx(45.0)
        assert out[0, 0, 0, 0] == pytest.approx(12.0)

    def test_dilation_only_center_tap_in_bounds(self, grid3):
        out = conv2d(grid3, _ones_kernel(), padding=2, dilation=2).data
        assert out.shape == (1, 1, 3, 3)
        assert out[0, 0, 1, 1] == pytest.approx(5.0)

    @pytest.mark.parametrize("k", [1, 3, 5, 7])
    def test_delta_kernel_is_identity(self, rng, k):
        x = Tensor(rng.normal((2, 3, 9, 9)))
        kernel = np.zeros((3, 1, k, k))
        kernel[:, 0, k // 2, k // 2] = 1.0
        out = conv2d(x, Tensor(kernel), padding=(k - 1) // 2, groups=3)
        np.testing.assert_array_equal(out.data, x.data)

    @pytest.mark.parametrize("stride,padding,dilation,kernel", [
        (1, 0, 1, 3), (2, 1, 1, 3), (1, 3, 1, 7), (1, 6, 2, 7), (2, 2, 3, 3),
    ])
    def test_output_extent(self, rng, stride, padding, dilation, kernel):
        x = Tensor(rng.normal((1, 2, 11, 13)))
        w = Tensor(rng.normal((4, 2, kernel, kernel)))
        out = conv2d(x, w, stride=stride, padding=padding, dilation=dilation)
        expect = lambda size: (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1
        assert out.shape == (1, 4, expect(11), expect(13))

    def test_depthwise_equals_per_channel_convs(self, rng):
        x = Tensor(rng.normal((4, 6, 8, 8)))
        w = Tensor(rng.normal((6, 1, 3, 3)))
        b = Tensor(rng.normal(6))
        grouped = conv2d(x, w, b, padding=1, groups=6).data
        for c in range(6):
            single = conv2d(
                Tensor(x.data[:, c:c + 1]), Tensor(w.data[c:c + 1]), Tensor(b.data[c:c + 1]), padding=1,
            ).data
            np.testing.assert_allclose(grouped[:, c:c + 1], single, rtol=1e-5, atol=1e-5)

    def test_groups_must_divide_channels(self, rng):
        x = Tensor(rng.normal((1, 6, 5, 5)))
        with pytest.raises(ShapeError, match="input channels 6"):
            conv2d(x, Tensor(rng.normal((4, 1, 3, 3))), groups=4)

    def test_weight_channel_mismatch(self, rng):
        x = Tensor(rng.normal((1, 4, 5, 5)))
        with pytest.raises(ShapeError, match="input channels per group"):
            conv2d(x, Tensor(rng.normal((2, 3, 3, 3))))

    def test_deterministic(self, rng):
        x = Tensor(rng.normal((2, 4, 7, 7)))
        w = Tensor(rng.normal((4, 1, 7, 7)))
        a = conv2d(x, w, padding=6, dilation=2, groups=4).data
        b = conv2d(x, w, padding=6, dilation=2, groups=4).data
        np.testing.assert_array_equal(a, b)


class TestActivation:

    def test_silu_values(self):
        with float64_mode():
            out = activation('silu', Tensor(np.array([0.0, 1.0]).reshape(1, 2, 1, 1))).data.ravel()
        assert out[0] == 0.0
        assert out[1] == pytest.approx(0.731059, abs=1e-6)

    def test_gelu_is_exact_cdf_form(self):
        with float64_mode():
            out = activation('gelu', Tensor(np.ones((1, 1, 1, 1)))).item()
        assert out == pytest.approx(0.841345, abs=1e-6)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            activation('tanh', Tensor(np.zeros((1, 1, 1, 1))))


class TestNormChannels:

    def test_two_channel_standardization(self):
        with float64_mode():
            x = Tensor(np.array([1.0, 3.0]).reshape(1, 2, 1, 1))
            out = norm_channels(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-12).data.ravel()
        np.testing.assert_allclose(out, [-1.0, 1.0], atol=1e-9)

    def test_constant_input_gives_beta(self):
        x = Tensor(np.full((2, 3, 4, 4), 5.0))
        beta = np.array([0.5, -1.0, 2.0])
        out = norm_channels(x, Tensor(np.array([3.0, 3.0, 3.0])), Tensor(beta)).data
        np.testing.assert_allclose(out, np.broadcast_to(beta.reshape(1, 3, 1, 1), out.shape), atol=1e-6)

    def test_idempotent_on_standardized_input(self, rng):
        with float64_mode():
            x = Tensor(rng.normal((2, 5, 3, 3)))
            ones, zeros = Tensor(np.ones(5)), Tensor(np.zeros(5))
            once = norm_channels(x, ones, zeros)
            twice = norm_channels(once, ones, zeros)
        np.testing.assert_allclose(twice.data, once.data, atol=1e-5)

    def test_rejects_non_positive_eps(self):
        x = Tensor(np.zeros((1, 2, 1, 1)))
        with pytest.raises(ValueError, match="eps"):
            norm_channels(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=0.0)

    def test_affine_length_checked(self):
        x = Tensor(np.zeros((1, 2, 1, 1)))
        with pytest.raises(ShapeError):
            norm_channels(x, Tensor(np.ones(3)), Tensor(np.zeros(3)))


class TestSplitConcat:

    def test_split_sizes_and_round_trip(self, rng):
        x = Tensor(rng.normal((2, 8, 5, 5)))
        parts = split_channels(x, (2, 2, 4))
        assert [p.shape[1] for p in parts] == [2, 2, 4]
        np.testing.assert_array_equal(concat_channels(parts).data, x.data)

    def test_single_channel_slabs(self, rng):
        x = Tensor(rng.normal((1, 3, 4, 4)))
        parts = split_channels(x, (1, 1, 1))
        for c, part in enumerate(parts):
            np.testing.assert_array_equal(part.data[:, 0], x.data[:, c])

    def test_sizes_must_sum_to_channels(self, rng):
        with pytest.raises(ShapeError, match="sum to 10"):
            split_channels(Tensor(rng.normal((1, 8, 2, 2))), (5, 5))

    def test_concat_single_part_is_identity(self, rng):
        x = Tensor(rng.normal((1, 4, 3, 3)))
        np.testing.assert_array_equal(concat_channels([x]).data, x.data)

    def test_concat_channel_count(self, rng):
        a, b = Tensor(rng.normal((2, 3, 4, 4))), Tensor(rng.normal((2, 5, 4, 4)))
        assert concat_channels([a, b]).shape[1] == 8

    def test_concat_spatial_mismatch(self, rng):
        a, b = Tensor(rng.normal((1, 1, 4, 4))), Tensor(rng.normal((1, 1, 4, 5)))
        with pytest.raises(ShapeError, match="part 1"):
            concat_channels([a, b])


class TestSpatialMean:

    def test_values(self):
        x = Tensor(np.array([[1.0, 3.0], [5.0, 7.0]]).reshape(1, 1, 2, 2))
        out = spatial_mean(x)
        assert out.shape == (1, 1, 1, 1)
        assert out.item() == 4.0

    def test_constant_map(self):
        out = spatial_mean(Tensor(np.full((2, 3, 5, 5), 0.25)))
        np.testing.assert_array_equal(out.data, np.full((2, 3, 1, 1), 0.25, dtype=out.dtype))

    def test_gradient_is_uniform(self, rng):
        with float64_mode():
            x = Tensor(rng.normal((1, 2, 3, 4)), requires_grad=True)
            with Tape() as tape:
                out = sum_all(spatial_mean(x))
            tape.backward(out)
        np.testing.assert_allclose(x.grad, np.full(x.shape, 1 / 12))


class TestElementwise:

    def test_identities(self, rng):
        a = Tensor(rng.normal((2, 3, 4, 4)))
        np.testing.assert_array_equal(elementwise('mul', a, Tensor(np.ones(a.shape))).data, a.data)
        np.testing.assert_array_equal(elementwise('add', a, Tensor(np.zeros(a.shape))).data, a.data)

    @pytest.mark.parametrize("b_shape", [(2, 3, 1, 1), (1, 3, 1, 1)])
    def test_channel_broadcast_matches_expansion(self, rng, b_shape):
        a = Tensor(rng.normal((2, 3, 4, 5)))
        b = Tensor(rng.normal(b_shape))
        expanded = Tensor(np.broadcast_to(b.data, a.shape).copy())
        np.testing.assert_array_equal(elementwise('mul', a, b).data, elementwise('mul', a, expanded).data)

    def test_broadcast_gradient_is_reduce_summed(self, rng):
        with float64_mode():
            a = Tensor(rng.normal((2, 3, 4, 5)), requires_grad=True)
            b = Tensor(rng.normal((1, 3, 1, 1)), requires_grad=True)
            with Tape() as tape:
                out = sum_all(elementwise('mul', a, b))
            tape.backward(out)
        np.testing.assert_allclose(b.grad, a.data.sum(axis=(0, 2, 3), keepdims=True))
        np.testing.assert_allclose(a.grad, np.broadcast_to(b.data, a.shape))

    def test_incompatible_shapes(self, rng):
        with pytest.raises(ShapeError, match="incompatible"):
            elementwise('add', Tensor(rng.normal((1, 3, 4, 4))), Tensor(rng.normal((1, 3, 4, 1))))

    def test_overflow_is_rejected(self):
        big = Tensor(np.full((1, 1, 1, 1), 1e30))
        if is_float64():
            pytest.skip("float32 overflow case")
        with pytest.raises(NonFiniteError):
            elementwise('mul', big, big)


class TestLinear:

    def test_identity_weight(self, rng):
        x = Tensor(rng.normal((3, 4, 1, 1)))
        out = linear(x, Tensor(np.eye(4)), Tensor(np.zeros(4)))
        np.testing.assert_array_equal(out.data, x.data.reshape(3, 4))

    def test_zero_weight_gives_bias(self, rng):
        x = Tensor(rng.normal((3, 4, 1, 1)))
        bias = np.array([0.5, -2.0])
        out = linear(x, Tensor(np.zeros((4, 2))), Tensor(bias))
        np.testing.assert_array_equal(out.data, np.tile(bias, (3, 1)).astype(out.dtype))

    def test_feature_mismatch(self, rng):
        with pytest.raises(ShapeError, match="features"):
            linear(Tensor(rng.normal((2, 5, 1, 1))), Tensor(np.zeros((4, 2))), Tensor(np.zeros(2)))

    def test_gradient(self, rng):
        with float64_mode():
            weight = Parameter("fc.weight", rng.normal((6, 3)))
            bias = Parameter("fc.bias", rng.normal(3))
            proj = Tensor(rng.normal((2, 3)))
            report = grad_check(
                lambda x: sum_all(elementwise('mul', linear(x, weight, bias), proj)),
                Tensor(rng.normal((2, 6, 1, 1))), wrt=[weight, bias],
            )
        assert report.max_rel_error < 1e-6


class TestCrossEntropy:

    @pytest.mark.parametrize("label,eps", [(0, 0.0), (1, 0.1), (1, 0.5)])
    def test_uniform_logits_give_ln2(self, label, eps):
        with float64_mode():
            loss = cross_entropy_smoothed(Tensor(np.zeros((1, 2))), [label], eps)
        assert loss.item() == pytest.approx(math.log(2), abs=1e-12)

    def test_confident_correct_logits(self):
        with float64_mode():
            loss = cross_entropy_smoothed(Tensor(np.array([[20.0, 0.0]])), [0], 0.0)
        assert loss.item() < 1e-6

    def test_out_of_range_label(self):
        with pytest.raises(ValueError, match="outside"):
            cross_entropy_smoothed(Tensor(np.zeros((2, 2))), [0, 2], 0.1)

    def test_gradient(self, rng):
        report = grad_check(
            lambda z: cross_entropy_smoothed(z, [1, 0, 1], 0.1),
            Tensor(rng.normal((3, 2))),
        )
        assert report.max_rel_error < 1e-6


class TestTape:

    def test_silu_gradient_at_zero(self):
        x = Tensor(np.zeros((1, 2, 2, 2)), requires_grad=True)
        with Tape() as tape:
            out = sum_all(activation('silu', x))
        tape.backward(out)
        np.testing.assert_allclose(x.grad, np.full(x.shape, 0.5))

    def test_add_constant_gradient_is_ones(self, rng):
        x = Tensor(rng.normal((1, 2, 3, 3)), requires_grad=True)
        c = Tensor(rng.normal((1, 2, 3, 3)))
        with Tape() as tape:
            out = sum_all(elementwise('add', x, c))
        tape.backward(out)
        np.testing.assert_array_equal(x.grad, np.ones(x.shape))

    def test_second_backward_doubles(self, rng):
        p = Parameter("p", rng.normal((1, 3, 2, 2)))
        with Tape() as tape:
            out = sum_all(activation('gelu', p))
        tape.backward(out)
        first = p.grad.copy()
        tape.backward(out)
        np.testing.assert_allclose(p.grad, 2 * first, rtol=1e-6)

    def test_intermediate_gradient_is_retrievable(self, rng):
        x = Tensor(rng.normal((1, 2, 3, 3)), requires_grad=True)
        with Tape() as tape:
            hidden = activation('relu', x)
            out = sum_all(elementwise('mul', hidden, Tensor(np.full(x.shape, 3.0))))
        tape.backward(out)
        np.testing.assert_array_equal(tape.grad(hidden), np.full(x.shape, 3.0))

    def test_backward_before_forward(self):
        with pytest.raises(TapeError, match="before any forward"):
            Tape().backward(Tensor(0.0))

    def test_non_scalar_output(self, rng):
        x = Tensor(rng.normal((1, 2, 2, 2)), requires_grad=True)
        with Tape() as tape:
            out = activation('relu', x)
        with pytest.raises(TapeError, match="scalar"):
            tape.backward(out)

    def test_no_tape_records_nothing(self, rng):
        x = Tensor(rng.normal((1, 2, 2, 2)), requires_grad=True)
        with Tape() as tape:
            with no_tape():
                activation('silu', x)
        assert len(tape) == 0

    def test_select_logit_gradient(self, rng):
        logits = Tensor(rng.normal((3, 2)), requires_grad=True)
        with Tape() as tape:
            out = select_logit(logits, 1)
        tape.backward(out)
        np.testing.assert_array_equal(logits.grad, [[0, 1], [0, 1], [0, 1]])


class TestGradCheck:

    def test_sum_is_exact(self, rng):
        report = grad_check(sum_all, Tensor(rng.normal((1, 2, 3, 3))))
        assert report.max_rel_error < 1e-8
        assert report.n_coords == 18

    def test_conv_gradient(self, rng):
        with float64_mode():
            weight = Parameter("w", rng.normal((4, 3, 3, 3)))
            bias = Parameter("b", rng.normal(4))
            proj = Tensor(rng.normal((2, 4, 5, 5)))
            report = grad_check(
                lambda x: sum_all(elementwise('mul', conv2d(x, weight, bias, padding=1), proj)),
                Tensor(rng.normal((2, 3, 5, 5))), step=1e-5, wrt=[weight, bias],
            )
        assert report.max_rel_error < 1e-6
        assert set(report.per_tensor) == {'input', 'w', 'b'}

    def test_rejects_float32_parameters(self, rng):
        weight = Parameter("w", rng.normal((1, 1, 1, 1)))
        if is_float64():
            pytest.skip("parameter already 64-bit")
        with pytest.raises(TapeError, match="64-bit"):
            grad_check(sum_all, Tensor(np.zeros((1, 1, 1, 1))), wrt=[weight])

    def test_relative_error_floor(self):
        assert relative_error(0.0, 0.0) == 0.0
        assert relative_error(1e-12, 0.0) == pytest.approx(1e-4)


class TestSeededRng:

    def test_same_seed_same_stream(self):
        a = SeededRng(7).split('sample', 3).normal(16)
        b = SeededRng(7).split('sample', 3).normal(16)
        np.testing.assert_array_equal(a, b)

    def test_substreams_independent_of_creation_order(self):
        root = SeededRng(7)
        first = root.split('sample', 5).uniform(size=8)
        other = SeededRng(7)
        other.split('sample', 1).uniform(size=100)
        second = other.split('sample', 5).uniform(size=8)
        np.testing.assert_array_equal(first, second)

    def test_distinct_paths_differ(self):
        root = SeededRng(7)
        assert not np.array_equal(root.split(0).normal(8), root.split(1).normal(8))

    def test_truncated_normal_bounds(self):
        values = SeededRng(0).truncated_normal((1000,), std=0.5)
        assert np.abs(values).max() <= 1.0

    def test_negative_seed(self):
        with pytest.raises(ValueError):
            SeededRng(-1)
