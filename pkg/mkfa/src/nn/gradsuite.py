"""
Op-level gradient suite

Every differentiable op and both blocks are checked against central
differences in 64-bit mode on several seeded random shapes. Tensor-valued
outputs are reduced to a scalar through a fixed random projection so that
every output coordinate contributes to the checked gradient.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..tensor.core import Parameter, Tensor, float64_mode
from ..tensor.gradcheck import GradCheckReport, grad_check
from ..tensor.ops import (
    activation, concat_channels, conv2d, cross_entropy_smoothed, elementwise, linear,
    norm_channels, select_logit, spatial_mean, split_channels, sum_all,
)
from ..tensor.rng import SeededRng
from .blocks import init_mfa, init_mka, init_se, init_stem, mf_scale, mfa_forward, mka_forward, se_forward, stem_forward

log = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-5
SHAPES_PER_OP = 5

Case = Tuple[Callable[[Tensor], Tensor], Tensor, List[Tensor], str]


@dataclass
class GradCaseResult:
    op: str
    shape: str
    report: GradCheckReport

    @property
    def passed(self) -> bool:
        return self.report.passed


def _projected(op: Callable[[Tensor], Tensor], rng: SeededRng) -> Callable[[Tensor], Tensor]:
    """x ↦ Σ proj ⊙ op(x) with proj drawn once, at the first call"""
    cache: Dict[str, Tensor] = {}

    def fn(x: Tensor) -> Tensor:
        out = op(x)
        if 'proj' not in cache:
            cache['proj'] = Tensor(rng.normal(out.shape))
        return sum_all(elementwise('mul', out, cache['proj']))

    return fn


def _dims(rng: SeededRng, channels=(1, 4), spatial=(3, 7)) -> Tuple[int, int, int, int]:
    n = int(rng.integers(1, 3))
    c = int(rng.integers(channels[0], channels[1] + 1))
    h = int(rng.integers(spatial[0], spatial[1] + 1))
    w = int(rng.integers(spatial[0], spatial[1] + 1))
    return n, c, h, w


def _away_from_zero(values: np.ndarray, margin: float = 0.1) -> np.ndarray:
    return np.sign(values) * (margin + np.abs(values))


# conv layouts: (kernel, stride, padding, dilation, depthwise)
_CONV_LAYOUTS = [
    (3, 1, 1, 1, False),
    (3, 2, 1, 1, False),
    (3, 1, 2, 2, False),
    (7, 1, 3, 1, True),
    (3, 1, 3, 3, True),
]


def _conv_case(rng: SeededRng, index: int) -> Case:
    kernel, stride, padding, dilation, depthwise = _CONV_LAYOUTS[index % len(_CONV_LAYOUTS)]
    n, c, h, w = _dims(rng, channels=(1, 3), spatial=(4, 7))
    c_out = c if depthwise else int(rng.integers(1, 4))
    groups = c if depthwise else 1
    weight = Parameter("conv.weight", rng.normal((c_out, c // groups, kernel, kernel), scale=0.5))
    bias = Parameter("conv.bias", rng.normal(c_out))
    fn = _projected(
        lambda x: conv2d(x, weight, bias, stride=stride, padding=padding, dilation=dilation, groups=groups),
        rng.split('proj'),
    )
    shape = f"{n}x{c}x{h}x{w} k{kernel} s{stride} p{padding} d{dilation} g{groups}"
    return fn, Tensor(rng.normal((n, c, h, w))), [weight, bias], shape


def _activation_case(kind: str) -> Callable[[SeededRng, int], Case]:
    def build(rng: SeededRng, index: int) -> Case:
        dims = _dims(rng)
        x = rng.normal(dims)
        if kind == 'relu':
            x = _away_from_zero(x)
        fn = _projected(lambda t: activation(kind, t), rng.split('proj'))
        return fn, Tensor(x), [], "x".join(map(str, dims))
    return build


def _norm_case(rng: SeededRng, index: int) -> Case:
    dims = _dims(rng, channels=(3, 6))
    c = dims[1]
    gamma = Parameter("norm.weight", 1.0 + 0.3 * rng.normal(c))
    beta = Parameter("norm.bias", rng.normal(c))
    fn = _projected(lambda x: norm_channels(x, gamma, beta), rng.split('proj'))
    return fn, Tensor(rng.normal(dims)), [gamma, beta], "x".join(map(str, dims))


def _split_case(rng: SeededRng, index: int) -> Case:
    n, c, h, w = _dims(rng, channels=(3, 6))
    first = int(rng.integers(1, c - 1))
    second = int(rng.integers(1, c - first))
    sizes = [first, second, c - first - second]
    projections = [Tensor(rng.normal((n, s, h, w))) for s in sizes]

    def fn(x: Tensor) -> Tensor:
        terms = [sum_all(elementwise('mul', part, proj)) for part, proj in zip(split_channels(x, sizes), projections)]
        total = terms[0]
        for term in terms[1:]:
            total = elementwise('add', total, term)
        return total

    return fn, Tensor(rng.normal((n, c, h, w))), [], f"{n}x{c}x{h}x{w} sizes {sizes}"


def _concat_case(rng: SeededRng, index: int) -> Case:
    n, c, h, w = _dims(rng)
    other = Parameter("concat.other", rng.normal((n, int(rng.integers(1, 4)), h, w)))
    fn = _projected(lambda x: concat_channels([x, other]), rng.split('proj'))
    return fn, Tensor(rng.normal((n, c, h, w))), [other], f"{n}x{c}x{h}x{w} + {other.shape[1]} channels"


def _mean_case(rng: SeededRng, index: int) -> Case:
    dims = _dims(rng)
    fn = _projected(spatial_mean, rng.split('proj'))
    return fn, Tensor(rng.normal(dims)), [], "x".join(map(str, dims))


def _elementwise_case(kind: str) -> Callable[[SeededRng, int], Case]:
    def build(rng: SeededRng, index: int) -> Case:
        n, c, h, w = _dims(rng)
        other_shape = [(n, c, h, w), (n, c, 1, 1), (1, c, 1, 1)][index % 3]
        other = Parameter(f"{kind}.other", rng.normal(other_shape))
        fn = _projected(lambda x: elementwise(kind, x, other), rng.split('proj'))
        return fn, Tensor(rng.normal((n, c, h, w))), [other], f"{n}x{c}x{h}x{w} ∘ {'x'.join(map(str, other_shape))}"
    return build


def _linear_case(rng: SeededRng, index: int) -> Case:
    n, c = int(rng.integers(1, 4)), int(rng.integers(1, 6))
    k = int(rng.integers(2, 4))
    weight = Parameter("fc.weight", rng.normal((c, k)))
    bias = Parameter("fc.bias", rng.normal(k))
    fn = _projected(lambda x: linear(x, weight, bias), rng.split('proj'))
    return fn, Tensor(rng.normal((n, c, 1, 1))), [weight, bias], f"{n}x{c} → {k}"


def _cross_entropy_case(rng: SeededRng, index: int) -> Case:
    n, k = int(rng.integers(1, 6)), int(rng.integers(2, 4))
    labels = rng.integers(0, k, n)
    epsilon = [0.0, 0.1, 0.3, 0.05, 0.2][index % 5]
    return (
        lambda x: cross_entropy_smoothed(x, labels, epsilon),
        Tensor(rng.normal((n, k))), [], f"{n}x{k} ε={epsilon}",
    )


def _select_case(rng: SeededRng, index: int) -> Case:
    n, k = int(rng.integers(1, 5)), int(rng.integers(2, 4))
    target = int(rng.integers(0, k))
    return lambda x: select_logit(x, target), Tensor(rng.normal((n, k))), [], f"{n}x{k} class {target}"


def _mf_case(two_param: bool) -> Callable[[SeededRng, int], Case]:
    def build(rng: SeededRng, index: int) -> Case:
        dims = _dims(rng, channels=(1, 5))
        c = dims[1]
        gamma = Parameter("mf.gamma", rng.normal(c))
        wrt = [gamma]
        z_dc = z_l = None
        if two_param:
            z_dc = Parameter("mf.z_dc", 1.0 + 0.5 * rng.normal(c))
            z_l = Parameter("mf.z_l", 1.0 + 0.5 * rng.normal(c))
            wrt += [z_dc, z_l]
        fn = _projected(lambda y: mf_scale(y, gamma, z_dc, z_l), rng.split('proj'))
        return fn, Tensor(rng.normal(dims)), wrt, "x".join(map(str, dims))
    return build


def _se_case(rng: SeededRng, index: int) -> Case:
    n, _, h, w = _dims(rng)
    c = 4 * int(rng.integers(1, 3))
    params = init_se("se", c, rng.split('init'))
    fn = _projected(lambda x: se_forward(x, params), rng.split('proj'))
    return fn, Tensor(rng.normal((n, c, h, w))), params.parameters(), f"{n}x{c}x{h}x{w}"


_MKA_VARIANT_CYCLE = ('multi_dw7', 'multi_dw7', 'single_dw7', 'gating_only', 'multi_dw7')


def _mka_case(rng: SeededRng, index: int) -> Case:
    variant = _MKA_VARIANT_CYCLE[index % len(_MKA_VARIANT_CYCLE)]
    n, _, h, w = _dims(rng, spatial=(4, 6))
    c = int(rng.integers(4, 7))
    params = init_mka("mka", c, rng.split('init'), variant=variant)
    _randomize(params.parameters(), rng.split('perturb'))
    fn = _projected(lambda x: mka_forward(x, params), rng.split('proj'))
    return fn, Tensor(rng.normal((n, c, h, w))), params.parameters(), f"{n}x{c}x{h}x{w} {variant}"


_MFA_LAYOUTS = (('ffn_mf', 'literal_dc'), ('ffn_mf', 'two_param'), ('ffn_mf', 'literal_dc'),
                ('ffn_se', 'literal_dc'), ('ffn_only', 'literal_dc'))


def _mfa_case(rng: SeededRng, index: int) -> Case:
    variant, mf_variant = _MFA_LAYOUTS[index % len(_MFA_LAYOUTS)]
    n, _, h, w = _dims(rng, spatial=(3, 5))
    c = 2 if variant == 'ffn_se' else int(rng.integers(2, 4))
    ratio = 2
    params = init_mfa("mfa", c, ratio, rng.split('init'), variant, mf_variant)
    # γ starts at zero; move it so its own gradient path is exercised
    _randomize(params.parameters(), rng.split('perturb'))
    fn = _projected(lambda x: mfa_forward(x, params), rng.split('proj'))
    return fn, Tensor(rng.normal((n, c, h, w))), params.parameters(), f"{n}x{c}x{h}x{w} {variant}/{mf_variant}"


def _stem_case(rng: SeededRng, index: int) -> Case:
    stage = 1 if index % 2 == 0 else 2
    factor = 4 if stage == 1 else 2
    n = int(rng.integers(1, 3))
    c_in = 3 if stage == 1 else int(rng.integers(2, 4))
    c_out = 8 if stage == 1 else 2 * int(rng.integers(2, 4))
    h, w = factor * int(rng.integers(1, 3)), factor * int(rng.integers(1, 3))
    params = init_stem("stem", stage, c_in, c_out, rng.split('init'))
    _randomize(params.parameters(), rng.split('perturb'))
    fn = _projected(lambda x: stem_forward(x, params), rng.split('proj'))
    return fn, Tensor(rng.normal((n, c_in, h, w))), params.parameters(), f"{n}x{c_in}x{h}x{w} stage {stage}"


def _randomize(params: Sequence[Parameter], rng: SeededRng, scale: float = 0.3) -> None:
    for p in params:
        p.data = p.data + scale * rng.split(p.name).normal(p.shape)


SUITE: Dict[str, Callable[[SeededRng, int], Case]] = {
    'conv2d': _conv_case,
    'silu': _activation_case('silu'),
    'gelu': _activation_case('gelu'),
    'sigmoid': _activation_case('sigmoid'),
    'relu': _activation_case('relu'),
    'norm_channels': _norm_case,
    'split_channels': _split_case,
    'concat_channels': _concat_case,
    'spatial_mean': _mean_case,
    'add': _elementwise_case('add'),
    'sub': _elementwise_case('sub'),
    'mul': _elementwise_case('mul'),
    'linear': _linear_case,
    'cross_entropy_smoothed': _cross_entropy_case,
    'select_logit': _select_case,
    'mf_scale': _mf_case(two_param=False),
    'mf_scale_two_param': _mf_case(two_param=True),
    'se_forward': _se_case,
    'stem_forward': _stem_case,
    'mka_forward': _mka_case,
    'mfa_forward': _mfa_case,
}


def run_suite(
    seed: int = 0,
    shapes_per_op: int = SHAPES_PER_OP,
    tolerance: float = DEFAULT_TOLERANCE,
    ops: Optional[Sequence[str]] = None,
) -> List[GradCaseResult]:
    """Check every op in `ops` (default: all) on `shapes_per_op` seeded shapes"""
    names = list(ops or SUITE)
    unknown = sorted(set(names) - set(SUITE))
    if unknown:
        raise ValueError(f"unknown ops {unknown}, expected some of {sorted(SUITE)}")

    root = SeededRng(seed)
    results: List[GradCaseResult] = []
    with float64_mode():
        for name in names:
            for index in range(shapes_per_op):
                fn, point, wrt, shape = SUITE[name](root.split(name, index), index)
                report = grad_check(fn, point, tolerance=tolerance, wrt=wrt)
                results.append(GradCaseResult(name, shape, report))
                status = "✅" if report.passed else "❌"
                log.info(f"{status} {name} [{shape}]: max rel err {report.max_rel_error:.2e}")
    return results


def suite_passed(results: Sequence[GradCaseResult]) -> bool:
    return all(r.passed for r in results)
