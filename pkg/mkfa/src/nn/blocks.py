"""
MkfaNet building blocks

MKA:  Z = X + SiLU(F(Norm X)) ⊙ SiLU(G(Y_C)),  Y_C = concat of dilated DW7×7 on channel slabs
MFA:  Y = GELU(DW3×3(fc1(Norm X))),  Z = fc2(MF(Y)) + X,  MF(Y) = DC + γ ⊙ (Y − DC)
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np

from ..tensor.core import Parameter, Tensor, record_op
from ..tensor.ops import (
    activation, concat_channels, conv2d, elementwise, norm_channels, spatial_mean, split_channels,
)
from ..tensor.rng import SeededRng
from ..utils.errors import ConfigError, ShapeError

log = logging.getLogger(__name__)

MkaVariant = Literal['multi_dw7', 'single_dw7', 'gating_only']
MfaVariant = Literal['ffn_mf', 'ffn_se', 'ffn_only']
MfVariant = Literal['literal_dc', 'two_param']

MKA_VARIANTS = ('multi_dw7', 'single_dw7', 'gating_only')
MFA_VARIANTS = ('ffn_mf', 'ffn_se', 'ffn_only')
MF_VARIANTS = ('literal_dc', 'two_param')

DILATIONS = (1, 2, 3)
DEFAULT_PROPORTIONS = (0.25, 0.25, 0.5)
NORM_EPS = 1e-6


# --- parameters ---------------------------------------------------------------

@dataclass
class Norm:
    weight: Parameter
    bias: Parameter

    def parameters(self) -> List[Parameter]:
        return [self.weight, self.bias]


@dataclass
class Conv:
    weight: Parameter
    bias: Parameter

    def parameters(self) -> List[Parameter]:
        return [self.weight, self.bias]


@dataclass
class MkaBlockParams:
    channels: int
    split: Tuple[int, int, int]
    norm: Norm
    gate: Conv
    proj: Conv
    dw: List[Conv] = field(default_factory=list)
    variant: str = 'multi_dw7'

    def parameters(self) -> List[Parameter]:
        params = self.norm.parameters() + self.gate.parameters()
        for conv in self.dw:
            params += conv.parameters()
        return params + self.proj.parameters()


@dataclass
class SeBlockParams:
    channels: int
    fc1: Conv
    fc2: Conv

    def parameters(self) -> List[Parameter]:
        return self.fc1.parameters() + self.fc2.parameters()


@dataclass
class MfaBlockParams:
    channels: int
    ratio: int
    norm: Norm
    fc1: Conv
    dw: Conv
    fc2: Conv
    gamma: Optional[Parameter] = None
    z_dc: Optional[Parameter] = None
    z_l: Optional[Parameter] = None
    se: Optional[SeBlockParams] = None
    variant: str = 'ffn_mf'

    @property
    def hidden(self) -> int:
        return self.channels * self.ratio

    def parameters(self) -> List[Parameter]:
        params = self.norm.parameters() + self.fc1.parameters() + self.dw.parameters()
        params += [p for p in (self.gamma, self.z_dc, self.z_l) if p is not None]
        if self.se is not None:
            params += self.se.parameters()
        return params + self.fc2.parameters()


@dataclass
class StemParams:
    stage: int
    convs: List[Conv]
    norms: List[Norm]

    def parameters(self) -> List[Parameter]:
        params: List[Parameter] = []
        for conv, norm in zip(self.convs, self.norms):
            params += conv.parameters() + norm.parameters()
        return params


# --- initialization -------------------------------------------------------------

def split_sizes(channels: int, proportions: Sequence[float] = DEFAULT_PROPORTIONS) -> Tuple[int, int, int]:
    """C_l, C_m by floor; rounding remainder goes to C_h"""
    if len(proportions) != 3:
        raise ConfigError(f"split proportions need 3 entries, got {list(proportions)}")
    c_l = int(math.floor(channels * proportions[0]))
    c_m = int(math.floor(channels * proportions[1]))
    c_h = channels - c_l - c_m
    if min(c_l, c_m, c_h) < 1:
        raise ShapeError(
            f"C={channels} too small to split by {tuple(proportions)}: slabs ({c_l}, {c_m}, {c_h})"
        )
    return c_l, c_m, c_h


def init_conv(name: str, c_in: int, c_out: int, kernel: int, rng: SeededRng, groups: int = 1) -> Conv:
    fan_in = (c_in // groups) * kernel * kernel
    std = math.sqrt(2.0 / fan_in)
    weight = rng.split(f"{name}.weight").truncated_normal((c_out, c_in // groups, kernel, kernel), std)
    return Conv(
        weight=Parameter(f"{name}.weight", weight),
        bias=Parameter(f"{name}.bias", np.zeros(c_out)),
    )


def init_norm(name: str, channels: int) -> Norm:
    return Norm(
        weight=Parameter(f"{name}.weight", np.ones(channels)),
        bias=Parameter(f"{name}.bias", np.zeros(channels)),
    )


def init_mka(
    prefix: str,
    channels: int,
    rng: SeededRng,
    proportions: Sequence[float] = DEFAULT_PROPORTIONS,
    variant: MkaVariant = 'multi_dw7',
) -> MkaBlockParams:
    if variant not in MKA_VARIANTS:
        raise ConfigError(f"unknown MKA variant '{variant}'")
    split = split_sizes(channels, proportions)
    if variant == 'multi_dw7':
        dw = [init_conv(f"{prefix}.dw{i + 1}", c, c, 7, rng, groups=c) for i, c in enumerate(split)]
    elif variant == 'single_dw7':
        dw = [init_conv(f"{prefix}.dw1", channels, channels, 7, rng, groups=channels)]
    else:
        dw = []
    return MkaBlockParams(
        channels=channels,
        split=split,
        norm=init_norm(f"{prefix}.norm", channels),
        gate=init_conv(f"{prefix}.gate", channels, channels, 1, rng),
        proj=init_conv(f"{prefix}.proj", channels, channels, 1, rng),
        dw=dw,
        variant=variant,
    )


def init_se(prefix: str, channels: int, rng: SeededRng) -> SeBlockParams:
    if channels % 4:
        raise ShapeError(f"SE block needs C divisible by 4, got C={channels}")
    return SeBlockParams(
        channels=channels,
        fc1=init_conv(f"{prefix}.fc1", channels, channels // 4, 1, rng),
        fc2=init_conv(f"{prefix}.fc2", channels // 4, channels, 1, rng),
    )


def init_mfa(
    prefix: str,
    channels: int,
    ratio: int,
    rng: SeededRng,
    variant: MfaVariant = 'ffn_mf',
    mf_variant: MfVariant = 'literal_dc',
) -> MfaBlockParams:
    if variant not in MFA_VARIANTS:
        raise ConfigError(f"unknown MFA variant '{variant}'")
    if mf_variant not in MF_VARIANTS:
        raise ConfigError(f"unknown mf_variant '{mf_variant}'")
    hidden = channels * ratio
    params = MfaBlockParams(
        channels=channels,
        ratio=ratio,
        norm=init_norm(f"{prefix}.norm", channels),
        fc1=init_conv(f"{prefix}.fc1", channels, hidden, 1, rng),
        dw=init_conv(f"{prefix}.dw", hidden, hidden, 3, rng, groups=hidden),
        fc2=init_conv(f"{prefix}.fc2", hidden, channels, 1, rng),
        variant=variant,
    )
    if variant == 'ffn_mf':
        params.gamma = Parameter(f"{prefix}.gamma", np.zeros(hidden))
        if mf_variant == 'two_param':
            params.z_dc = Parameter(f"{prefix}.z_dc", np.ones(hidden))
            params.z_l = Parameter(f"{prefix}.z_l", np.ones(hidden))
    elif variant == 'ffn_se':
        params.se = init_se(f"{prefix}.se", hidden, rng)
    return params


def init_stem(prefix: str, stage: int, c_in: int, c_out: int, rng: SeededRng) -> StemParams:
    """Stage 1: 3×3/2 conv to C/2, norm, 3×3/2 conv to C, norm. Later stages: one conv + norm"""
    if stage == 1:
        if c_out % 2:
            raise ConfigError(f"stage-1 width must be even, got C={c_out}")
        widths = [(c_in, c_out // 2), (c_out // 2, c_out)]
    else:
        widths = [(c_in, c_out)]
    convs = [init_conv(f"{prefix}.conv{k + 1}", a, b, 3, rng) for k, (a, b) in enumerate(widths)]
    norms = [init_norm(f"{prefix}.norm{k + 1}", b) for k, (_, b) in enumerate(widths)]
    return StemParams(stage=stage, convs=convs, norms=norms)


# --- forward --------------------------------------------------------------------

def _check_channels(x: Tensor, channels: int, what: str) -> None:
    if x.ndim != 4 or x.shape[1] != channels:
        raise ShapeError(f"{what}: expected N×{channels}×H×W input, got {x.shape}")


def _pointwise(x: Tensor, conv: Conv) -> Tensor:
    return conv2d(x, conv.weight, conv.bias)


def multi_kernel_features(x: Tensor, p: MkaBlockParams) -> Tensor:
    """Y_C: dilated depthwise 7×7 on the C_l / C_m / C_h slabs, concatenated"""
    _check_channels(x, p.channels, "multi_kernel_features")
    if p.variant == 'gating_only':
        return x
    if p.variant == 'single_dw7':
        conv = p.dw[0]
        return conv2d(x, conv.weight, conv.bias, padding=3, groups=p.channels)

    slabs = split_channels(x, p.split)
    outs = [
        conv2d(slab, conv.weight, conv.bias, padding=3 * d, dilation=d, groups=slab.shape[1])
        for slab, conv, d in zip(slabs, p.dw, DILATIONS)
    ]
    return concat_channels(outs)


def gated_aggregate(x_normed: Tensor, y_c: Tensor, p: MkaBlockParams) -> Tensor:
    if x_normed.shape != y_c.shape:
        raise ShapeError(f"gated_aggregate: gate input {x_normed.shape} vs features {y_c.shape}")
    gate = activation('silu', _pointwise(x_normed, p.gate))
    feat = activation('silu', _pointwise(y_c, p.proj))
    return elementwise('mul', gate, feat)


def mka_forward(x: Tensor, p: MkaBlockParams) -> Tensor:
    _check_channels(x, p.channels, "mka_forward")
    x_normed = norm_channels(x, p.norm.weight, p.norm.bias, NORM_EPS)
    y_c = multi_kernel_features(x_normed, p)
    return elementwise('add', x, gated_aggregate(x_normed, y_c, p))


def dc_hc_split(y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """64-bit DC (spatial mean, broadcast) and HC (residual) parts of an N×C×H×W array"""
    y64 = np.asarray(y, dtype=np.float64)
    dc = np.broadcast_to(y64.mean(axis=(2, 3), keepdims=True), y64.shape).copy()
    return dc, y64 - dc


def mf_scale(
    y: Tensor,
    gamma: Tensor,
    z_dc: Optional[Tensor] = None,
    z_l: Optional[Tensor] = None,
) -> Tensor:
    """
    MF(Y) = z_DC ⊙ m + γ ⊙ (Y − z_L ⊙ m), m the per-channel spatial mean

    Without z_DC / z_L (both 1) this is m + γ ⊙ (Y − m). Evaluated in 64-bit as
    γ·Y + (z_DC − γ·z_L)·m and rounded once, so γ=1 returns Y and γ=0 a constant map.
    """
    if y.ndim != 4:
        raise ShapeError(f"mf_scale: expected rank-4 input, got {y.shape}")
    n, c, h, w = y.shape
    for name, vec in (('gamma', gamma), ('z_dc', z_dc), ('z_l', z_l)):
        if vec is not None and vec.shape != (c,):
            raise ShapeError(f"mf_scale: {name} length {vec.shape} does not match C'={c}")
    if (z_dc is None) != (z_l is None):
        raise ShapeError("mf_scale: z_dc and z_l must be given together")

    def per_channel(t: Optional[Tensor]) -> np.ndarray:
        if t is None:
            return np.ones((1, c, 1, 1))
        return t.data.astype(np.float64).reshape(1, c, 1, 1)

    y64 = y.data.astype(np.float64)
    g4, zd4, zl4 = per_channel(gamma), per_channel(z_dc), per_channel(z_l)
    mean = y64.mean(axis=(2, 3), keepdims=True)
    mix = zd4 - g4 * zl4
    out = g4 * y64 + mix * mean

    def vjp(g: np.ndarray):
        g64 = g.astype(np.float64)
        g_sum = g64.sum(axis=(2, 3), keepdims=True)
        grad_y = g4 * g64 + mix * g_sum / (h * w)
        grad_gamma = (g64 * (y64 - zl4 * mean)).sum(axis=(0, 2, 3))
        if z_dc is None:
            return grad_y, grad_gamma
        grad_zdc = (g_sum * mean).sum(axis=(0, 2, 3))
        grad_zl = -(g_sum * g4 * mean).sum(axis=(0, 2, 3))
        return grad_y, grad_gamma, grad_zdc, grad_zl

    inputs = (y, gamma) if z_dc is None else (y, gamma, z_dc, z_l)
    return record_op('mf_scale', inputs, out, vjp)


def se_forward(x: Tensor, p: SeBlockParams) -> Tensor:
    """x ⊙ sigmoid(W2 relu(W1 mean(x)))"""
    _check_channels(x, p.channels, "se_forward")
    squeezed = spatial_mean(x)
    excited = activation('relu', _pointwise(squeezed, p.fc1))
    gate = activation('sigmoid', _pointwise(excited, p.fc2))
    return elementwise('mul', x, gate)


def mfa_forward(x: Tensor, p: MfaBlockParams) -> Tensor:
    _check_channels(x, p.channels, "mfa_forward")
    x_normed = norm_channels(x, p.norm.weight, p.norm.bias, NORM_EPS)
    hidden = _pointwise(x_normed, p.fc1)
    hidden = conv2d(hidden, p.dw.weight, p.dw.bias, padding=1, groups=p.hidden)
    y = activation('gelu', hidden)
    if p.variant == 'ffn_mf':
        y = mf_scale(y, p.gamma, p.z_dc, p.z_l)
    elif p.variant == 'ffn_se':
        y = se_forward(y, p.se)
    return elementwise('add', _pointwise(y, p.fc2), x)


def stem_forward(x: Tensor, p: StemParams, stage: Optional[int] = None) -> Tensor:
    stage = p.stage if stage is None else stage
    if x.ndim != 4:
        raise ShapeError(f"stem {stage}: expected rank-4 input, got {x.shape}")
    h, w = x.shape[2:]
    factor = 4 if stage == 1 else 2
    if h < factor or w < factor:
        raise ShapeError(f"stem {stage}: spatial extent {h}x{w} smaller than {factor}")
    if h % factor or w % factor:
        raise ShapeError(f"stem {stage}: spatial extent {h}x{w} not divisible by {factor}")
    _check_channels(x, p.convs[0].weight.shape[1], f"stem {stage}")

    out = x
    for conv, norm in zip(p.convs, p.norms):
        out = conv2d(out, conv.weight, conv.bias, stride=2, padding=1)
        out = norm_channels(out, norm.weight, norm.bias, NORM_EPS)
    return out
