"""
Four-stage MkfaNet

stem_i → N_i × (MKA, MFA) per stage, stage i at H/2^(i+1); head: norm → spatial mean → linear
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..nn.blocks import (
    NORM_EPS, MfaBlockParams, MkaBlockParams, Norm, StemParams,
    init_mfa, init_mka, init_norm, init_stem, mfa_forward, mka_forward, stem_forward,
)
from ..tensor.core import Parameter, Tensor
from ..tensor.ops import linear, norm_channels, spatial_mean
from ..tensor.rng import SeededRng
from ..utils.errors import ConfigError, ShapeError
from .config import ArchConfig

log = logging.getLogger(__name__)

INPUT_CHANNELS = 3
DOWNSAMPLING = 32


@dataclass
class Head:
    norm: Norm
    weight: Parameter
    bias: Parameter

    def parameters(self) -> List[Parameter]:
        return self.norm.parameters() + [self.weight, self.bias]


class MkfaNetModel:
    """Parameters of a built network plus a name → Parameter registry"""

    def __init__(
        self,
        config: ArchConfig,
        stems: List[StemParams],
        stages: List[List[Tuple[MkaBlockParams, MfaBlockParams]]],
        head: Head,
    ):
        self.config = config
        self.stems = stems
        self.stages = stages
        self.head = head
        self.registry: Dict[str, Parameter] = {}
        for param in self._collect():
            if param.name in self.registry:
                raise ConfigError(f"duplicate parameter name '{param.name}'")
            self.registry[param.name] = param

    def _collect(self) -> Iterable[Parameter]:
        for i, stem in enumerate(self.stems):
            yield from stem.parameters()
            for mka, mfa in self.stages[i]:
                yield from mka.parameters()
                yield from mfa.parameters()
        yield from self.head.parameters()

    def parameters(self) -> List[Parameter]:
        return list(self.registry.values())

    def trainable(self) -> List[Parameter]:
        return [p for p in self.registry.values() if p.trainable]

    def num_params(self) -> int:
        return sum(p.data.size for p in self.registry.values())

    def zero_grad(self) -> None:
        for param in self.registry.values():
            param.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.registry.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        missing = sorted(set(self.registry) - set(state))
        unexpected = sorted(set(state) - set(self.registry))
        if missing or unexpected:
            raise ConfigError(f"state mismatch: missing {missing[:5]}, unexpected {unexpected[:5]}")
        for name, param in self.registry.items():
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise ShapeError(f"{name}: stored shape {value.shape} vs model shape {param.shape}")
            param.data = value.astype(param.data.dtype, copy=True)

    def __repr__(self) -> str:
        return f"MkfaNetModel(dims={self.config.dims}, depths={self.config.depths}, params={self.num_params()})"


def build(config: ArchConfig, rng: SeededRng) -> MkfaNetModel:
    """Initialize every parameter from a substream keyed by its name"""
    config.validate()
    stems: List[StemParams] = []
    stages: List[List[Tuple[MkaBlockParams, MfaBlockParams]]] = []
    c_prev = INPUT_CHANNELS
    for i, (c, depth, ratio) in enumerate(zip(config.dims, config.depths, config.mlp_ratios), start=1):
        stems.append(init_stem(f"stem{i}", i, c_prev, c, rng))
        blocks = []
        for j in range(1, depth + 1):
            prefix = f"stage{i}.block{j}"
            mka = init_mka(f"{prefix}.mka", c, rng, config.split_proportions, config.mka_variant)
            mfa = init_mfa(f"{prefix}.mfa", c, ratio, rng, config.mfa_variant, config.mf_variant)
            blocks.append((mka, mfa))
        stages.append(blocks)
        c_prev = c

    c_last = config.dims[-1]
    k = config.num_classes
    head = Head(
        norm=init_norm("head.norm", c_last),
        weight=Parameter("head.fc.weight", rng.split("head.fc.weight").truncated_normal((c_last, k), math.sqrt(2.0 / c_last))),
        bias=Parameter("head.fc.bias", np.zeros(k)),
    )
    model = MkfaNetModel(config, stems, stages, head)
    log.debug(f"🔧 built {model!r}")
    return model


def available_taps(config: ArchConfig) -> List[str]:
    """Tap identifiers, shallow to deep"""
    taps = []
    for i, depth in enumerate(config.depths, start=1):
        taps.append(f"stage{i}.stem")
        for j in range(1, depth + 1):
            taps += [f"stage{i}.block{j}.mka", f"stage{i}.block{j}"]
        taps.append(f"stage{i}")
    taps.append("head.pool")
    return taps


def forward(
    model: MkfaNetModel,
    images: Tensor,
    taps: Optional[Sequence[str]] = None,
) -> Tuple[Tensor, Dict[str, Tensor]]:
    """
    Run the network

    Args:
        model: built network
        images: N×3×H×W, H and W divisible by 32
        taps: feature identifiers to return (see available_taps)

    Returns:
        (N×K logits, {tap: feature map})
    """
    if images.ndim != 4 or images.shape[1] != INPUT_CHANNELS:
        raise ShapeError(f"forward: expected N×3×H×W images, got {images.shape}")
    h, w = images.shape[2:]
    if h % DOWNSAMPLING or w % DOWNSAMPLING or h == 0 or w == 0:
        raise ShapeError(f"forward: spatial extent {h}x{w} not divisible by {DOWNSAMPLING}")

    wanted = set(taps or ())
    if wanted:
        unknown = wanted - set(available_taps(model.config))
        if unknown:
            raise ConfigError(f"unknown taps: {sorted(unknown)}")
    features: Dict[str, Tensor] = {}

    def tap(name: str, value: Tensor) -> None:
        if name in wanted:
            features[name] = value

    x = images
    for i, (stem, blocks) in enumerate(zip(model.stems, model.stages), start=1):
        x = stem_forward(x, stem, i)
        tap(f"stage{i}.stem", x)
        for j, (mka, mfa) in enumerate(blocks, start=1):
            x = mka_forward(x, mka)
            tap(f"stage{i}.block{j}.mka", x)
            x = mfa_forward(x, mfa)
            tap(f"stage{i}.block{j}", x)
        tap(f"stage{i}", x)

    head = model.head
    pooled = spatial_mean(norm_channels(x, head.norm.weight, head.norm.bias, NORM_EPS))
    tap("head.pool", pooled)
    logits = linear(pooled, head.weight, head.bias)
    return logits, features
