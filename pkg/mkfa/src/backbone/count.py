"""Closed-form parameter accounting (no model build)"""
from typing import Dict, Tuple

from .config import ArchConfig

DW7_TAPS = 49
DW3_TAPS = 9


def norm_count(c: int) -> int:
    return 2 * c


def conv_count(c_in: int, c_out: int, kernel: int, groups: int = 1) -> int:
    return c_out * (c_in // groups) * kernel * kernel + c_out


def mka_count(c: int, variant: str = 'multi_dw7') -> int:
    total = norm_count(c) + 2 * conv_count(c, c, 1)
    if variant != 'gating_only':
        # depthwise weights are split-invariant: Σ slabs·49 = 49C
        total += DW7_TAPS * c + c
    return total


def mfa_count(c: int, ratio: int, variant: str = 'ffn_mf', mf_variant: str = 'literal_dc') -> int:
    hidden = c * ratio
    total = norm_count(c) + conv_count(c, hidden, 1) + conv_count(hidden, hidden, 3, groups=hidden)
    total += conv_count(hidden, c, 1)
    if variant == 'ffn_mf':
        total += hidden * (3 if mf_variant == 'two_param' else 1)
    elif variant == 'ffn_se':
        total += conv_count(hidden, hidden // 4, 1) + conv_count(hidden // 4, hidden, 1)
    return total


def stem_count(stage: int, c_in: int, c_out: int) -> int:
    if stage == 1:
        half = c_out // 2
        return conv_count(c_in, half, 3) + norm_count(half) + conv_count(half, c_out, 3) + norm_count(c_out)
    return conv_count(c_in, c_out, 3) + norm_count(c_out)


def count_params(config: ArchConfig) -> Tuple[int, Dict[str, int]]:
    """
    Exact parameter count and a per-module breakdown

    Breakdown keys: stemI, stageI.mka, stageI.mfa, head.
    """
    config.validate()
    breakdown: Dict[str, int] = {}
    c_prev = 3
    for i, (c, depth, ratio) in enumerate(zip(config.dims, config.depths, config.mlp_ratios), start=1):
        breakdown[f"stem{i}"] = stem_count(i, c_prev, c)
        breakdown[f"stage{i}.mka"] = depth * mka_count(c, config.mka_variant)
        breakdown[f"stage{i}.mfa"] = depth * mfa_count(c, ratio, config.mfa_variant, config.mf_variant)
        c_prev = c
    c_last = config.dims[-1]
    breakdown["head"] = norm_count(c_last) + c_last * config.num_classes + config.num_classes
    return sum(breakdown.values()), breakdown
