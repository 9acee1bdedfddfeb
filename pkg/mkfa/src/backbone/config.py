"""Architecture configuration and presets"""
import math
from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, Tuple

from ..nn.blocks import DEFAULT_PROPORTIONS, MF_VARIANTS, MFA_VARIANTS, MKA_VARIANTS, split_sizes
from ..utils.errors import ConfigError, ShapeError


@dataclass(frozen=True)
class ArchConfig:
    dims: Tuple[int, int, int, int]
    depths: Tuple[int, int, int, int]
    mlp_ratios: Tuple[int, int, int, int]
    split_proportions: Tuple[float, float, float] = DEFAULT_PROPORTIONS
    num_classes: int = 2
    mf_variant: str = 'literal_dc'
    mka_variant: str = 'multi_dw7'
    mfa_variant: str = 'ffn_mf'
    provenance: str = 'custom'
    recommended_weight_decay: float = 0.05

    def validate(self) -> "ArchConfig":
        for name in ('dims', 'depths', 'mlp_ratios'):
            value = getattr(self, name)
            if len(value) != 4:
                raise ConfigError(f"{name} needs 4 entries, got {list(value)}")
        if any(d <= 0 for d in self.dims):
            raise ConfigError(f"dims must be positive, got {list(self.dims)}")
        if any(n < 1 for n in self.depths):
            raise ConfigError(f"depths must be at least 1, got {list(self.depths)}")
        if any(r < 1 for r in self.mlp_ratios):
            raise ConfigError(f"mlp_ratios must be at least 1, got {list(self.mlp_ratios)}")
        if len(self.split_proportions) != 3 or any(p <= 0 for p in self.split_proportions):
            raise ConfigError(f"split_proportions must be 3 positive fractions, got {list(self.split_proportions)}")
        if not math.isclose(sum(self.split_proportions), 1.0, abs_tol=1e-9):
            raise ConfigError(f"split_proportions must sum to 1, got {sum(self.split_proportions)}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be at least 2, got {self.num_classes}")
        if self.dims[0] % 2:
            raise ConfigError(f"dims[0] must be even (stage-1 stem goes through C/2), got {self.dims[0]}")
        if self.mf_variant not in MF_VARIANTS:
            raise ConfigError(f"mf_variant must be one of {MF_VARIANTS}, got '{self.mf_variant}'")
        if self.mka_variant not in MKA_VARIANTS:
            raise ConfigError(f"mka_variant must be one of {MKA_VARIANTS}, got '{self.mka_variant}'")
        if self.mfa_variant not in MFA_VARIANTS:
            raise ConfigError(f"mfa_variant must be one of {MFA_VARIANTS}, got '{self.mfa_variant}'")
        for stage, (c, r) in enumerate(zip(self.dims, self.mlp_ratios), start=1):
            try:
                split_sizes(c, self.split_proportions)
            except ShapeError as e:
                raise ConfigError(f"stage {stage}: {e}") from e
            if self.mfa_variant == 'ffn_se' and (c * r) % 4:
                raise ConfigError(f"stage {stage}: SE needs hidden width divisible by 4, got {c * r}")
        return self

    def with_variants(self, mka_variant: str, mfa_variant: str) -> "ArchConfig":
        return replace(self, mka_variant=mka_variant, mfa_variant=mfa_variant).validate()

    def to_dict(self) -> Dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ArchConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown ArchConfig fields: {sorted(unknown)}")
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        try:
            return cls(**kwargs).validate()
        except TypeError as e:
            raise ConfigError(f"incomplete ArchConfig: {e}") from e


_PRESETS: Dict[str, ArchConfig] = {
    'tiny': ArchConfig(
        dims=(32, 64, 128, 256), depths=(3, 3, 12, 2), mlp_ratios=(8, 8, 4, 4),
        provenance='published', recommended_weight_decay=0.04,
    ),
    'small': ArchConfig(
        dims=(64, 128, 320, 512), depths=(2, 3, 10, 2), mlp_ratios=(8, 8, 4, 4),
        provenance='published', recommended_weight_decay=0.05,
    ),
    'micro': ArchConfig(
        dims=(16, 32, 64, 128), depths=(2, 2, 4, 2), mlp_ratios=(4, 4, 4, 4),
        provenance='desk', recommended_weight_decay=0.05,
    ),
}

PRESET_NAMES = tuple(_PRESETS)


def preset(name: str) -> ArchConfig:
    try:
        return _PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset '{name}', expected one of {PRESET_NAMES}") from None
