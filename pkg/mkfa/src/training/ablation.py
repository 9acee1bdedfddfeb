"""Module ablation: train each (MKA, MFA) variant under one config and tabulate test AUC"""
import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from tqdm import tqdm

from ..backbone.count import count_params
from ..data.manifest import Manifest
from ..nn.blocks import MFA_VARIANTS, MKA_VARIANTS
from ..utils.errors import ConfigError
from .trainer import TrainConfig, evaluate, train

log = logging.getLogger(__name__)

ABLATION_NAME = "ablation.csv"
ABLATION_COLUMNS = ('variant', 'mka', 'mfa', 'params', 'test_auc')

# '+Multi-DWConv7x7' and 'DWConv3x3+FFN' are the same configuration; both rows are kept
# so the full table is emitted, and ablate() trains the pair once.
ABLATION_ROWS: Dict[str, Tuple[str, str]] = {
    'Gating Branch': ('gating_only', 'ffn_only'),
    '+DWConv7x7': ('single_dw7', 'ffn_only'),
    '+Multi-DWConv7x7': ('multi_dw7', 'ffn_only'),
    'DWConv3x3+FFN': ('multi_dw7', 'ffn_only'),
    '+SE': ('multi_dw7', 'ffn_se'),
    '+MF': ('multi_dw7', 'ffn_mf'),
}


@dataclass
class AblationRow:
    variant: str
    mka: str
    mfa: str
    params: int
    test_auc: float


def resolve_variant(name: str) -> Tuple[str, str]:
    """Row label ('+SE') or explicit 'mka:mfa' pair → (mka_variant, mfa_variant)"""
    label = name.replace("\u00d7", "x")
    if label in ABLATION_ROWS:
        return ABLATION_ROWS[label]
    mka, sep, mfa = name.partition(':')
    if not sep or mka not in MKA_VARIANTS or mfa not in MFA_VARIANTS:
        raise ConfigError(
            f"unknown variant '{name}': use one of {list(ABLATION_ROWS)} "
            f"or 'mka:mfa' with mka in {MKA_VARIANTS} and mfa in {MFA_VARIANTS}"
        )
    return mka, mfa


def write_ablation(path: Path, rows: Sequence[AblationRow]) -> Path:
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ABLATION_COLUMNS)
        for row in rows:
            writer.writerow([row.variant, row.mka, row.mfa, row.params, repr(row.test_auc)])
    return path


def ablate(
    base: TrainConfig,
    manifest: Manifest,
    out_dir,
    variants: Optional[Sequence[str]] = None,
) -> List[AblationRow]:
    """
    Train every variant from the same seed and write ablation.csv

    Rows come out in request order, one per requested variant; a pair that was
    already trained is reused.
    """
    variants = list(variants or ABLATION_ROWS)
    resolved = [(name, resolve_variant(name)) for name in variants]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    results: Dict[Tuple[str, str], AblationRow] = {}
    rows: List[AblationRow] = []
    for name, (mka, mfa) in tqdm(resolved, desc="ablate", unit="variant", disable=None):
        arch = base.arch.with_variants(mka, mfa)
        if (mka, mfa) not in results:
            log.info(f"🔧 variant {name}: mka={mka}, mfa={mfa}")
            config = replace(base, arch=arch)
            outcome = train(config, manifest, out_dir / f"{mka}-{mfa}")
            report = evaluate(outcome.model, manifest, 'test', base.batch_size, base.threads)
            results[(mka, mfa)] = AblationRow(name, mka, mfa, count_params(arch)[0], report.auc)
        cached = results[(mka, mfa)]
        rows.append(replace(cached, variant=name))
        log.info(f"📊 {name}: params {cached.params:,}, test AUC {cached.test_auc:.4f}")

    path = write_ablation(out_dir / ABLATION_NAME, rows)
    log.info(f"✅ ablation table written to {path}")
    return rows
