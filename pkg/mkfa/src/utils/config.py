"""Configuration loader"""
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

DEFAULTS: Dict[str, Dict[str, Any]] = {
    'data': {
        'image_size': 64,
        'blob_count': [3, 8],
        'alpha': 1.2,
        'intensity': 1.0,
        'kinds': ['splice', 'grid', 'smooth', 'spectral_peak'],
        'split_fraction': 0.8,
    },
    'train': {
        'preset': 'micro',
        'epochs': 20,
        'batch_size': 32,
        'lr': 2e-4,
        'min_lr': 1e-6,
        'warmup_epochs': 1,
        'label_smoothing': 0.1,
        'optimizer': 'adam',
        'weight_decay': 0.05,
        'finetune_lr': 5e-4,
        'augment': {
            'hflip': True,
            'rotate': False,
            'blur': False,
            'brightness_contrast': True,
            'compress': False,
        },
    },
    'spectral': {
        'bins': 32,
        'eps': 1e-8,
        'method': 'direct',
    },
    'runtime': {
        'threads': 1,
        'seed': 7,
        'log_dir': '',
    },
}


class Config:
    """Run configuration: YAML file layered over built-in defaults"""

    def __init__(self, config_path: Optional[str] = None):
        explicit = config_path or os.environ.get('MKFA_CONFIG')
        self.config_path = Path(explicit) if explicit else Path("config.yaml")
        self._explicit = bool(explicit)
        self._config = self._load_config()

    def _load_config(self) -> dict:
        """Load configuration from YAML file, falling back to defaults"""
        if not self.config_path.exists():
            if self._explicit:
                raise FileNotFoundError(f"Config file not found: {self.config_path}")
            return _merge(DEFAULTS, {})

        with open(self.config_path, 'r', encoding='utf-8') as f:
            loaded = yaml.safe_load(f) or {}
        return _merge(DEFAULTS, loaded)

    def as_dict(self) -> dict:
        return _merge(self._config, {})

    # data

    @property
    def image_size(self) -> int:
        return int(self._config['data']['image_size'])

    @property
    def blob_count(self) -> List[int]:
        return [int(v) for v in self._config['data']['blob_count']]

    @property
    def alpha(self) -> float:
        return float(self._config['data']['alpha'])

    @property
    def intensity(self) -> float:
        return float(self._config['data']['intensity'])

    @property
    def kinds(self) -> List[str]:
        return list(self._config['data']['kinds'])

    @property
    def split_fraction(self) -> float:
        return float(self._config['data']['split_fraction'])

    # train

    @property
    def preset(self) -> str:
        return self._config['train']['preset']

    @property
    def epochs(self) -> int:
        return int(self._config['train']['epochs'])

    @property
    def batch_size(self) -> int:
        return int(self._config['train']['batch_size'])

    @property
    def lr(self) -> float:
        return float(self._config['train']['lr'])

    @property
    def min_lr(self) -> float:
        return float(self._config['train']['min_lr'])

    @property
    def warmup_epochs(self) -> int:
        return int(self._config['train']['warmup_epochs'])

    @property
    def label_smoothing(self) -> float:
        return float(self._config['train']['label_smoothing'])

    @property
    def optimizer(self) -> str:
        return self._config['train']['optimizer']

    @property
    def weight_decay(self) -> float:
        return float(self._config['train']['weight_decay'])

    @property
    def finetune_lr(self) -> float:
        return float(self._config['train']['finetune_lr'])

    @property
    def augment(self) -> Dict[str, bool]:
        return {k: bool(v) for k, v in self._config['train']['augment'].items()}

    # spectral

    @property
    def spectral_bins(self) -> int:
        return int(self._config['spectral']['bins'])

    @property
    def spectral_eps(self) -> float:
        return float(self._config['spectral']['eps'])

    @property
    def spectral_method(self) -> str:
        return self._config['spectral']['method']

    # runtime

    @property
    def threads(self) -> int:
        env = os.environ.get('MKFA_THREADS', '').strip()
        if env:
            return max(1, int(env))
        return max(1, int(self._config['runtime']['threads']))

    @property
    def seed(self) -> int:
        return int(self._config['runtime']['seed'])

    @property
    def log_dir(self) -> str:
        return self._config['runtime'].get('log_dir') or ''


def _merge(base: dict, override: dict) -> dict:
    """Deep-merge override into a copy of base"""
    merged = {}
    for key, value in base.items():
        if isinstance(value, dict):
            merged[key] = _merge(value, override.get(key) or {})
        elif key in override:
            merged[key] = override[key]
        elif isinstance(value, list):
            merged[key] = list(value)
        else:
            merged[key] = value
    for key, value in override.items():
        if key not in base:
            merged[key] = value
    return merged


# Global config instance
config = Config()
