"""Corpus manifest: records, counts, persistence"""
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from ..utils.errors import CorpusError

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"
SPLITS = ('train', 'test')


@dataclass
class SampleRecord:
    path: str
    label: int
    kind: Optional[str]
    split: str
    seed_index: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise CorpusError(f"{self.path}: label must be 0 or 1, got {self.label}")
        if (self.label == 1) != (self.kind is not None):
            raise CorpusError(f"{self.path}: label {self.label} inconsistent with kind {self.kind!r}")
        if self.split not in SPLITS:
            raise CorpusError(f"{self.path}: split must be one of {SPLITS}, got {self.split!r}")


@dataclass
class Manifest:
    spec: Dict[str, Any]
    samples: List[SampleRecord]
    version: int = MANIFEST_VERSION
    root: Path = field(default=Path("."), compare=False)

    @property
    def counts(self) -> Dict[str, int]:
        counts = {'real': 0, 'fake': 0, 'train': 0, 'test': 0}
        for record in self.samples:
            counts['fake' if record.label else 'real'] += 1
            counts[record.split] += 1
        return counts

    def select(
        self,
        label: Optional[int] = None,
        split: Optional[str] = None,
        kinds: Optional[Sequence[str]] = None,
    ) -> List[SampleRecord]:
        """Records matching every given filter; kinds only constrains fakes"""
        selected = []
        for record in self.samples:
            if label is not None and record.label != label:
                continue
            if split is not None and record.split != split:
                continue
            if kinds is not None and record.label == 1 and record.kind not in kinds:
                continue
            selected.append(record)
        return selected

    def to_dict(self) -> Dict[str, Any]:
        return {
            'version': self.version,
            'spec': self.spec,
            'counts': self.counts,
            'samples': [asdict(r) for r in self.samples],
        }

    def save(self, path=None) -> Path:
        path = Path(path) if path else self.root / MANIFEST_NAME
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        return path


def load_manifest(path) -> Manifest:
    """Load and validate a manifest (a corpus directory or the manifest file itself)"""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError:
        raise CorpusError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as e:
        raise CorpusError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e

    version = data.get('version')
    if version != MANIFEST_VERSION:
        raise CorpusError(f"{path}: unsupported manifest version {version}, expected {MANIFEST_VERSION}")
    try:
        samples = [SampleRecord(**s) for s in data['samples']]
    except (KeyError, TypeError) as e:
        raise CorpusError(f"{path}: malformed sample record: {e}") from e

    manifest = Manifest(spec=data.get('spec', {}), samples=samples, version=version, root=path.parent)
    stored = data.get('counts')
    if stored is not None and stored != manifest.counts:
        raise CorpusError(f"{path}: stored counts {stored} do not match records {manifest.counts}")
    missing = [r.path for r in samples if not (manifest.root / r.path).exists()]
    if missing:
        raise CorpusError(f"{path}: {len(missing)} image files missing, first: {missing[0]}")
    log.debug(f"📦 loaded manifest {path}: {manifest.counts}")
    return manifest
