"""
Checkpoint binary format

    b"MKFA" | uint32 version | uint64 header length | JSON header | payload

The header (sorted keys) holds the architecture config, a tensor directory
(name, shape, byte offset), optimizer metadata, step, epoch and metrics
history. The payload is little-endian float32 in directory order; optimizer
moments are stored as `opt.m.<name>` / `opt.v.<name>`.
"""
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..backbone.config import ArchConfig
from ..backbone.model import MkfaNetModel, build
from ..tensor.rng import SeededRng
from ..utils.errors import CheckpointError, ConfigError
from .optim import OptimizerState

log = logging.getLogger(__name__)

MAGIC = b"MKFA"
VERSION = 1
_PREFIX = struct.Struct('<4sIQ')
_DTYPE = np.dtype('<f4')


@dataclass
class Checkpoint:
    config: ArchConfig
    model: MkfaNetModel
    optimizer: Optional[OptimizerState] = None
    step: int = 0
    epoch: int = 0
    history: List[dict] = field(default_factory=list)


def encode_checkpoint(
    model: MkfaNetModel,
    optimizer: Optional[OptimizerState] = None,
    step: int = 0,
    epoch: int = 0,
    history: Optional[List[dict]] = None,
) -> bytes:
    tensors: List[Tuple[str, np.ndarray]] = [(name, p.data) for name, p in model.registry.items()]
    if optimizer is not None:
        tensors += [(f"opt.m.{name}", optimizer.m[name]) for name in optimizer.m]
        tensors += [(f"opt.v.{name}", optimizer.v[name]) for name in optimizer.v]

    directory = []
    chunks = []
    offset = 0
    for name, array in tensors:
        raw = np.ascontiguousarray(array, dtype=_DTYPE).tobytes()
        directory.append({'name': name, 'shape': list(array.shape), 'offset': offset})
        chunks.append(raw)
        offset += len(raw)

    header = {
        'config': model.config.to_dict(),
        'tensors': directory,
        'optimizer': optimizer.meta() if optimizer is not None else None,
        'step': step,
        'epoch': epoch,
        'history': history or [],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(',', ':')).encode('utf-8')
    return _PREFIX.pack(MAGIC, VERSION, len(header_bytes)) + header_bytes + b"".join(chunks)


def save_checkpoint(path, model: MkfaNetModel, optimizer: Optional[OptimizerState] = None,
                    step: int = 0, epoch: int = 0, history: Optional[List[dict]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(model, optimizer, step, epoch, history))
    tmp.replace(path)
    return path


def _read_tensors(data: bytes) -> Tuple[dict, Dict[str, np.ndarray]]:
    if len(data) < _PREFIX.size:
        raise CheckpointError(f"file too short for a checkpoint prefix ({len(data)} bytes)")
    magic, version, header_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {VERSION}")
    start = _PREFIX.size
    if len(data) < start + header_len:
        raise CheckpointError(f"truncated header: need {header_len} bytes at offset {start}")
    try:
        header = json.loads(data[start:start + header_len].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable header: {e}") from e

    payload = memoryview(data)[start + header_len:]
    tensors: Dict[str, np.ndarray] = {}
    expected = 0
    for entry in header.get('tensors', []):
        name, shape, offset = entry['name'], tuple(entry['shape']), entry['offset']
        if offset != expected:
            raise CheckpointError(f"tensor '{name}' at offset {offset}, expected {expected}")
        size = int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize
        if offset + size > len(payload):
            raise CheckpointError(
                f"truncated payload: tensor '{name}' needs bytes {offset}..{offset + size}, have {len(payload)}"
            )
        tensors[name] = np.frombuffer(payload[offset:offset + size], dtype=_DTYPE).reshape(shape).copy()
        expected = offset + size
    return header, tensors


def load_checkpoint(path) -> Checkpoint:
    """Rebuild model (and optimizer, if stored) from a checkpoint alone"""
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    header, tensors = _read_tensors(data)

    try:
        config = ArchConfig.from_dict(header['config'])
    except (KeyError, ConfigError) as e:
        raise CheckpointError(f"{path}: bad architecture config: {e}") from e
    model = build(config, SeededRng(0))
    weights = {name: arr for name, arr in tensors.items() if not name.startswith('opt.')}
    for name, param in model.registry.items():
        if name not in weights:
            raise CheckpointError(f"{path}: missing tensor '{name}'")
        if weights[name].shape != param.shape:
            raise CheckpointError(f"{path}: '{name}' stored as {weights[name].shape}, model expects {param.shape}")
    extra = sorted(set(weights) - set(model.registry))
    if extra:
        raise CheckpointError(f"{path}: unknown tensors {extra[:5]}")
    model.load_state_dict(weights)

    optimizer = None
    meta = header.get('optimizer')
    if meta is not None:
        optimizer = OptimizerState(**meta)
        for name, param in model.registry.items():
            for slot, store in (('m', optimizer.m), ('v', optimizer.v)):
                key = f"opt.{slot}.{name}"
                if key not in tensors:
                    raise CheckpointError(f"{path}: missing optimizer tensor '{key}'")
                store[name] = tensors[key].astype(param.data.dtype)

    log.debug(f"📦 loaded checkpoint {path} (epoch {header.get('epoch', 0)}, step {header.get('step', 0)})")
    return Checkpoint(
        config=config,
        model=model,
        optimizer=optimizer,
        step=int(header.get('step', 0)),
        epoch=int(header.get('epoch', 0)),
        history=list(header.get('history', [])),
    )


def load_weights(path, model: MkfaNetModel) -> None:
    """Copy stored weights into an existing model (fine-tuning start)"""
    _, tensors = _read_tensors(Path(path).read_bytes())
    weights = {name: arr for name, arr in tensors.items() if not name.startswith('opt.')}
    try:
        model.load_state_dict(weights)
    except (ConfigError, ValueError) as e:
        raise CheckpointError(f"{path}: weights do not fit the model: {e}") from e
