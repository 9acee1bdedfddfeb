"""
Training loop and evaluation

Batches are drawn from a per-epoch seeded permutation; augmentation streams are
keyed by (epoch, sample index), so a run is a pure function of its config and
a resumed run continues exactly where an uninterrupted one would be.
"""
import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from ..backbone.config import ArchConfig
from ..backbone.model import MkfaNetModel, build, forward
from ..data.augment import random_augment
from ..data.image_io import read_ppm
from ..data.manifest import Manifest, SampleRecord
from ..tensor.core import Tape, Tensor, no_tape
from ..tensor.ops import cross_entropy_smoothed, log_softmax, softmax
from ..tensor.rng import SeededRng
from ..utils.errors import ConfigError, CorpusError, EvaluationError, NonFiniteError
from .checkpoint import load_checkpoint, load_weights, save_checkpoint
from .metrics import accuracy, auc
from .optim import OPTIMIZERS, LrSchedule, make_optimizer, optimizer_step

log = logging.getLogger(__name__)

METRICS_NAME = "metrics.csv"
CHECKPOINT_NAME = "checkpoint.mkfa"
METRICS_COLUMNS = ('epoch', 'step', 'loss', 'train_auc', 'test_auc', 'lr')
FAKE_CLASS = 1


@dataclass
class TrainConfig:
    arch: ArchConfig
    epochs: int = 20
    batch_size: int = 32
    lr: float = 2e-4
    min_lr: float = 1e-6
    warmup_epochs: int = 1
    label_smoothing: float = 0.1
    optimizer: str = 'adam'
    weight_decay: float = 0.0
    augment: Dict[str, bool] = field(default_factory=dict)
    seed: int = 7
    threads: int = 1

    def validate(self) -> "TrainConfig":
        self.arch.validate()
        if self.epochs < 1:
            raise ConfigError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError(f"label_smoothing must be in [0, 1), got {self.label_smoothing}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got '{self.optimizer}'")
        if self.lr < 0 or self.min_lr < 0:
            raise ConfigError(f"learning rates must be non-negative, got lr={self.lr}, min_lr={self.min_lr}")
        if self.warmup_epochs < 0:
            raise ConfigError(f"warmup_epochs must be non-negative, got {self.warmup_epochs}")
        return self

    def to_dict(self) -> dict:
        data = asdict(self)
        data['arch'] = self.arch.to_dict()
        return data


@dataclass
class EvalReport:
    auc: float
    accuracy: float
    per_kind_auc: Dict[str, float]
    count: int
    loss: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: MkfaNetModel
    history: List[dict]
    checkpoint: Path
    metrics: Path


def images_to_tensor(images: np.ndarray) -> Tensor:
    """N×H×W×3 uint8 → N×3×H×W in [-1, 1]"""
    images = np.asarray(images)
    if images.ndim == 3:
        images = images[None]
    return Tensor(images.transpose(0, 3, 1, 2).astype(np.float64) / 127.5 - 1.0)


def load_images(manifest: Manifest, records: Sequence[SampleRecord], threads: int = 1) -> np.ndarray:
    paths = [manifest.root / r.path for r in records]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            images = list(pool.map(read_ppm, paths))
    else:
        images = [read_ppm(p) for p in paths]
    return np.stack(images)


def predict_logits(model: MkfaNetModel, images: np.ndarray, batch_size: int = 32) -> np.ndarray:
    chunks = []
    with no_tape():
        for start in range(0, len(images), batch_size):
            logits, _ = forward(model, images_to_tensor(images[start:start + batch_size]))
            chunks.append(logits.data.astype(np.float64))
    return np.concatenate(chunks)


def fake_scores(logits: np.ndarray) -> np.ndarray:
    """Softmax probability of the fake class"""
    return softmax(logits)[:, FAKE_CLASS]


def evaluate_arrays(
    logits: np.ndarray,
    labels: np.ndarray,
    kinds: Sequence[Optional[str]],
) -> EvalReport:
    labels = np.asarray(labels)
    scores = fake_scores(logits)
    loss = float(-log_softmax(logits)[np.arange(len(labels)), labels].mean())
    per_kind = {}
    real = labels == 0
    for kind in sorted({k for k in kinds if k is not None}):
        chosen = real | np.array([k == kind for k in kinds])
        per_kind[kind] = auc(scores[chosen], labels[chosen])
    return EvalReport(
        auc=auc(scores, labels),
        accuracy=accuracy(scores, labels),
        per_kind_auc=per_kind,
        count=int(len(labels)),
        loss=loss,
    )


def evaluate(
    model: MkfaNetModel,
    manifest: Manifest,
    split: str = 'test',
    batch_size: int = 32,
    threads: int = 1,
) -> EvalReport:
    """Frame-level AUC, accuracy at 0.5 and per-kind AUC on one split (no augmentation)"""
    records = manifest.select(split=split)
    if not records:
        raise EvaluationError(f"split '{split}' is empty")
    labels = np.array([r.label for r in records])
    if labels.min() == labels.max():
        raise EvaluationError(f"split '{split}' has only label {labels[0]}")
    images = load_images(manifest, records, threads)
    logits = predict_logits(model, images, batch_size)
    return evaluate_arrays(logits, labels, [r.kind for r in records])


def write_metrics(path: Path, history: List[dict]) -> Path:
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=METRICS_COLUMNS, extrasaction='ignore', lineterminator="\n")
        writer.writeheader()
        for row in history:
            writer.writerow({k: row[k] if isinstance(row[k], int) else repr(row[k]) for k in METRICS_COLUMNS})
    return path


def train(
    config: TrainConfig,
    manifest: Manifest,
    out_dir,
    init_ckpt=None,
    resume=None,
    stop_after: Optional[int] = None,
) -> TrainResult:
    """
    Train from scratch, from initial weights, or resume a checkpoint

    Args:
        config: training settings
        manifest: corpus with a train split holding both classes
        out_dir: receives checkpoint.mkfa (every epoch) and metrics.csv
        init_ckpt: weights to start from (fine-tuning)
        resume: checkpoint to continue (model, optimizer, epoch, history)
        stop_after: stop after this epoch without changing the schedule

    Returns:
        TrainResult with the final model and metrics history
    """
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    train_records = manifest.select(split='train')
    labels = np.array([r.label for r in train_records])
    if len(train_records) == 0 or labels.min() == labels.max():
        raise CorpusError("train split must contain both real and fake samples")
    test_records = manifest.select(split='test')
    test_labels = np.array([r.label for r in test_records])
    has_test = len(test_records) > 0 and test_labels.min() != test_labels.max()
    if not has_test:
        log.warning("⚠️ test split lacks one class, test_auc will be NaN")

    train_images = load_images(manifest, train_records, config.threads)
    test_images = load_images(manifest, test_records, config.threads) if has_test else None

    root = SeededRng(config.seed)
    model = build(config.arch, root.split('init'))
    optimizer = make_optimizer(config.optimizer, model.trainable(), config.lr, config.weight_decay)
    history: List[dict] = []
    step = 0
    start_epoch = 0

    if resume is not None:
        ckpt = load_checkpoint(resume)
        if ckpt.config != config.arch:
            raise ConfigError(f"resume checkpoint architecture {ckpt.config.to_dict()} differs from config")
        if ckpt.optimizer is None:
            raise ConfigError(f"{resume} holds no optimizer state")
        model, optimizer = ckpt.model, ckpt.optimizer
        step, start_epoch, history = ckpt.step, ckpt.epoch, ckpt.history
        log.info(f"🔧 resuming from {resume} at epoch {start_epoch}, step {step}")
    elif init_ckpt is not None:
        load_weights(init_ckpt, model)
        log.info(f"🔧 initialized weights from {init_ckpt}")

    n = len(train_records)
    steps_per_epoch = math.ceil(n / config.batch_size)
    schedule = LrSchedule(
        base_lr=config.lr,
        min_lr=config.min_lr,
        warmup_steps=config.warmup_epochs * steps_per_epoch,
        total_steps=config.epochs * steps_per_epoch,
    )
    params = model.trainable()
    ckpt_path = out_dir / CHECKPOINT_NAME
    metrics_path = out_dir / METRICS_NAME
    last_epoch = config.epochs if stop_after is None else min(stop_after, config.epochs)

    log.info(
        f"📊 training {model.num_params():,} params on {n} images: "
        f"{config.epochs} epochs × {steps_per_epoch} steps, {config.optimizer} lr {config.lr}"
    )
    for epoch in range(start_epoch + 1, last_epoch + 1):
        order = root.split('shuffle', epoch).permutation(n)
        losses: List[float] = []
        seen_scores: List[np.ndarray] = []
        seen_labels: List[np.ndarray] = []
        lr = schedule(step)

        for b in tqdm(range(steps_per_epoch), desc=f"epoch {epoch}/{config.epochs}", leave=False, disable=None):
            index = order[b * config.batch_size:(b + 1) * config.batch_size]
            batch = np.stack([
                random_augment(train_images[i], config.augment, root.split('augment', epoch, int(i)))
                for i in index
            ])
            batch_labels = labels[index]

            try:
                with Tape() as tape:
                    logits, _ = forward(model, images_to_tensor(batch))
                    loss = cross_entropy_smoothed(logits, batch_labels, config.label_smoothing)
            except NonFiniteError as e:
                raise NonFiniteError(f"non-finite value at step {step + 1}: {e}") from e
            tape.backward(loss)

            lr = schedule(step + 1)
            optimizer_step(optimizer, params, lr)
            step += 1
            losses.append(loss.item())
            seen_scores.append(fake_scores(logits.data.astype(np.float64)))
            seen_labels.append(batch_labels)

        train_auc = auc(np.concatenate(seen_scores), np.concatenate(seen_labels))
        test_auc = float('nan')
        if has_test:
            test_logits = predict_logits(model, test_images, config.batch_size)
            test_auc = auc(fake_scores(test_logits), test_labels)

        row = {
            'epoch': epoch,
            'step': step,
            'loss': float(np.mean(losses)),
            'train_auc': float(train_auc),
            'test_auc': float(test_auc),
            'lr': float(lr),
        }
        history.append(row)
        save_checkpoint(ckpt_path, model, optimizer, step=step, epoch=epoch, history=history)
        write_metrics(metrics_path, history)
        log.info(
            f"📊 epoch {epoch}: loss {row['loss']:.4f} train_auc {train_auc:.4f} "
            f"test_auc {test_auc:.4f} lr {lr:.2e}"
        )

    if not ckpt_path.exists():
        save_checkpoint(ckpt_path, model, optimizer, step=step, epoch=start_epoch, history=history)
        write_metrics(metrics_path, history)
    log.info(f"✅ training finished at step {step}, checkpoint {ckpt_path}")
    return TrainResult(model=model, history=history, checkpoint=ckpt_path, metrics=metrics_path)


def training_accuracy(model: MkfaNetModel, manifest: Manifest, batch_size: int = 32) -> float:
    records = manifest.select(split='train')
    logits = predict_logits(model, load_images(manifest, records), batch_size)
    return accuracy(fake_scores(logits), [r.label for r in records])
