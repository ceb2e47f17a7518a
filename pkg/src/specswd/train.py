"""Teacher pretraining and student distillation loops."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import adt1
from .errors import ConfigError, DataError
from .freq_attention import FreqAttentionConfig, freq_loss
from .metrics import accuracy
from .model import AdamState, ModelParams, ModelSpec, adam_step, backbone_features, forward, init_params, predict
from .multiview import MultiViewConfig, mv_loss, sample_projections
from .synth import Dataset
from .tensor import Tape, Tensor, add, cross_entropy, scale

logger = logging.getLogger(__name__)


@dataclass
class DistillConfig:
    alpha: float = 1.0
    beta: float = 20.0
    freq: FreqAttentionConfig = field(default_factory=FreqAttentionConfig)
    mv: MultiViewConfig = field(default_factory=MultiViewConfig)
    lr: float = 2e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 20
    patience: int = 10
    validations_per_epoch: int = 10
    master_seed: int = 0

    def __post_init__(self):
        if isinstance(self.freq, dict):
            self.freq = FreqAttentionConfig(**self.freq)
        if isinstance(self.mv, dict):
            self.mv = MultiViewConfig(**self.mv)
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be non-negative")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.batch_size < 4 or self.batch_size % 2:
            raise ConfigError("batch_size must be even and >= 4 for stratified batches")
        if self.validations_per_epoch < 1 or self.max_epochs < 1:
            raise ConfigError("validations_per_epoch and max_epochs must be >= 1")


@dataclass
class LogRecord:
    step: int
    ce: float
    l_fr: float
    l_mv: float
    total: float
    val_acc: float


@dataclass
class TrainLog:
    records: list[LogRecord] = field(default_factory=list)
    best_step: int = 0
    best_val_acc: float = -1.0

    def append(self, rec: LogRecord) -> None:
        if self.records and rec.step <= self.records[-1].step:
            raise ValueError("log steps must strictly increase")
        self.records.append(rec)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "ce", "l_fr", "l_mv", "total", "val_acc"])
            for r in self.records:
                w.writerow([r.step, repr(r.ce), repr(r.l_fr), repr(r.l_mv), repr(r.total), repr(r.val_acc)])


def derive_seed(master_seed: int, *path: int) -> int:
    """Stable 64-bit child seed for ``(master_seed, *path)``."""
    return int(np.random.SeedSequence([master_seed, *path]).generate_state(1, np.uint64)[0])


# stream tags for derive_seed
_INIT, _BATCHES, _PAIRS, _PROJ = 1, 2, 3, 4


def stratified_batches(labels: np.ndarray, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """One epoch of batches, each holding ``batch_size // 2`` samples per class."""
    half = batch_size // 2
    by_class = [rng.permutation(np.flatnonzero(labels == c)) for c in (0, 1)]
    n_batches = min(len(by_class[0]), len(by_class[1])) // half
    if n_batches == 0:
        raise DataError("not enough samples of both classes for one stratified batch")
    batches = []
    for b in range(n_batches):
        idx = np.concatenate([by_class[0][b * half : (b + 1) * half], by_class[1][b * half : (b + 1) * half]])
        batches.append(rng.permutation(idx))
    return batches


def sample_pairs(labels: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """In-batch positive (same class, not self) and negative (other class) positions."""
    labels = np.asarray(labels)
    n = len(labels)
    pos = np.empty(n, dtype=np.int64)
    neg = np.empty(n, dtype=np.int64)
    for i in range(n):
        same = np.flatnonzero((labels == labels[i]) & (np.arange(n) != i))
        other = np.flatnonzero(labels != labels[i])
        if same.size == 0 or other.size == 0:
            raise DataError("batch lacks a positive or negative partner; use stratified batches")
        pos[i] = same[rng.integers(same.size)]
        neg[i] = other[rng.integers(other.size)]
    return pos, neg


def total_student_loss(
    logits: Tensor,
    features: Tensor,
    teacher: np.ndarray,
    teacher_pos: np.ndarray | None,
    teacher_neg: np.ndarray | None,
    labels: np.ndarray,
    cfg: DistillConfig,
    proj=None,
) -> tuple[Tensor, dict[str, float]]:
    """Cross-entropy plus ``alpha * L_FR + beta * L_MV``, batch-averaged.

    Terms whose weight is zero are skipped and reported as 0.
    """
    labels = np.asarray(labels)
    if not np.isin(labels, (0, 1)).all():
        raise DataError("labels must be 0 or 1")
    ce = cross_entropy(logits, labels)
    total = ce
    parts = {"ce": float(ce.data), "l_fr": 0.0, "l_mv": 0.0}
    if cfg.alpha:
        lfr = freq_loss(features, teacher, cfg.freq)
        total = add(total, scale(lfr, cfg.alpha))
        parts["l_fr"] = float(lfr.data)
    if cfg.beta:
        lmv = mv_loss(features, teacher, teacher_pos, teacher_neg, cfg.mv, proj=proj)
        total = add(total, scale(lmv, cfg.beta))
        parts["l_mv"] = float(lmv.data)
    parts["total"] = float(total.data)
    return total, parts


def _validation_points(steps_per_epoch: int, per_epoch: int) -> set[int]:
    per_epoch = min(per_epoch, steps_per_epoch)
    return {int(round((j + 1) * steps_per_epoch / per_epoch)) - 1 for j in range(per_epoch)}


def _fit(
    spec: ModelSpec,
    train_images: np.ndarray,
    train_labels: np.ndarray,
    val_images: np.ndarray,
    val_labels: np.ndarray,
    cfg: DistillConfig,
    loss_fn,
    init: ModelParams | None = None,
) -> tuple[ModelParams, TrainLog]:
    if len(train_labels) == 0 or len(val_labels) == 0:
        raise DataError("empty train or validation split")
    params = init or init_params(spec, np.random.default_rng(derive_seed(cfg.master_seed, _INIT)))
    state = AdamState.zeros_like(params)
    log = TrainLog()
    best = params.copy()
    stale = 0
    step = 0
    sums = np.zeros(4)
    count = 0
    batch_rng = np.random.default_rng(derive_seed(cfg.master_seed, _BATCHES))
    for _epoch in range(cfg.max_epochs):
        batches = stratified_batches(train_labels, cfg.batch_size, batch_rng)
        checkpoints = _validation_points(len(batches), cfg.validations_per_epoch)
        for b, idx in enumerate(batches):
            step += 1
            with Tape() as tape:
                leaves = [Tensor(v, requires_grad=True) for v in params.values]
                logits, feats = forward(spec, leaves, train_images[idx])
                total, parts = loss_fn(logits, feats, idx, step)
            grads = tape.backward(total, leaves)
            params = adam_step(params, grads, state, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
            sums += [parts["ce"], parts["l_fr"], parts["l_mv"], parts["total"]]
            count += 1
            if b not in checkpoints:
                continue
            val_logits, _ = predict(spec, params, val_images)
            acc = accuracy(val_logits, val_labels)
            ce, lfr, lmv, tot = (sums / count).tolist()
            log.append(LogRecord(step, ce, lfr, lmv, tot, acc))
            sums[:] = 0
            count = 0
            if acc > log.best_val_acc:
                log.best_val_acc = acc
                log.best_step = step
                best = params.copy()
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    logger.info("early stop at step %d (best %.4f @ %d)", step, log.best_val_acc, log.best_step)
                    return best, log
    return best, log


def train_teacher(data: Dataset, cfg: DistillConfig, spec: ModelSpec | None = None) -> tuple[ModelParams, TrainLog]:
    """Cross-entropy training on raw images with validation-based early stopping."""
    spec = spec or ModelSpec(image_size=data.raw.shape[-1])
    tr, va = data.indices("train"), data.indices("val")
    images, labels = data.raw[tr], data.labels[tr]

    def loss_fn(logits, feats, idx, step):
        ce = cross_entropy(logits, labels[idx])
        v = float(ce.data)
        return ce, {"ce": v, "l_fr": 0.0, "l_mv": 0.0, "total": v}

    return _fit(spec, images, labels, data.raw[va], data.labels[va], cfg, loss_fn)


def distill_student(
    data: Dataset, teacher: ModelParams, cfg: DistillConfig
) -> tuple[ModelParams, TrainLog]:
    """Train a student on degraded images against a frozen teacher on raw images.

    ``alpha = beta = 0`` gives the plain cross-entropy baseline on degraded data.
    """
    spec = teacher.spec
    tr, va = data.indices("train"), data.indices("val")
    images, labels = data.deg[tr], data.labels[tr]
    need_teacher = cfg.alpha > 0 or cfg.beta > 0
    teacher_feats = backbone_features(spec, teacher, data.raw[tr]) if need_teacher else None
    g = cfg.mv.groups_for(spec.feature_shape()[0])
    if g > int(np.prod(spec.feature_shape())):
        raise ConfigError(f"g={g} exceeds backbone feature size")

    def loss_fn(logits, feats, idx, step):
        batch_labels = labels[idx]
        t = pos = neg = proj = None
        if need_teacher:
            t = teacher_feats[idx]
        if cfg.beta > 0:
            pair_rng = np.random.default_rng(derive_seed(cfg.master_seed, _PAIRS, step))
            p_i, n_i = sample_pairs(batch_labels, pair_rng)
            pos, neg = t[p_i], t[n_i]
            proj = sample_projections(cfg.mv.k, derive_seed(cfg.master_seed, _PROJ, step))
        return total_student_loss(logits, feats, t, pos, neg, batch_labels, cfg, proj=proj)

    return _fit(spec, images, labels, data.deg[va], data.labels[va], cfg, loss_fn)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(out_dir, params: ModelParams, log: TrainLog | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    flat = np.concatenate([v.astype(np.float32).reshape(-1) for v in params.values])
    adt1.write(out / "params.adt1", flat.reshape(1, 1, -1))
    manifest = {
        "spec": params.spec.to_dict(),
        "spec_hash": params.spec.spec_hash(),
        "step": log.best_step if log else 0,
        "val_acc": log.best_val_acc if log else None,
        "params": [{"name": n, "shape": list(s)} for n, s in params.spec.param_shapes()],
    }
    (out / "checkpoint.json").write_text(json.dumps(manifest, indent=1) + "\n")
    if log is not None:
        log.to_csv(out / "trainlog.csv")


def load_checkpoint(ckpt_dir) -> ModelParams:
    root = Path(ckpt_dir)
    try:
        manifest = json.loads((root / "checkpoint.json").read_text())
    except FileNotFoundError:
        raise DataError(f"no checkpoint.json in {root}") from None
    spec = ModelSpec.from_dict(manifest["spec"])
    if spec.spec_hash() != manifest["spec_hash"]:
        raise DataError("checkpoint spec hash mismatch")
    flat = adt1.read(root / "params.adt1").reshape(-1)
    values = []
    offset = 0
    for _, shape in spec.param_shapes():
        n = int(np.prod(shape))
        values.append(flat[offset : offset + n].reshape(shape).copy())
        offset += n
    if offset != flat.size:
        raise DataError("checkpoint parameter count mismatch")
    return ModelParams(spec, values)


def config_dict(cfg: DistillConfig) -> dict:
    return asdict(cfg)
