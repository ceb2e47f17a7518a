"""The four-row distiller ablation: baseline, FR only, MV only, FR+MV."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .metrics import EvalResult, evaluate
from .model import ModelParams, predict
from .synth import Dataset
from .train import distill_student, train_teacher

logger = logging.getLogger(__name__)

VARIANTS = ("baseline", "fr", "mv", "fr+mv")


@dataclass
class AblationRun:
    seed: int
    variant: str
    alpha: float
    beta: float
    teacher_val_acc: float
    result: EvalResult


def variant_weights(variant: str, alpha: float, beta: float) -> tuple[float, float]:
    return {
        "baseline": (0.0, 0.0),
        "fr": (alpha, 0.0),
        "mv": (0.0, beta),
        "fr+mv": (alpha, beta),
    }[variant]


def evaluate_model(params: ModelParams, images: np.ndarray, labels: np.ndarray) -> EvalResult:
    logits, pooled = predict(params.spec, params, images)
    return evaluate(logits, pooled, labels)


def run_seed(data: Dataset, cfg: RunConfig, seed: int, split: str = "test") -> list[AblationRun]:
    """Train one teacher, then the four students, all from ``seed``."""
    seeded = cfg.with_seed(seed)
    teacher, tlog = train_teacher(data, seeded.teacher())
    logger.info("seed %d teacher val acc %.4f", seed, tlog.best_val_acc)
    idx = data.indices(split)
    runs = []
    for variant in VARIANTS:
        a, b = variant_weights(variant, seeded.distill.alpha, seeded.distill.beta)
        student, _ = distill_student(data, teacher, dataclasses.replace(seeded.distill, alpha=a, beta=b))
        res = evaluate_model(student, data.deg[idx], data.labels[idx])
        logger.info("seed %d %-8s acc %.4f r@1 %.4f", seed, variant, res.acc, res.recall_at_1)
        runs.append(AblationRun(seed, variant, a, b, tlog.best_val_acc, res))
    return runs


def summarize(runs: list[AblationRun]) -> list[dict]:
    """Mean metrics per variant, in :data:`VARIANTS` order."""
    rows = []
    for variant in VARIANTS:
        sel = [r for r in runs if r.variant == variant]
        rows.append(
            {
                "variant": variant,
                "alpha": sel[0].alpha,
                "beta": sel[0].beta,
                "acc": float(np.mean([r.result.acc for r in sel])),
                "r_at_1": float(np.mean([r.result.recall_at_1 for r in sel])),
                "n": sel[0].result.n,
                "seeds": len(sel),
            }
        )
    return rows
