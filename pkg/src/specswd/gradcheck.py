"""Finite-difference gradient suites, run at double precision."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .freq_attention import FreqAttentionConfig, freq_loss, freq_weight
from .model import ConvBlock, ModelSpec, forward, init_params
from .multiview import MultiViewConfig, mv_loss, sample_projections
from .spectral import dft2, dft2_per_channel
from .tensor import (
    GradCheckReport,
    Tensor,
    avg_pool2x2,
    check_gradients,
    conv2d,
    cross_entropy,
    elementwise,
    frobenius_norm_sq,
    logsumexp,
    matmul,
    sum_,
)
from .train import DistillConfig, total_student_loss

STEP = 1e-5
TOLERANCE = 1e-3
PRIMITIVE_TOLERANCE = 1e-6

TINY_SPEC = ModelSpec(in_channels=1, image_size=8, blocks=(ConvBlock(3), ConvBlock(4)), num_classes=2)


def _weighted_sum(t: Tensor, w: np.ndarray) -> Tensor:
    # contract with fixed random weights so every output entry gets a distinct cotangent
    return sum_(elementwise("mul", t, Tensor(w)))


def primitive_suite(rng: np.random.Generator) -> dict[str, GradCheckReport]:
    x = rng.uniform(-1, 1, (2, 3, 4))
    y = rng.uniform(-1, 1, (2, 3, 4))
    w = rng.uniform(-1, 1, (2, 3, 4))
    # keep relu inputs away from the kink
    xr = np.where(np.abs(x) < 0.05, 0.3, x)
    cases: dict[str, tuple[Callable, list]] = {
        "add": (lambda a, b: _weighted_sum(elementwise("add", a, b), w), [x, y]),
        "sub": (lambda a, b: _weighted_sum(elementwise("sub", a, b), w), [x, y]),
        "mul": (lambda a, b: _weighted_sum(elementwise("mul", a, b), w), [x, y]),
        "square": (lambda a: _weighted_sum(elementwise("square", a), w), [x]),
        "scale": (lambda a: _weighted_sum(elementwise("scale", a, 2.5), w), [x]),
        "exp": (lambda a: _weighted_sum(elementwise("exp", a), w), [x]),
        "relu": (lambda a: _weighted_sum(elementwise("relu", a), w), [xr]),
        "frobenius_norm_sq": (frobenius_norm_sq, [x]),
        "matmul": (
            lambda a, b: _weighted_sum(matmul(a, b), w[0, :, :3]),
            [rng.uniform(-1, 1, (3, 5)), rng.uniform(-1, 1, (5, 3))],
        ),
        "logsumexp": (lambda a: _weighted_sum(logsumexp(a, axis=-1), w[:, :, 0]), [x]),
        "conv2d": (
            lambda a, k, b: _weighted_sum(conv2d(a, k, b, stride=1, padding=1), np.resize(w, (2, 3, 4, 4))),
            [rng.uniform(-1, 1, (2, 2, 4, 4)), rng.uniform(-1, 1, (3, 2, 3, 3)), rng.uniform(-1, 1, 3)],
        ),
        "conv2d_stride2": (
            lambda a, k: _weighted_sum(conv2d(a, k, None, stride=2, padding=1), np.resize(w, (1, 2, 3, 3))),
            [rng.uniform(-1, 1, (1, 1, 5, 5)), rng.uniform(-1, 1, (2, 1, 3, 3))],
        ),
        "avg_pool2x2": (
            lambda a: _weighted_sum(avg_pool2x2(a), np.resize(w, (1, 2, 2, 2))),
            [rng.uniform(-1, 1, (1, 2, 4, 4))],
        ),
        "dft2": (lambda a: _weighted_sum(dft2(a), np.resize(w, (2, 1, 4, 4))), [rng.uniform(-1, 1, (1, 4, 4))]),
    }
    return {name: check_gradients(f, xs, step=STEP) for name, (f, xs) in cases.items()}


def freq_suite(rng: np.random.Generator) -> dict[str, GradCheckReport]:
    teacher = rng.uniform(-1, 1, (4, 4, 4)) * 0.2
    student = rng.uniform(-1, 1, (4, 4, 4)) * 0.2
    out = {}
    for detached in (True, False):
        cfg = FreqAttentionConfig(gamma_fr=1.0, weight_detached=detached)
        fd_fn = None
        if detached:
            # the detached gradient is exact for the loss with weights frozen at the probe point
            frozen = freq_weight(dft2_per_channel(student), dft2_per_channel(teacher), cfg)[None]
            fd_fn = lambda s, frozen=frozen, cfg=cfg: freq_loss(s, teacher, cfg, weights=frozen)
        out[f"freq_loss[detached={detached}]"] = check_gradients(
            lambda s, cfg=cfg: freq_loss(s, teacher, cfg), [student], step=STEP, fd_fn=fd_fn
        )
    return out


def mv_suite(rng: np.random.Generator) -> dict[str, GradCheckReport]:
    shape = (4, 4, 4)
    s, t, tp, tn = (rng.uniform(-1, 1, shape) for _ in range(4))
    cfg = MultiViewConfig(k=16, g=2, margin=10.0, seed=3)  # margin keeps the hinge active and smooth
    return {"mv_loss": check_gradients(lambda a: mv_loss(a, t, tp, tn, cfg), [s], step=STEP)}


def model_suite(rng: np.random.Generator, probes: int = 60) -> dict[str, GradCheckReport]:
    spec = TINY_SPEC
    params = init_params(spec, rng, dtype=np.float64)
    # positive biases keep most relus active so central differences see a smooth function
    params.values = [v + 0.05 if v.ndim == 1 else v for v in params.values]
    images = rng.uniform(0, 1, (4, 1, spec.image_size, spec.image_size))
    labels = np.array([0, 1, 0, 1])
    teacher = rng.uniform(0, 1, (4, *spec.feature_shape()))
    pos = teacher[[2, 3, 0, 1]]
    neg = teacher[[1, 0, 3, 2]]
    cfg = DistillConfig(
        alpha=1.0,
        beta=1.0,
        freq=FreqAttentionConfig(gamma_fr=0.1, weight_detached=False),
        mv=MultiViewConfig(k=8, g=2, margin=10.0),
    )
    proj = sample_projections(cfg.mv.k, 11)

    def loss(*values):
        logits, feats = forward(spec, list(values), Tensor(images))
        return total_student_loss(logits, feats, teacher, pos, neg, labels, cfg, proj=proj)[0]

    report = check_gradients(loss, params.values, step=STEP, max_probes=probes, rng=rng)
    return {"total_student_loss": report}


def run_all(seed: int = 0) -> dict[str, tuple[GradCheckReport, float]]:
    """Every suite with its pass threshold."""
    rng = np.random.default_rng(seed)
    out = {name: (r, PRIMITIVE_TOLERANCE) for name, r in primitive_suite(rng).items()}
    for suite in (freq_suite, mv_suite, model_suite):
        out.update({name: (r, TOLERANCE) for name, r in suite(rng).items()})
    return out
