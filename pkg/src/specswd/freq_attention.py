"""Frequency attention distillation loss.

The student's and teacher's backbone features are moved to the frequency
domain channel by channel; per-coefficient squared-modulus discrepancies are
weighted by ``w(u, v) = exp(gamma * mean_c d(u, v))`` and summed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .spectral import dft2, dft2_per_channel
from .tensor import Tensor, as_tensor, exp, mean, mul, relu, scale, square, sub, sum_

logger = logging.getLogger(__name__)

# exponent ceiling applied to single-precision runs; exp(60) ~ 1.1e26 < float32 max
SINGLE_PRECISION_EXP_CAP = 60.0


@dataclass
class FreqAttentionConfig:
    gamma_fr: float = 1.0
    weight_detached: bool = True
    reduction: str = "sum"

    def __post_init__(self):
        if not self.gamma_fr > 0:
            raise ConfigError(f"gamma_fr must be positive, got {self.gamma_fr}")
        if self.reduction not in ("sum", "mean"):
            raise ConfigError(f"reduction must be 'sum' or 'mean', got {self.reduction!r}")


def complex_sq_distance(c1, c2):
    """``|c1 - c2|^2``; works elementwise on arrays."""
    d = np.asarray(c1) - np.asarray(c2)
    return d.real**2 + d.imag**2


_warned_clamp = False


def _overflow_guard(arg: np.ndarray, dtype) -> np.ndarray:
    global _warned_clamp
    if np.dtype(dtype) == np.float32:
        if np.any(arg > SINGLE_PRECISION_EXP_CAP):
            # first occurrence at WARNING, repeats at DEBUG to keep training logs readable
            level = logging.DEBUG if _warned_clamp else logging.WARNING
            logger.log(level, "frequency weight exponent %.3g clamped at %g", float(arg.max()), SINGLE_PRECISION_EXP_CAP)
            _warned_clamp = True
        return arg
    with np.errstate(over="ignore"):
        w = np.exp(arg)
    bad = np.argwhere(~np.isfinite(w))
    if bad.size:
        u, v = (int(i) for i in bad[0][-2:])
        raise OverflowError(f"frequency weight overflows at (u, v) = ({u}, {v})")
    return arg


def freq_weight(fs: np.ndarray, ft: np.ndarray, cfg: FreqAttentionConfig = FreqAttentionConfig()) -> np.ndarray:
    """Weight map ``exp(gamma * mean_c |F_S - F_T|^2)`` from two spectra ``(..., C, W, H)``."""
    fs, ft = np.asarray(fs), np.asarray(ft)
    if fs.shape != ft.shape:
        raise DimensionError(f"freq_weight: spectra {fs.shape} and {ft.shape} differ")
    arg = cfg.gamma_fr * complex_sq_distance(fs, ft).mean(axis=-3)
    dtype = np.float32 if fs.dtype == np.complex64 else np.float64
    _overflow_guard(arg, dtype)
    if dtype == np.float32:
        arg = np.minimum(arg, SINGLE_PRECISION_EXP_CAP)
    return np.exp(arg)


def freq_loss(
    a_s: Tensor,
    a_t,
    cfg: FreqAttentionConfig = FreqAttentionConfig(),
    weights: np.ndarray | None = None,
) -> Tensor:
    """Weighted spectral loss of student features against frozen teacher features.

    Accepts ``(C, W, H)`` or batched ``(B, C, W, H)`` inputs; a batch returns
    the mean of the per-sample losses. ``weights`` (broadcastable to
    ``(..., 1, W, H)``) replaces the computed weight map with constants, which
    makes the detached-weight gradient the exact gradient of the result.
    """
    a_s = as_tensor(a_s)
    a_t = np.asarray(a_t.data if isinstance(a_t, Tensor) else a_t)
    if a_s.shape != a_t.shape:
        raise DimensionError(f"freq_loss: student {a_s.shape} vs teacher {a_t.shape}")
    if a_s.ndim < 3:
        raise DimensionError(f"freq_loss expects (C, W, H) features, got {a_s.shape}")
    spec_t = dft2_per_channel(a_t)
    target = np.stack([spec_t.real, spec_t.imag]).astype(a_s.dtype, copy=False)

    d = sum_(square(sub(dft2(a_s), Tensor(target))), axis=0)  # (..., C, W, H)
    if weights is not None:
        per_sample = sum_(mul(Tensor(np.asarray(weights, dtype=a_s.dtype)), d), axis=(-3, -2, -1))
        return _reduce(per_sample, a_s.shape, cfg)
    arg = scale(mean(d, axis=-3, keepdims=True), cfg.gamma_fr)  # (..., 1, W, H)
    _overflow_guard(arg.data, a_s.dtype)
    capped = a_s.dtype == np.float32 and np.any(arg.data > SINGLE_PRECISION_EXP_CAP)
    if cfg.weight_detached:
        w_data = np.exp(np.minimum(arg.data, SINGLE_PRECISION_EXP_CAP) if capped else arg.data)
        weights = Tensor(w_data)
    else:
        if capped:
            arg = sub(arg, relu(sub(arg, SINGLE_PRECISION_EXP_CAP)))
        weights = exp(arg)
    return _reduce(sum_(mul(weights, d), axis=(-3, -2, -1)), a_s.shape, cfg)


def _reduce(per_sample: Tensor, shape, cfg: FreqAttentionConfig) -> Tensor:
    if cfg.reduction == "mean":
        per_sample = scale(per_sample, 1.0 / int(np.prod(shape[-3:])))
    return mean(per_sample)
