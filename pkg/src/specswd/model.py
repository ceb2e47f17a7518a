"""Tiny CNN classifier and the Adam optimizer."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionError, TrainingAborted
from .tensor import Tensor, avg_pool2x2, conv2d, matmul, mean, relu, add


@dataclass(frozen=True)
class ConvBlock:
    out_channels: int
    stride: int = 1
    pool: bool = True


@dataclass(frozen=True)
class ModelSpec:
    """3x3 conv blocks (relu, optional 2x2 average pool), then GAP and a linear head."""

    in_channels: int = 1
    image_size: int = 32
    blocks: tuple[ConvBlock, ...] = (ConvBlock(8), ConvBlock(16))
    num_classes: int = 2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["blocks"] = [asdict(b) for b in self.blocks]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        d["blocks"] = tuple(ConvBlock(**b) for b in d["blocks"])
        return cls(**d)

    def spec_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def feature_shape(self) -> tuple[int, int, int]:
        size = self.image_size
        for b in self.blocks:
            size = (size - 1) // b.stride + 1
            if b.pool:
                size //= 2
        return (self.blocks[-1].out_channels, size, size)

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        shapes = []
        cin = self.in_channels
        for i, b in enumerate(self.blocks):
            shapes.append((f"block{i}.weight", (b.out_channels, cin, 3, 3)))
            shapes.append((f"block{i}.bias", (b.out_channels,)))
            cin = b.out_channels
        shapes.append(("head.weight", (cin, self.num_classes)))
        shapes.append(("head.bias", (self.num_classes,)))
        return shapes


@dataclass
class ModelParams:
    spec: ModelSpec
    values: list[np.ndarray]

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.spec.param_shapes()]

    def copy(self) -> "ModelParams":
        return ModelParams(self.spec, [v.copy() for v in self.values])

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.spec, [v.astype(dtype) for v in self.values])

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.values))


def init_params(spec: ModelSpec, rng: np.random.Generator, dtype=np.float32) -> ModelParams:
    values = []
    for name, shape in spec.param_shapes():
        if name.endswith("bias"):
            values.append(np.zeros(shape, dtype=dtype))
        elif name.startswith("block"):
            fan_in = shape[1] * shape[2] * shape[3]
            values.append((rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype))
        else:
            values.append((rng.standard_normal(shape) * np.sqrt(1.0 / shape[0])).astype(dtype))
    return ModelParams(spec, values)


def forward(spec: ModelSpec, params, images) -> tuple[Tensor, Tensor]:
    """Class logits ``(B, classes)`` and backbone features ``(B, C, W, H)``."""
    tensors = [p if isinstance(p, Tensor) else Tensor(p) for p in params]
    x = images if isinstance(images, Tensor) else Tensor(images)
    expected = (spec.in_channels, spec.image_size, spec.image_size)
    if x.ndim != 4 or x.shape[1:] != expected:
        raise DimensionError(f"expected images of shape (B, {expected}), got {x.shape}")
    it = iter(tensors)
    for block in spec.blocks:
        w, b = next(it), next(it)
        x = relu(conv2d(x, w, b, stride=block.stride, padding=1))
        if block.pool:
            x = avg_pool2x2(x)
    features = x
    w_head, b_head = next(it), next(it)
    pooled = mean(features, axis=(2, 3))
    logits = add(matmul(pooled, w_head), b_head)
    return logits, features


def predict(spec: ModelSpec, params: ModelParams, images: np.ndarray, batch: int = 256):
    """Logits and pooled penultimate features for a stack of images, no tape."""
    logits, pooled = [], []
    for i in range(0, len(images), batch):
        lg, feats = forward(spec, params.values, images[i : i + batch])
        logits.append(lg.data)
        pooled.append(feats.data.mean(axis=(2, 3)))
    return np.concatenate(logits), np.concatenate(pooled)


def backbone_features(spec: ModelSpec, params: ModelParams, images: np.ndarray, batch: int = 256) -> np.ndarray:
    out = []
    for i in range(0, len(images), batch):
        out.append(forward(spec, params.values, images[i : i + batch])[1].data)
    return np.concatenate(out)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        return cls([np.zeros_like(p) for p in params.values], [np.zeros_like(p) for p in params.values])


def adam_step(
    params: ModelParams,
    grads: list[np.ndarray],
    state: AdamState,
    lr: float = 2e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ModelParams:
    """One bias-corrected Adam update; returns new params and advances ``state``."""
    for name, g in zip(params.names, grads):
        if not np.all(np.isfinite(g)):
            raise TrainingAborted(f"non-finite gradient for parameter {name}")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    new_values = []
    for i, (p, g) in enumerate(zip(params.values, grads)):
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * (g * g)
        update = lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + eps)
        new_values.append((p - update).astype(p.dtype))
    return ModelParams(params.spec, new_values)
