"""Synthetic paired raw/compressed two-class images.

Real images are smooth Gaussian-filtered noise. Fakes add a small
checkerboard patch, a high-frequency fingerprint. Degradation is an 8x8
block-DCT quantizer in the style of baseline JPEG, which strips most of that
fingerprint at heavy quality.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from . import adt1
from .errors import ConfigError, DataError, DimensionError

SCHEMA_VERSION = 1
SPLITS = ("train", "val", "test")

# standard JPEG luminance table (ITU-T T.81, Annex K)
LUMINANCE_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)
QUALITY_SCALE = {"mild": 1.0, "heavy": 8.0}


@dataclass
class GenConfig:
    image_size: int = 32
    num_per_class: tuple[int, int, int] = (1000, 250, 250)
    artifact_amplitude: float = 0.2
    artifact_period: int = 4
    quality: str = "heavy"
    seed: int = 0

    def __post_init__(self):
        self.num_per_class = tuple(int(n) for n in self.num_per_class)
        if self.image_size % 8:
            raise ConfigError(f"image_size must be divisible by 8, got {self.image_size}")
        if len(self.num_per_class) != 3 or min(self.num_per_class) < 0:
            raise ConfigError(f"num_per_class needs three non-negative counts, got {self.num_per_class}")
        if self.artifact_period < 2:
            raise ConfigError(f"artifact_period must be >= 2, got {self.artifact_period}")
        if self.quality not in QUALITY_SCALE:
            raise ConfigError(f"quality must be one of {sorted(QUALITY_SCALE)}, got {self.quality!r}")


def generate_real(cfg: GenConfig, rng: np.random.Generator) -> np.ndarray:
    s = cfg.image_size
    noise = rng.standard_normal((s, s))
    field_ = gaussian_filter(noise, sigma=s / 8, mode="wrap")
    lo, hi = field_.min(), field_.max()
    return ((field_ - lo) / (hi - lo))[None]


def checkerboard(side: int, period: int) -> np.ndarray:
    """``+-1`` pattern whose sign flips every ``period / 2`` pixels along both axes."""
    idx = (2 * np.arange(side)) // period
    return np.where((idx[:, None] + idx[None, :]) % 2 == 0, 1.0, -1.0)


def generate_fake(cfg: GenConfig, rng: np.random.Generator, return_base: bool = False):
    base = generate_real(cfg, rng)
    s = cfg.image_size
    side = s // 4
    x0, y0 = rng.integers(0, s - side + 1, size=2)
    out = base.copy()
    patch = cfg.artifact_amplitude * checkerboard(side, cfg.artifact_period)
    out[0, x0 : x0 + side, y0 : y0 + side] += patch
    out = np.clip(out, 0.0, 1.0)
    return (out, base) if return_base else out


def checkerboard_band_mask(image_size: int, period: int, halfwidth: int = 1) -> np.ndarray:
    """DFT bins within ``halfwidth`` of the checkerboard fundamental ``(+-S/period, +-S/period)``."""
    f = image_size // period
    u = np.arange(image_size)
    near = np.minimum(np.abs(u - f), np.abs(u - (image_size - f))) <= halfwidth
    return near[:, None] & near[None, :]


def band_energy(image: np.ndarray, mask: np.ndarray) -> float:
    power = np.abs(np.fft.fft2(np.asarray(image, dtype=np.float64).reshape(mask.shape))) ** 2
    return float(power[mask].sum())


def dct_matrix(n: int = 8) -> np.ndarray:
    """Orthonormal DCT-II matrix; rows are basis functions."""
    k = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    mat = np.cos(np.pi * (2 * x + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    mat[0] /= np.sqrt(2.0)
    return mat


_DCT8 = dct_matrix(8)


def _blocks(img: np.ndarray) -> np.ndarray:
    s0, s1 = img.shape
    return img.reshape(s0 // 8, 8, s1 // 8, 8).transpose(0, 2, 1, 3)


def _unblocks(blocks: np.ndarray) -> np.ndarray:
    b0, b1 = blocks.shape[:2]
    return blocks.transpose(0, 2, 1, 3).reshape(b0 * 8, b1 * 8)


def block_dct(img: np.ndarray) -> np.ndarray:
    return _DCT8 @ _blocks(img) @ _DCT8.T


def block_idct(coeffs: np.ndarray) -> np.ndarray:
    return _unblocks(_DCT8.T @ coeffs @ _DCT8)


def _quality_scale(quality) -> float:
    if isinstance(quality, str):
        if quality not in QUALITY_SCALE:
            raise ConfigError(f"unknown quality {quality!r}")
        return QUALITY_SCALE[quality]
    return float(quality)


def degrade(image: np.ndarray, quality="heavy") -> np.ndarray:
    """Block-DCT quantize an image in [0, 1] (shape ``(S, S)`` or ``(1, S, S)``).

    Pixels are mapped to the 8-bit level-shifted range before quantization.
    ``quality`` is ``"mild"``, ``"heavy"`` or a numeric table multiplier.
    Output keeps the input dtype and shape.
    """
    arr = np.asarray(image)
    img = arr.reshape(arr.shape[-2:]).astype(np.float64)
    if img.shape[0] % 8 or img.shape[1] % 8:
        raise DimensionError(f"image side must be divisible by 8, got {img.shape}")
    step = LUMINANCE_TABLE * _quality_scale(quality)
    coeffs = block_dct(img * 255.0 - 128.0)
    quantized = np.rint(coeffs / step) * step
    out = np.clip((block_idct(quantized) + 128.0) / 255.0, 0.0, 1.0)
    return out.reshape(arr.shape).astype(arr.dtype if np.issubdtype(arr.dtype, np.floating) else np.float64)


# ---------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    ids: list[str]
    labels: np.ndarray
    splits: np.ndarray
    raw: np.ndarray  # (n, 1, S, S) float32
    deg: np.ndarray
    quality: str
    gen: dict = field(default_factory=dict)
    name: str = "synthetic"

    def indices(self, split: str) -> np.ndarray:
        idx = np.flatnonzero(self.splits == split)
        if idx.size == 0:
            raise DataError(f"split {split!r} is empty")
        return idx


def sample_seed(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, index]))


def _plan(cfg: GenConfig) -> list[tuple[str, int, str]]:
    plan = []
    n = 0
    for split, count in zip(SPLITS, cfg.num_per_class):
        for i in range(count):
            for label in (0, 1):
                plan.append((f"{split}-{n:06d}", label, split))
                n += 1
    return plan


def generate_dataset(cfg: GenConfig) -> Dataset:
    """In-memory dataset; each sample draws from its own child seed."""
    plan = _plan(cfg)
    s = cfg.image_size
    raw = np.empty((len(plan), 1, s, s), dtype=np.float32)
    for n, (_, label, _) in enumerate(plan):
        rng = sample_seed(cfg.seed, n)
        img = generate_fake(cfg, rng) if label else generate_real(cfg, rng)
        raw[n] = img.astype(np.float32)
    deg = np.stack([degrade(r, cfg.quality) for r in raw]).astype(np.float32)
    return Dataset(
        ids=[p[0] for p in plan],
        labels=np.array([p[1] for p in plan], dtype=np.int64),
        splits=np.array([p[2] for p in plan]),
        raw=raw,
        deg=deg,
        quality=cfg.quality,
        gen=gen_config_dict(cfg),
    )


def gen_config_dict(cfg: GenConfig) -> dict:
    d = asdict(cfg)
    d["num_per_class"] = list(cfg.num_per_class)
    return d


def build_dataset(cfg: GenConfig, out_dir) -> Dataset:
    """Write ``manifest.json``, ``raw/<id>.adt1`` and ``deg/<id>.adt1``."""
    out = Path(out_dir)
    ds = generate_dataset(cfg)
    (out / "raw").mkdir(parents=True, exist_ok=True)
    (out / "deg").mkdir(parents=True, exist_ok=True)
    for sid, r, d in zip(ds.ids, ds.raw, ds.deg):
        adt1.write(out / "raw" / f"{sid}.adt1", r)
        adt1.write(out / "deg" / f"{sid}.adt1", d)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "gen": gen_config_dict(cfg),
        "quality": cfg.quality,
        "seed": cfg.seed,
        "samples": [
            {"id": sid, "label": int(lab), "split": str(sp)} for sid, lab, sp in zip(ds.ids, ds.labels, ds.splits)
        ],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return ds


def load_dataset(data_dir) -> Dataset:
    root = Path(data_dir)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
    except FileNotFoundError:
        raise DataError(f"no manifest.json in {root}") from None
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"unsupported dataset schema {manifest.get('schema_version')!r}")
    recs = manifest["samples"]
    if not recs:
        raise DataError("dataset has no samples")
    raw = np.stack([adt1.read(root / "raw" / f"{r['id']}.adt1") for r in recs])
    deg = np.stack([adt1.read(root / "deg" / f"{r['id']}.adt1") for r in recs])
    labels = np.array([r["label"] for r in recs], dtype=np.int64)
    if not np.isin(labels, (0, 1)).all():
        raise DataError("labels must be 0 or 1")
    return Dataset(
        ids=[r["id"] for r in recs],
        labels=labels,
        splits=np.array([r["split"] for r in recs]),
        raw=raw,
        deg=deg,
        quality=manifest["quality"],
        gen=manifest.get("gen", {}),
        name=root.name,
    )
