"""Multi-view attention distillation through a binned sliced Wasserstein distance.

A feature tensor ``A`` of shape ``(C, W, H)`` becomes a discrete measure with
atoms at the integer grid points ``(c, x, y)`` and masses
``P = A**2 / ||A||_F**2``. For a direction ``theta`` on the unit sphere every
atom is projected to ``<theta, (c, x, y)>``, atoms are sorted by that value
(ties broken by linear index) and the sorted sequence is cut into ``g``
contiguous, near-equal-count groups. The summed mass of each group is the
attention vector for that view.

The sort permutation depends only on the shape and ``theta``, so two tensors
of the same shape are always binned identically and the binned distance is a
smooth function of the masses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DegenerateInputError, DimensionError
from .tensor import Tensor, add, as_tensor, div, from_op, mean, relu, scale, square, sub, sum_

PROJECTION_RNG = "numpy.random.PCG64"


@dataclass
class MultiViewConfig:
    k: int = 64
    g: int | None = None  # None: half the channel count
    gamma_mv: float = 100.0
    eta_mv: float = 50.0
    margin: float = 0.012
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.g is not None and self.g < 1:
            raise ConfigError(f"g must be >= 1, got {self.g}")
        if self.margin < 0:
            raise ConfigError(f"margin must be >= 0, got {self.margin}")

    def groups_for(self, channels: int) -> int:
        return self.g if self.g is not None else max(1, channels // 2)


@dataclass
class ProjectionSet:
    directions: np.ndarray  # (k, 3), unit rows
    seed: int

    @property
    def k(self) -> int:
        return len(self.directions)


@dataclass
class AttentionVector:
    bin_mass: np.ndarray

    @property
    def g(self) -> int:
        return len(self.bin_mass)


def normalize_density(a):
    """``A**2 / sum(A**2)`` over the last three axes; differentiable for tensors."""
    t = as_tensor(a)
    if t.ndim < 3:
        raise DimensionError(f"expected (C, W, H) features, got shape {t.shape}")
    sq = square(t)
    total = sum_(sq, axis=(-3, -2, -1), keepdims=True)
    if np.any(total.data == 0):
        raise DegenerateInputError("cannot normalize an all-zero tensor")
    p = div(sq, total)
    return p if isinstance(a, Tensor) else p.data


def sample_projections(k: int, seed: int) -> ProjectionSet:
    """``k`` directions uniform on the 2-sphere from normalized Gaussian draws."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    rng = np.random.Generator(np.random.PCG64(seed))
    out = np.empty((k, 3))
    filled = 0
    while filled < k:
        draw = rng.standard_normal((k - filled, 3))
        norms = np.sqrt((draw * draw).sum(axis=1))
        keep = draw[norms > 0] / norms[norms > 0, None]
        out[filled : filled + len(keep)] = keep
        filled += len(keep)
    return ProjectionSet(out, seed)


def group_sizes(n: int, g: int) -> np.ndarray:
    base, extra = divmod(n, g)
    sizes = np.full(g, base, dtype=np.int64)
    sizes[:extra] += 1
    return sizes


def grid_coordinates(shape: tuple[int, int, int]) -> np.ndarray:
    return np.indices(shape).reshape(3, -1).T.astype(np.float64)


def bin_assignment(shape: tuple[int, int, int], theta: np.ndarray, g: int) -> np.ndarray:
    """Group index of every element (channel-major linear order) for one view."""
    n = int(np.prod(shape))
    if g > n:
        raise ConfigError(f"g={g} exceeds the number of elements {n}")
    t = grid_coordinates(shape) @ np.asarray(theta, dtype=np.float64)
    order = np.argsort(t, kind="stable")
    bins = np.empty(n, dtype=np.int64)
    bins[order] = np.repeat(np.arange(g), group_sizes(n, g))
    return bins


@lru_cache(maxsize=64)
def _binning_matrix_cached(shape, dirs_bytes, k, g):
    dirs = np.frombuffer(dirs_bytes, dtype=np.float64).reshape(k, 3)
    return _build_binning_matrix(shape, dirs, g)


def _build_binning_matrix(shape, dirs, g) -> sp.csr_array:
    n = int(np.prod(shape))
    cols = np.stack([bin_assignment(shape, th, g) + i * g for i, th in enumerate(dirs)], axis=1)
    rows = np.repeat(np.arange(n), len(dirs))
    data = np.ones(n * len(dirs))
    return sp.csr_array((data, (rows, cols.reshape(-1))), shape=(n, len(dirs) * g))


def binning_matrix(shape, proj: ProjectionSet, g: int) -> sp.csr_array:
    """Sparse 0/1 matrix ``(N, K*g)`` mapping flat masses to all attention vectors."""
    dirs = np.ascontiguousarray(proj.directions, dtype=np.float64)
    return _binning_matrix_cached(tuple(int(s) for s in shape), dirs.tobytes(), len(dirs), g)


def bin_masses(p_flat: Tensor, matrix: sp.csr_array) -> Tensor:
    """``(..., N) -> (..., K*g)`` group sums, differentiable in the masses."""
    lead = p_flat.shape[:-1]
    x = p_flat.data.reshape(-1, p_flat.shape[-1])
    out = np.asarray((matrix.T @ x.T).T, dtype=p_flat.dtype).reshape(*lead, matrix.shape[1])

    def vjp(grad):
        gm = grad.reshape(-1, matrix.shape[1])
        return (np.asarray((matrix @ gm.T).T, dtype=p_flat.dtype).reshape(p_flat.shape),)

    return from_op(out, (p_flat,), vjp, "bin_masses")


def project_sort_bin(p, theta, g: int) -> AttentionVector:
    """Attention vector of one density ``(C, W, H)`` along direction ``theta``."""
    p = np.asarray(p.data if isinstance(p, Tensor) else p, dtype=np.float64)
    if p.ndim != 3:
        raise DimensionError(f"expected a (C, W, H) density, got {p.shape}")
    bins = bin_assignment(p.shape, theta, g)
    return AttentionVector(np.bincount(bins, weights=p.reshape(-1), minlength=g))


def _flat(t: Tensor) -> Tensor:
    return t.reshape(*t.shape[:-3], int(np.prod(t.shape[-3:])))


def swd_per_sample(p_s, p_t, proj: ProjectionSet, g: int) -> Tensor:
    """Binned SWD for each sample in a (possibly batched) pair of densities."""
    p_s = as_tensor(p_s)
    p_t = as_tensor(p_t, like=p_s)
    if p_s.shape != p_t.shape:
        raise DimensionError(f"swd: shapes {p_s.shape} and {p_t.shape} differ")
    matrix = binning_matrix(p_s.shape[-3:], proj, g)
    v_s = bin_masses(_flat(p_s), matrix)
    v_t = bin_masses(_flat(p_t), matrix)
    return sum_(square(sub(v_s, v_t)), axis=-1)


def swd(p_s, p_t, proj: ProjectionSet, g: int):
    """``sum_k sum_j (v_S[k, j] - v_T[k, j])**2`` over the projection set.

    Returns a differentiable tensor when ``p_s`` is a :class:`Tensor`, else a float.
    """
    out = swd_per_sample(p_s, p_t, proj, g)
    if isinstance(p_s, Tensor):
        return out
    return float(out.data) if out.ndim == 0 else out.data


def attention_vectors(p, proj: ProjectionSet, g: int) -> np.ndarray:
    """All ``K`` attention vectors of one density, shape ``(K, g)``."""
    p = np.asarray(p.data if isinstance(p, Tensor) else p, dtype=np.float64)
    matrix = binning_matrix(p.shape, proj, g)
    return np.asarray(matrix.T @ p.reshape(-1)).reshape(proj.k, g)


def mv_loss(
    a_s,
    a_t,
    a_t_pos=None,
    a_t_neg=None,
    cfg: MultiViewConfig = MultiViewConfig(),
    proj: ProjectionSet | None = None,
) -> Tensor:
    """Contrastive multi-view loss; batched inputs give the mean per-sample loss.

    ``gamma*SWD(S, T) + eta*(SWD(S, T+) + max(margin - SWD(S, T-), 0))``.
    One projection set (``cfg.seed`` unless ``proj`` is given) serves all terms.
    """
    a_s = as_tensor(a_s)
    consts = [a_t, a_t_pos, a_t_neg]
    for c in consts:
        if c is not None and np.shape(c.data if isinstance(c, Tensor) else c) != a_s.shape:
            raise DimensionError(f"mv_loss: tensor shape {np.shape(c)} differs from student {a_s.shape}")
    if cfg.eta_mv != 0 and (a_t_pos is None or a_t_neg is None):
        raise ConfigError("eta_mv != 0 needs both a positive and a negative teacher tensor")
    if proj is None:
        proj = sample_projections(cfg.k, cfg.seed)
    g = cfg.groups_for(a_s.shape[-3])

    p_s = normalize_density(a_s)

    def teacher_density(t):
        return Tensor(normalize_density(np.asarray(t.data if isinstance(t, Tensor) else t)))

    per_sample = scale(swd_per_sample(p_s, teacher_density(a_t), proj, g), cfg.gamma_mv)
    if cfg.eta_mv != 0:
        pos = swd_per_sample(p_s, teacher_density(a_t_pos), proj, g)
        neg = swd_per_sample(p_s, teacher_density(a_t_neg), proj, g)
        hinge = relu(sub(Tensor(np.asarray(cfg.margin, dtype=a_s.dtype)), neg))
        per_sample = add(per_sample, scale(add(pos, hinge), cfg.eta_mv))
    return mean(per_sample)


def brute_force_binned_distance(p_s, p_t, theta, g: int) -> float:
    """Single-view binned distance by explicit enumeration (reference oracle)."""
    p_s = np.asarray(p_s, dtype=np.float64)
    p_t = np.asarray(p_t, dtype=np.float64)
    if p_s.shape != p_t.shape:
        raise DimensionError("shapes differ")
    C, W, H = p_s.shape
    th = [float(v) for v in theta]
    atoms = []
    for c in range(C):
        for x in range(W):
            for y in range(H):
                idx = (c * W + x) * H + y
                t = float(c) * th[0] + float(x) * th[1] + float(y) * th[2]
                atoms.append((t, idx, float(p_s[c, x, y]), float(p_t[c, x, y])))
    atoms = sorted(atoms, key=lambda a: (a[0], a[1]))
    n = len(atoms)
    base, extra = divmod(n, g)
    total = 0.0
    start = 0
    for j in range(g):
        size = base + (1 if j < extra else 0)
        group = atoms[start : start + size]
        start += size
        diff = sum(a[2] for a in group) - sum(a[3] for a in group)
        total += diff * diff
    return total
