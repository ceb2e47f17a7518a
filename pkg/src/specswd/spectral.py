"""Per-channel 2-D DFT and spectrum-difference maps.

All transforms are unnormalized forward DFTs over the last two axes::

    F[c, u, v] = sum_x sum_y A[c, x, y] * exp(-2j*pi*(u*x/W + v*y/H))

Coefficients are stored unshifted: DC at (0, 0), the highest frequencies near
the middle of the array.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError
from .tensor import Tensor, as_tensor, from_op


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft_axis(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT along one power-of-two axis."""
    x = np.moveaxis(np.asarray(x, dtype=np.complex128), axis, -1)
    n = x.shape[-1]
    if not is_power_of_two(n):
        raise DimensionError(f"radix-2 FFT needs a power-of-two length, got {n}")
    lead = x.shape[:-1]
    y = x[..., _bit_reverse(n)]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        y = y.reshape(*lead, n // size, size)
        even = y[..., :half]
        odd = y[..., half:] * twiddle
        y = np.concatenate([even + odd, even - odd], axis=-1)
        size *= 2
    return np.moveaxis(y.reshape(*lead, n), -1, axis)


def dft_axis(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Dense O(n^2) DFT along one axis, any length."""
    x = np.moveaxis(np.asarray(x, dtype=np.complex128), axis, -1)
    n = x.shape[-1]
    k = np.arange(n)
    mat = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return np.moveaxis(x @ mat.T, -1, axis)


def _transform_axis(x: np.ndarray, axis: int) -> np.ndarray:
    if is_power_of_two(x.shape[axis]):
        return fft_axis(x, axis)
    return dft_axis(x, axis)


def _check_dims(shape: tuple[int, ...]) -> None:
    if len(shape) < 2:
        raise DimensionError(f"need at least two axes, got shape {shape}")
    if any(n == 0 for n in shape):
        raise DimensionError(f"zero-sized dimension in shape {shape}")


def dft2_per_channel(a) -> np.ndarray:
    """Complex spectrum of every channel, row-column over the last two axes.

    Power-of-two axes use the radix-2 FFT; other lengths fall back to the
    dense per-axis DFT.
    """
    a = a.data if isinstance(a, Tensor) else np.asarray(a)
    _check_dims(a.shape)
    return _transform_axis(_transform_axis(a, -2), -1)


def naive_dft2(a) -> np.ndarray:
    """Direct double-sum evaluation; the oracle for :func:`dft2_per_channel`."""
    a = np.asarray(a.data if isinstance(a, Tensor) else a, dtype=np.float64)
    _check_dims(a.shape)
    w, h = a.shape[-2:]
    x = np.arange(w)
    y = np.arange(h)
    # kernel[u, v, x, y] = exp(-2i*pi*(u x / W + v y / H))
    phase = np.outer(x, x)[:, None, :, None] / w + np.outer(y, y)[None, :, None, :] / h
    kernel = np.exp(-2j * np.pi * phase)
    return np.einsum("...xy,uvxy->...uv", a, kernel)


def dft2(a: Tensor) -> Tensor:
    """Differentiable per-channel DFT.

    Returns a real tensor of shape ``(2, *a.shape)`` holding the real and
    imaginary parts. The adjoint of the forward DFT maps an upstream
    gradient ``G = g_re + i g_im`` to ``Re(DFT(conj(G)))``.
    """
    a = as_tensor(a)
    spec = dft2_per_channel(a.data)
    out = np.stack([spec.real, spec.imag]).astype(a.dtype, copy=False)

    def vjp(g):
        z = g[0] - 1j * g[1]
        return (dft2_per_channel(z).real.astype(a.dtype, copy=False),)

    return from_op(out, (a,), vjp, "dft2")


# ---------------------------------------------------------------------------
# frequency bands and difference maps


def signed_frequencies(n: int) -> np.ndarray:
    """Index k of an unshifted length-n spectrum mapped to its signed frequency."""
    k = np.arange(n)
    return np.where(k <= n // 2, k, k - n)


def low_corner_mask(w: int, h: int, radius: int = 1) -> np.ndarray:
    """The (2r+1)x(2r+1) block of lowest frequencies around DC, wrapping corners."""
    fu = np.abs(signed_frequencies(w))[:, None]
    fv = np.abs(signed_frequencies(h))[None, :]
    return (fu <= radius) & (fv <= radius)


def high_band_mask(w: int, h: int) -> np.ndarray:
    """Everything outside the lowest-quarter band ``|u| < W/4 and |v| < H/4``."""
    fu = np.abs(signed_frequencies(w))[:, None]
    fv = np.abs(signed_frequencies(h))[None, :]
    return ~((fu < w / 4) & (fv < h / 4))


def high_frequency_fraction(a) -> float:
    """Share of spectral energy in :func:`high_band_mask`, summed over channels."""
    a = np.asarray(a.data if isinstance(a, Tensor) else a, dtype=np.float64)
    power = np.abs(dft2_per_channel(a)) ** 2
    power = power.reshape(-1, *a.shape[-2:]).sum(axis=0)
    total = power.sum()
    if total == 0:
        return 0.0
    return float(power[high_band_mask(*a.shape[-2:])].sum() / total)


SPECTRUM_MODES = ("magnitude", "log", "power")


def spectrum_diff(raw, degraded, mode: str = "magnitude") -> np.ndarray:
    """Channel-mean of ``| s(F_raw) - s(F_degraded) |``, scaled so its max is 1.

    ``s`` is ``|F|`` for ``mode="magnitude"``, ``log1p|F|`` for ``"log"`` and
    ``|F|**2`` for ``"power"``. An all-zero map is returned unscaled.
    """
    if mode not in SPECTRUM_MODES:
        raise ValueError(f"mode must be one of {SPECTRUM_MODES}, got {mode!r}")
    raw = np.asarray(raw.data if isinstance(raw, Tensor) else raw, dtype=np.float64)
    degraded = np.asarray(degraded.data if isinstance(degraded, Tensor) else degraded, dtype=np.float64)
    if raw.shape != degraded.shape:
        raise DimensionError(f"spectrum_diff: shapes {raw.shape} and {degraded.shape} differ")
    if raw.ndim == 2:
        raw, degraded = raw[None], degraded[None]
    s = {"magnitude": np.abs, "log": lambda z: np.log1p(np.abs(z)), "power": lambda z: np.abs(z) ** 2}[mode]
    diff = np.abs(s(dft2_per_channel(raw)) - s(dft2_per_channel(degraded)))
    m = diff.reshape(-1, *raw.shape[-2:]).mean(axis=0)
    peak = m.max()
    return m / peak if peak > 0 else m


def band_ratio(diff_map: np.ndarray) -> float:
    """Mean of a difference map over the high band divided by its low-corner mean."""
    w, h = diff_map.shape
    hi = diff_map[high_band_mask(w, h)].mean()
    lo = diff_map[low_corner_mask(w, h)].mean()
    return float(hi / lo) if lo > 0 else float("inf")


def write_pgm(path, image: np.ndarray, maxval: int = 255) -> None:
    """ASCII PGM (P2) of a map with values in [0, 1]; rows are the first axis."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    levels = np.rint(img * maxval).astype(int)
    rows, cols = levels.shape
    lines = ["P2", f"{cols} {rows}", str(maxval)]
    lines += [" ".join(str(v) for v in row) for row in levels]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def map_to_csv_rows(values: np.ndarray) -> list[str]:
    rows = ["u,v,value"]
    w, h = values.shape
    for u in range(w):
        for v in range(h):
            rows.append(f"{u},{v},{values[u, v]:.10g}")
    return rows
