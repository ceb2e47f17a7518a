"""Band ratios of the averaged raw-vs-degraded spectrum difference over seeded fakes.

Writes the averaged map per mode as PGM and CSV next to ``--out``.
"""

import argparse
from pathlib import Path

import numpy as np

from specswd.spectral import SPECTRUM_MODES, high_band_mask, low_corner_mask, map_to_csv_rows, spectrum_diff, write_pgm
from specswd.synth import GenConfig, degrade, generate_fake, generate_real, sample_seed


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--quality", default="heavy")
    ap.add_argument("--seed", type=int, default=109)
    ap.add_argument("--out", default="runs/spectrum")
    args = ap.parse_args()
    cfg = GenConfig(quality=args.quality)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hi = high_band_mask(cfg.image_size, cfg.image_size)
    lo = low_corner_mask(cfg.image_size, cfg.image_size)
    print("kind,mode,mean_high,mean_low,ratio")
    for kind, make in (("fake", generate_fake), ("real", generate_real)):
        for mode in SPECTRUM_MODES:
            maps = [spectrum_diff(x, degrade(x, args.quality), mode=mode) for x in (make(cfg, sample_seed(args.seed, i)) for i in range(args.n))]
            h = float(np.mean([m[hi].mean() for m in maps]))
            l = float(np.mean([m[lo].mean() for m in maps]))
            avg = np.mean(maps, axis=0)
            print(f"{kind},{mode},{h:.4f},{l:.4f},{h / l:.3f}")
            # shift so the DC term sits in the middle of the picture
            write_pgm(out / f"{kind}_{mode}.pgm", np.fft.fftshift(avg / avg.max()))
            (out / f"{kind}_{mode}.csv").write_text("\n".join(map_to_csv_rows(avg)) + "\n")


if __name__ == "__main__":
    main()
