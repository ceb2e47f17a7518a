"""Command-line entry point: ``specswd <command> ...`` or ``python -m specswd``.

Exit status: 0 success, 2 configuration or usage error, 3 data or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import adt1
from .config import RunConfig, load_config, write_config
from .errors import ConfigError, DataError, DegenerateInputError, DimensionError
from .experiment import evaluate_model, run_seed, summarize
from .freq_attention import FreqAttentionConfig, freq_loss, freq_weight
from .multiview import MultiViewConfig, attention_vectors, mv_loss, normalize_density, sample_projections, swd
from .spectral import SPECTRUM_MODES, band_ratio, dft2_per_channel, map_to_csv_rows, spectrum_diff, write_pgm
from .synth import build_dataset, load_dataset
from .train import distill_student, load_checkpoint, save_checkpoint, train_teacher

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

logger = logging.getLogger("specswd")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _run_config(args) -> RunConfig:
    return load_config(args.config).with_seed(args.seed)


def _read(path) -> np.ndarray:
    return adt1.read(path).astype(np.float64)


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args) -> int:
    cfg = _run_config(args)
    data = build_dataset(cfg.gen, args.out)
    write_config(cfg, args.out)
    counts = {s: len(data.indices(s)) for s in ("train", "val", "test")}
    print(",".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def cmd_train_teacher(args) -> int:
    cfg = _run_config(args)
    data = load_dataset(args.data)
    params, log = train_teacher(data, cfg.teacher())
    save_checkpoint(args.out, params, log)
    write_config(cfg, args.out)
    print(f"best_step={log.best_step},val_acc={_fmt(log.best_val_acc)}")
    return EXIT_OK


def cmd_distill(args) -> int:
    cfg = _run_config(args)
    data = load_dataset(args.data)
    teacher = load_checkpoint(args.teacher)
    params, log = distill_student(data, teacher, cfg.distill)
    save_checkpoint(args.out, params, log)
    write_config(cfg, args.out)
    print(f"best_step={log.best_step},val_acc={_fmt(log.best_val_acc)}")
    return EXIT_OK


def cmd_eval(args) -> int:
    data = load_dataset(args.data)
    params = load_checkpoint(args.checkpoint)
    idx = data.indices(args.split)
    images = data.raw[idx] if args.images == "raw" else data.deg[idx]
    res = evaluate_model(params, images, data.labels[idx])
    quality = "raw" if args.images == "raw" else data.quality
    print("dataset,quality,acc,r_at_1,n")
    print(f"{Path(args.data).name},{quality},{_fmt(res.acc)},{_fmt(res.recall_at_1)},{res.n}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _run_config(args)
    data = load_dataset(args.data)
    seeds = args.seeds if args.seeds else [cfg.distill.master_seed]
    runs = []
    for seed in seeds:
        runs += run_seed(data, cfg, seed, split=args.split)
    rows = summarize(runs)
    header = ["variant", "alpha", "beta", "acc", "r_at_1", "n", "seeds"]
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(_fmt(r[h]) if isinstance(r[h], float) else str(r[h]) for h in header))
    print("\n".join(lines))
    if args.out:
        write_config(cfg, args.out)
        (Path(args.out) / "ablation.csv").write_text("\n".join(lines) + "\n")
        with open(Path(args.out) / "ablation_runs.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "variant", "teacher_val_acc", "acc", "r_at_1", "n"])
            for r in runs:
                w.writerow([r.seed, r.variant, _fmt(r.teacher_val_acc), _fmt(r.result.acc), _fmt(r.result.recall_at_1), r.result.n])
    return EXIT_OK


def cmd_swd(args) -> int:
    a, b = _read(args.a), _read(args.b)
    proj = sample_projections(args.k, args.seed)
    if args.pos or args.neg:
        if not (args.pos and args.neg):
            raise ConfigError("--pos and --neg must be given together")
        cfg = MultiViewConfig(
            k=args.k, g=args.g, gamma_mv=args.gamma_mv, eta_mv=args.eta_mv, margin=args.margin, seed=args.seed
        )
        to_tensor = _density_to_amplitude if args.density else (lambda x: x)
        value = mv_loss(
            to_tensor(a), to_tensor(b), to_tensor(_read(args.pos)), to_tensor(_read(args.neg)), cfg, proj=proj
        )
        print(_fmt(float(value.data)))
        return EXIT_OK
    p_a = a if args.density else normalize_density(a)
    p_b = b if args.density else normalize_density(b)
    if args.density:
        _check_density(p_a), _check_density(p_b)
    g = args.g if args.g is not None else max(1, a.shape[0] // 2)
    print(_fmt(swd(p_a, p_b, proj, g)))
    if args.vectors_csv:
        out = Path(args.vectors_csv)
        out.parent.mkdir(parents=True, exist_ok=True)
        va, vb = attention_vectors(p_a, proj, g), attention_vectors(p_b, proj, g)
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "bin", "mass_a", "mass_b"])
            for k in range(proj.k):
                for j in range(g):
                    w.writerow([k, j, _fmt(va[k, j]), _fmt(vb[k, j])])
    return EXIT_OK


def _check_density(p: np.ndarray) -> None:
    if p.ndim != 3:
        raise DimensionError(f"expected a (C, W, H) density, got shape {p.shape}")
    if np.any(p < 0) or not np.isclose(p.sum(), 1.0, rtol=0, atol=1e-6):
        raise DataError("--density input must be non-negative and sum to 1")


def _density_to_amplitude(p: np.ndarray) -> np.ndarray:
    # sqrt maps a density back to a tensor whose normalized square is that density
    _check_density(p)
    return np.sqrt(p)


def cmd_spectrum_diff(args) -> int:
    raw, deg = _read(args.raw), _read(args.degraded)
    if args.freq_loss:
        cfg = FreqAttentionConfig(gamma_fr=args.gamma_fr, weight_detached=True, reduction=args.reduction)
        print(_fmt(float(freq_loss(raw, deg, cfg).data)))
        if args.weights_csv:
            w = freq_weight(dft2_per_channel(raw), dft2_per_channel(deg), cfg)
            _write_rows(args.weights_csv, map_to_csv_rows(w))
        return EXIT_OK
    m = spectrum_diff(raw, deg, mode=args.mode)
    print(f"band_ratio,{_fmt(band_ratio(m))}")
    if args.csv:
        _write_rows(args.csv, map_to_csv_rows(m))
    if args.pgm:
        Path(args.pgm).parent.mkdir(parents=True, exist_ok=True)
        write_pgm(args.pgm, m)
    return EXIT_OK


def _write_rows(path, rows: list[str]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(rows) + "\n")


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_all

    ok = True
    print("name,max_relative_error,num_parameters_checked,step_size,tolerance,passed")
    for name, (rep, tol) in run_all(args.seed).items():
        passed = rep.passed(tol)
        ok &= passed
        print(f"{name},{rep.max_relative_error:.3e},{rep.num_parameters_checked},{rep.step_size:g},{tol:g},{passed}")
    return EXIT_OK if ok else 1


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="specswd", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def run_args(sp, data=True, out=True):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="override gen.seed and distill.master_seed")
        if data:
            sp.add_argument("--data", required=True, help="dataset directory")
        if out:
            sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("gen-data", help="build a synthetic raw/degraded dataset")
    run_args(sp, data=False)
    sp.set_defaults(fn=cmd_gen_data)

    sp = sub.add_parser("train-teacher", help="train the teacher on raw images")
    run_args(sp)
    sp.set_defaults(fn=cmd_train_teacher)

    sp = sub.add_parser("distill", help="train a student on degraded images")
    run_args(sp)
    sp.add_argument("--teacher", required=True, help="teacher checkpoint directory")
    sp.set_defaults(fn=cmd_distill)

    sp = sub.add_parser("eval", help="print ACC and R@1 for a checkpoint")
    sp.add_argument("--data", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--split", default="test", choices=("train", "val", "test"))
    sp.add_argument("--images", default="deg", choices=("raw", "deg"))
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("ablate", help="baseline / fr / mv / fr+mv table")
    run_args(sp, out=False)
    sp.add_argument("--out", help="also write CSVs and config here")
    sp.add_argument("--seeds", type=int, nargs="+", help="master seeds to average over")
    sp.add_argument("--split", default="test", choices=("val", "test"))
    sp.set_defaults(fn=cmd_ablate)

    sp = sub.add_parser("swd", help="binned sliced Wasserstein distance of two ADT1 tensors")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--k", type=int, default=64)
    sp.add_argument("--g", type=int, help="groups per projection (default C//2)")
    sp.add_argument("--seed", type=int, default=0, help="projection seed")
    sp.add_argument("--density", action="store_true", help="inputs are already normalized densities")
    sp.add_argument("--pos", help="positive teacher tensor; with --neg prints the contrastive loss")
    sp.add_argument("--neg", help="negative teacher tensor")
    sp.add_argument("--gamma-mv", type=float, default=100.0)
    sp.add_argument("--eta-mv", type=float, default=50.0)
    sp.add_argument("--margin", type=float, default=0.012)
    sp.add_argument("--vectors-csv", help="write the attention vectors of both inputs")
    sp.set_defaults(fn=cmd_swd)

    sp = sub.add_parser("spectrum-diff", help="normalized spectral difference map of two ADT1 tensors")
    sp.add_argument("raw")
    sp.add_argument("degraded")
    sp.add_argument("--mode", default="magnitude", choices=SPECTRUM_MODES)
    sp.add_argument("--pgm", help="write the map as ASCII PGM")
    sp.add_argument("--csv", help="write the map as u,v,value CSV")
    sp.add_argument("--freq-loss", action="store_true", help="print the frequency loss of the pair instead")
    sp.add_argument("--gamma-fr", type=float, default=1.0)
    sp.add_argument("--reduction", default="sum", choices=("sum", "mean"))
    sp.add_argument("--weights-csv", help="with --freq-loss, write the weight map")
    sp.set_defaults(fn=cmd_spectrum_diff)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, DimensionError, DegenerateInputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
