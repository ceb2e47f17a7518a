import json
import os
import subprocess
import sys

import numpy as np
import pytest

from specswd import adt1
from specswd.cli import main

TINY = {
    "gen": {"image_size": 16, "num_per_class": [8, 4, 4], "seed": 3},
    "distill": {
        "alpha": 0.01,
        "beta": 0.1,
        "lr": 3e-3,
        "batch_size": 8,
        "max_epochs": 2,
        "patience": 2,
        "validations_per_epoch": 2,
    },
    "freq": {"gamma_fr": 1e-4, "reduction": "mean"},
    "mv": {"k": 8},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(TINY))
    assert main(["gen-data", "--config", str(cfg), "--out", str(root / "data")]) == 0
    assert main(["train-teacher", "--config", str(cfg), "--data", str(root / "data"), "--out", str(root / "t")]) == 0
    return root, cfg


def write_examples(d):
    adt1.write(d / "ps.adt1", np.array([0.2, 0.8]).reshape(1, 1, 2))
    adt1.write(d / "pt.adt1", np.array([0.5, 0.5]).reshape(1, 1, 2))
    adt1.write(d / "pn.adt1", np.array([0.7, 0.3]).reshape(1, 1, 2))
    adt1.write(d / "as.adt1", np.array([1.0, 0.0]).reshape(1, 1, 2))
    adt1.write(d / "at.adt1", np.array([0.0, 1.0]).reshape(1, 1, 2))


def test_swd_worked_examples(tmp_path, capsys):
    write_examples(tmp_path)
    assert main(["swd", "--k", "1", "--g", "2", "--seed", "7", "--density", str(tmp_path / "ps.adt1"), str(tmp_path / "pt.adt1")]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.18, rel=1e-6)
    argv = ["swd", "--k", "1", "--g", "2", "--seed", "7", "--density"]
    argv += ["--pos", str(tmp_path / "pt.adt1"), "--neg", str(tmp_path / "pn.adt1")]
    assert main(argv + [str(tmp_path / "ps.adt1"), str(tmp_path / "pt.adt1")]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(27.0, rel=1e-6)
    assert main(["spectrum-diff", "--freq-loss", str(tmp_path / "as.adt1"), str(tmp_path / "at.adt1")]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(218.3926, rel=1e-6)


def test_swd_vectors_csv(tmp_path, capsys):
    write_examples(tmp_path)
    out = tmp_path / "v.csv"
    assert main(["swd", "--k", "3", "--g", "2", str(tmp_path / "as.adt1"), str(tmp_path / "at.adt1"), "--vectors-csv", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "k,bin,mass_a,mass_b" and len(lines) == 7


def test_spectrum_diff_outputs(tmp_path, capsys):
    rng = np.random.default_rng(0)
    adt1.write(tmp_path / "r.adt1", rng.uniform(size=(1, 8, 8)))
    adt1.write(tmp_path / "d.adt1", rng.uniform(size=(1, 8, 8)))
    argv = ["spectrum-diff", str(tmp_path / "r.adt1"), str(tmp_path / "d.adt1")]
    assert main(argv + ["--pgm", str(tmp_path / "m.pgm"), "--csv", str(tmp_path / "m.csv")]) == 0
    assert capsys.readouterr().out.startswith("band_ratio,")
    assert (tmp_path / "m.pgm").read_text().startswith("P2\n8 8\n255\n")
    assert len((tmp_path / "m.csv").read_text().splitlines()) == 65
    assert main(["spectrum-diff", "--freq-loss", "--gamma-fr", "0.01", "--weights-csv", str(tmp_path / "w.csv")] + argv[1:]) == 0


def test_exit_codes(tmp_path, capsys):
    assert main(["nope"]) == 2
    assert main(["swd", "--bogus", "a", "b"]) == 2
    assert main(["swd", str(tmp_path / "missing.adt1"), str(tmp_path / "missing.adt1")]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"gen": {"colour": 1}}))
    assert main(["gen-data", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert main(["eval", "--data", str(tmp_path / "nodata"), "--checkpoint", str(tmp_path)]) == 3
    adt1.write(tmp_path / "z.adt1", np.zeros((1, 2, 2)))
    assert main(["swd", str(tmp_path / "z.adt1"), str(tmp_path / "z.adt1")]) == 2


def test_pipeline_eval_and_config_echo(workspace, capsys):
    root, cfg = workspace
    capsys.readouterr()
    argv = ["distill", "--config", str(cfg), "--data", str(root / "data"), "--teacher", str(root / "t"), "--out", str(root / "s")]
    assert main(argv) == 0
    assert main(["eval", "--data", str(root / "data"), "--checkpoint", str(root / "s")]) == 0
    lines = capsys.readouterr().out.splitlines()[-2:]
    assert lines[0] == "dataset,quality,acc,r_at_1,n"
    assert lines[1].startswith("data,heavy,") and lines[1].endswith(",8")
    for d in ("data", "t", "s"):
        echoed = json.loads((root / d / "config.json").read_text())
        assert echoed["gen"]["image_size"] == 16 and echoed["distill"]["lr"] == 3e-3


def test_ablate_four_rows(workspace, capsys):
    root, cfg = workspace
    capsys.readouterr()
    assert main(["ablate", "--config", str(cfg), "--data", str(root / "data"), "--out", str(root / "ab")]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("variant,")
    assert [l.split(",")[0] for l in lines[1:]] == ["baseline", "fr", "mv", "fr+mv"]
    assert (root / "ab" / "config.json").exists()


def test_gradcheck_command(capsys):
    assert main(["gradcheck"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("name,") and all(l.endswith("True") for l in out[1:])


def _run(argv, threads):
    env = dict(os.environ, OMP_NUM_THREADS=str(threads), OPENBLAS_NUM_THREADS=str(threads), MKL_NUM_THREADS=str(threads))
    return subprocess.run([sys.executable, "-m", "specswd", *argv], env=env, capture_output=True, text=True, check=True)


def test_outputs_identical_across_thread_counts(workspace, tmp_path):
    root, cfg = workspace
    outs = []
    for threads in (1, 4):
        out = tmp_path / f"s{threads}"
        argv = ["distill", "--config", str(cfg), "--data", str(root / "data"), "--teacher", str(root / "t"), "--out", str(out)]
        res = _run(argv, threads)
        outs.append((res.stdout, (out / "params.adt1").read_bytes(), (out / "trainlog.csv").read_bytes()))
    assert outs[0] == outs[1]
