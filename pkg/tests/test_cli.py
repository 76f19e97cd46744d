import csv
import json
import subprocess
import sys

import pytest

from vheat.checkpoint import read_checkpoint
from vheat.cli import main
from vheat.data import load_idx_dir
from vheat.visualize import read_pgm


def test_verify_dct(capsys):
    assert main(["verify", "--suite", "dct"]) == 0
    out = capsys.readouterr().out
    assert "dct.orthonormality" in out and "ALL PASSED" in out


def test_verify_exit_code_on_failure(monkeypatch, capsys):
    from vheat import verify
    from vheat.verify import Check

    monkeypatch.setitem(verify.SUITE_FUNCS, "hco", lambda seed: [Check("hco.broken", 1.0, 0.5)])
    assert main(["verify", "--suite", "hco"]) == 1
    assert "[FAIL] hco.broken" in capsys.readouterr().out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "vheat", "verify", "--suite", "hco"], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "hco.semigroup" in r.stdout


def test_train_eval_synthetic(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"preset": "micro", "num_classes": 4, "optim": {"batch_size": 32}}))
    ck = tmp_path / "m.ckpt"
    args = ["train", "--config", str(cfg), "--out", str(ck), "--synthetic", "--epochs", "1",
            "--synth-train", "64", "--synth-test", "32", "--deterministic", "--seed", "3"]
    assert main(args) == 0
    first = capsys.readouterr().out
    loaded = read_checkpoint(ck)
    assert loaded.config.num_classes == 4 and loaded.optimizer["step"] == 2
    assert loaded.extra["data"]["synthetic"]["seed"] == 3 and "normalizer" in loaded.extra
    rows = list(csv.reader(open(f"{ck}.metrics.csv")))
    assert rows[0] == ["epoch", "split", "loss", "top1"]

    assert main(args) == 0  # deterministic: identical output
    assert capsys.readouterr().out.split("checkpoint")[0] == first.split("checkpoint")[0]

    assert main(["eval", "--ckpt", str(ck)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("split=test n=32")
    top1 = float(out.split("top1=")[1].split()[0])
    assert top1 == pytest.approx(loaded.extra["test_top1"], abs=1e-4)


def test_train_idx(tmp_path, digits_dir, capsys):
    ck = tmp_path / "d.ckpt"
    assert main(["train", "--data", digits_dir, "--out", str(ck), "--epochs", "1", "--max-steps", "2",
                 "--limit", "64", "--batch-size", "32"]) == 0
    assert "steps=2" in capsys.readouterr().out
    assert main(["eval", "--ckpt", str(ck), "--data", digits_dir]) == 0
    n = len(load_idx_dir(digits_dir, "test"))
    assert capsys.readouterr().out.startswith(f"split=test n={n} ")


def test_train_needs_data(tmp_path):
    with pytest.raises(SystemExit):
        main(["train", "--out", str(tmp_path / "x.ckpt")])


def test_bench(tmp_path, capsys):
    path = tmp_path / "b.csv"
    assert main(["bench", "--op", "hco", "--resolutions", "8,16,32,64", "--channels", "4", "--repeats", "5",
                 "--csv", str(path), "--threads", "1"]) == 0
    assert "slope hco" in capsys.readouterr().out
    rows = list(csv.reader(open(path)))
    assert rows[0][-1] == "slope" and len(rows) == 5


def test_bench_error_is_reported(capsys):
    assert main(["bench", "--op", "dct", "--resolutions", "32,16"]) == 2
    assert "increasing" in capsys.readouterr().err


def test_visualize_uniform(tmp_path):
    assert main(["visualize", "--source", "8,8", "--k", "1", "--times", "0,1,5", "--extent", "16",
                 "--out", str(tmp_path)]) == 0
    img = read_pgm(tmp_path / "conduction_t0.pgm")
    assert img.shape == (16, 16) and img[8, 8] == 255 and img.sum() == 255


def test_visualize_checkpoint(tmp_path):
    from vheat.backbone import build_model, micro_config
    from vheat.checkpoint import save_checkpoint

    save_checkpoint(build_model(micro_config(), 0), tmp_path / "m.ckpt")
    assert main(["visualize", "--source", "1,1", "--ckpt", str(tmp_path / "m.ckpt"), "--times", "1",
                 "--out", str(tmp_path / "v")]) == 0
    assert read_pgm(tmp_path / "v" / "conduction_t1.pgm").shape == (8, 8)


def test_visualize_needs_k_or_ckpt(tmp_path):
    with pytest.raises(SystemExit):
        main(["visualize", "--source", "1,1", "--out", str(tmp_path)])


def test_visualize_bad_source(tmp_path, capsys):
    assert main(["visualize", "--source", "99,1", "--k", "1", "--out", str(tmp_path)]) == 2
    assert "outside" in capsys.readouterr().err
