import json
import subprocess
import sys
import time

import pytest

from hybkan.checkpoint import read_checkpoint
from hybkan.cli import main

TRAIN = ["train", "--variant", "wavkan-dog", "--n-train", "128", "--n-test", "64", "--epochs", "1",
         "--image-size", "8"]


def _timed(argv):
    t0 = time.perf_counter()
    code = main(argv)
    return code, time.perf_counter() - t0


def test_count_smoke(capsys):
    code, secs = _timed(["count", "--variant", "hybrid1", "--size", "small"])
    out = capsys.readouterr().out
    assert code == 0 and secs < 60
    fields = dict(line.split(": ", 1) for line in out.strip().splitlines())
    assert int(fields["params"]) == int(fields["params_analytic"]) > 0
    assert float(fields["gflops"]) > 0


def test_count_stable_across_threads(capsys):
    main(["count", "--variant", "effkan", "--size", "tiny"])
    a = capsys.readouterr().out
    main(["--threads", "2", "count", "--variant", "effkan", "--size", "tiny"])
    assert capsys.readouterr().out == a


def test_train_then_eval(tmp_path, capsys):
    code, secs = _timed(["--seed", "3", "--out", str(tmp_path), *TRAIN])
    assert code == 0 and secs < 60
    assert (tmp_path / "metrics.csv").read_text().startswith("epoch,split,loss,top1,top5,lr,seconds")
    ck = read_checkpoint(tmp_path / "checkpoint.hkc")
    assert ck.manifest["seed"] == 3 and ck.manifest["variant"] == "wavkan-dog"
    capsys.readouterr()
    code, secs = _timed(["eval", "--out", str(tmp_path)])
    res = json.loads(capsys.readouterr().out)
    assert code == 0 and secs < 60
    assert res["samples"] == 64 and 0.0 <= res["top1"] <= res["top5"] <= 1.0
    assert main(["eval", "--ema", "--checkpoint", str(tmp_path / "checkpoint.hkc")]) == 0


def test_seed_env_fallback_and_flag_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("HYBKAN_SEED", "11")
    assert main([*TRAIN, "--out", str(tmp_path / "env")]) == 0
    assert read_checkpoint(tmp_path / "env" / "checkpoint.hkc").manifest["seed"] == 11
    assert main([*TRAIN, "--seed", "4", "--out", str(tmp_path / "flag")]) == 0
    assert read_checkpoint(tmp_path / "flag" / "checkpoint.hkc").manifest["seed"] == 4


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("variant = vit\nbatch_size = 16\nepochs = 1\nseed = 9\nn_train = 64\nn_test = 32\n")
    assert main(["--config", str(cfg), "--out", str(tmp_path / "a"), "train", "--batch-size", "8",
                 "--image-size", "8"]) == 0
    man = read_checkpoint(tmp_path / "a" / "checkpoint.hkc").manifest
    assert man["optimizer"]["batch_size"] == 8
    assert man["seed"] == 9 and man["variant"] == "vit"
    assert man["optimizer"]["total_epochs"] == 1


def test_bench_smoke(tmp_path, capsys):
    code, secs = _timed(["bench", "--variants", "mlp,wavkan-dog", "--dims", "16,32", "--batch", "8",
                         "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0 and secs < 60
    lines = out.strip().splitlines()
    assert lines[0] == "variant,size,input_dim,params,gflops,samples_per_s,peak_mem_bytes,repeats,warmup"
    assert len(lines) == 1 + 4
    assert (tmp_path / "bench.csv").read_text() == out
    assert main(["bench", "--variants", "mlp", "--dims", "8", "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)[0]["input_dim"] == 8


def test_gradcheck_smoke(tmp_path, capsys):
    code, secs = _timed(["--precision", "64", "gradcheck", "--limit", "4", "--audit-samples", "200",
                         "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0 and secs < 60
    assert "FAIL" not in out
    assert (tmp_path / "gradient_audit.csv").exists()


def test_gradcheck_refuses_single_precision(capsys):
    assert main(["gradcheck", "--precision", "32"]) == 2
    assert "precision" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["frobnicate"], ["count", "--bogus"], [], ["--seed", "-1", "count"],
                                  ["bench", "--dims", "0"]])
def test_usage_errors_exit_two(argv, capsys):
    assert main(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_invalid_config_value_names_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("dim = lots\n")
    assert main(["--config", str(cfg), "count"]) == 2
    assert "'dim'" in capsys.readouterr().err


def test_missing_checkpoint_exit_one(tmp_path, capsys):
    assert main(["eval", "--checkpoint", str(tmp_path / "nope.hkc")]) == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hybkan", "nope"], capture_output=True, text=True, timeout=60)
    assert proc.returncode == 2 and "usage" in proc.stderr
