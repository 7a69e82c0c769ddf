import numpy as np
import pytest

from fastq.cli import DEFAULT_SEED, REPORTS, build_parser, run
from fastq.data import read_buffer, write_buffer
from fastq.diagnostics.report import read_tsv
from fastq.trainer import read_metrics

from conftest import TINY_SIM, TINY_TRAIN


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "sim.cfg").write_text(f"episodes_per_policy = {TINY_SIM.episodes_per_policy}\n"
                               f"max_len = {TINY_SIM.max_len}\n")
    (d / "train.cfg").write_text(TINY_TRAIN.to_text())
    assert run(["gen-data", "--config", str(d / "sim.cfg"), "--seed", "7", "--out", str(d / "data") + "/"]) == 0
    assert run(["train", "--config", str(d / "train.cfg"), "--buffer", str(d / "data" / "buffer.tsv"),
                "--out", str(d / "run")]) == 0
    return d


def one_line_error(capsys) -> str:
    err = capsys.readouterr().err.strip().splitlines()
    assert err and err[-1].startswith("error: ")
    return err[-1]


def test_default_seed():
    args = build_parser().parse_args(["train", "--out", "x"])
    assert args.seed == DEFAULT_SEED == 12345


def test_gen_data_deterministic(work, tmp_path):
    assert run(["gen-data", "--config", str(work / "sim.cfg"), "--seed", "7", "--out", str(tmp_path / "b.tsv")]) == 0
    assert (tmp_path / "b.tsv").read_bytes() == (work / "data" / "buffer.tsv").read_bytes()


def test_train_outputs(work):
    rows = read_metrics(work / "run" / "metrics.tsv")
    assert rows and (work / "run" / "model.ckpt").exists()


def test_train_idempotent(work, tmp_path):
    assert run(["train", "--config", str(work / "train.cfg"), "--buffer", str(work / "data" / "buffer.tsv"),
                "--out", str(tmp_path)]) == 0
    for name in ("metrics.tsv", "model.ckpt"):
        assert (tmp_path / name).read_bytes() == (work / "run" / name).read_bytes()


def test_eval_summary(work, tmp_path, capsys):
    buf_before = (work / "data" / "buffer.tsv").read_bytes()
    assert run(["eval", "--checkpoint", str(work / "run" / "model.ckpt"),
                "--buffer", str(work / "data" / "buffer.tsv"), "--out", str(tmp_path)]) == 0
    header, rows = read_tsv(tmp_path / "eval.tsv")
    vals = {k: float(v) for k, v in rows}
    prefs = [v for k, v in vals.items() if k.startswith("preference_")]
    objs = [v for k, v in vals.items() if k.startswith("objective_")]
    assert len(prefs) == 3 and sum(prefs) == pytest.approx(1.0, abs=1e-9)
    assert len(objs) == 4 and sum(objs) == pytest.approx(1.0, abs=1e-9)
    assert (tmp_path / "eval.svg").exists()
    assert (work / "data" / "buffer.tsv").read_bytes() == buf_before
    assert "mean_q" in capsys.readouterr().out


@pytest.mark.parametrize("report", REPORTS)
def test_diag_reports(work, tmp_path, report):
    argv = ["diag", "--checkpoint", str(work / "run" / "model.ckpt"), "--buffer",
            str(work / "data" / "buffer.tsv"), "--report", report, "--out", str(tmp_path)]
    assert run(argv) == 0
    first = (tmp_path / f"{report}.tsv").read_bytes()
    assert (tmp_path / f"{report}.svg").read_text().startswith("<svg")
    assert run(argv) == 0
    assert (tmp_path / f"{report}.tsv").read_bytes() == first


def test_usage_errors(work, capsys):
    assert run(["train", "--out", "x", "--bogus"]) == 1
    assert "--bogus" in one_line_error(capsys)
    assert run([]) == 1
    one_line_error(capsys)
    assert run(["diag", "--buffer", str(work / "data" / "buffer.tsv"), "--report", "balance"]) == 1
    one_line_error(capsys)


def test_config_and_data_errors(work, tmp_path, capsys):
    (tmp_path / "bad.cfg").write_text("nope = 1\n")
    assert run(["train", "--config", str(tmp_path / "bad.cfg"), "--buffer", str(work / "data" / "buffer.tsv"),
                "--out", str(tmp_path)]) == 2
    assert "unknown key" in one_line_error(capsys)
    assert run(["train", "--out", str(tmp_path)]) == 2
    one_line_error(capsys)
    assert run(["eval", "--checkpoint", str(work / "data" / "buffer.tsv"),
                "--buffer", str(work / "data" / "buffer.tsv")]) == 2
    one_line_error(capsys)
    (tmp_path / "broken.tsv").write_text("1\t2\n")
    assert run(["train", "--config", str(work / "train.cfg"), "--buffer", str(tmp_path / "broken.tsv"),
                "--out", str(tmp_path)]) == 2
    assert "line 1" in one_line_error(capsys)
    assert run(["train", "--config", str(work / "train.cfg"), "--buffer", str(tmp_path / "missing.tsv"),
                "--out", str(tmp_path)]) == 2
    one_line_error(capsys)


def test_missing_partition_exit_2(work, tmp_path, capsys):
    buf = read_buffer(work / "data" / "buffer.tsv")
    write_buffer(buf.subset([e.episode_id for e in buf.episodes if e.policy_id != 2]), tmp_path / "b.tsv")
    assert run(["train", "--config", str(work / "train.cfg"), "--buffer", str(tmp_path / "b.tsv"),
                "--out", str(tmp_path)]) == 2
    assert "missing policy partition" in one_line_error(capsys)


def test_nan_exit_3(work, tmp_path, capsys):
    cfg = TINY_TRAIN.with_(lr=1e300)
    (tmp_path / "nan.cfg").write_text(cfg.to_text())
    code = run(["train", "--config", str(tmp_path / "nan.cfg"), "--buffer", str(work / "data" / "buffer.tsv"),
                "--out", str(tmp_path)])
    assert code == 3
    assert "non-finite" in one_line_error(capsys)
    assert (tmp_path / "nan_batch.tsv").exists()


def test_ablate_command(work, tmp_path):
    assert run(["ablate", "--config", str(work / "train.cfg"), "--buffer", str(work / "data" / "buffer.tsv"),
                "--which", "no_decomp", "--out", str(tmp_path)]) == 0
    header, rows = read_tsv(tmp_path / "ablate_no_decomp.tsv")
    assert header == ["which", "q_full", "q_ablated", "drop"] and rows[0][0] == "no_decomp"
    q_full, q_abl, drop = map(float, rows[0][1:])
    assert drop == pytest.approx((q_full - q_abl) / q_full)
    assert np.isfinite(drop)
