import json

import pytest

from dnn_mpbsbl.cli import cli
from dnn_mpbsbl.config import SystemConfig, format_config
from dnn_mpbsbl.evaluation import HEADER, read_rows
from dnn_mpbsbl.scenario import read_dataset


@pytest.fixture
def desk_file(tmp_path):
    p = tmp_path / "desk.cfg"
    p.write_text(format_config(SystemConfig.desk()))
    return str(p)


def error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])


def test_gradcheck(desk_file, capsys):
    assert cli(["gradcheck", "--config", desk_file, "--trials", "2", "--params", "50"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("max_rel_error=")
    assert float(out.split("=")[1]) < 1e-4


def test_unknown_subcommand(capsys):
    assert cli(["frobnicate"]) == 2
    assert error_line(capsys)["error"] == "UsageError"


def test_missing_arguments_are_usage_errors(desk_file, capsys):
    assert cli(["gen", "--config", desk_file, "--count", "3"]) == 2
    assert cli(["gen", "--config", desk_file, "--snr-list", "x", "--count", "3", "--out", "a"]) == 2
    assert cli(["sweep", "--config", desk_file, "--estimators", "dnn"]) == 2
    assert error_line(capsys)["exit"] == 2


def test_sweep_without_out_writes_stdout(desk_file, capsys):
    assert cli(["sweep", "--config", desk_file, "--snr-list", "10", "--count", "5",
                "--estimators", "mp-bsbl,ga-mmse"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == ",".join(HEADER) and len(lines) == 3


def test_sweep_empty_estimators(desk_file, capsys):
    assert cli(["sweep", "--config", desk_file, "--estimators", ""]) == 0
    assert capsys.readouterr().out == ",".join(HEADER) + "\n"


def test_gen_train_eval_sweep(desk_file, tmp_path, capsys):
    tr, ho, ck = tmp_path / "tr.bin", tmp_path / "ho.bin", tmp_path / "w.ckpt"
    assert cli(["gen", "--config", desk_file, "--snr-list", "10", "--count", "200",
                "--seed", "1", "--out", str(tr)]) == 0
    assert cli(["gen", "--config", desk_file, "--snr-list", "0,10", "--count", "50",
                "--seed", "2", "--out", str(ho)]) == 0
    assert len(read_dataset(ho)) == 100
    assert cli(["train", "--config", desk_file, "--train", str(tr), "--holdout", str(ho),
                "--epochs", "1", "--out", str(ck), "--log", str(tmp_path / "log.csv")]) == 0
    assert "best_epoch=" in capsys.readouterr().out
    out = tmp_path / "eval.csv"
    assert cli(["eval", "--config", desk_file, "--data", str(ho), "--weights", str(ck),
                "--estimators", "dnn,mp-bsbl", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert [(r.snr_db, r.estimator) for r in rows] == [
        (0.0, "dnn"), (0.0, "mp-bsbl"), (10.0, "dnn"), (10.0, "mp-bsbl")]
    assert cli(["sweep", "--config", desk_file, "--snr-list", "0,10", "--count", "5",
                "--estimators", "dnn", "--weights", f"0={ck}", "--weights", f"10={ck}",
                "--out", str(tmp_path / "s.csv")]) == 0
    assert len(read_rows(tmp_path / "s.csv")) == 2
    assert cli(["sweep", "--config", desk_file, "--snr-list", "0,10", "--estimators", "dnn",
                "--weights", f"0={ck}"]) == 2


def test_domain_errors_exit_one(desk_file, tmp_path, capsys):
    paper_data = tmp_path / "paper.bin"
    assert cli(["gen", "--snr-list", "0", "--count", "2", "--out", str(paper_data)]) == 0
    assert cli(["eval", "--config", desk_file, "--data", str(paper_data)]) == 1
    assert error_line(capsys)["error"] == "FingerprintError"
    assert cli(["eval", "--config", desk_file, "--data", str(tmp_path / "missing.bin")]) == 1
    assert error_line(capsys)["error"] == "FileNotFoundError"
    bad_cfg = tmp_path / "bad.cfg"
    bad_cfg.write_text("K=20\nbogus=1\n")
    assert cli(["gradcheck", "--config", str(bad_cfg)]) == 1
    assert error_line(capsys)["error"] == "ConfigError"
