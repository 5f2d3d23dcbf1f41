import csv
import io
import json
import subprocess
import sys
from fractions import Fraction

import jsonschema
import pytest

from lenglart.cli import main, report_schema
from lenglart.config import OUT_ENV, RunConfig, dump_config, load_config, parse_config
from lenglart.errors import ConfigError


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def _report(path):
    return json.loads(path.read_text())


def _strip_time(rep):
    return {k: v for k, v in rep.items() if k != "timestamp"}


# ----------------------------------------------------------------------
# config grammar

def test_parse_full_config():
    cfg = parse_config("""
        # a comment
        preset = sec5-1
        paths = 2000     # trailing comment
        grid = 10
        T = 0.25
        seed = 3
        p = 3/10
        estimator = median_of_means(16)
        batch = 500
        z_max = 4.5
        checkpoints = 0.1, 0.2,0.25
        format = json,csv
        out = somewhere
    """)
    assert cfg.preset == "sec5-1" and cfg.paths == 2000 and cfg.T == 0.25
    assert cfg.p == Fraction(3, 10) and cfg.checkpoints == (0.1, 0.2, 0.25)
    assert cfg.formats == ("json", "csv") and cfg.out == "somewhere"
    cfg.validate()


def test_dump_round_trip():
    cfg = RunConfig(preset="strong-orth", p=Fraction(1, 4), seed=5, checkpoints=(0.5, 1.0),
                    formats=("csv",), out="x")
    assert parse_config(dump_config(cfg)) == cfg


@pytest.mark.parametrize("text", [
    "paths 10",
    "colour = blue",
    "seed = 1\nseed = 2",
    "paths = ten",
    "p = 1/0",
])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


@pytest.mark.parametrize("cfg", [
    RunConfig(),
    RunConfig(preset="a", model="b"),
    RunConfig(preset="a", paths=0),
    RunConfig(preset="a", T=-1.0),
    RunConfig(preset="a", p=Fraction(3, 2)),
    RunConfig(preset="a", measure="R"),
    RunConfig(preset="a", estimator="median"),
    RunConfig(preset="a", checkpoints=(0.5, 0.2)),
    RunConfig(preset="a", formats=("xml",)),
    RunConfig(preset="a", seed=-1),
])
def test_validation_errors(cfg):
    with pytest.raises(ConfigError):
        cfg.validate()


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")


def test_out_dir_precedence(tmp_path, monkeypatch):
    monkeypatch.delenv(OUT_ENV, raising=False)
    assert str(RunConfig().out_dir()) == "lenglart-reports"
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    assert RunConfig().out_dir() == tmp_path / "env"
    assert str(RunConfig(out="flag").out_dir()) == "flag"


# ----------------------------------------------------------------------
# CLI

def test_list_presets(capsys):
    code, out, _ = _run(["list-presets"], capsys)
    assert code == 0
    names = [line.split()[0] for line in out.splitlines()]
    assert names == ["sec5-1", "strong-orth", "usual-orth", "roundtrip", "identities",
                     "dimension-finite"]
    code, out, _ = _run(["list-presets", "--json"], capsys)
    rows = json.loads(out)
    assert {r["name"] for r in rows} == set(names)
    assert all(r["anchor"] for r in rows)


def test_report_schema_is_valid_schema(capsys):
    code, out, _ = _run(["report-schema"], capsys)
    assert code == 0
    jsonschema.Draft202012Validator.check_schema(json.loads(out))


def test_strong_orth_run(tmp_path, capsys):
    code, out, _ = _run(["run", "--preset", "strong-orth", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert "strong-orth: all checks passed" in out
    rep = _report(tmp_path / "strong-orth-seed0.json")
    jsonschema.validate(rep, report_schema())
    assert rep["passed"] and rep["exit_code"] == 0
    verdict = next(c for c in rep["checks"] if c["name"] == "verdict")
    assert verdict["value"] == "not strongly orthogonal under Q"


def test_reports_are_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["run", "--preset", "dimension-finite", "--out", str(d)]) == 0
    capsys.readouterr()
    ra = _report(a / "dimension-finite-seed0.json")
    rb = _report(b / "dimension-finite-seed0.json")
    assert json.dumps(_strip_time(ra), sort_keys=True) == json.dumps(_strip_time(rb), sort_keys=True)


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"preset = strong-orth\np = 1/4\nout = {tmp_path}\nformat = json,csv\n")
    code, _, _ = _run(["run", "--config", str(cfg), "--p", "1/5"], capsys)
    assert code == 0
    rep = _report(tmp_path / "strong-orth-seed0.json")
    assert rep["config"]["p"] == "1/5"
    rows = list(csv.DictReader(io.StringIO((tmp_path / "strong-orth-seed0.csv").read_text())))
    assert rows and set(rows[0]) >= {"kind", "name", "value", "tolerance", "passed"}
    assert all(r["kind"] == "check" for r in rows)


def test_env_var_sets_default_out_dir(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    assert main(["run", "--preset", "strong-orth"]) == 0
    capsys.readouterr()
    assert (tmp_path / "env" / "strong-orth-seed0.json").exists()


def test_failing_inline_run_exits_1(tmp_path, capsys):
    code, out, _ = _run(["run", "--model", "continuous", "--measure", "Q", "--paths", "20000",
                         "--batch", "10000", "--grid", "4", "--out", str(tmp_path),
                         "--format", "csv"], capsys)
    assert code == 1
    assert "FAILED" in out
    rows = list(csv.DictReader(io.StringIO((tmp_path / "model-continuous.csv").read_text())))
    assert any(r["kind"] == "drift" and r["passed"] == "False" for r in rows)


def test_passing_inline_run(tmp_path, capsys):
    code, _, _ = _run(["run", "--model", "independent-jumps", "--paths", "20000", "--grid", "1",
                       "--seed", "4", "--out", str(tmp_path)], capsys)
    assert code == 0
    jsonschema.validate(_report(tmp_path / "model-independent-jumps-seed4.json"), report_schema())


@pytest.mark.parametrize("argv", [
    ["run", "--preset", "no-such-preset"],
    ["run", "--preset", "sec5-1", "--T", "0.3", "--paths", "100"],
    ["run", "--model", "no-such-model"],
    ["run", "--model", "continuous", "--target", "nothing", "--paths", "100"],
    ["run", "--preset", "strong-orth", "--p", "2"],
    ["run", "--preset", "strong-orth", "--estimator", "median"],
    ["run"],
])
def test_config_errors_exit_2(argv, tmp_path, capsys):
    code, _, err = _run(argv + ["--out", str(tmp_path)], capsys)
    assert code == 2
    assert "config error" in err


def test_missing_config_file_exits_2(tmp_path, capsys):
    code, _, err = _run(["run", "--config", str(tmp_path / "none.cfg")], capsys)
    assert code == 2


def test_heavy_tail_warning_is_reported(tmp_path, capsys):
    code, out, _ = _run(["run", "--preset", "sec5-1", "--paths", "20000", "--batch", "10000",
                         "--grid", "20", "--estimator", "mean", "--out", str(tmp_path)], capsys)
    rep = _report(tmp_path / "sec5-1-seed7.json")
    assert any("heavy-tailed" in w for w in rep["warnings"])
    assert "WARN" in out
    jsonschema.validate(rep, report_schema())


def test_identities_preset_small(tmp_path, capsys):
    code, out, _ = _run(["run", "--preset", "identities", "--paths", "100", "--batch", "50",
                         "--grid", "250", "--out", str(tmp_path)], capsys)
    assert code == 0, out
    rep = _report(tmp_path / "identities-seed0.json")
    assert rep["checks"] and all(c["passed"] for c in rep["checks"])


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "lenglart", "run", "--preset", "strong-orth",
                          "--out", str(tmp_path)], capture_output=True, text=True, timeout=120)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "strong-orth-seed0.json").exists()
