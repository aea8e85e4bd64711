import json
import math
import subprocess
import sys

import pytest
from hypothesis import given, strategies as st

from tangency_lab.cli import main
from tangency_lab.errors import SchemaError, ValidationError
from tangency_lab.harness import (SCHEMAS, CascadeSpec, ExperimentConfig, dumps_json, run_cascade,
                                  run_experiment, sequence_from_spec)

MANIFEST_KEYS = {"experiment", "config", "seed", "tolerances", "started", "elapsed"}


# ---------------------------------------------------------------- config

def test_defaults_and_typing():
    cfg = ExperimentConfig.from_text("cascade", "# comment\nk = 5\nvalues = 0, 0, 2\n")
    assert cfg.params["k"] == 5 and cfg.params["values"] == (0, 0, 2)
    assert cfg.params["epsilon"] == 0.2 and cfg.seed == 0 and cfg.fmt == "json"
    assert cfg.tolerances["margin_tol"] == 1e-4


@given(st.text(alphabet="abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=12))
def test_unknown_keys_rejected(key):
    for exp, schema in SCHEMAS.items():
        if key in schema or key in ("seed", "format", "experiment"):
            continue
        with pytest.raises(SchemaError, match=key):
            ExperimentConfig.from_mapping(exp, {key: "1"})


def test_config_errors():
    with pytest.raises(SchemaError, match="'k'"):
        ExperimentConfig.from_mapping("tangency", {"k": "two"})
    with pytest.raises(SchemaError):
        ExperimentConfig.from_mapping("nope", {})
    with pytest.raises(SchemaError):
        ExperimentConfig.from_mapping("census", {"experiment": "tower"})
    with pytest.raises(SchemaError):
        ExperimentConfig.from_mapping("census", {}, seed=-1)
    with pytest.raises(SchemaError):
        ExperimentConfig.from_mapping("census", {}, seed=2 ** 64)
    with pytest.raises(SchemaError):
        ExperimentConfig.from_mapping("census", {"format": "xml"})
    with pytest.raises(SchemaError, match="duplicate"):
        ExperimentConfig.from_text("census", "k = 2\nk = 3\n")
    assert ExperimentConfig.from_mapping("census", {"seed": "5"}, seed=9).seed == 9


def test_dumps_json_is_canonical():
    txt = dumps_json({"b": math.nan, "a": [math.inf, -math.inf, 0.1, 1 + 2j]})
    assert json.loads(txt) == {"a": ["inf", "-inf", 0.1, [1.0, 2.0]], "b": "nan"}
    assert txt.index('"a"') < txt.index('"b"')


# ---------------------------------------------------------------- runs

def test_run_writes_outputs_and_manifest(tmp_path):
    cfg = ExperimentConfig.from_mapping("census", {"n_max": "4"}, seed=3, out=str(tmp_path))
    res, manifest, files = run_experiment(cfg)
    assert res.passed
    assert MANIFEST_KEYS <= set(manifest) and manifest["seed"] == 3
    assert {p.name for p in tmp_path.iterdir()} == {"manifest.json", "result.json", "census.csv"}
    data = json.loads((tmp_path / "result.json").read_text())
    assert data["counts"] == [2, 4, 8, 16] and data["zeta"] == ["1", "2", "4", "8", "16"]
    assert (tmp_path / "census.csv").read_text().startswith("n,P_n,min_margin\n")


def test_csv_format(tmp_path):
    cfg = ExperimentConfig.from_mapping("renorm", {"n_max": "6"}, fmt="csv", out=str(tmp_path))
    _, _, files = run_experiment(cfg)
    assert set(files) == {"result.csv"}
    assert files["result.csv"].splitlines()[0] == "n,d0,d1,d2"


@pytest.mark.parametrize("exp,raw", [("census", {}), ("tangency", {}), ("renorm", {"n_max": "8"}),
                                     ("tower", {"n1": "10"})])
def test_reruns_are_byte_identical(exp, raw):
    a = run_experiment(ExperimentConfig.from_mapping(exp, raw, seed=1))[2]
    b = run_experiment(ExperimentConfig.from_mapping(exp, raw, seed=1))[2]
    assert a == b


def test_errors_name_the_experiment():
    cfg = ExperimentConfig.from_mapping("cascade", {"preset": "2^n"})
    with pytest.raises(ValidationError, match=r"\[cascade\].*need k >= 23"):
        run_experiment(cfg)


# ---------------------------------------------------------------- cascade

def test_cascade_frozen():
    rep = run_cascade(CascadeSpec())
    st_ = rep.stages[0]
    assert rep.passed and st_.period == 3 and st_.n == 2 and st_.a_n == 2
    assert st_.achieved == 6 and st_.ratio == 3.0 and st_.break_holds
    assert st_.degenerate["classification"] == "k-degenerate" and st_.degenerate["k"] == 5
    assert st_.min_margin == pytest.approx(9.478e-4, rel=1e-3)
    assert st_.model_check["residual"] < 1e-12 and st_.model_check["newton_count"] == 6
    # points are fixed by the limit return map: y -> y + y^6 - eps q(y)
    assert len(set(st_.points)) == 6


def test_cascade_seeds_change_probe_only():
    a = run_cascade(CascadeSpec(seed=1)).stages[0]
    b = run_cascade(CascadeSpec(seed=2)).stages[0]
    assert a.points == b.points and a.probe["coeffs"] != b.probe["coeffs"]
    assert a.probe["unchanged"] and b.probe["unchanged"]


def test_cascade_presets_and_errors():
    assert sequence_from_spec("n^n")(3) == 27 and sequence_from_spec("2^n")(4) == 16
    assert sequence_from_spec("list", (1, 2))(2) == 2
    with pytest.raises(ValidationError):
        sequence_from_spec("list", (1,))(3)
    with pytest.raises(ValidationError):
        sequence_from_spec("fib")
    zero = run_cascade(CascadeSpec(preset="zero"))
    assert zero.passed and zero.stages[0].achieved == 0
    with pytest.raises(ValidationError, match="at most 2"):
        run_cascade(CascadeSpec(periods=(3, 4, 5)))
    with pytest.raises(ValidationError, match="increase"):
        run_cascade(CascadeSpec(periods=(4, 3)))
    with pytest.raises(ValidationError, match="exceed"):
        run_cascade(CascadeSpec(periods=(1,)))


# ---------------------------------------------------------------- CLI

def test_cli_success_and_stdout(capsys):
    assert main(["census", "--n-max", "3"]) == 0
    out, err = capsys.readouterr()
    assert json.loads(out)["counts"] == [2, 4, 8]
    assert "census: PASS" in err


def test_cli_failed_check_exits_2(capsys):
    assert main(["polymap", "--samples", "3", "--margin-tol", "1e9"]) == 2
    assert "polymap: FAIL" in capsys.readouterr().err


def test_cli_errors_exit_1(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("nope = 1\n")
    assert main(["--config", str(cfg), "cascade"]) == 1
    assert "unknown key(s) for cascade: nope" in capsys.readouterr().err
    assert main(["cascade", "--preset", "2^n"]) == 1
    with pytest.raises(SystemExit) as ei:
        main(["cascade", "--bogus"])
    assert ei.value.code == 1


def test_cli_global_flags_after_subcommand(tmp_path):
    assert main(["cascade", "--seed", "4", "--out", str(tmp_path), "--format", "csv"]) == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert names == {"manifest.json", "result.csv"}
    assert json.loads((tmp_path / "manifest.json").read_text())["seed"] == 4


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "tangency_lab", "census", "--n-max", "2"],
                       capture_output=True, text=True, timeout=120)
    assert r.returncode == 0 and json.loads(r.stdout)["counts"] == [2, 4]
