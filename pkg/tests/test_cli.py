import json
import math

import pytest
from hypothesis import given, strategies as st

from nsfde import cli

EX5 = {"preset": "example5", "c": 450, "eps": math.sqrt(2), "rho": 1, "r": 0.25}


def write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return str(path)


def read_report(out):
    return json.loads((out / "report.json").read_text())


def test_constants_on_example5(tmp_path):
    cfg = write_config(tmp_path, {"kind": "constants", "model": EX5})
    out = tmp_path / "out"
    assert cli.run(cfg, str(out)) == 0
    rep = read_report(out)
    assert rep["admissible"] is True
    assert rep["ledger"]["lambda_max"] == pytest.approx(0.5)
    assert rep["ledger"]["M"] == pytest.approx(3.75)


def test_example5_below_threshold_is_a_finding(tmp_path, capsys):
    out = tmp_path / "ex5"
    code = cli.main(["example5", "--c", "1", "--trials", "500", "--out", str(out)])
    assert code == 0
    rep = read_report(out)
    assert rep["admissible"] is False
    assert rep["above_threshold"] is False
    assert any("inadmissible" in f for f in rep["findings"])
    assert "skipped" in rep["simulation"]
    assert "finding" in capsys.readouterr().out


def test_malformed_json_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path, '{"kind": "constants", "model": ')
    assert cli.run(cfg, str(tmp_path / "o")) == 1
    err = capsys.readouterr().err
    assert "malformed JSON" in err and "line 1" in err
    assert not (tmp_path / "o").exists()


def test_missing_file_exits_1(tmp_path):
    assert cli.run(str(tmp_path / "nope.json")) == 1


@pytest.mark.parametrize("data, path", [
    ({"kind": "constants", "model": EX5, "bogus": 1}, "config"),
    ({"kind": "constants", "model": EX5, "params": {"eps3": 1}}, "config.params"),
    ({"kind": "simulate", "model": EX5, "scheme": {"h": 0.01, "T": 1, "sheep": 2}},
     "config.scheme"),
    ({"kind": "constants", "model": {**EX5, "colour": "red"}}, "config.model"),
    ({"kind": "teleport", "model": EX5}, "config.kind"),
    ({"kind": "simulate", "model": EX5}, "scheme"),
])
def test_schema_errors_name_the_field(tmp_path, capsys, data, path):
    cfg = write_config(tmp_path, data)
    assert cli.run(cfg, str(tmp_path / "o")) == 1
    assert path in capsys.readouterr().err


def test_wrong_type_rejected():
    with pytest.raises(cli.ConfigError, match="n_paths"):
        cli.parse_config({"kind": "simulate", "model": EX5,
                          "scheme": {"h": 0.01, "T": 1}, "params": {"n_paths": "many"}})


def test_lambda_key_maps_to_field():
    cfg = cli.parse_config({"kind": "constants", "model": EX5, "params": {"lambda": 0.3}})
    assert cfg.params.lam == 0.3
    rep = cli.execute(cfg).report
    assert rep["params"]["lambda"] == 0.3
    assert rep["ledger"]["lambda"] == 0.3


def test_check_kind_fails_on_published_constants(tmp_path):
    cfg = write_config(tmp_path, {"kind": "check", "model": EX5, "params": {"trials": 2000}})
    out = tmp_path / "o"
    assert cli.run(cfg, str(out)) == 2
    rep = read_report(out)
    failed = [c["name"] for c in rep["checks"] if not c["passed"]]
    assert failed


def test_check_kind_passes_on_valid_variant(tmp_path):
    model = {**EX5, "c": 1000, "variant": "valid"}
    cfg = write_config(tmp_path, {"kind": "check", "model": model, "params": {"trials": 2000}})
    assert cli.run(cfg, str(tmp_path / "o")) == 0


def small_simulate(tmp_path, **extra):
    data = {"kind": "simulate", "model": EX5,
            "scheme": {"h": 0.01, "T": 1.0, "drift_implicit": True, "master_seed": 3},
            "params": {"n_paths": 300, "checkpoints": [0.25, 0.5, 1.0], "write_paths": 2,
                       "invariant_paths": 3, **extra}}
    return write_config(tmp_path, data)


def test_simulate_writes_curves(tmp_path):
    out = tmp_path / "o"
    assert cli.run(small_simulate(tmp_path), str(out)) == 0
    names = sorted(p.name for p in out.iterdir())
    assert "report.json" in names and "metadata.json" in names
    assert "path_0.csv" in names and "path_1.csv" in names
    csvs = [n for n in names if n.endswith(".csv") and not n.startswith("path_")]
    assert len(csvs) == 2
    header = (out / csvs[0]).read_text().splitlines()[0]
    assert header == "t,estimate,stderr,bound,pass"
    meta = json.loads((out / "metadata.json").read_text())
    assert "created_utc" in meta


def test_rerun_is_byte_identical(tmp_path):
    cfg = small_simulate(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(cfg, str(a), threads=1) == 0
    assert cli.run(cfg, str(b), threads=3) == 0
    files = sorted(p.name for p in a.iterdir() if p.name != "metadata.json")
    assert files == sorted(p.name for p in b.iterdir() if p.name != "metadata.json")
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_seed_override_changes_results(tmp_path):
    cfg = small_simulate(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    cli.run(cfg, str(a))
    cli.run(cfg, str(b), seed=99)
    assert read_report(b)["scheme"]["master_seed"] == 99
    assert (a / "path_0.csv").read_bytes() != (b / "path_0.csv").read_bytes()


def test_csv_initial_data_is_padded(tmp_path):
    (tmp_path / "xi.csv").write_text("theta,x0\n-0.02,1.0\n-0.01,0.5\n0.0,0.25\n")
    cfg = cli.parse_config({"kind": "simulate", "model": EX5,
                            "scheme": {"h": 0.01, "T": 0.1}}, tmp_path)
    seg = cli.initial_data({"csv": "xi.csv"}, cfg.model, cfg.scheme, tmp_path, "xi")
    assert seg.values[-1, 0] == 0.25
    assert seg.values[0, 0] == 1.0
    assert seg.depth > 3
    with pytest.raises(cli.ConfigError, match="grid step"):
        cfg2 = cli.parse_config({"kind": "simulate", "model": EX5,
                                 "scheme": {"h": 0.005, "T": 0.1}}, tmp_path)
        cli.initial_data({"csv": "xi.csv"}, cfg2.model, cfg2.scheme, tmp_path, "xi")


def test_order_kind(tmp_path):
    model = {"dim": 1, "noise_dim": 1, "r": 0.5,
             "measure": {"atoms": [{"theta": 0.0, "w": 1.0}], "exp": []},
             "D": {"kappa": [[0.0]]}, "b": {"A": [[-1.0]], "B": [[0.0]], "b0": [0.0]},
             "sigma": {"g": "identity", "S": [[0.0]], "C": [[[0.0]]], "sigma0": [[1.0]]},
             "declared": {"k": 1e-6, "lambda1": 1e-6, "lambda2": 1e-6,
                          "lambda3": 1e-6, "lambda4": 1e-6}}
    cfg = write_config(tmp_path, {"kind": "order", "model": model,
                                  "scheme": {"h": 0.1, "T": 1.0},
                                  "params": {"h_list": [0.1, 0.05, 0.025], "n_paths": 400,
                                             "force": True}})
    out = tmp_path / "o"
    assert cli.run(cfg, str(out)) == 0
    rep = read_report(out)
    assert 0.7 < rep["slope"] < 1.3
    assert (out / "order.csv").read_text().startswith("h,rms_error\n")


def test_help_documents_csv_columns(capsys):
    with pytest.raises(SystemExit):
        cli.main(["run", "--help"])
    assert "columns t, estimate, stderr, bound, pass" in capsys.readouterr().out


def test_atomic_write_replaces(tmp_path):
    p = tmp_path / "d" / "f.txt"
    cli.atomic_write(p, "one")
    cli.atomic_write(p, "two")
    assert p.read_text() == "two"
    assert [q.name for q in p.parent.iterdir()] == ["f.txt"]


def test_dumps_is_canonical():
    assert cli.dumps({"b": 1, "a": float("inf")}) == '{\n  "a": "inf",\n  "b": 1\n}\n'


reports = st.recursive(
    st.one_of(st.none(), st.booleans(), st.integers(), st.text(max_size=5)),
    lambda kids: st.dictionaries(st.text(max_size=5), kids, max_size=4), max_leaves=10)


@given(extra=st.dictionaries(st.text(max_size=8).filter(lambda k: k != "violation"),
                             reports, max_size=5),
       violation=st.booleans())
def test_exit_code_contract(extra, violation):
    report = {**extra, "violation": violation}
    assert cli.exit_code(report) == (2 if violation else 0)
    assert cli.exit_code(extra) == 0
    assert cli.Outcome(report).code == cli.exit_code(report)
