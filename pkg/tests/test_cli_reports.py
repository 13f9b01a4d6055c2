import json

import pytest

from swdim import cli_reports as cli


def _run(argv, capsys):
    code = cli.main(argv)
    return code, capsys.readouterr()


def test_index_outputs(capsys):
    code, out = _run(["index", "--family", "4m", "--betti", "4", "--bplus", "3"], capsys)
    assert code == cli.EXIT_OK and out.out.strip() == "0"
    code, out = _run(["index", "--family", "4m-2", "--chi", "7"], capsys)
    assert out.out.strip() == "-7"
    code, out = _run(["index", "--family", "odd"], capsys)
    assert out.out.strip() == "0"
    code, out = _run(["index", "--family", "4m", "--betti", "0", "--bplus", "0", "--twist", "2/1"], capsys)
    assert out.out.strip() == "1"


@pytest.mark.parametrize("argv", [
    ["index", "--family", "4m", "--betti", "1", "2", "--bplus", "0"],
    ["index", "--family", "4m"],
    ["index", "--family", "4m-2"],
    ["index", "--family", "5m"],
    ["index", "--family", "4m", "--betti", "0", "--bplus", "0", "--twist", "1/2"],
    ["verify-algebra", "--samples", "0"],
    ["verify-weitzenboeck", "--dim", "2"],
    ["symbol", "--dim", "2"],
    ["bogus"],
])
def test_usage_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(argv)
    assert exc.value.code == cli.EXIT_USAGE
    capsys.readouterr()


def test_verify_algebra_report(tmp_path, capsys):
    code, out = _run(["verify-algebra", "--dim", "5", "--out", str(tmp_path)], capsys)
    assert code == cli.EXIT_OK
    lines = out.out.strip().splitlines()
    assert lines and all(l.startswith("PASS") for l in lines)
    doc = json.loads((tmp_path / "verify-algebra.json").read_text())
    assert doc["pass"] and doc["arguments"] == {"dim": 5, "seed": 0, "samples": 3}
    for r in doc["records"]:
        assert r["paper_anchor"] in cli.ANCHORS
        assert r["runtime_ms"] == 0 and r["n"] == 5
        assert set(r) >= {"check_id", "defect", "tolerance", "pass"}


def test_reports_are_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        cli.main(["verify-algebra", "--dim", "4", "--seed", "3", "--out", str(d)])
    capsys.readouterr()
    assert (a / "verify-algebra.json").read_bytes() == (b / "verify-algebra.json").read_bytes()


def test_timing_flag_records_runtime(capsys):
    recs = cli.verify_algebra(3, 0, 1, timing=True)
    assert any(r.runtime_ms > 0 for r in recs)


def test_failing_record_exits_1(capsys):
    rec = cli.VerificationRecord("x", "index.value", 3, 1.0, 0.5)
    assert not rec.pass_
    assert cli._emit([rec], "demo", {}, None) == cli.EXIT_FAIL
    assert "FAIL" in capsys.readouterr().out
    nan = cli.VerificationRecord("y", "index.value", 3, float("nan"), 1.0)
    assert not nan.pass_
    with pytest.raises(ValueError):
        cli.VerificationRecord("z", "not.an.anchor", 3, 0.0, 1.0)


def test_example5d_and_symbol(capsys):
    assert cli.main(["example5d"]) == cli.EXIT_OK
    assert cli.main(["symbol", "--dim", "4", "--samples", "20"]) == cli.EXIT_OK
    assert cli.main(["verify-weitzenboeck", "--dim", "3"]) == cli.EXIT_OK
    capsys.readouterr()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_solve_diverges_exit_3(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"grid": 3, "noise": 1e200, "max_iter": 2}))
    code, out = _run(["solve", "--config", str(cfg), "--quiet"], capsys)
    assert code == cli.EXIT_DIVERGED and "diverged" in out.err


def test_solve_config_errors_exit_2(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("[1, 2]")
    with pytest.raises(SystemExit) as exc:
        cli.main(["solve", "--config", str(cfg)])
    assert exc.value.code == cli.EXIT_USAGE
    cfg.write_text(json.dumps({"metric": "nope"}))
    with pytest.raises(SystemExit) as exc:
        cli.main(["solve", "--config", str(cfg)])
    assert exc.value.code == cli.EXIT_USAGE
    capsys.readouterr()


def test_solve_unconverged_exit_1(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"grid": 3, "max_iter": 1}))
    out = tmp_path / "run"
    code, _ = _run(["solve", "--config", str(cfg), "--quiet", "--out", str(out)], capsys)
    assert code == cli.EXIT_FAIL
    doc = json.loads((out / "solve.json").read_text())
    rec = {r["check_id"]: r for r in doc["records"]}
    assert not rec["final_energy"]["pass"] and rec["final_energy"]["detail"]["iterations"] == 1
    rows = (out / "trace.csv").read_text().splitlines()
    assert rows[0] == "iteration,energy,dirac,curvature_2,curvature_4,step" and len(rows) == 3
    assert (out / "state.json").exists() and (out / "state.bin").exists()
