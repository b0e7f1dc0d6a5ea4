import json

import pytest

from microcontinuum.errors import ParseError, RegimeFieldMissing, SchemaError
from microcontinuum.harness import run as runmod
from microcontinuum.harness.cli import EXIT_BLOWUP, EXIT_FAIL, EXIT_PASS, EXIT_USAGE, main
from microcontinuum.harness.run import RunReport, emit, fan_out, run, worker_count
from microcontinuum.harness.scenario import REGIMES, default_scenario, load_scenario, validate

# one negative control per regime: (scenario edits, injected law that must fail)
INJECTIONS = {
    "free": ({}, "linear_momentum"),
    "scs": ({}, "scs_doyle_ericksen"),
    "gnr": ({}, "gnr_translation"),
    "material": ({}, "material_stress"),
    "mixture": ({}, "doyle_ericksen_1"),
    "voids": ({"simulation": {"cg": 0.01, "initial": {"family": "cosine", "amplitude": 1e-2}}},
              "scalar_doyle_ericksen"),
    "variational": ({}, "spatial_homogeneity"),
}


def scenario(regime, **edits):
    data = default_scenario(regime)
    for key, val in edits.items():
        if isinstance(val, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **val}
        else:
            data[key] = val
    return data


def write(tmp_path, data, name="sc.json"):
    p = tmp_path / name
    p.write_text(data if isinstance(data, str) else json.dumps(data))
    return p


@pytest.fixture(scope="module")
def default_reports():
    return {r: run(validate(default_scenario(r))) for r in REGIMES}


@pytest.mark.parametrize("regime", REGIMES)
def test_default_scenarios_pass(default_reports, regime):
    rep = default_reports[regime]
    assert rep.laws and rep.passed, rep.failures


@pytest.mark.parametrize("regime", REGIMES)
def test_negative_control_names_the_law(regime):
    edits, law = INJECTIONS[regime]
    rep = run(validate(scenario(regime, inject={"law": law, "amplitude": 1e-3 if regime != "voids" else 1e-2},
                                **edits)))
    assert not rep.passed
    assert law in rep.failures


def test_unknown_injection_is_schema_error():
    with pytest.raises(SchemaError):
        run(validate(scenario("free", inject={"law": "nonsense", "amplitude": 1e-3})))


def test_load_scenario_errors(tmp_path):
    with pytest.raises(ParseError):
        load_scenario(write(tmp_path, "{nope"))
    with pytest.raises(ParseError):
        load_scenario(tmp_path / "missing.json")
    with pytest.raises(SchemaError, match="grdi"):
        load_scenario(write(tmp_path, scenario("free", grdi={})))
    data = default_scenario("voids")
    del data["simulation"]["dt"]
    with pytest.raises(RegimeFieldMissing) as info:
        load_scenario(write(tmp_path, data))
    assert info.value.field == "dt"
    with pytest.raises(SchemaError):
        validate({**default_scenario("free"), "regime": "plasma"})
    with pytest.raises(SchemaError):
        validate([1, 2])


def test_defaults_are_filled():
    data = default_scenario("scs")
    sc = validate(data)
    assert sc.get("flows") == [] and sc.get("tolerances") == {}
    assert sc.with_seed(7).seed == 7 and sc.seed == 0


def test_scenario_tolerance_overrides_default():
    rep = run(validate(scenario("material", tolerances={"material_stress": 0.0})))
    assert all(r["tol"] == 0.0 for r in rep.laws if r["law"] == "material_stress")


def test_residuals_are_byte_identical_across_runs(tmp_path):
    sc = validate(default_scenario("free", seed=3))
    a = emit(run(sc), tmp_path / "a")
    b = emit(run(sc), tmp_path / "b")
    assert a[1].read_bytes() == b[1].read_bytes()


def test_thread_count_does_not_change_results(tmp_path, monkeypatch):
    sc = validate(default_scenario("free", seed=1))
    monkeypatch.setenv(runmod.THREADS_ENV, "1")
    one = emit(run(sc), tmp_path / "one")[1].read_bytes()
    monkeypatch.setenv(runmod.THREADS_ENV, "4")
    four = emit(run(sc), tmp_path / "four")[1].read_bytes()
    assert one == four


def test_worker_count(monkeypatch):
    monkeypatch.setenv(runmod.THREADS_ENV, "3")
    assert worker_count() == 3
    monkeypatch.setenv(runmod.THREADS_ENV, "0")
    assert worker_count() >= 1
    monkeypatch.delenv(runmod.THREADS_ENV)
    assert worker_count() >= 1
    monkeypatch.setenv(runmod.THREADS_ENV, "many")
    with pytest.raises(SchemaError):
        worker_count()
    monkeypatch.setenv(runmod.THREADS_ENV, "-2")
    with pytest.raises(SchemaError):
        worker_count()
    monkeypatch.setenv(runmod.THREADS_ENV, "2")
    assert fan_out(lambda x: x * x, list(range(10))) == [x * x for x in range(10)]


def test_report_round_trip(default_reports, tmp_path):
    rep = default_reports["voids"]
    back = RunReport.from_json(rep.to_json())
    assert back.to_json() == rep.to_json()
    paths = emit(rep, tmp_path)
    assert [p.name for p in paths] == ["report.json", "residuals.csv", "timeseries.csv"]
    rows = (tmp_path / "residuals.csv").read_text().splitlines()
    assert rows[0] == "law,Linf,L2,tol,pass" and len(rows) == len(rep.laws) + 1
    assert json.loads((tmp_path / "report.json").read_text())["passed"] is True


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["check", "--scenario", str(write(tmp_path, default_scenario("scs"))),
                 "--out", str(tmp_path / "ok")]) == EXIT_PASS
    assert (tmp_path / "ok" / "residuals.csv").exists()
    bad = scenario("material", inject={"law": "material_stress", "amplitude": 1e-3})
    assert main(["material", "--scenario", str(write(tmp_path, bad))]) == EXIT_FAIL
    assert "FAIL material_stress" in capsys.readouterr().out
    assert main(["check", "--scenario", str(write(tmp_path, "{nope"))]) == EXIT_USAGE
    # a verb only runs its own regime
    assert main(["gnr", "--scenario", str(write(tmp_path, default_scenario("scs")))]) == EXIT_USAGE
    cfl = scenario("voids", simulation={"dt": 1.0})
    assert main(["simulate-voids", "--scenario", str(write(tmp_path, cfl))]) == EXIT_USAGE
    assert "dt" in capsys.readouterr().err


def test_cli_blow_up(tmp_path, capsys):
    sc = scenario("voids", simulation={"n_nodes": 17, "dt": 1e-3, "initial": {"family": "uniform", "amplitude": 0.5}})
    out = tmp_path / "blow"
    assert main(["simulate-voids", "--scenario", str(write(tmp_path, sc)), "--out", str(out)]) == EXIT_BLOWUP
    assert (out / "timeseries.csv").exists()
    assert "blow-up" in capsys.readouterr().err


def test_cli_dry_run_and_manufacture(tmp_path, capsys):
    assert main(["verify-noether", "--dry-run"]) == EXIT_PASS
    assert "scenario valid" in capsys.readouterr().out
    assert main(["manufacture", "--regime", "voids", "--seed", "4", "--out", str(tmp_path)]) == EXIT_PASS
    sc = load_scenario(tmp_path / "scenario.json")
    assert sc.regime == "voids" and sc.seed == 4
    assert main(["manufacture", "--regime", "gnr"]) == EXIT_PASS
    assert validate(json.loads(capsys.readouterr().out)).regime == "gnr"
