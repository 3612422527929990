import csv
import json

import pytest
from hypothesis import given, strategies as st

from fsosim import cli
from fsosim.experiment import (
    ParseError,
    ValidationError,
    default_plan,
    format_int_list,
    load_manifest,
    parse_config,
    parse_int_list,
    rerun_manifest,
    run_experiment,
    verify_outputs,
)
from fsosim.falls import FallsParams


def test_minimal_falls_config_fills_defaults():
    plan = parse_config("[run]\nscenario = falls\nseed = 3\n")
    assert (plan.params["n_elderly"], plan.params["n_pc"], plan.params["n_ma"]) == (30, 6, 5)
    assert plan.params["p_fall"] == 1 / 600
    assert parse_config("[run]\nscenario = falls\n").seeds == list(range(20))
    assert plan.seeds == [3] and plan.ticks == 10000
    assert plan.ic == list(range(0, 41, 5)) and plan.devices == [1, 2]
    assert (plan.width, plan.height) == (41, 41)
    assert plan.params["p_false_positive"] == 1 / 500
    assert plan.params["p_false_negative"] == 0.2
    assert "n_ic" not in plan.params and "n_devices" not in plan.params


def test_fraction_values_and_comments():
    plan = parse_config("[run]\nscenario = falls ; the falls world\n[falls]\np_fall = 1/300  # per tick\n")
    assert plan.params["p_fall"] == 1 / 300


@pytest.mark.parametrize("text, field", [
    ("[run]\nscenario = falls\n[falls]\np_false_positive = -0.1\n", "falls.p_false_positive"),
    ("[run]\nscenario = falls\n[falls]\np_fall = 2\n", "falls.p_fall"),
    ("[run]\nscenario = city\n[city]\ncar_owner_fraction = 1.5\n", "city.car_owner_fraction"),
    ("[run]\nscenario = falls\n[falls]\nbogus = 1\n", "falls.bogus"),
    ("[run]\nscenario = falls\n[falls]\nn_ic = 4\n", "falls.n_ic"),
    ("[run]\nscenario = falls\n[weather]\nrain = 1\n", "weather"),
    ("[run]\nscenario = falls\n[city]\nthresholds = 1\n", "city"),
    ("[run]\nscenario = falls\nticks = 0\n", "run.ticks"),
    ("[run]\nscenario = falls\nseeds = 1,1\n", "run.seeds"),
    ("[run]\nscenario = falls\nseeds = 1\nseed = 4\n", "run.seeds"),
    ("[run]\nscenario = falls\nformats = xml\n", "run.formats"),
    ("[run]\nscenario = falls\ncolour = red\n", "run.colour"),
    ("[run]\nscenario = falls\n[world]\nwidth = 2\n", "world"),
    ("[run]\nscenario = falls\n[falls]\ndevices = 3\n", "falls.devices"),
    ("[run]\nscenario = falls\n[tree]\na =\n", "tree"),
    ("[run]\nscenario = city\n[city]\nstrategies = FSO,Oracle\n", "city.strategies"),
    ("[run]\nscenario = moon\n", "run.scenario"),
    ("[world]\nwidth = 9\n", "run.scenario"),
])
def test_invalid_configs_fail_closed(text, field):
    with pytest.raises(ValidationError) as info:
        parse_config(text)
    assert info.value.field == field


@pytest.mark.parametrize("text, line", [
    ("scenario = falls\n", 1),
    ("[run]\nscenario = falls\nthis is not a pair\n", 3),
    ("[run]\nscenario = falls\nscenario = city\n", 3),
])
def test_parse_errors_name_the_line(text, line):
    with pytest.raises(ParseError) as info:
        parse_config(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_range_grammar():
    assert parse_int_list("0..40 step 5", "x") == [0, 5, 10, 15, 20, 25, 30, 35, 40]
    assert parse_int_list("3..5", "x") == [3, 4, 5]
    assert parse_int_list("1, 5,9", "x") == [1, 5, 9]
    for bad in ("5..3", "0..4 step 0", "a..b", ""):
        with pytest.raises(ValidationError):
            parse_int_list(bad, "x")


@given(st.lists(st.integers(0, 10**6), min_size=1, max_size=12))
def test_int_list_format_roundtrip(values):
    assert parse_int_list(format_int_list(values), "x") == values


def test_falls_sweep_size():
    plan = parse_config("[run]\nscenario = falls\nseeds = 7\n[falls]\nic = 0..40 step 5\n")
    specs = list(plan.runs())
    assert len(specs) == 18
    assert sorted({(s.params.n_devices, s.params.n_ic) for s in specs})[:2] == [(1, 0), (1, 5)]


def test_city_sweep_size():
    plan = parse_config("[run]\nscenario = city\nseed = 4\nreplications = 1\n"
                        "[city]\nthresholds = 100,150,200\nindividuals = 60..140 step 20\n")
    assert plan.seeds == [4] and plan.run_count() == 45
    assert default_plan("fire").run_count() == 40


def test_config_text_roundtrip():
    for sc in ("falls", "city", "fire"):
        plan = default_plan(sc)
        again = parse_config(plan.to_config_text())
        assert again.to_config_text() == plan.to_config_text()
        assert list(again.runs()) == list(plan.runs())


def test_overrides_and_custom_tree():
    plan = parse_config("[run]\nscenario = city\n", ["ticks=50", "city.thresholds=90", "n_taxis=3"])
    assert plan.ticks == 50 and plan.params["n_taxis"] == 3 and plan.thresholds == [90]
    with pytest.raises(ValidationError):
        parse_config("[run]\nscenario = city\n", ["threshold=90"])
    with pytest.raises(ValidationError):
        parse_config("[run]\nscenario = city\n", ["thresholds=0"])
    tree = ("[run]\nscenario = city\n[tree]\ncity =\nlocal_residents = city\nfirefighters = city\n"
            + "".join(f"hospital_{k} = city\n" for k in range(4)))
    assert parse_config(tree).tree_edges[0] == ("city", None)
    with pytest.raises(ValidationError) as info:
        parse_config(tree.replace("firefighters = city\n", ""))
    assert info.value.field == "tree"


SMALL_FALLS = "[run]\nscenario = falls\nseeds = 0..4\nticks = 300\n[falls]\ndevices = 1\n"


@pytest.fixture(scope="module")
def small_falls(tmp_path_factory):
    out = tmp_path_factory.mktemp("falls")
    return run_experiment(parse_config(SMALL_FALLS), out), out


def test_falls_experiment_rows(small_falls):
    result, out = small_falls
    assert result.status == 0 and len(result.summaries) == 45
    with open(out / "falls_sweep.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 45
    with open(out / "falls_S1_ic_3.csv", newline="") as fh:
        assert [int(r["ic_count"]) for r in csv.DictReader(fh)] == list(range(0, 41, 5))
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["runs"] == 45 and manifest["seeds"] == [0, 1, 2, 3, 4]
    assert set(manifest["versions"]) == {"fsosim", "numpy", "python"}
    assert "out =" not in manifest["config"]


def test_manifest_rerun_is_byte_identical(small_falls, tmp_path):
    _, out = small_falls
    for jobs in (1, 2):
        result, mismatched = rerun_manifest(out, tmp_path / f"j{jobs}", jobs=jobs)
        assert mismatched == [] and result.status == 0
        for name in json.loads((out / "manifest.json").read_text())["outputs"]:
            assert (out / name).read_bytes() == (tmp_path / f"j{jobs}" / name).read_bytes()


def test_tampering_is_detected(small_falls, tmp_path):
    _, out = small_falls
    plan, manifest = load_manifest(out)
    copy = tmp_path / "copy"
    run_experiment(plan, copy)
    target = copy / "falls_sweep.csv"
    target.write_text(target.read_text().replace(",", ";", 1))
    assert verify_outputs(manifest, copy) == ["falls_sweep.csv"]
    bad = dict(manifest, config=manifest["config"] + "\n")
    (copy / "manifest.json").write_text(json.dumps(bad))
    with pytest.raises(ValidationError):
        load_manifest(copy)


def test_failed_run_is_reported_and_others_written(tmp_path, monkeypatch):
    import fsosim.experiment as ex
    real = ex.execute_run

    def flaky(spec):
        if spec.seed == 1:
            raise RuntimeError("boom")
        return real(spec)

    monkeypatch.setattr(ex, "execute_run", flaky)
    plan = parse_config("[run]\nscenario = fire\nseeds = 0,1\nticks = 120\n[fire]\nstrategies = FSO\n")
    result = run_experiment(plan, tmp_path)
    assert result.status == 1 and len(result.summaries) == 1
    assert result.failures[0].label == "fire/FSO/houses=50/seed=1"
    assert "boom" in result.failures[0].error
    assert (tmp_path / "fire_FSO_houses_0.csv").exists()


# -- command line ---------------------------------------------------------------

def test_cli_runs_and_reproduces(tmp_path, capsys):
    out = tmp_path / "a"
    code = cli.main(["--scenario", "city", "--seed", "2", "--seeds", "2", "--ticks", "200",
                     "--set", "thresholds=150", "--set", "individuals=40", "--set", "strategies=FSO",
                     "--out", str(out), "-q"])
    assert code == 0
    assert sorted(p.name for p in out.iterdir()) == [
        "city_FSO_threshold-individuals_2.csv", "city_FSO_threshold-individuals_2.json",
        "city_FSO_threshold-individuals_3.csv", "city_FSO_threshold-individuals_3.json",
        "city_sweep.csv", "city_sweep.json", "manifest.json"]
    assert cli.main(["--manifest", str(out), "--out", str(tmp_path / "b"), "-q"]) == 0


def test_cli_list_defaults_parses_back(capsys):
    assert cli.main(["--scenario", "falls", "--list-defaults"]) == 0
    text = capsys.readouterr().out
    assert "ic = 0..40 step 5" in text
    assert parse_config(text).run_count() == default_plan("falls").run_count()


def test_cli_error_codes(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[run]\nscenario = falls\n[falls]\np_fall = -1\n")
    assert cli.main(["--config", str(cfg)]) == 2
    assert "falls.p_fall" in capsys.readouterr().err
    assert cli.main(["--scenario", "falls", "--set", "nope=1"]) == 2
    assert cli.main([]) == 2
    assert cli.main(["--config", str(tmp_path / "missing.ini")]) == 3
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["--scenario", "fire", "--seeds", "1", "--ticks", "5", "--out", str(blocker), "-q"]) == 3


def test_cli_output_dir_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("FSO_SIM_OUT", str(tmp_path / "env"))
    assert cli.main(["--scenario", "fire", "--seeds", "1", "--ticks", "5", "--set", "strategies=FSO",
                     "-q"]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()


def test_cli_dry_run_writes_nothing(tmp_path, capsys):
    assert cli.main(["--scenario", "falls", "--dry-run", "--out", str(tmp_path / "x")]) == 0
    assert "falls: 360 runs" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()
