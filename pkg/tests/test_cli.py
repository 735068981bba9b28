import json

import pytest

from cli_cases import make_inputs, primary_outputs, run_cli, scenarios


@pytest.fixture(scope="module")
def inputs(tmp_path_factory):
    return make_inputs(tmp_path_factory.mktemp("inputs"))


def test_cache_sim_prints_stats(inputs):
    code, out, _ = run_cli(["cache", "sim", "--trace", inputs["mem"], "--config", inputs["cache_cfg"]])
    stats = json.loads(out)
    assert code == 0 and stats["i_access"] + stats["d_access"] == 3000
    assert stats["writebacks"] == 0 and stats["writethroughs"] > 0


def test_cache_model_extended_energy(inputs):
    base = json.loads(run_cli(["cache", "model", "--trace", inputs["mem"], "--config", inputs["cache_cfg"]])[1])
    ext = json.loads(run_cli(["cache", "model", "--trace", inputs["mem"], "--config", inputs["cache_cfg"],
                              "--extended-energy"])[1])
    assert ext["energy_j"] > base["energy_j"] and ext["time_s"] == base["time_s"]


def test_cache_opt_artifacts(inputs, tmp_path):
    code, out, err = run_cli(scenarios(inputs)["cache opt"] + ["--out", tmp_path])
    assert code == 0, err
    assert out.splitlines()[0].startswith("objective1,objective2,i_size")
    names = {p.name for p in tmp_path.iterdir()}
    assert names == {"front.csv", "front.json", "improvement.csv", "manifest.json"}
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 3 and str(inputs["mem"]) in manifest["inputs"]


def test_thermal_and_regfile(inputs, tmp_path):
    code, out, _ = run_cli(["thermal", "solve", "--profile", inputs["prof"], "--topology", "arm-c3",
                            "--format", "csv"])
    assert code == 0 and len(out.splitlines()) == 6
    code, out, err = run_cli(scenarios(inputs)["regfile opt"] + ["--out", tmp_path])
    rep = json.loads(out)
    assert code == 0, err
    assert {rep["placement"][0], rep["placement"][3]} == {0, 3}
    assert rep["max_rise_c"] <= rep["baseline_max_rise_c"]
    code, _, err = run_cli(["thermal", "solve", "--profile", inputs["prof"], "--topology", "3x5"])
    assert code == 2 and "16 registers" in err


def test_dmm_commands(inputs, tmp_path):
    code, out, _ = run_cli(["dmm", "replay", "--trace", inputs["alloc"], "--reference", "EXA"])
    assert code == 0 and json.loads(out)["fragmentation"]["internal_bytes"] == 0
    code, out, err = run_cli(scenarios(inputs)["dmm opt"] + ["--out", tmp_path])
    assert code == 0, err
    assert {"best_dmm.json", "comparison.csv", "generations.csv"} <= {p.name for p in tmp_path.iterdir()}
    assert json.loads(out)["F"] > 0


def test_report_commands(inputs):
    code, out, _ = run_cli(["report", "stats", "--pairs", inputs["pairs"], "--test", "t"])
    assert code == 0 and json.loads(out)[0]["test"] == "pairedT"
    code, out, _ = run_cli(["report", "pareto", "--front", inputs["front"]])
    assert out.splitlines()[1] == "1.0,2.0,a"


def test_exit_codes(inputs, tmp_path):
    code, _, err = run_cli(["cache", "sim", "--trace", tmp_path / "missing.din"])
    assert code == 2 and "missing.din" in err
    assert run_cli(["bogus"])[0] == 1
    assert run_cli(["cache"])[0] == 1
    assert run_cli(["cache", "sim"])[0] == 1
    assert run_cli(["trace", "gen-alloc", "--events", 10, "--classes", "x"])[0] == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    code, _, err = run_cli(["dmm", "replay", "--trace", inputs["alloc"], "--dmm", bad])
    assert code == 2 and "bad.json" in err
    bad_trace = tmp_path / "bad.trace"
    bad_trace.write_text("A 1 8\nF 2\n")
    assert run_cli(["dmm", "replay", "--trace", bad_trace])[0] == 2
    assert run_cli(["--version"])[0] == 0


def test_seeded_commands_repeat_exactly(inputs, tmp_path):
    for name in ("trace gen-alloc", "regfile opt", "cache sim"):
        argv = scenarios(inputs)[name]
        assert primary_outputs(argv, tmp_path / f"{name}-1") == primary_outputs(argv, tmp_path / f"{name}-2")
