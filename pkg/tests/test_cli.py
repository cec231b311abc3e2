"""Command-line contract: exit codes, file outputs, determinism."""

import json
from pathlib import Path

import pytest

from gasman.cli import main
from gasman.simulator import ChurnConfig, ScenarioConfig

DATA = Path(__file__).parent / "data"


def write_scenario(tmp_path, name="scenario.json", **overrides):
    base = dict(n_initial=8, m=16, T=5.0, l=10, duration=30.0, seed=7)
    base.update(overrides)
    path = tmp_path / name
    path.write_text(ScenarioConfig(**base).to_json(), encoding="utf-8")
    return path


def run_cli(*args):
    return main([str(a) for a in args])


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def test_run_writes_outputs_and_exits_zero(tmp_path):
    scenario = write_scenario(tmp_path)
    trace = tmp_path / "out.tsv"
    metrics = tmp_path / "metrics.json"
    code = run_cli("run", "--scenario", scenario, "--trace", trace, "--metrics", metrics)
    assert code == 0
    assert trace.read_text(encoding="utf-8").startswith("0.00\t")
    doc = json.loads(metrics.read_text(encoding="utf-8"))
    assert set(doc["classes"]) == {
        "zkp", "proof_of_life", "insertion", "deletion", "graph_transfer", "cycle_transfer"
    }


def test_run_is_deterministic_at_the_byte_level(tmp_path):
    scenario = write_scenario(
        tmp_path, churn=ChurnConfig(0.1, 0.1, 0.1), duration=60.0, n_initial=10, m=20
    )
    outs = []
    for tag in ("a", "b"):
        trace = tmp_path / f"trace_{tag}.tsv"
        metrics = tmp_path / f"metrics_{tag}.json"
        assert run_cli("run", "--scenario", scenario, "--trace", trace, "--metrics", metrics) == 0
        outs.append((trace.read_bytes(), metrics.read_bytes()))
    assert outs[0] == outs[1]


def test_run_seed_override_changes_the_outcome(tmp_path):
    scenario = write_scenario(tmp_path, churn=ChurnConfig(0.2, 0.2, 0.1), duration=40.0)
    t1, t2 = tmp_path / "t1.tsv", tmp_path / "t2.tsv"
    m1, m2 = tmp_path / "m1.json", tmp_path / "m2.json"
    run_cli("run", "--scenario", scenario, "--seed", 1, "--trace", t1, "--metrics", m1)
    run_cli("run", "--scenario", scenario, "--seed", 2, "--trace", t2, "--metrics", m2)
    assert t1.read_bytes() != t2.read_bytes()


def test_run_invalid_scenario_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"n_initial": 3}', encoding="utf-8")
    assert run_cli("run", "--scenario", bad, "--trace", tmp_path / "t", "--metrics", tmp_path / "m") == 1
    assert "error" in capsys.readouterr().err


def test_run_missing_scenario_exits_one(tmp_path):
    assert run_cli(
        "run", "--scenario", tmp_path / "absent.json",
        "--trace", tmp_path / "t", "--metrics", tmp_path / "m",
    ) == 1


def test_run_terminated_life_cycle_exits_two(tmp_path):
    scenario = write_scenario(
        tmp_path, churn=ChurnConfig(0.0, 0.9, 0.0), duration=60.0
    )
    code = run_cli(
        "run", "--scenario", scenario,
        "--trace", tmp_path / "t.tsv", "--metrics", tmp_path / "m.json",
    )
    assert code == 2


# ---------------------------------------------------------------------------
# prove
# ---------------------------------------------------------------------------

def test_prove_honest_accepts(capsys):
    assert run_cli("prove", "--nodes", 11, "--edges", 22, "--rounds", 20, "--seed", 4) == 0
    out = capsys.readouterr().out
    assert "honest proof: accept" in out


def test_prove_cheater_rate_printed(capsys):
    code = run_cli(
        "prove", "--nodes", 11, "--edges", 22, "--rounds", 1, "--seed", 4,
        "--cheat", "--trials", 1000,
    )
    assert code == 0
    out = capsys.readouterr().out
    rate = float(out.split("cheater accept rate: ")[1].split()[0])
    assert abs(rate - 0.5) < 0.06


def test_prove_rejects_bad_parameters(capsys):
    assert run_cli("prove", "--nodes", 11, "--edges", 21, "--rounds", 5, "--seed", 1) == 1
    assert "error" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# trace-check
# ---------------------------------------------------------------------------

def test_trace_check_accepts_recorded_fixture():
    assert run_cli("trace-check", DATA / "table1_trace.tsv") == 0


def test_trace_check_rejects_skipped_splice(tmp_path, capsys):
    lines = (DATA / "table1_trace.tsv").read_text(encoding="utf-8").splitlines()
    # Drop the deletion line: the last snapshot then differs by two edits.
    broken = [l for l in lines if not l.startswith("64.26")]
    bad = tmp_path / "broken.tsv"
    bad.write_text("\n".join(broken) + "\n", encoding="utf-8")
    assert run_cli("trace-check", bad) == 1
    assert "line 7" in capsys.readouterr().err


def test_trace_check_rejects_malformed_line(tmp_path, capsys):
    bad = tmp_path / "mangled.tsv"
    bad.write_text("no tabs at all\n", encoding="utf-8")
    assert run_cli("trace-check", bad) == 1
    assert "line 1" in capsys.readouterr().err
    bad.write_text("whenever\tevent\t1,2,3\n", encoding="utf-8")
    assert run_cli("trace-check", bad) == 1


def test_trace_check_accepts_simulator_output(tmp_path):
    scenario = write_scenario(
        tmp_path, churn=ChurnConfig(0.2, 0.15, 0.1), duration=80.0,
        n_initial=12, m=24, seed=3,
    )
    trace = tmp_path / "sim.tsv"
    run_cli("run", "--scenario", scenario, "--trace", trace, "--metrics", tmp_path / "m.json")
    assert run_cli("trace-check", trace) == 0


# ---------------------------------------------------------------------------
# gen-scenario
# ---------------------------------------------------------------------------

def test_gen_scenario_emits_loadable_sweep(tmp_path):
    out = tmp_path / "sweep"
    assert run_cli("gen-scenario", "--preset", "paperV", "--out", out) == 0
    files = sorted(out.glob("*.json"))
    assert len(files) == 4 * 3 * 4  # nodes x churn x (full mesh + 3 areas)
    sample = ScenarioConfig.from_json(files[0].read_text(encoding="utf-8"))
    assert sample.n_initial in (15, 30, 50, 100)
    names = " ".join(f.name for f in files)
    assert "n15_" in names and "n100_" in names and "area750" in names


def test_gen_scenario_unknown_preset(tmp_path, capsys):
    assert run_cli("gen-scenario", "--preset", "bogus", "--out", tmp_path) == 1
    assert "error" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

def test_unknown_flags_are_rejected_with_usage():
    with pytest.raises(SystemExit) as exc:
        main(["run", "--bogus-flag", "x"])
    assert exc.value.code != 0
