import json
from importlib import resources
from pathlib import Path

import pytest

from perf_sampler.cli import main

FIXTURE = Path(str(resources.files("perf_sampler.fixtures").joinpath("lrzip")))


def write_spec(tmp_path, obj, name="spec.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def only(out: Path, pattern: str) -> Path:
    found = sorted(out.glob(f"*/{pattern}"))
    assert len(found) == 1, found
    return found[0]


def test_usage_errors_exit_2(tmp_path):
    assert main(["sample", "--out", str(tmp_path)]) == 2
    assert main(["sample", "--spec", str(tmp_path / "missing.json")]) == 2
    bad = write_spec(tmp_path, {"sampler": "random", "dataset": {"system": "lrzip"}, "budget": 5000})
    assert main(["sample", "--spec", bad, "--out", str(tmp_path)]) == 2
    unknown = write_spec(tmp_path, {"sampler": "oracle", "dataset": {"system": "lrzip"}, "budget": 5}, "u.json")
    assert main(["sample", "--spec", unknown, "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["dance"])


def test_sample_is_deterministic(tmp_path, capsys):
    spec = write_spec(tmp_path, {"sampler": "nsbs", "dataset": {"system": "lrzip"}, "budget": 15, "seed": 4})
    assert main(["sample", "--spec", spec, "--out", str(tmp_path / "a")]) == 0
    assert main(["sample", "--spec", spec, "--out", str(tmp_path / "b")]) == 0
    a, b = only(tmp_path / "a", "outcome.json"), only(tmp_path / "b", "outcome.json")
    assert a.read_bytes() == b.read_bytes()
    assert len(json.loads(a.read_text())["configurations"]) == 15
    assert "seed: 4" in capsys.readouterr().out


def test_prune_with_mock(tmp_path, capsys):
    spec = write_spec(tmp_path, {"docs": str(FIXTURE / "docs.json"), "space": str(FIXTURE / "space.json")})
    assert main(["prune", "--spec", spec, "--mock", str(FIXTURE / "mock_script.json"),
                 "--out", str(tmp_path)]) == 0
    pruned = json.loads(only(tmp_path, "pruned_space.json").read_text())
    assert [o["name"] for o in pruned["options"]] == ["algorithm", "-w", "-p", "-L"]
    assert "-N" in json.dumps(pruned["dropped"])
    assert "dropped: -N" in capsys.readouterr().out


def test_sample_llm4perf_with_mock(tmp_path, capsys):
    spec = write_spec(tmp_path, {"sampler": "llm4perf", "dataset": {"system": "lrzip"}, "budget": 20,
                                 "docs": str(FIXTURE / "docs.json"),
                                 "params": {"batch_size": 7, "n_generators": 3}})
    assert main(["sample", "--spec", spec, "--mock", str(FIXTURE / "mock_script.json"),
                 "--out", str(tmp_path)]) == 0
    assert "iterations: [7, 7, 6]" in capsys.readouterr().out
    outcome = json.loads(only(tmp_path, "outcome.json").read_text())
    assert outcome["meta"]["transcript"] == "transcript.jsonl"
    assert only(tmp_path, "transcript.jsonl").stat().st_size > 0


def test_synth_evaluate_report(tmp_path):
    assert main(["synth", "--seed", "2", "--out", str(tmp_path / "synth")]) == 0
    csv_path = only(tmp_path / "synth", "dataset.csv")
    spec = write_spec(tmp_path, {
        "dataset": {"csv": str(csv_path), "space": str(csv_path.parent / "space.json"),
                    "directions": {"metric1": "min", "metric2": "min"}},
        "samplers": ["random", "nsbs"], "budgets": [10, 20], "repetitions": 2, "models": ["gbt"],
        "candidate": "nsbs", "reference": "random"})
    out = tmp_path / "eval"
    assert main(["evaluate", "--spec", spec, "--out", str(out)]) == 0
    report_csv = only(out, "report.csv")
    lines = report_csv.read_text().splitlines()
    assert len(lines) == 1 + 2 * 2 * 2
    text_before = only(out, "report.txt").read_text()
    report_csv.unlink()
    assert main(["report", "--spec", spec, "--out", str(out)]) == 0
    assert only(out, "report.csv").read_text().splitlines() == lines
    assert only(out, "report.txt").read_text() == text_before


def test_sweep_validation(tmp_path):
    spec = write_spec(tmp_path, {"dataset": {"synth": {"n_options": 4}}, "samplers": ["random", "llm4perf"],
                                 "budgets": [10], "repetitions": 1, "models": ["gbt"]})
    assert main(["sweep", "--spec", spec, "--axis", "n_generators", "--values", "0",
                 "--out", str(tmp_path)]) == 2
    no_llm = write_spec(tmp_path, {"dataset": {"synth": {"n_options": 4}}, "samplers": ["random"],
                                   "budgets": [10]}, "n.json")
    assert main(["sweep", "--spec", no_llm, "--axis", "n_generators", "--values", "2",
                 "--out", str(tmp_path)]) == 2


def test_sweep_runs(tmp_path):
    spec = write_spec(tmp_path, {"dataset": {"synth": {"n_options": 4}}, "samplers": ["random", "llm4perf"],
                                 "budgets": [10], "repetitions": 1, "models": ["gbt"]})
    assert main(["sweep", "--spec", spec, "--axis", "n_candidates", "--values", "3", "5",
                 "--out", str(tmp_path)]) == 0
    rows = only(tmp_path, "sweep.csv").read_text().splitlines()
    assert rows[0].startswith("axis,value") and len(rows) == 1 + 2 * 2
