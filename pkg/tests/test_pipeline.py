import json

import pandas as pd
import pytest

from src.cl.errors import ComparisonError, ConfigurationError, StageError
from src.cl.load import load_json, load_reports
from src.cl.pipeline import resume_experiment, run_directory, run_experiment, task_seed
from src.cl.plots import plot_reports
from src.config.experiment import build_experiment_config
from src.scripts import cli

pytestmark = pytest.mark.slow


def _payload(kind="SmooDER", hyperparameters=None, **extra):
    payload = {
        "dataset": {
            "synthetic": {"n_drivers": 4, "sessions_per_driver": 2, "records_per_session": 120,
                          "n_features": 5, "seed": 0},
            "window_length": 10,
            "stride": 5,
        },
        "scenario": {"kind": "TwoNewDrivers"},
        "strategy": {"kind": kind, "hyperparameters": hyperparameters if hyperparameters is not None else {"memory_size": 20}},
        "model": {"hidden_size": 8, "num_layers": 1, "dropout": 0.0, "max_classes": 4, "batch_size": 8,
                  "epochs_per_task": 2},
        "smoothing": {"window": 3},
        "seeds": [0],
        "permutations": [0, 1],
    }
    payload.update(extra)
    return payload


def test_task_seed_is_stable():
    assert task_seed(0, 1) == task_seed(0, 1)
    assert task_seed(0, 1) != task_seed(0, 2)
    assert task_seed(0, 1) != task_seed(0, 1, 2)


def test_config_resolution():
    config = build_experiment_config(_payload("SmooER"))
    assert config.smoothing.enabled and config.method == "SmooER"
    joint = build_experiment_config(_payload("Joint", {}))
    assert joint.scenario.kind.value == "Joint"
    with pytest.raises(ConfigurationError):
        build_experiment_config(_payload(unknown_key=1))
    with pytest.raises(ConfigurationError):
        build_experiment_config(_payload(seeds=[0, 0]))


def test_full_experiment_writes_artifacts(tmp_path):
    config = build_experiment_config(_payload())
    report, results = run_experiment(config, tmp_path / "exp", cache_dir=tmp_path / "cache")

    assert results["success"] == 2 and results["failed"] == 0
    assert report.complete
    assert report.method == "SmooDER"
    assert len(report.runs) == 2 and all(r.tasks_completed == 2 for r in report.runs)
    # 2 tareas con 4 conductores; evaluación acumulada por conductor
    assert report.runs[0].accuracy.n_eval == [24, 48]
    assert report.strategy_bytes == 20 * (10 * 5 * 4 + 8 + 4 * 4)

    exp = tmp_path / "exp"
    for name in ("config.json", "manifest.json", "report.json", "timing.json", "accuracy.csv"):
        assert (exp / name).exists()
    run_dir = run_directory(exp, 0, 1)
    for name in ("stream.json", "checkpoint.pt", "strategy.pt", "progress.json", "report.json", "trace.csv"):
        assert (run_dir / name).exists()
    saved = load_json(exp / "report.json")
    assert "time_per_task" not in saved
    assert "output_dir" not in saved["config"]
    assert len(pd.read_csv(exp / "accuracy.csv")) == 4


@pytest.mark.parametrize("kind, hyperparameters", [
    ("SmooDER", {"memory_size": 20}),
    ("EWC", {"ewc_lambda": 100.0, "fisher_samples": 10}),
    ("LwF", {}),
    ("Cumulative", {}),
])
def test_resume_reproduces_uninterrupted_run(tmp_path, kind, hyperparameters):
    config = build_experiment_config(_payload(kind, hyperparameters))
    cache = tmp_path / "cache"
    run_experiment(config, tmp_path / "full", cache_dir=cache)

    partial, _ = run_experiment(config, tmp_path / "partial", stop_after_task=1, cache_dir=cache)
    assert not partial.complete
    assert load_json(run_directory(tmp_path / "partial", 0, 0) / "progress.json")["tasks_completed"] == 1

    resumed, results = resume_experiment(tmp_path / "partial", cache_dir=cache)
    assert resumed.complete and results["failed"] == 0
    full_bytes = (tmp_path / "full" / "report.json").read_bytes()
    assert (tmp_path / "partial" / "report.json").read_bytes() == full_bytes
    for seed, permutation in [(0, 0), (0, 1)]:
        full_run = run_directory(tmp_path / "full", seed, permutation) / "report.json"
        partial_run = run_directory(tmp_path / "partial", seed, permutation) / "report.json"
        assert partial_run.read_bytes() == full_run.read_bytes()


def test_tampered_checkpoint_fails_run(tmp_path):
    config = build_experiment_config(_payload())
    cache = tmp_path / "cache"
    run_experiment(config, tmp_path / "exp", stop_after_task=1, cache_dir=cache)
    checkpoint = run_directory(tmp_path / "exp", 0, 1) / "checkpoint.pt"
    checkpoint.write_bytes(checkpoint.read_bytes() + b"\0")

    report, results = resume_experiment(tmp_path / "exp", cache_dir=cache)
    assert results["failed"] == 1
    assert "seed0_perm1" in results["failed_runs"][0]
    assert not report.complete


def test_existing_directory_with_other_config(tmp_path):
    cache = tmp_path / "cache"
    run_experiment(build_experiment_config(_payload(permutations=[0])), tmp_path / "exp", cache_dir=cache)
    with pytest.raises(ConfigurationError):
        run_experiment(build_experiment_config(_payload(permutations=[1])), tmp_path / "exp", cache_dir=cache)


def test_failed_validation_leaves_no_output(tmp_path):
    bad_reference = build_experiment_config(_payload(joint_reference=str(tmp_path / "missing" / "report.json")))
    with pytest.raises(StageError):
        run_experiment(bad_reference, tmp_path / "exp_ref", cache_dir=tmp_path / "cache")
    assert not (tmp_path / "exp_ref").exists()

    csv = tmp_path / "broken.csv"
    csv.write_text("no,es,ocslab\n1,2,3\n", encoding="utf-8")
    bad_dataset = build_experiment_config({**_payload(), "dataset": {"csv": str(csv)}})
    with pytest.raises(StageError):
        run_experiment(bad_dataset, tmp_path / "exp_csv", cache_dir=tmp_path / "cache")
    assert not (tmp_path / "exp_csv").exists()


def test_joint_run_is_its_own_reference(tmp_path):
    config = build_experiment_config(_payload("Joint", {}, permutations=[0]))
    report, _ = run_experiment(config, tmp_path / "joint", cache_dir=tmp_path / "cache")
    assert report.scenario == "Joint"
    assert report.gap == pytest.approx(0.0)
    assert report.strategy_bytes == 4 * 2 * 17 * (10 * 5 * 4 + 8)


def test_plots_and_comparison(tmp_path):
    cache = tmp_path / "cache"
    joint_config = build_experiment_config(_payload("Joint", {}, permutations=[0]))
    run_experiment(joint_config, tmp_path / "joint", cache_dir=cache)
    er_config = build_experiment_config(_payload("ER", {"memory_size": 20},
                                                 joint_reference=str(tmp_path / "joint" / "report.json")))
    er_report, _ = run_experiment(er_config, tmp_path / "er", cache_dir=cache)
    assert er_report.gap is not None

    reports = load_reports([tmp_path / "joint", tmp_path / "er"])
    written = plot_reports(reports, tmp_path / "plots")
    assert {"accuracy", "accuracy_points", "best_methods", "time", "time_points"} <= set(written)
    points = pd.read_csv(tmp_path / "plots" / "accuracy_points.csv")
    assert points.groupby("method").size().to_dict() == {"ER": 2, "Joint": 1}

    assert cli.main(["compare", str(tmp_path / "joint"), str(tmp_path / "er"),
                     "--output", str(tmp_path / "cmp")]) == 0
    table = pd.read_csv(tmp_path / "cmp" / "comparison.csv")
    assert list(table["method"]) == ["Joint", "ER"]

    with pytest.raises(ComparisonError):
        plot_reports([{"method": "ER", "scenario": "TwoNewDrivers"},
                      {"method": "EWC", "scenario": "OneNewDriver"}], tmp_path / "bad")


def test_cli_usage_errors(capsys):
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["run"])
    assert excinfo.value.code == 2
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["compare"])
    assert excinfo.value.code == 2
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["prepare"])
    assert excinfo.value.code == 2


def test_cli_schema_and_missing_config(tmp_path, capsys):
    assert cli.main(["run", "--schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert schema["title"] == "ExperimentConfig"
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 1


def test_cli_run_and_prepare(tmp_path):
    config_path = tmp_path / "experiment.json"
    config_path.write_text(json.dumps(_payload(permutations=[0], output_dir=str(tmp_path / "exp"))), encoding="utf-8")
    assert cli.main(["run", "--config", str(config_path), "--epochs", "1"]) == 0
    assert load_json(tmp_path / "exp" / "config.json")["model"]["epochs_per_task"] == 1

    assert cli.main(["prepare", "--synthetic", "--drivers", "3", "--records", "60", "--features", "3",
                     "--window", "10", "--stride", "5", "--output", str(tmp_path / "ds")]) == 0
    assert (tmp_path / "ds" / "manifest.json").exists()
