import json

import pytest

from src.cl.errors import ConfigurationError
from src.config.experiment import NON_RESULT_FIELDS, build_experiment_config, load_experiment_config


def _write(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def test_relative_paths_follow_config_file(tmp_path):
    (tmp_path / "configs").mkdir()
    path = _write(tmp_path / "configs" / "exp.json", {
        "dataset": {"csv": "../data/ocslab.csv"},
        "joint_reference": "../runs/joint/report.json",
    })
    config = load_experiment_config(path)
    assert config.dataset.csv == (tmp_path / "data" / "ocslab.csv").resolve()
    assert config.joint_reference == (tmp_path / "runs" / "joint" / "report.json").resolve()


def test_overrides_skip_missing_values(tmp_path):
    path = _write(tmp_path / "exp.json", {"dataset": {"synthetic": {}}})
    config = load_experiment_config(path, {"workers": None, "model": {"epochs_per_task": 3},
                                           "smoothing": {"window": None}})
    assert config.model.epochs_per_task == 3
    assert config.smoothing.window == 6
    assert config.workers == 1


def test_invalid_documents(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{no es json", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_experiment_config(bad)
    with pytest.raises(FileNotFoundError):
        load_experiment_config(tmp_path / "missing.json")
    with pytest.raises(ConfigurationError):
        build_experiment_config({"dataset": {}})
    with pytest.raises(ConfigurationError):
        build_experiment_config({"dataset": {"synthetic": {}}, "strategy": {"kind": "ER", "hyperparameters": {"replay_ratio": 2}}})
    with pytest.raises(ConfigurationError):
        build_experiment_config({"dataset": {"synthetic": {}}, "smoothing": {"window": 0}})


def test_smoothed_aliases_force_smoothing():
    config = build_experiment_config({"dataset": {"synthetic": {}}, "strategy": {"kind": "SmooDER"}})
    assert config.smoothing.enabled
    assert config.method == "SmooDER"
    plain = build_experiment_config({"dataset": {"synthetic": {}}, "strategy": {"kind": "DERpp"},
                                     "smoothing": {"enabled": True}})
    assert plain.method == "SmooDER"
    assert build_experiment_config({"dataset": {"synthetic": {}}, "strategy": {"kind": "EWC"}}).method == "EWC"


def test_echo_excludes_execution_fields():
    config = build_experiment_config({"dataset": {"synthetic": {}}, "workers": 4, "output_dir": "/tmp/x"})
    echo = config.echo()
    assert not NON_RESULT_FIELDS & set(echo)
    assert build_experiment_config(echo).echo() == echo
