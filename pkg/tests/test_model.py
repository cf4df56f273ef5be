import math

import numpy as np
import pytest
import torch

from src.cl.errors import CapacityError, CheckpointError, ModelStateError, ShapeError
from src.cl.model import (
    ClassifierConfig, classification_loss, forward, init_model, load_checkpoint, parameter_count,
    predict_logits, register_classes, save_checkpoint, train_task,
)
from src.cl.strategies import FineTuneStrategy


def test_parameter_count_closed_form():
    config = ClassifierConfig(input_features=46)
    assert parameter_count(config) == 223498
    assert init_model(config, init_seed=0).parameter_count() == 223498


def test_parameter_count_matches_network(tiny_config, tiny_model):
    assert parameter_count(tiny_config) == tiny_model.parameter_count()
    assert tiny_model.parameter_vector().shape == (parameter_count(tiny_config),)


def test_init_is_deterministic(tiny_config):
    a = init_model(tiny_config, init_seed=3).parameter_vector()
    b = init_model(tiny_config, init_seed=3).parameter_vector()
    c = init_model(tiny_config, init_seed=4).parameter_vector()
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_register_classes_keeps_existing_units(tiny_model):
    register_classes(tiny_model, [2, 0])
    assert tiny_model.active_classes == [0, 2]
    row = tiny_model.network.head.weight[0].detach().clone()
    register_classes(tiny_model, [3])
    assert tiny_model.k == 3
    torch.testing.assert_close(tiny_model.network.head.weight[0].detach(), row)
    np.testing.assert_array_equal(tiny_model.units_for([3, 0, 2]), [2, 0, 1])


def test_register_classes_errors(tiny_model):
    register_classes(tiny_model, [0, 1])
    with pytest.raises(ModelStateError):
        register_classes(tiny_model, [1])
    with pytest.raises(CapacityError):
        register_classes(tiny_model, [2, 3, 4])
    with pytest.raises(ModelStateError):
        tiny_model.units_for([7])


def test_forward_shapes(tiny_model):
    with pytest.raises(ModelStateError):
        forward(tiny_model, np.zeros((2, 10, 5), dtype=np.float32))
    register_classes(tiny_model, [0, 1, 2])
    logits = forward(tiny_model, np.zeros((4, 10, 5), dtype=np.float32))
    assert tuple(logits.shape) == (4, 3)
    assert tuple(forward(tiny_model, np.zeros((0, 10, 5), dtype=np.float32)).shape) == (0, 3)
    with pytest.raises(ShapeError):
        forward(tiny_model, np.zeros((4, 10, 6), dtype=np.float32))


def test_classification_loss_matches_formula():
    logits = torch.tensor([[2.0, -1.0, 0.5], [0.0, 3.0, -2.0]], dtype=torch.float64)
    labels = [0, 2]
    expected = 0.0
    for row, label in zip(logits.tolist(), labels):
        for j, z in enumerate(row):
            p = 1.0 / (1.0 + math.exp(-z))
            y = 1.0 if j == label else 0.0
            expected -= y * math.log(p) + (1 - y) * math.log(1 - p)
    expected /= 6
    assert float(classification_loss(logits, labels)) == pytest.approx(expected, rel=1e-12)


def test_classification_loss_label_range():
    with pytest.raises(IndexError):
        classification_loss(torch.zeros((1, 2)), [2])


def test_gradient_matches_finite_differences(tiny_model):
    register_classes(tiny_model, [0, 1])
    tiny_model.network.double()
    x = torch.from_numpy(np.random.default_rng(0).normal(size=(3, 10, 5)))
    units = torch.tensor([0, 1, 1])

    def loss_value():
        return classification_loss(forward(tiny_model, x, train_mode=False), units)

    tiny_model.network.zero_grad()
    loss_value().backward()
    params = list(tiny_model.network.parameters())
    eps = 1e-6
    for p in (params[0], params[-2]):
        analytic = p.grad.reshape(-1)[:5].clone()
        numeric = []
        flat = p.data.reshape(-1)
        for i in range(5):
            original = float(flat[i])
            with torch.no_grad():
                flat[i] = original + eps
                plus = float(loss_value())
                flat[i] = original - eps
                minus = float(loss_value())
                flat[i] = original
            numeric.append((plus - minus) / (2 * eps))
        np.testing.assert_allclose(analytic.numpy(), numeric, rtol=1e-5, atol=1e-8)


def test_predict_logits_eval_mode(tiny_model, prepared):
    register_classes(tiny_model, [0, 1])
    windows = prepared.test_windows((0, 1))
    first = predict_logits(tiny_model, windows)
    second = predict_logits(tiny_model, windows, batch_size=2)
    assert first.shape == (6, 2)
    np.testing.assert_allclose(first, second, rtol=1e-6)


def test_train_task_is_deterministic(tiny_config, prepared):
    data = prepared.train_windows((0, 1)) + prepared.train_windows((1, 1))
    vectors = []
    for _ in range(2):
        model = register_classes(init_model(tiny_config, init_seed=0), [0, 1])
        model, log = train_task(model, data, FineTuneStrategy(), rng_seed=11)
        vectors.append(model.parameter_vector())
    np.testing.assert_array_equal(vectors[0], vectors[1])
    assert len(log.epoch_losses) == tiny_config.epochs_per_task
    assert log.batches_per_epoch == [math.ceil(34 / 8)] * 2
    assert all(np.isfinite(log.epoch_losses))


def test_train_task_loss_decreases(tiny_config, prepared):
    config = tiny_config.model_copy(update={"epochs_per_task": 15, "learning_rate": 0.01})
    data = prepared.train_windows((0, 1)) + prepared.train_windows((1, 1))
    model = register_classes(init_model(config, init_seed=0), [0, 1])
    _, log = train_task(model, data, FineTuneStrategy(), rng_seed=3)
    assert log.epoch_losses[-1] < log.epoch_losses[0]


def test_train_task_requires_registered_labels(tiny_model, prepared):
    register_classes(tiny_model, [0])
    with pytest.raises(ModelStateError):
        train_task(tiny_model, prepared.train_windows((1, 1)), FineTuneStrategy(), rng_seed=0)


def test_train_task_early_stopping_log(prepared):
    config = ClassifierConfig(input_features=5, hidden_size=8, num_layers=1, dropout=0.0, max_classes=4,
                              batch_size=8, epochs_per_task=4, patience=1)
    model = register_classes(init_model(config, init_seed=0), [0, 1])
    data = prepared.train_windows((0, 1)) + prepared.train_windows((1, 1))
    validation = prepared.test_windows((0, 1)) + prepared.test_windows((1, 1))
    _, log = train_task(model, data, FineTuneStrategy(), rng_seed=2, validation=validation)
    assert 1 <= len(log.validation_accuracy) <= 4
    assert len(log.validation_accuracy) == len(log.epoch_losses)


def test_checkpoint_roundtrip(tiny_model, prepared, tmp_path):
    register_classes(tiny_model, [1, 3])
    path = save_checkpoint(tiny_model, tmp_path / "checkpoint.pt")
    loaded = load_checkpoint(path)
    assert loaded.active_classes == [1, 3]
    np.testing.assert_array_equal(loaded.parameter_vector(), tiny_model.parameter_vector())
    windows = prepared.test_windows((1, 2))
    np.testing.assert_allclose(predict_logits(loaded, windows), predict_logits(tiny_model, windows), rtol=1e-6)


def test_checkpoint_tampered(tiny_model, tmp_path):
    register_classes(tiny_model, [0])
    path = save_checkpoint(tiny_model, tmp_path / "checkpoint.pt")
    blob = torch.load(path, weights_only=True)
    blob["parameters"][0] = (int(blob["parameters"][0]) + 1) % 256
    torch.save(blob, path)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_wrong_format(tiny_model, tmp_path):
    register_classes(tiny_model, [0])
    path = save_checkpoint(tiny_model, tmp_path / "checkpoint.pt")
    blob = torch.load(path, weights_only=True)
    blob["header"]["format"] = "drivercl-ckpt/0"
    torch.save(blob, path)
    with pytest.raises(CheckpointError, match="Versión"):
        load_checkpoint(path)


def test_checkpoint_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "missing.pt")
