import math

import numpy as np
import pytest
import torch

from src.cl.model import ClassifierConfig, classification_loss, forward, init_model, register_classes
from src.cl.strategies import (
    EWCParams, EWCStrategy, FisherBundle, LwFStrategy, MemoryLabelBatch, MemoryLogitBatch, derpp_loss,
    derpp_terms, ewc_penalty, lwf_loss,
)

CASES = 200
TOL = 1e-6


def _small_model(k, input_features=2, hidden_size=2, max_classes=3, seed=0):
    config = ClassifierConfig(input_features=input_features, hidden_size=hidden_size, num_layers=1, dropout=0.0,
                              max_classes=max_classes, batch_size=4, epochs_per_task=1)
    model = init_model(config, init_seed=seed)
    model.network.double()
    return register_classes(model, range(k))


def _bce_scalar(logits, units):
    total, count = 0.0, 0
    for row, unit in zip(logits, units):
        for j, z in enumerate(row):
            y = 1.0 if j == unit else 0.0
            # log(1 + e^-|z|) estable
            softplus_neg = math.log1p(math.exp(-abs(z))) + max(-z, 0.0)   # -log sigmoid(z)
            softplus_pos = math.log1p(math.exp(-abs(z))) + max(z, 0.0)    # -log(1 - sigmoid(z))
            total += y * softplus_neg + (1.0 - y) * softplus_pos
            count += 1
    return total / count


def test_bce_random_cases():
    gen = np.random.default_rng(100)
    for _ in range(CASES):
        b, k = int(gen.integers(1, 6)), int(gen.integers(1, 7))
        logits = gen.normal(0.0, 3.0, size=(b, k))
        units = gen.integers(0, k, size=b)
        value = float(classification_loss(torch.from_numpy(logits), torch.from_numpy(units)))
        assert value == pytest.approx(_bce_scalar(logits.tolist(), units.tolist()), rel=TOL, abs=TOL)


def test_lwf_random_cases():
    gen = np.random.default_rng(101)
    for _ in range(CASES):
        b, k = int(gen.integers(1, 6)), int(gen.integers(1, 7))
        student, teacher = gen.normal(size=(b, k)), gen.normal(size=(b, k))
        lam = float(gen.uniform(0.0, 10.0))
        expected = lam * sum((s - t) ** 2 for rs, rt in zip(student.tolist(), teacher.tolist())
                             for s, t in zip(rs, rt)) / (b * k)
        value = float(lwf_loss(torch.from_numpy(student), torch.from_numpy(teacher), lam))
        assert value == pytest.approx(expected, rel=TOL, abs=TOL)


def test_ewc_random_cases():
    gen = np.random.default_rng(102)
    model = _small_model(2)
    n = model.parameter_count()
    for _ in range(CASES):
        theta = gen.normal(size=n)
        model.load_parameter_vector(theta)
        lam = float(gen.uniform(0.0, 100.0))
        bundles, expected = [], 0.0
        for t in range(int(gen.integers(0, 4))):
            importance = gen.uniform(0.0, 2.0, size=n)
            anchor = gen.normal(size=n)
            bundles.append(FisherBundle(t + 1, torch.from_numpy(importance), torch.from_numpy(anchor)))
            for i in range(n):
                expected += importance[i] * (theta[i] - anchor[i]) ** 2
        value = float(ewc_penalty(model, bundles, lam))
        assert value == pytest.approx(lam / 2.0 * expected, rel=TOL, abs=TOL)


def test_derpp_random_cases():
    gen = np.random.default_rng(103)
    models = {k: _small_model(k, seed=k) for k in (1, 2, 3)}
    for _ in range(CASES):
        k = int(gen.integers(1, 4))
        model = models[k]
        n_logit, n_label = int(gen.integers(1, 5)), int(gen.integers(1, 5))
        logit_windows = torch.from_numpy(gen.normal(size=(n_logit, 3, 2)))
        label_windows = torch.from_numpy(gen.normal(size=(n_label, 3, 2)))
        stored = np.zeros((n_logit, 3))
        mask = np.zeros((n_logit, 3))
        for i in range(n_logit):
            width = int(gen.integers(1, k + 1))  # clases activas cuando se guardó la entrada
            stored[i, :width] = gen.normal(size=width)
            mask[i, :width] = 1.0
        labels = gen.integers(0, k, size=n_label)
        alpha, beta = float(gen.uniform(0.0, 2.0)), float(gen.uniform(0.0, 2.0))
        current = float(gen.uniform(0.0, 3.0))

        value = float(derpp_loss(torch.tensor(current, dtype=torch.float64),
                                 MemoryLogitBatch(logit_windows, torch.from_numpy(stored), torch.from_numpy(mask)),
                                 MemoryLabelBatch(label_windows, torch.from_numpy(labels)),
                                 model, alpha, beta, train_mode=False))

        outputs = forward(model, logit_windows).detach().tolist()
        squared, weight = 0.0, 0.0
        for i in range(n_logit):
            for j in range(k):
                squared += mask[i, j] * (outputs[i][j] - stored[i, j]) ** 2
                weight += mask[i, j]
        label_outputs = forward(model, label_windows).detach().tolist()
        expected = current + alpha * squared / weight + beta * _bce_scalar(label_outputs, labels.tolist())
        assert value == pytest.approx(expected, rel=TOL, abs=TOL)


# ---------------------------------------------------------------------------
# Gradiente de la pérdida total contra diferencias finitas
# ---------------------------------------------------------------------------

def _gradient_model():
    return _small_model(2, input_features=4, hidden_size=8, max_classes=3, seed=5)


def _ewc_aux(model, gen):
    strategy = EWCStrategy(EWCParams(ewc_lambda=5.0))
    n = model.parameter_count()
    strategy.bundles = [FisherBundle(1, torch.from_numpy(gen.uniform(0, 1, size=n)),
                                     torch.from_numpy(model.parameter_vector().astype(np.float64)
                                                      + gen.normal(0, 0.1, size=n)))]
    register_classes(model, [2])
    return lambda x, y, logits: strategy.auxiliary_loss(model, x, y, logits, None)


def _lwf_aux(model, gen):
    strategy = LwFStrategy()
    # profesor perturbado para que la destilación no sea cero
    teacher = model.copy()
    teacher.load_parameter_vector(model.parameter_vector().astype(np.float64)
                                  + gen.normal(0, 0.2, size=model.parameter_count()))
    for p in teacher.network.parameters():
        p.requires_grad_(False)
    strategy.teacher = teacher
    register_classes(model, [2])
    return lambda x, y, logits: strategy.auxiliary_loss(model, x, y, logits, None)


def _derpp_aux(model, gen):
    register_classes(model, [2])
    logit_batch = MemoryLogitBatch(torch.from_numpy(gen.normal(size=(3, 5, 4))),
                                   torch.from_numpy(np.array([[0.5, -0.5, 0.0], [1.0, 0.2, 0.0], [0.3, 0.0, 0.0]])),
                                   torch.from_numpy(np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [1.0, 0.0, 0.0]])))
    label_batch = MemoryLabelBatch(torch.from_numpy(gen.normal(size=(2, 5, 4))), torch.tensor([0, 1]))
    return lambda x, y, logits: derpp_terms(model, logit_batch, label_batch, 0.7, 1.3, train_mode=False)


def _no_aux(model, gen):
    register_classes(model, [2])
    return lambda x, y, logits: torch.zeros((), dtype=logits.dtype)


@pytest.mark.parametrize("build_aux", [_no_aux, _ewc_aux, _lwf_aux, _derpp_aux],
                         ids=["finetune", "ewc", "lwf", "derpp"])
def test_total_loss_gradient_matches_finite_differences(build_aux):
    gen = np.random.default_rng(7)
    model = _gradient_model()
    aux = build_aux(model, gen)
    assert model.k == 3
    x = torch.from_numpy(gen.normal(size=(4, 5, 4)))
    y = torch.tensor([0, 1, 2, 1])

    def total_loss():
        logits = forward(model, x, train_mode=False)
        return classification_loss(logits, y) + aux(x, y, logits)

    params = list(model.network.parameters())
    model.network.zero_grad()
    total_loss().backward()
    analytic = torch.cat([(p.grad if p.grad is not None else torch.zeros_like(p)).reshape(-1)
                          for p in params]).numpy()

    offsets = np.cumsum([0] + [p.numel() for p in params])
    coordinates = gen.choice(offsets[-1], size=60, replace=False)
    eps = 1e-6
    numeric = []
    for c in coordinates:
        i = int(np.searchsorted(offsets, c, side="right") - 1)
        flat = params[i].data.reshape(-1)
        local = int(c - offsets[i])
        original = float(flat[local])
        with torch.no_grad():
            flat[local] = original + eps
            plus = float(total_loss())
            flat[local] = original - eps
            minus = float(total_loss())
            flat[local] = original
        numeric.append((plus - minus) / (2 * eps))
    np.testing.assert_allclose(analytic[coordinates], numeric, rtol=1e-4, atol=1e-8)
