import numpy as np
import pytest

from src.cl.data import generate_synthetic, prepare_dataset
from src.cl.model import ClassifierConfig, init_model


@pytest.fixture(scope="session")
def synthetic_raw():
    return generate_synthetic(n_drivers=4, sessions_per_driver=2, records_per_session=120, n_features=5, seed=0)


@pytest.fixture(scope="session")
def prepared(synthetic_raw):
    # 23 ventanas por sesión: 17 de entrenamiento, 6 de prueba
    return prepare_dataset(synthetic_raw, length=10, stride=5, train_fraction=0.7)


@pytest.fixture(scope="session")
def ten_driver_dataset():
    raw = generate_synthetic(n_drivers=10, sessions_per_driver=2, records_per_session=60, n_features=3, seed=1)
    return prepare_dataset(raw, length=10, stride=5, train_fraction=0.7)


@pytest.fixture
def tiny_config():
    return ClassifierConfig(input_features=5, hidden_size=8, num_layers=1, dropout=0.0, max_classes=4,
                            batch_size=8, epochs_per_task=2)


@pytest.fixture
def tiny_model(tiny_config):
    return init_model(tiny_config, init_seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
