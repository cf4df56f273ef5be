"""
Clasificador secuencial (LSTM apilada + capa lineal sobre el último estado oculto)
y su bucle de entrenamiento
"""
import copy
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.config.settings import (
    HIDDEN_SIZE, NUM_LAYERS, DROPOUT, MAX_CLASSES, LEARNING_RATE, BATCH_SIZE, EPOCHS_PER_TASK,
)
from .data import WindowSample, stack_windows
from .errors import ShapeError, ModelStateError, CapacityError, ConfigurationError, CheckpointError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "drivercl-ckpt/1"


class ClassifierConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    input_features: Optional[int] = Field(default=None, gt=0)  # se resuelve con el dataset
    hidden_size: int = Field(default=HIDDEN_SIZE, gt=0)
    num_layers: int = Field(default=NUM_LAYERS, gt=0)
    dropout: float = DROPOUT
    max_classes: int = Field(default=MAX_CLASSES, gt=0)
    learning_rate: float = Field(default=LEARNING_RATE, gt=0)
    batch_size: int = Field(default=BATCH_SIZE, gt=0)
    epochs_per_task: int = Field(default=EPOCHS_PER_TASK, gt=0)
    patience: Optional[int] = Field(default=None, gt=0)  # early stopping, requiere validación

    @field_validator("dropout")
    @classmethod
    def _check_dropout(cls, value: float) -> float:
        if not 0 <= value < 1:
            raise ValueError(f"dropout debe estar en [0, 1): {value}")
        return value


class DriverLSTM(nn.Module):
    def __init__(self, config: ClassifierConfig):
        super().__init__()
        self.lstm = nn.LSTM(
            input_size=config.input_features,
            hidden_size=config.hidden_size,
            num_layers=config.num_layers,
            batch_first=True,
            # torch solo aplica dropout entre capas
            dropout=config.dropout if config.num_layers > 1 else 0.0,
        )
        self.dropout = nn.Dropout(config.dropout)
        self.head = nn.Linear(config.hidden_size, config.max_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out, _ = self.lstm(x)
        return self.head(self.dropout(out[:, -1, :]))


@dataclass
class ModelSnapshot:
    """Red + clases activas (unidad de salida i = i-ésima clase registrada) + configuración"""
    network: DriverLSTM
    config: ClassifierConfig
    init_seed: int
    active_classes: List[int] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.active_classes)

    def shape_index(self) -> List[Tuple[str, Tuple[int, ...]]]:
        return [(name, tuple(p.shape)) for name, p in self.network.named_parameters()]

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.network.parameters())

    def parameter_vector(self) -> np.ndarray:
        with torch.no_grad():
            return torch.cat([p.detach().reshape(-1) for p in self.network.parameters()]).cpu().numpy().copy()

    def flat_parameters(self) -> torch.Tensor:
        """Vector plano diferenciable de todos los parámetros"""
        return torch.cat([p.reshape(-1) for p in self.network.parameters()])

    def load_parameter_vector(self, vector: np.ndarray) -> None:
        vector = np.asarray(vector)
        if vector.shape != (self.parameter_count(),):
            raise ShapeError(f"Vector de parámetros de tamaño {vector.shape}, se esperaba {self.parameter_count()}")
        offset = 0
        with torch.no_grad():
            for p in self.network.parameters():
                n = p.numel()
                p.copy_(torch.from_numpy(vector[offset:offset + n].reshape(p.shape)).to(p.dtype))
                offset += n

    def units_for(self, labels: Iterable[int]) -> np.ndarray:
        """Traduce ids de conductor a índices de unidad de salida"""
        index = {c: i for i, c in enumerate(self.active_classes)}
        try:
            return np.fromiter((index[int(label)] for label in labels), dtype=np.int64)
        except KeyError as e:
            raise ModelStateError(f"Conductor {e.args[0]} no registrado en el modelo "
                                  f"(clases activas: {self.active_classes})") from None

    def copy(self) -> "ModelSnapshot":
        return ModelSnapshot(copy.deepcopy(self.network), self.config, self.init_seed, list(self.active_classes))


def parameter_count(config: ClassifierConfig) -> int:
    """Número cerrado de parámetros: LSTM (dos sesgos por capa) + cabeza lineal"""
    h = config.hidden_size
    total, inputs = 0, config.input_features
    for _ in range(config.num_layers):
        total += 4 * h * (inputs + h) + 8 * h
        inputs = h
    return total + config.max_classes * (h + 1)


def init_model(config: ClassifierConfig, init_seed: int) -> ModelSnapshot:
    """Inicializa el modelo de forma determinista; la cabeza tiene max_classes unidades desde el inicio"""
    if config.input_features is None:
        raise ConfigurationError("input_features no está definido en la configuración del modelo")
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(init_seed)
        network = DriverLSTM(config)
    return ModelSnapshot(network=network, config=config, init_seed=init_seed)


def register_classes(model: ModelSnapshot, new_classes: Iterable[int]) -> ModelSnapshot:
    """
    Añade clases a la cabeza y reinicializa sus unidades de salida

    Las unidades ya asignadas y el resto de parámetros no se tocan.
    """
    new = sorted(int(c) for c in new_classes)
    duplicated = [c for c in new if c in model.active_classes]
    if duplicated:
        raise ModelStateError(f"Clases ya registradas: {duplicated}")
    if model.k + len(new) > model.config.max_classes:
        raise CapacityError(f"No caben {len(new)} clases nuevas: {model.k} activas de {model.config.max_classes}")

    bound = 1.0 / np.sqrt(model.config.hidden_size)
    head = model.network.head
    with torch.no_grad():
        for c in new:
            unit = model.k
            seed = int(np.random.SeedSequence([model.init_seed, unit]).generate_state(1)[0])
            generator = torch.Generator().manual_seed(seed)
            row = torch.empty(head.weight.shape[1], dtype=torch.float64).uniform_(-bound, bound, generator=generator)
            bias = torch.empty(1, dtype=torch.float64).uniform_(-bound, bound, generator=generator)
            head.weight[unit].copy_(row.to(head.weight.dtype))
            head.bias[unit] = bias.to(head.bias.dtype)[0]
            model.active_classes.append(c)

    if new:
        logger.debug(f"Clases registradas {new}; activas: {model.active_classes}")
    return model


def forward(model: ModelSnapshot, batch, train_mode: bool = False) -> torch.Tensor:
    """
    Logits crudos (pre-sigmoide) de las clases activas, en el orden de active_classes

    Args:
        model: Modelo
        batch: Tensor o arreglo B x W x F
        train_mode: Si se aplica dropout
    """
    if model.k == 0:
        raise ModelStateError("El modelo no tiene clases activas")
    dtype = next(model.network.parameters()).dtype
    x = torch.as_tensor(batch).to(dtype)
    if x.ndim != 3 or x.shape[2] != model.config.input_features:
        raise ShapeError(f"Lote con forma {tuple(x.shape)}, se esperaba (B, W, {model.config.input_features})")
    if x.shape[0] == 0:
        return torch.empty((0, model.k), dtype=dtype)
    model.network.train(train_mode)
    return model.network(x)[:, :model.k]


def predict_logits(model: ModelSnapshot, windows: Sequence[WindowSample], batch_size: int = 256) -> np.ndarray:
    """Logits en modo evaluación para una lista de ventanas (N x k)"""
    if not windows:
        return np.empty((0, model.k), dtype=np.float32)
    x, _ = stack_windows(windows)
    outputs = []
    with torch.no_grad():
        for start in range(0, len(x), batch_size):
            outputs.append(forward(model, torch.from_numpy(x[start:start + batch_size]), train_mode=False))
    return torch.cat(outputs).cpu().numpy()


def classification_loss(logits: torch.Tensor, labels) -> torch.Tensor:
    """
    BCE sigmoide por clase contra objetivos one-hot, promediada sobre lote y clases

    Args:
        logits: B x k
        labels: B índices de unidad en [0, k)
    """
    labels = torch.as_tensor(labels, dtype=torch.long)
    k = logits.shape[1]
    if labels.numel() and (labels.min() < 0 or labels.max() >= k):
        raise IndexError(f"Etiqueta fuera de rango para k={k}: {labels.tolist()}")
    targets = F.one_hot(labels, num_classes=k).to(logits.dtype)
    return F.binary_cross_entropy_with_logits(logits, targets)


@dataclass
class TrainingLog:
    epoch_losses: List[float] = field(default_factory=list)
    epoch_times: List[float] = field(default_factory=list)
    batches_per_epoch: List[int] = field(default_factory=list)
    validation_accuracy: List[float] = field(default_factory=list)
    stopped_epoch: Optional[int] = None
    n_samples: int = 0

    @property
    def wall_time(self) -> float:
        return float(sum(self.epoch_times))

    def to_dict(self) -> dict:
        return {
            "epoch_losses": self.epoch_losses,
            "epoch_times": self.epoch_times,
            "batches_per_epoch": self.batches_per_epoch,
            "validation_accuracy": self.validation_accuracy,
            "stopped_epoch": self.stopped_epoch,
            "n_samples": self.n_samples,
        }


def accuracy_on(model: ModelSnapshot, windows: Sequence[WindowSample]) -> float:
    if not windows:
        return 0.0
    logits = predict_logits(model, windows)
    predicted = np.asarray(model.active_classes)[logits.argmax(axis=1)]
    labels = np.fromiter((w.label for w in windows), dtype=np.int64)
    return float((predicted == labels).mean())


def train_task(model: ModelSnapshot, task_data: Sequence[WindowSample], strategy, rng_seed: int,
               validation: Optional[Sequence[WindowSample]] = None) -> Tuple[ModelSnapshot, TrainingLog]:
    """
    Entrena el modelo sobre los datos de una tarea

    Por lote: pérdida de clasificación sobre el lote compuesto por la estrategia + pérdidas
    auxiliares de la estrategia. El estado de Adam se reinicia en cada tarea.

    Args:
        model: Modelo con las clases de la tarea ya registradas
        task_data: Ventanas de entrenamiento (tras before_task de la estrategia)
        strategy: Estrategia de aprendizaje continuo
        rng_seed: Semilla para barajado, dropout y muestreo de memoria
        validation: Ventanas de validación para early stopping (opcional)

    Returns:
        Tupla (modelo actualizado, TrainingLog)
    """
    if not task_data:
        raise ConfigurationError("La tarea no tiene datos de entrenamiento")

    cfg = model.config
    x_all, y_all = stack_windows(task_data)
    model.units_for(np.unique(y_all))  # falla si hay etiquetas sin registrar
    x_all = torch.from_numpy(x_all)
    y_all = torch.from_numpy(y_all)

    optimizer = torch.optim.Adam(model.network.parameters(), lr=cfg.learning_rate)
    generator = torch.Generator().manual_seed(rng_seed)
    rng = np.random.default_rng(rng_seed)
    log = TrainingLog(n_samples=len(task_data))
    current_bs = strategy.current_batch_size(cfg.batch_size)

    best_acc, best_state, epochs_without_improvement = -1.0, None, 0
    early_stopping = validation is not None and len(validation) > 0 and cfg.patience is not None

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(rng_seed)
        for epoch in range(1, cfg.epochs_per_task + 1):
            start = time.perf_counter()
            order = torch.randperm(len(x_all), generator=generator)
            total_loss, n_batches = 0.0, 0

            for i in range(0, len(order), current_bs):
                idx = order[i:i + current_bs]
                xb, yb = strategy.compose_batch(x_all[idx], y_all[idx], rng)
                units = torch.from_numpy(model.units_for(yb.tolist()))

                logits = forward(model, xb, train_mode=True)
                loss = classification_loss(logits, units)
                loss = loss + strategy.auxiliary_loss(model, xb, yb, logits, rng)

                optimizer.zero_grad()
                loss.backward()
                optimizer.step()

                total_loss += float(loss.detach())
                n_batches += 1

            log.epoch_losses.append(total_loss / max(n_batches, 1))
            log.epoch_times.append(time.perf_counter() - start)
            log.batches_per_epoch.append(n_batches)
            logger.debug(f"Época {epoch}/{cfg.epochs_per_task}: pérdida={log.epoch_losses[-1]:.4f} "
                         f"({n_batches} lotes)")

            if early_stopping:
                acc = accuracy_on(model, validation)
                log.validation_accuracy.append(acc)
                if acc > best_acc:
                    best_acc, epochs_without_improvement = acc, 0
                    best_state = copy.deepcopy(model.network.state_dict())
                else:
                    epochs_without_improvement += 1
                    if epochs_without_improvement >= cfg.patience:
                        log.stopped_epoch = epoch
                        logger.info(f"Early stopping en la época {epoch} (mejor validación {best_acc:.4f})")
                        break

    if best_state is not None:
        model.network.load_state_dict(best_state)
    model.network.eval()

    logger.info(f"Tarea entrenada: {len(task_data)} ventanas, {len(log.epoch_losses)} épocas, "
                f"pérdida final {log.epoch_losses[-1]:.4f}, {log.wall_time:.2f}s")
    return model, log


def _checkpoint_digest(header: dict, payload: bytes) -> str:
    digest = hashlib.sha256()
    digest.update(json.dumps(header, sort_keys=True).encode())
    digest.update(payload)
    return digest.hexdigest()


def save_checkpoint(model: ModelSnapshot, path: Path) -> Path:
    """
    Guarda el modelo: vector plano float32 little-endian, índice de formas,
    clases activas, configuración y hash SHA-256 del contenido
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": CHECKPOINT_FORMAT,
        "shape_index": [[name, list(shape)] for name, shape in model.shape_index()],
        "active_classes": list(model.active_classes),
        "init_seed": model.init_seed,
        "config": model.config.model_dump(),
    }
    payload = model.parameter_vector().astype('<f4').tobytes()
    torch.save({
        "header": header,
        "parameters": torch.frombuffer(bytearray(payload), dtype=torch.uint8),
        "sha256": _checkpoint_digest(header, payload),
    }, path)
    return path


def load_checkpoint(path: Path) -> ModelSnapshot:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"No existe el checkpoint: {path}")
    try:
        blob = torch.load(path, weights_only=True)
        header, digest = blob["header"], blob["sha256"]
        payload = blob["parameters"].numpy().tobytes()
    except Exception as e:
        raise CheckpointError(f"Checkpoint ilegible {path}: {e}") from e

    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"Versión de checkpoint incompatible: {header.get('format')} (se esperaba {CHECKPOINT_FORMAT})")
    if _checkpoint_digest(header, payload) != digest:
        raise CheckpointError(f"El hash del checkpoint no coincide, archivo manipulado o corrupto: {path}")

    config = ClassifierConfig(**header["config"])
    model = init_model(config, header["init_seed"])
    if [[n, list(s)] for n, s in model.shape_index()] != header["shape_index"]:
        raise CheckpointError("El índice de formas del checkpoint no corresponde a la configuración")
    model.load_parameter_vector(np.frombuffer(payload, dtype='<f4'))
    model.active_classes = list(header["active_classes"])
    model.network.eval()
    return model
