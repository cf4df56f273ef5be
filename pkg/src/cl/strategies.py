"""
Motor de estrategias de aprendizaje continuo

Interfaz de hooks: before_task / compose_batch / auxiliary_loss / after_task.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.config.settings import (
    MEMORY_SIZE, REPLAY_RATIO, EWC_LAMBDA, LWF_LAMBDA, DERPP_ALPHA, DERPP_BETA, BATCH_SIZE,
)
from .data import WindowSample, stack_windows
from .errors import ConfigurationError, ModelStateError
from .model import ModelSnapshot, classification_loss, forward, predict_logits

logger = logging.getLogger(__name__)

LABEL_BYTES = 8
FLOAT_BYTES = 4


class StrategyKind(str, Enum):
    JOINT = "Joint"
    CUMULATIVE = "Cumulative"
    FINETUNE = "FineTune"
    ER = "ER"
    EWC = "EWC"
    LWF = "LwF"
    DERPP = "DERpp"


# SmooER / SmooDER: mismo entrenamiento que ER / DER++, suavizado en inferencia
SMOOTHED_ALIASES = {"SmooER": StrategyKind.ER, "SmooDER": StrategyKind.DERPP}


class _Params(BaseModel):
    model_config = ConfigDict(extra="forbid")


class NoParams(_Params):
    pass


class ReplayParams(_Params):
    memory_size: int = Field(default=MEMORY_SIZE, ge=0)
    replay_ratio: float = Field(default=REPLAY_RATIO, ge=0, le=1)


class DERppParams(ReplayParams):
    alpha: float = Field(default=DERPP_ALPHA, ge=0)
    beta: float = Field(default=DERPP_BETA, ge=0)
    minibatch_size: Optional[int] = Field(default=None, gt=0)  # None = cuota de replay del lote


class EWCParams(_Params):
    ewc_lambda: float = Field(default=EWC_LAMBDA, ge=0)
    fisher_samples: Optional[int] = Field(default=None, gt=0)  # None = todas las ventanas de la tarea


class LwFParams(_Params):
    lwf_lambda: float = Field(default=LWF_LAMBDA, ge=0)


PARAMS_BY_KIND = {
    StrategyKind.JOINT: NoParams,
    StrategyKind.CUMULATIVE: NoParams,
    StrategyKind.FINETUNE: NoParams,
    StrategyKind.ER: ReplayParams,
    StrategyKind.EWC: EWCParams,
    StrategyKind.LWF: LwFParams,
    StrategyKind.DERPP: DERppParams,
}


def resolve_kind(kind) -> Tuple[StrategyKind, bool]:
    """Devuelve (tipo de estrategia, suavizado forzado) admitiendo los alias SmooER/SmooDER"""
    if isinstance(kind, str) and kind in SMOOTHED_ALIASES:
        return SMOOTHED_ALIASES[kind], True
    try:
        return StrategyKind(kind), False
    except ValueError:
        raise ConfigurationError(f"Estrategia desconocida: {kind}") from None


def validate_hyperparameters(kind, hyperparameters: Optional[dict]) -> _Params:
    kind, _ = resolve_kind(kind)
    try:
        return PARAMS_BY_KIND[kind](**(hyperparameters or {}))
    except ValidationError as e:
        raise ConfigurationError(f"Hiperparámetros inválidos para {kind.value}: {e}") from e


# ---------------------------------------------------------------------------
# Memoria de replay
# ---------------------------------------------------------------------------

@dataclass
class ReplayEntry:
    window: np.ndarray
    label: int
    origin_task: int
    logits: Optional[np.ndarray] = None  # solo DER++, ancho = clases activas al insertar


@dataclass
class ReplayMemory:
    capacity: int
    sample_shape: Tuple[int, int]
    logit_width: Optional[int] = None  # k_max si se guardan logits
    entries: List[ReplayEntry] = field(default_factory=list)
    tasks_seen: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def is_empty(self) -> bool:
        return not self.entries

    @property
    def stores_logits(self) -> bool:
        return self.logit_width is not None

    @property
    def per_task_quota(self) -> int:
        return self.capacity // self.tasks_seen if self.tasks_seen else self.capacity

    def counts_per_task(self) -> Dict[int, int]:
        counts: Dict[int, int] = {}
        for entry in self.entries:
            counts[entry.origin_task] = counts.get(entry.origin_task, 0) + 1
        return counts

    def sample(self, n: int, rng: np.random.Generator) -> List[ReplayEntry]:
        """n entradas uniformes; con reemplazo solo si la memoria tiene menos de n"""
        if self.is_empty() or n <= 0:
            return []
        idx = rng.choice(len(self.entries), size=n, replace=len(self.entries) < n)
        return [self.entries[i] for i in idx]

    def state_dict(self) -> dict:
        windows = np.stack([e.window for e in self.entries]) if self.entries else np.zeros((0, *self.sample_shape), np.float32)
        state = {
            "capacity": self.capacity,
            "sample_shape": list(self.sample_shape),
            "logit_width": self.logit_width,
            "tasks_seen": self.tasks_seen,
            "windows": torch.from_numpy(np.ascontiguousarray(windows, dtype=np.float32)),
            "labels": torch.tensor([e.label for e in self.entries], dtype=torch.int64),
            "origin_tasks": torch.tensor([e.origin_task for e in self.entries], dtype=torch.int64),
        }
        if self.stores_logits:
            state["logits"] = [torch.from_numpy(np.asarray(e.logits, dtype=np.float32)) for e in self.entries]
        return state

    @classmethod
    def from_state_dict(cls, state: dict) -> "ReplayMemory":
        memory = cls(capacity=state["capacity"], sample_shape=tuple(state["sample_shape"]),
                     logit_width=state["logit_width"], tasks_seen=state["tasks_seen"])
        windows = state["windows"].numpy()
        logits = state.get("logits")
        for i in range(len(windows)):
            memory.entries.append(ReplayEntry(
                window=windows[i],
                label=int(state["labels"][i]),
                origin_task=int(state["origin_tasks"][i]),
                logits=logits[i].numpy() if logits is not None else None,
            ))
        return memory


def er_insert(memory: ReplayMemory, task_samples: Sequence[WindowSample], task_id: int,
              rng: np.random.Generator,
              logits_fn: Optional[Callable[[Sequence[WindowSample]], np.ndarray]] = None) -> ReplayMemory:
    """
    Inserta una tarea en la memoria con cuotas iguales por tarea

    La cuota se recalcula como floor(capacidad / tareas vistas); cada tarea previa se
    submuestrea al azar hasta la cuota y la nueva aporta una muestra uniforme de sus ventanas.

    Args:
        memory: Memoria de replay
        task_samples: Ventanas de entrenamiento de la tarea
        task_id: Id de la tarea (mayor que cualquier origin_task en memoria)
        rng: Generador de la corrida
        logits_fn: Si se guardan logits (DER++), función que los calcula para las ventanas elegidas
    """
    if any(e.origin_task >= task_id for e in memory.entries):
        raise ModelStateError(f"La tarea {task_id} no es posterior a las tareas ya almacenadas")

    memory.tasks_seen += 1
    quota = memory.per_task_quota

    kept = []
    by_task: Dict[int, List[ReplayEntry]] = {}
    for entry in memory.entries:
        by_task.setdefault(entry.origin_task, []).append(entry)
    for origin in sorted(by_task):
        entries = by_task[origin]
        if len(entries) > quota:
            chosen = np.sort(rng.choice(len(entries), size=quota, replace=False))
            entries = [entries[i] for i in chosen]
        kept.extend(entries)

    n_new = min(quota, len(task_samples))
    chosen = np.sort(rng.choice(len(task_samples), size=n_new, replace=False)) if n_new else np.empty(0, dtype=int)
    selected = [task_samples[i] for i in chosen]
    logits = logits_fn(selected) if (logits_fn is not None and selected) else None

    for i, window in enumerate(selected):
        kept.append(ReplayEntry(
            window=np.asarray(window.values, dtype=np.float32),
            label=window.label,
            origin_task=task_id,
            logits=np.asarray(logits[i], dtype=np.float32) if logits is not None else None,
        ))
    memory.entries = kept
    logger.info(f"Memoria actualizada tras la tarea {task_id}: {len(memory)}/{memory.capacity} entradas, "
                f"cuota {quota} por tarea")
    return memory


def _entries_to_tensors(entries: Sequence[ReplayEntry]) -> Tuple[torch.Tensor, torch.Tensor]:
    x = torch.from_numpy(np.stack([e.window for e in entries]).astype(np.float32, copy=False))
    y = torch.tensor([e.label for e in entries], dtype=torch.int64)
    return x, y


def replay_share(batch_size: int, replay_ratio: float) -> int:
    return int(round(batch_size * replay_ratio))


def er_compose_batch(memory: ReplayMemory, current_x: torch.Tensor, current_y: torch.Tensor,
                     replay_ratio: float, rng: np.random.Generator,
                     batch_size: int = BATCH_SIZE) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Mezcla el lote actual con muestras de la memoria

    Con ratio r y lote B: B - round(r*B) muestras actuales + round(r*B) de la memoria.
    Sin memoria (primera tarea) el lote se devuelve tal cual.
    """
    if memory.is_empty():
        return current_x, current_y
    n_memory = replay_share(batch_size, replay_ratio)
    n_current = batch_size - n_memory
    entries = memory.sample(n_memory, rng)
    if not entries:
        return current_x[:n_current], current_y[:n_current]
    mem_x, mem_y = _entries_to_tensors(entries)
    return torch.cat([current_x[:n_current], mem_x]), torch.cat([current_y[:n_current], mem_y])


# ---------------------------------------------------------------------------
# EWC
# ---------------------------------------------------------------------------

@dataclass
class FisherBundle:
    task_id: int
    importance: torch.Tensor  # >= 0, un valor por parámetro
    anchor: torch.Tensor


def empirical_fisher(model: ModelSnapshot, task_data: Sequence[WindowSample]) -> torch.Tensor:
    """Media por muestra del gradiente al cuadrado de la pérdida de clasificación (modo evaluación)"""
    params = list(model.network.parameters())
    importance = torch.zeros(sum(p.numel() for p in params), dtype=params[0].dtype)
    x_all, y_all = stack_windows(task_data)
    units = model.units_for(y_all)

    for i in range(len(x_all)):
        model.network.zero_grad()
        logits = forward(model, torch.from_numpy(x_all[i:i + 1]), train_mode=False)
        loss = classification_loss(logits, torch.tensor([units[i]]))
        loss.backward()
        grads = torch.cat([
            (p.grad if p.grad is not None else torch.zeros_like(p)).reshape(-1) for p in params
        ])
        importance += grads.detach() ** 2
    model.network.zero_grad()
    return importance / max(len(x_all), 1)


def ewc_after_task(model: ModelSnapshot, task_data: Sequence[WindowSample], bundles: List[FisherBundle],
                   task_id: int = None) -> List[FisherBundle]:
    """Añade un FisherBundle (importancia = Fisher diagonal empírica, ancla = parámetros actuales)"""
    task_id = task_id if task_id is not None else len(bundles) + 1
    importance = empirical_fisher(model, task_data)
    anchor = model.flat_parameters().detach().clone()
    logger.info(f"Fisher de la tarea {task_id}: {len(task_data)} muestras, importancia media {float(importance.mean()):.3e}")
    return bundles + [FisherBundle(task_id=task_id, importance=importance, anchor=anchor)]


def ewc_penalty(model: ModelSnapshot, bundles: Sequence[FisherBundle], lam: float = EWC_LAMBDA) -> torch.Tensor:
    """(lambda/2) * suma sobre bundles de importancia * (theta - ancla)^2; 0 sin bundles"""
    theta = model.flat_parameters()
    penalty = torch.zeros((), dtype=theta.dtype)
    for bundle in bundles:
        if bundle.anchor.shape != theta.shape or bundle.importance.shape != theta.shape:
            raise ModelStateError(f"El bundle de la tarea {bundle.task_id} no corresponde a la forma del modelo")
        penalty = penalty + (bundle.importance.to(theta.dtype) * (theta - bundle.anchor.to(theta.dtype)) ** 2).sum()
    return (lam / 2.0) * penalty


# ---------------------------------------------------------------------------
# LwF y DER++
# ---------------------------------------------------------------------------

def lwf_loss(student_logits: torch.Tensor, teacher_logits: Optional[torch.Tensor],
             lam: float = LWF_LAMBDA) -> torch.Tensor:
    """lambda * MSE entre logits del estudiante y del profesor (clases del profesor)"""
    if teacher_logits is None:
        return torch.zeros((), dtype=student_logits.dtype)
    return lam * F.mse_loss(student_logits, teacher_logits.to(student_logits.dtype))


@dataclass
class MemoryLogitBatch:
    windows: torch.Tensor
    logits: torch.Tensor  # n x k_max, relleno con ceros
    mask: torch.Tensor    # n x k_max, 1 en las coordenadas guardadas


@dataclass
class MemoryLabelBatch:
    windows: torch.Tensor
    labels: torch.Tensor  # ids de conductor


def logit_batch_from(entries: Sequence[ReplayEntry], width: int) -> MemoryLogitBatch:
    x, _ = _entries_to_tensors(entries)
    logits = torch.zeros((len(entries), width), dtype=torch.float32)
    mask = torch.zeros((len(entries), width), dtype=torch.float32)
    for i, entry in enumerate(entries):
        k = len(entry.logits)
        logits[i, :k] = torch.from_numpy(np.asarray(entry.logits, dtype=np.float32))
        mask[i, :k] = 1.0
    return MemoryLogitBatch(windows=x, logits=logits, mask=mask)


def label_batch_from(entries: Sequence[ReplayEntry]) -> MemoryLabelBatch:
    x, y = _entries_to_tensors(entries)
    return MemoryLabelBatch(windows=x, labels=y)


def derpp_terms(model: ModelSnapshot, logit_batch: Optional[MemoryLogitBatch],
                label_batch: Optional[MemoryLabelBatch], alpha: float = DERPP_ALPHA,
                beta: float = DERPP_BETA, train_mode: bool = True) -> torch.Tensor:
    """alpha * MSE(logits actuales, logits guardados) + beta * BCE(etiquetas guardadas)"""
    dtype = next(model.network.parameters()).dtype
    total = torch.zeros((), dtype=dtype)
    if logit_batch is not None and len(logit_batch.windows):
        width = logit_batch.logits.shape[1]
        outputs = forward(model, logit_batch.windows, train_mode=train_mode)
        k = min(outputs.shape[1], width)
        mask = logit_batch.mask[:, :k].to(dtype)
        diff = (outputs[:, :k] - logit_batch.logits[:, :k].to(dtype)) * mask
        total = total + alpha * (diff ** 2).sum() / mask.sum().clamp(min=1.0)
    if label_batch is not None and len(label_batch.windows):
        outputs = forward(model, label_batch.windows, train_mode=train_mode)
        units = torch.from_numpy(model.units_for(label_batch.labels.tolist()))
        total = total + beta * classification_loss(outputs, units)
    return total


def derpp_loss(current_loss: torch.Tensor, logit_batch: Optional[MemoryLogitBatch],
               label_batch: Optional[MemoryLabelBatch], model: ModelSnapshot,
               alpha: float = DERPP_ALPHA, beta: float = DERPP_BETA, train_mode: bool = True) -> torch.Tensor:
    """Pérdida total de DER++; con memoria vacía es la pérdida actual"""
    return current_loss + derpp_terms(model, logit_batch, label_batch, alpha, beta, train_mode)


# ---------------------------------------------------------------------------
# Estrategias
# ---------------------------------------------------------------------------

class Strategy:
    """Estrategia base: todos los hooks son identidades (Fine-Tuning)"""
    kind = StrategyKind.FINETUNE

    def __init__(self, hyperparameters: _Params = None):
        self.hyperparameters = hyperparameters or NoParams()

    def before_task(self, model: ModelSnapshot, task) -> List[WindowSample]:
        return list(task.train_windows)

    def current_batch_size(self, batch_size: int) -> int:
        return batch_size

    def compose_batch(self, x: torch.Tensor, y: torch.Tensor, rng: np.random.Generator):
        return x, y

    def auxiliary_loss(self, model: ModelSnapshot, x: torch.Tensor, y: torch.Tensor,
                       logits: torch.Tensor, rng: np.random.Generator):
        return torch.zeros((), dtype=logits.dtype)

    def after_task(self, model: ModelSnapshot, task, rng: np.random.Generator) -> None:
        pass

    def strategy_bytes(self) -> int:
        return 0

    def state_dict(self) -> dict:
        return {"kind": self.kind.value}

    def load_state_dict(self, state: dict, model: ModelSnapshot = None) -> None:
        if state.get("kind") != self.kind.value:
            raise ModelStateError(f"Estado de estrategia {state.get('kind')} incompatible con {self.kind.value}")


class FineTuneStrategy(Strategy):
    kind = StrategyKind.FINETUNE


class JointStrategy(Strategy):
    """Entrenamiento conjunto: una única tarea con todos los datos"""
    kind = StrategyKind.JOINT

    def __init__(self, hyperparameters: _Params = None, sample_shape: Tuple[int, int] = None):
        super().__init__(hyperparameters)
        self.sample_shape = sample_shape
        self.n_samples = 0

    def before_task(self, model, task):
        self.n_samples = len(task.train_windows)
        return list(task.train_windows)

    def strategy_bytes(self) -> int:
        if not self.sample_shape:
            return 0
        return self.n_samples * (self.sample_shape[0] * self.sample_shape[1] * FLOAT_BYTES + LABEL_BYTES)

    def state_dict(self):
        return {**super().state_dict(), "n_samples": self.n_samples}

    def load_state_dict(self, state, model=None):
        super().load_state_dict(state)
        self.n_samples = state["n_samples"]


class CumulativeStrategy(Strategy):
    """Reentrena en cada tarea con todos los datos vistos hasta el momento"""
    kind = StrategyKind.CUMULATIVE

    def __init__(self, hyperparameters: _Params = None, sample_shape: Tuple[int, int] = None):
        super().__init__(hyperparameters)
        self.sample_shape = sample_shape
        self.pool: List[WindowSample] = []

    def before_task(self, model, task):
        self.pool = self.pool + list(task.train_windows)
        return list(self.pool)

    def strategy_bytes(self) -> int:
        if not self.pool:
            return 0
        w, f = self.pool[0].values.shape
        return len(self.pool) * (w * f * FLOAT_BYTES + LABEL_BYTES)

    def state_dict(self):
        x, y = stack_windows(self.pool)
        return {
            **super().state_dict(),
            "windows": torch.from_numpy(np.ascontiguousarray(x)),
            "labels": torch.from_numpy(y),
            "sessions": torch.tensor([w.session_id for w in self.pool], dtype=torch.int64),
            "indices": torch.tensor([w.index for w in self.pool], dtype=torch.int64),
        }

    def load_state_dict(self, state, model=None):
        super().load_state_dict(state)
        x = state["windows"].numpy()
        self.pool = [
            WindowSample(values=x[i], label=int(state["labels"][i]), session_id=int(state["sessions"][i]),
                         index=int(state["indices"][i]))
            for i in range(len(state["labels"]))
        ]


class ERStrategy(Strategy):
    """Experience Replay con cuotas iguales por tarea"""
    kind = StrategyKind.ER

    def __init__(self, hyperparameters: ReplayParams = None, sample_shape: Tuple[int, int] = None,
                 max_classes: int = None):
        super().__init__(hyperparameters or ReplayParams())
        self.memory = ReplayMemory(capacity=self.hyperparameters.memory_size, sample_shape=tuple(sample_shape),
                                   logit_width=self._logit_width(max_classes))
        self._batch_size = BATCH_SIZE

    def _logit_width(self, max_classes):
        return None

    def current_batch_size(self, batch_size: int) -> int:
        self._batch_size = batch_size
        n_current = batch_size - replay_share(batch_size, self.hyperparameters.replay_ratio)
        if self.memory.is_empty() or n_current <= 0:
            # ratio 1: se recorren los datos actuales en lotes completos y cada paso usa solo memoria
            return batch_size
        return n_current

    def compose_batch(self, x, y, rng):
        return er_compose_batch(self.memory, x, y, self.hyperparameters.replay_ratio, rng, self._batch_size)

    def after_task(self, model, task, rng):
        er_insert(self.memory, task.train_windows, task.task_id, rng)

    def strategy_bytes(self) -> int:
        return account_replay_bytes(self.memory.capacity, self.memory.sample_shape, self.memory.logit_width)

    def state_dict(self):
        return {**super().state_dict(), "memory": self.memory.state_dict()}

    def load_state_dict(self, state, model=None):
        super().load_state_dict(state)
        self.memory = ReplayMemory.from_state_dict(state["memory"])


class DERppStrategy(ERStrategy):
    """DER++: replay de logits (MSE) y de etiquetas (BCE) con dos lotes de memoria independientes"""
    kind = StrategyKind.DERPP

    def __init__(self, hyperparameters: DERppParams = None, sample_shape: Tuple[int, int] = None,
                 max_classes: int = None):
        super().__init__(hyperparameters or DERppParams(), sample_shape, max_classes)

    def _logit_width(self, max_classes):
        if max_classes is None:
            raise ConfigurationError("DER++ necesita max_classes para dimensionar los logits guardados")
        return max_classes

    @property
    def minibatch_size(self) -> int:
        hp = self.hyperparameters
        return hp.minibatch_size or max(1, replay_share(self._batch_size, hp.replay_ratio))

    def current_batch_size(self, batch_size: int) -> int:
        self._batch_size = batch_size
        return batch_size

    def compose_batch(self, x, y, rng):
        return x, y

    def auxiliary_loss(self, model, x, y, logits, rng):
        if self.memory.is_empty():
            return torch.zeros((), dtype=logits.dtype)
        n = self.minibatch_size
        logit_batch = logit_batch_from(self.memory.sample(n, rng), self.memory.logit_width)
        label_batch = label_batch_from(self.memory.sample(n, rng))
        return derpp_terms(model, logit_batch, label_batch, self.hyperparameters.alpha, self.hyperparameters.beta)

    def after_task(self, model, task, rng):
        er_insert(self.memory, task.train_windows, task.task_id, rng,
                  logits_fn=lambda windows: predict_logits(model, windows))


class EWCStrategy(Strategy):
    kind = StrategyKind.EWC

    def __init__(self, hyperparameters: EWCParams = None):
        super().__init__(hyperparameters or EWCParams())
        self.bundles: List[FisherBundle] = []

    def auxiliary_loss(self, model, x, y, logits, rng):
        if not self.bundles:
            return torch.zeros((), dtype=logits.dtype)
        return ewc_penalty(model, self.bundles, self.hyperparameters.ewc_lambda)

    def after_task(self, model, task, rng):
        data = list(task.train_windows)
        limit = self.hyperparameters.fisher_samples
        if limit is not None and len(data) > limit:
            data = [data[i] for i in np.sort(rng.choice(len(data), size=limit, replace=False))]
        self.bundles = ewc_after_task(model, data, self.bundles, task.task_id)

    def strategy_bytes(self) -> int:
        return sum(2 * b.anchor.numel() * FLOAT_BYTES for b in self.bundles)

    def state_dict(self):
        return {
            **super().state_dict(),
            "bundles": [{"task_id": b.task_id, "importance": b.importance, "anchor": b.anchor} for b in self.bundles],
        }

    def load_state_dict(self, state, model=None):
        super().load_state_dict(state)
        self.bundles = [FisherBundle(b["task_id"], b["importance"], b["anchor"]) for b in state["bundles"]]


class LwFStrategy(Strategy):
    """Learning without Forgetting: destilación MSE contra el modelo congelado de la tarea anterior"""
    kind = StrategyKind.LWF

    def __init__(self, hyperparameters: LwFParams = None):
        super().__init__(hyperparameters or LwFParams())
        self.teacher: Optional[ModelSnapshot] = None

    def before_task(self, model, task):
        if model.k:
            self.teacher = model.copy()
            for p in self.teacher.network.parameters():
                p.requires_grad_(False)
        return list(task.train_windows)

    def auxiliary_loss(self, model, x, y, logits, rng):
        if self.teacher is None:
            return torch.zeros((), dtype=logits.dtype)
        with torch.no_grad():
            teacher_logits = forward(self.teacher, x, train_mode=False)
        k_old = self.teacher.k
        return lwf_loss(logits[:, :k_old], teacher_logits, self.hyperparameters.lwf_lambda)

    def strategy_bytes(self) -> int:
        return self.teacher.parameter_count() * FLOAT_BYTES if self.teacher is not None else 0

    def state_dict(self):
        state = super().state_dict()
        if self.teacher is not None:
            state["teacher_parameters"] = torch.from_numpy(self.teacher.parameter_vector())
            state["teacher_classes"] = list(self.teacher.active_classes)
        return state

    def load_state_dict(self, state, model: ModelSnapshot = None):
        super().load_state_dict(state)
        self.teacher = None
        if "teacher_parameters" in state and model is not None:
            teacher = model.copy()
            teacher.load_parameter_vector(state["teacher_parameters"].numpy())
            teacher.active_classes = list(state["teacher_classes"])
            for p in teacher.network.parameters():
                p.requires_grad_(False)
            self.teacher = teacher


def account_replay_bytes(capacity: int, sample_shape: Tuple[int, int], logit_width: Optional[int]) -> int:
    """capacidad x (W x F x 4B + 8B [+ k_max x 4B si se guardan logits])"""
    w, f = sample_shape
    per_entry = w * f * FLOAT_BYTES + LABEL_BYTES
    if logit_width is not None:
        per_entry += logit_width * FLOAT_BYTES
    return capacity * per_entry


def finetune_hooks(hyperparameters: _Params = None) -> Strategy:
    """Hooks identidad: entrena solo con los datos de la tarea actual"""
    return FineTuneStrategy(hyperparameters)


def cumulative_hooks(hyperparameters: _Params = None, sample_shape: Tuple[int, int] = None) -> Strategy:
    """Hooks que amplían el conjunto de entrenamiento con todas las tareas vistas"""
    return CumulativeStrategy(hyperparameters, sample_shape)


def build_strategy(kind, hyperparameters: Optional[dict] = None, sample_shape: Tuple[int, int] = None,
                   max_classes: int = None) -> Strategy:
    """
    Construye una estrategia a partir de su tipo e hiperparámetros

    Args:
        kind: Tipo (incluye los alias SmooER / SmooDER)
        hyperparameters: Hiperparámetros específicos del tipo (claves desconocidas se rechazan)
        sample_shape: (W, F) de las ventanas
        max_classes: Ancho de la cabeza (para DER++)
    """
    kind, _ = resolve_kind(kind)
    params = validate_hyperparameters(kind, hyperparameters)
    if kind == StrategyKind.JOINT:
        return JointStrategy(params, sample_shape)
    if kind == StrategyKind.CUMULATIVE:
        return cumulative_hooks(params, sample_shape)
    if kind == StrategyKind.FINETUNE:
        return finetune_hooks(params)
    if kind == StrategyKind.ER:
        return ERStrategy(params, sample_shape, max_classes)
    if kind == StrategyKind.DERPP:
        return DERppStrategy(params, sample_shape, max_classes)
    if kind == StrategyKind.EWC:
        return EWCStrategy(params)
    return LwFStrategy(params)
