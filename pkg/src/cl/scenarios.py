"""
Construcción de los flujos de tareas (escenarios incrementales de conductores)
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .data import PreparedDataset, SessionKey, WindowSample
from .errors import ConfigurationError

logger = logging.getLogger(__name__)


class ScenarioKind(str, Enum):
    TWO_NEW_DRIVERS = "TwoNewDrivers"
    ONE_NEW_DRIVER = "OneNewDriver"
    TWO_NEW_SESSIONS = "TwoNewSessions"
    JOINT = "Joint"


@dataclass(frozen=True)
class Task:
    task_id: int
    train_windows: Tuple[WindowSample, ...]
    classes_introduced: FrozenSet[int]
    sessions_included: FrozenSet[SessionKey]

    @property
    def labels(self) -> FrozenSet[int]:
        return frozenset(w.label for w in self.train_windows)


@dataclass(frozen=True)
class TaskStream:
    tasks: Tuple[Task, ...]
    scenario_kind: ScenarioKind
    permutation: Tuple
    seed: int

    def __len__(self) -> int:
        return len(self.tasks)

    def seen_classes(self, t: int) -> FrozenSet[int]:
        """Clases introducidas en las tareas 1..t"""
        _check_task_index(self, t)
        seen = set()
        for task in self.tasks[:t]:
            seen |= task.classes_introduced
        return frozenset(seen)

    @property
    def all_classes(self) -> FrozenSet[int]:
        return self.seen_classes(len(self.tasks))

    def to_manifest(self) -> dict:
        return {
            "scenario_kind": self.scenario_kind.value,
            "seed": self.seed,
            "permutation": [list(p) if isinstance(p, tuple) else p for p in self.permutation],
            "tasks": [
                {
                    "task_id": task.task_id,
                    "classes_introduced": sorted(task.classes_introduced),
                    "sessions_included": [list(k) for k in sorted(task.sessions_included)],
                    "n_train_windows": len(task.train_windows),
                }
                for task in self.tasks
            ],
        }

    @classmethod
    def from_manifest(cls, manifest: dict, dataset: PreparedDataset) -> "TaskStream":
        """Reconstruye el flujo desde su manifiesto sin volver a ejecutar el constructor"""
        tasks = []
        for entry in manifest["tasks"]:
            keys = [tuple(k) for k in entry["sessions_included"]]
            tasks.append(_make_task(entry["task_id"], dataset, keys, frozenset(entry["classes_introduced"])))
        permutation = tuple(tuple(p) if isinstance(p, list) else p for p in manifest["permutation"])
        return cls(tuple(tasks), ScenarioKind(manifest["scenario_kind"]), permutation, manifest["seed"])


def permute_classes(driver_ids, permutation_seed: int) -> List[int]:
    """
    Permutación determinista de los conductores

    Convención: la semilla 0 devuelve el orden ascendente.
    """
    ordered = sorted(driver_ids)
    if not ordered:
        raise ConfigurationError("El conjunto de conductores está vacío")
    if permutation_seed == 0:
        return ordered
    rng = np.random.default_rng(permutation_seed)
    return [ordered[i] for i in rng.permutation(len(ordered))]


def _make_task(task_id: int, dataset: PreparedDataset, keys: Sequence[SessionKey],
               classes_introduced: FrozenSet[int]) -> Task:
    windows = []
    for key in sorted(keys):
        windows.extend(dataset.train_windows(key))
    if not windows:
        raise ConfigurationError(f"La tarea {task_id} no tiene ventanas de entrenamiento")
    return Task(task_id=task_id, train_windows=tuple(windows),
                classes_introduced=frozenset(classes_introduced), sessions_included=frozenset(keys))


def _driver_sessions(dataset: PreparedDataset, driver: int) -> List[SessionKey]:
    keys = [k for k in dataset.keys if k[0] == driver]
    if not keys:
        raise ConfigurationError(f"El conductor {driver} no tiene sesiones en el dataset")
    return keys


def _check_order(dataset: PreparedDataset, order: Sequence[int]) -> List[int]:
    order = list(order)
    if sorted(order) != dataset.drivers:
        raise ConfigurationError(f"El orden de clases {order} no es una permutación de {dataset.drivers}")
    return order


def _build_by_groups(dataset: PreparedDataset, groups: List[List[int]], kind: ScenarioKind,
                     order: Sequence[int], seed: int) -> TaskStream:
    tasks = []
    for task_id, drivers in enumerate(groups, start=1):
        keys = [k for d in drivers for k in _driver_sessions(dataset, d)]
        tasks.append(_make_task(task_id, dataset, keys, frozenset(drivers)))
    stream = TaskStream(tuple(tasks), kind, tuple(order), seed)
    logger.info(f"Escenario {kind.value}: {len(tasks)} tareas, clases por tarea "
                f"{[len(t.classes_introduced) for t in tasks]}")
    return stream


def build_scenario1(dataset: PreparedDataset, order: Sequence[int], seed: int = 0,
                    allow_partial_last_task: bool = False) -> TaskStream:
    """
    Escenario 1 (dos conductores nuevos por tarea)

    Args:
        dataset: Dataset preparado
        order: Orden de clases
        seed: Semilla de la permutación (solo se registra)
        allow_partial_last_task: Con un número impar de conductores, la última tarea lleva uno solo
    """
    order = _check_order(dataset, order)
    if len(order) % 2 and not allow_partial_last_task:
        raise ConfigurationError(f"El escenario 1 necesita un número par de conductores, hay {len(order)}")
    groups = [order[i:i + 2] for i in range(0, len(order), 2)]
    return _build_by_groups(dataset, groups, ScenarioKind.TWO_NEW_DRIVERS, order, seed)


def build_scenario2(dataset: PreparedDataset, order: Sequence[int], seed: int = 0) -> TaskStream:
    """Escenario 2 (secuencia de clases 2,1,1,...)"""
    order = _check_order(dataset, order)
    if len(order) < 3:
        raise ConfigurationError(f"El escenario 2 necesita al menos 3 conductores, hay {len(order)}")
    groups = [order[:2]] + [[d] for d in order[2:]]
    return _build_by_groups(dataset, groups, ScenarioKind.ONE_NEW_DRIVER, order, seed)


def session_order(dataset: PreparedDataset, session_order_seed: int) -> List[SessionKey]:
    """
    Orden aleatorio de sesiones en el que la sesión 1 de cada conductor precede a la 2

    Se baraja la multiconjunto de conductores (uno por sesión) y la k-ésima aparición
    de cada conductor recibe su k-ésima sesión.
    """
    slots = [d for d, _ in dataset.keys]
    rng = np.random.default_rng(session_order_seed)
    shuffled = [slots[i] for i in rng.permutation(len(slots))]
    pending = {d: sorted(s for dd, s in dataset.keys if dd == d) for d in set(slots)}
    return [(d, pending[d].pop(0)) for d in shuffled]


def build_scenario3(dataset: PreparedDataset, session_order_seed: int,
                    order: Optional[Sequence[SessionKey]] = None) -> TaskStream:
    """
    Escenario 3 (dos sesiones de conducción por tarea)

    Args:
        dataset: Dataset preparado
        session_order_seed: Semilla del orden de sesiones
        order: Orden explícito de sesiones (opcional, reemplaza el barajado)
    """
    keys = dataset.keys
    if len(keys) % 2:
        raise ConfigurationError(f"El escenario 3 necesita un número par de sesiones, hay {len(keys)}")

    if order is None:
        order = session_order(dataset, session_order_seed)
    else:
        order = [tuple(k) for k in order]
        if sorted(order) != keys:
            raise ConfigurationError("El orden de sesiones explícito no cubre exactamente las sesiones del dataset")
        position = {k: i for i, k in enumerate(order)}
        for d, s in keys:
            earlier = [k for k in keys if k[0] == d and k[1] < s]
            if any(position[k] > position[(d, s)] for k in earlier):
                raise ConfigurationError(f"La sesión {s} del conductor {d} aparece antes que una sesión previa")

    tasks, seen = [], set()
    for task_id, i in enumerate(range(0, len(order), 2), start=1):
        pair = order[i:i + 2]
        new = {d for d, _ in pair} - seen
        seen |= new
        tasks.append(_make_task(task_id, dataset, pair, frozenset(new)))

    stream = TaskStream(tuple(tasks), ScenarioKind.TWO_NEW_SESSIONS, tuple(order), session_order_seed)
    logger.info(f"Escenario {stream.scenario_kind.value}: {len(tasks)} tareas, clases nuevas por tarea "
                f"{[len(t.classes_introduced) for t in tasks]}")
    return stream


def build_joint(dataset: PreparedDataset, seed: int = 0) -> TaskStream:
    """Flujo de una sola tarea con todos los datos (entrenamiento conjunto)"""
    task = _make_task(1, dataset, dataset.keys, frozenset(dataset.drivers))
    return TaskStream((task,), ScenarioKind.JOINT, tuple(dataset.drivers), seed)


def build_stream(dataset: PreparedDataset, kind: ScenarioKind, permutation_seed: int,
                 allow_partial_last_task: bool = False) -> TaskStream:
    kind = ScenarioKind(kind)
    if kind == ScenarioKind.TWO_NEW_DRIVERS:
        order = permute_classes(dataset.drivers, permutation_seed)
        return build_scenario1(dataset, order, permutation_seed, allow_partial_last_task)
    if kind == ScenarioKind.ONE_NEW_DRIVER:
        return build_scenario2(dataset, permute_classes(dataset.drivers, permutation_seed), permutation_seed)
    if kind == ScenarioKind.TWO_NEW_SESSIONS:
        return build_scenario3(dataset, permutation_seed)
    return build_joint(dataset, permutation_seed)


def _check_task_index(stream: TaskStream, t: int) -> None:
    if not 1 <= t <= len(stream.tasks):
        raise IndexError(f"Índice de tarea fuera de rango: {t} (el flujo tiene {len(stream.tasks)} tareas)")


def eval_set(stream: TaskStream, t: int, test_pool: Dict[SessionKey, List[WindowSample]]) -> List[WindowSample]:
    """
    Conjunto de evaluación de la tarea t: todas las ventanas de prueba (ambas sesiones)
    de los conductores introducidos hasta t, agrupadas por sesión y en orden temporal
    """
    seen = stream.seen_classes(t)
    windows = []
    for key in sorted(test_pool):
        if key[0] in seen:
            windows.extend(sorted(test_pool[key], key=lambda w: w.index))
    return windows
