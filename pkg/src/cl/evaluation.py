"""
Protocolo de evaluación: precisión por tarea sobre los conductores vistos,
precisión final, gap contra el entrenamiento conjunto, tiempos y memoria de la estrategia
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.config.settings import SMOOTHING_WINDOW
from .data import WindowSample
from .errors import ProtocolError, ComparisonError
from .model import ModelSnapshot
from .smoothing import PredictionTrace, smoothed_eval

logger = logging.getLogger(__name__)

REPORT_FORMAT = "drivercl-report/1"

# Orden de filas de la tabla comparativa
METHOD_ORDER = ("Joint", "Cumulative", "FineTune", "EWC", "LwF", "ER", "DERpp", "SmooER", "SmooDER")
SCENARIO_ORDER = ("TwoNewDrivers", "OneNewDriver", "TwoNewSessions", "Joint")


def evaluate(model: ModelSnapshot, eval_windows: Sequence[WindowSample], use_smoothing: bool = False,
             window_size: int = SMOOTHING_WINDOW,
             state_policy: str = "reset_per_session") -> Tuple[float, PredictionTrace]:
    """
    Precisión micro-promediada sobre las ventanas de evaluación

    La traza contiene siempre los logits crudos y los suavizados; use_smoothing elige
    cuál de las dos decisiones define la precisión devuelta.
    """
    labels = {w.label for w in eval_windows}
    missing = sorted(labels - set(model.active_classes))
    if missing:
        raise ProtocolError(f"Conductores de evaluación sin registrar en el modelo: {missing}")
    trace = smoothed_eval(model, eval_windows, window_size, state_policy)
    return trace.accuracy(smoothed=use_smoothing), trace


def per_driver_accuracy(trace: PredictionTrace, smoothed: bool) -> Dict[int, float]:
    if not len(trace.labels):
        return {}
    predictions = trace.smoothed_predictions if smoothed else trace.raw_predictions
    return {
        int(d): float((predictions[trace.labels == d] == d).mean())
        for d in np.unique(trace.labels)
    }


def compute_gap(final_acc: float, joint_acc: float) -> float:
    """Puntos porcentuales entre el entrenamiento conjunto y el método"""
    return joint_acc - final_acc


def account_strategy_bytes(strategy) -> int:
    """Bytes de estado de la estrategia (memoria, bundles de Fisher, profesor o datos acumulados)"""
    return int(strategy.strategy_bytes())


def time_task(thunk: Callable[[], object]) -> Tuple[object, float]:
    """Ejecuta thunk y devuelve (resultado, segundos de reloj monótono)"""
    start = time.perf_counter()
    result = thunk()
    return result, time.perf_counter() - start


@dataclass
class AccuracyMatrix:
    """Precisión tras cada tarea (primaria, cruda y suavizada) y por conductor"""
    values: List[float] = field(default_factory=list)
    raw: List[float] = field(default_factory=list)
    smoothed: List[float] = field(default_factory=list)
    per_driver: List[Dict[int, float]] = field(default_factory=list)
    n_eval: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.values)

    def record(self, trace: PredictionTrace, use_smoothing: bool) -> float:
        raw, smoothed = trace.accuracy(smoothed=False), trace.accuracy(smoothed=True)
        primary = smoothed if use_smoothing else raw
        self.values.append(primary)
        self.raw.append(raw)
        self.smoothed.append(smoothed)
        self.per_driver.append(per_driver_accuracy(trace, use_smoothing))
        self.n_eval.append(int(len(trace.labels)))
        return primary

    @property
    def final(self) -> Optional[float]:
        return self.values[-1] if self.values else None

    def to_frame(self) -> pd.DataFrame:
        drivers = sorted({d for row in self.per_driver for d in row})
        rows = []
        for t in range(len(self.values)):
            row = {
                "task": t + 1,
                "accuracy": self.values[t],
                "raw_accuracy": self.raw[t],
                "smoothed_accuracy": self.smoothed[t],
                "n_eval": self.n_eval[t],
            }
            for d in drivers:
                row[f"driver_{d}"] = self.per_driver[t].get(d, np.nan)
            rows.append(row)
        return pd.DataFrame(rows, columns=["task", "accuracy", "raw_accuracy", "smoothed_accuracy", "n_eval",
                                           *[f"driver_{d}" for d in drivers]])

    def to_dict(self) -> dict:
        return {
            "values": self.values,
            "raw": self.raw,
            "smoothed": self.smoothed,
            # claves JSON como texto
            "per_driver": [{str(d): acc for d, acc in sorted(row.items())} for row in self.per_driver],
            "n_eval": self.n_eval,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "AccuracyMatrix":
        return cls(
            values=list(payload["values"]),
            raw=list(payload["raw"]),
            smoothed=list(payload["smoothed"]),
            per_driver=[{int(d): acc for d, acc in row.items()} for row in payload["per_driver"]],
            n_eval=list(payload["n_eval"]),
        )


@dataclass
class RunRecord:
    """Resultado de una corrida (semilla, permutación)"""
    seed: int
    permutation: int
    n_tasks: int
    accuracy: AccuracyMatrix = field(default_factory=AccuracyMatrix)
    task_times: List[float] = field(default_factory=list)
    epoch_losses: List[List[float]] = field(default_factory=list)
    strategy_bytes: int = 0

    @property
    def tasks_completed(self) -> int:
        return len(self.accuracy)

    @property
    def complete(self) -> bool:
        return self.tasks_completed == self.n_tasks

    @property
    def final_acc(self) -> Optional[float]:
        """Precisión final en porcentaje"""
        return 100.0 * self.accuracy.final if self.accuracy.final is not None else None

    def to_dict(self) -> dict:
        """Contenido determinista de la corrida (los tiempos van aparte)"""
        return {
            "seed": self.seed,
            "permutation": self.permutation,
            "n_tasks": self.n_tasks,
            "tasks_completed": self.tasks_completed,
            "complete": self.complete,
            "final_acc": self.final_acc,
            "strategy_bytes": self.strategy_bytes,
            "accuracy": self.accuracy.to_dict(),
            "epoch_losses": self.epoch_losses,
        }

    @classmethod
    def from_dict(cls, payload: dict, task_times: Sequence[float] = ()) -> "RunRecord":
        return cls(
            seed=payload["seed"],
            permutation=payload["permutation"],
            n_tasks=payload["n_tasks"],
            accuracy=AccuracyMatrix.from_dict(payload["accuracy"]),
            task_times=list(task_times),
            epoch_losses=[list(losses) for losses in payload.get("epoch_losses", [])],
            strategy_bytes=payload.get("strategy_bytes", 0),
        )


def joint_reference_from_report(report: dict) -> Dict[int, float]:
    """Precisión final media por semilla de un reporte de entrenamiento conjunto"""
    by_seed: Dict[int, List[float]] = {}
    for run in report.get("runs", []):
        if run.get("final_acc") is not None:
            by_seed.setdefault(int(run["seed"]), []).append(run["final_acc"])
    if not by_seed:
        raise ComparisonError("El reporte de referencia no contiene corridas con precisión final")
    return {seed: float(np.mean(values)) for seed, values in sorted(by_seed.items())}


def _run_gap(record: RunRecord, joint_reference: Dict[int, float]) -> Optional[float]:
    if record.final_acc is None:
        return None
    reference = joint_reference.get(record.seed)
    if reference is None:
        reference = float(np.mean(list(joint_reference.values())))
    return compute_gap(record.final_acc, reference)


def aggregate_runs(records: Sequence[RunRecord], joint_reference: Optional[Dict[int, float]] = None) -> dict:
    """
    Agrega las corridas de una celda (método, escenario)

    Se reportan la media simple sobre todas las corridas y la media de las medias
    por permutación; la desviación estándar es poblacional.
    """
    finished = [r for r in records if r.final_acc is not None]
    finals = np.asarray([r.final_acc for r in finished], dtype=np.float64)
    summary = {
        "n_runs": len(records),
        "n_complete": sum(r.complete for r in records),
        "final_acc": float(finals.mean()) if len(finals) else None,
        "final_acc_std": float(finals.std()) if len(finals) else None,
        "final_acc_permutation_mean": None,
        "accuracy_curve": [],
        "time_per_task": [],
        "gap": None,
        "gap_std": None,
        "strategy_bytes": max((r.strategy_bytes for r in records), default=0),
    }
    if len(finals):
        by_perm: Dict[int, List[float]] = {}
        for r in finished:
            by_perm.setdefault(r.permutation, []).append(r.final_acc)
        summary["final_acc_permutation_mean"] = float(np.mean([np.mean(v) for _, v in sorted(by_perm.items())]))

    n_tasks = max((len(r.accuracy) for r in records), default=0)
    for t in range(n_tasks):
        reached = [r.accuracy.values[t] for r in records if len(r.accuracy) > t]
        summary["accuracy_curve"].append(100.0 * float(np.mean(reached)))
        times = [r.task_times[t] for r in records if len(r.task_times) > t]
        summary["time_per_task"].append(float(np.mean(times)) if times else None)

    if joint_reference and finished:
        gaps = np.asarray([_run_gap(r, joint_reference) for r in finished], dtype=np.float64)
        summary["gap"] = float(gaps.mean())
        summary["gap_std"] = float(gaps.std())
    return summary


@dataclass
class MetricsReport:
    """Reporte agregado de un experimento (un método sobre un escenario)"""
    method: str
    scenario: str
    runs: List[RunRecord]
    config_echo: dict
    dataset_hash: str
    joint_reference: Optional[Dict[int, float]] = None

    @property
    def complete(self) -> bool:
        return bool(self.runs) and all(r.complete for r in self.runs)

    @property
    def summary(self) -> dict:
        return aggregate_runs(self.runs, self.joint_reference)

    @property
    def final_acc(self) -> Optional[float]:
        return self.summary["final_acc"]

    @property
    def gap(self) -> Optional[float]:
        return self.summary["gap"]

    @property
    def time_per_task(self) -> List[Optional[float]]:
        return self.summary["time_per_task"]

    @property
    def strategy_bytes(self) -> int:
        return self.summary["strategy_bytes"]

    def to_dict(self) -> dict:
        """Contenido determinista (sin tiempos de reloj) para report.json"""
        summary = {k: v for k, v in self.summary.items() if k != "time_per_task"}
        return {
            "format": REPORT_FORMAT,
            "method": self.method,
            "scenario": self.scenario,
            "complete": self.complete,
            "dataset_hash": self.dataset_hash,
            "config": self.config_echo,
            "joint_reference": ({str(s): v for s, v in self.joint_reference.items()}
                                if self.joint_reference else None),
            **summary,
            "runs": [r.to_dict() for r in self.runs],
        }

    def timing_dict(self) -> dict:
        return {
            "method": self.method,
            "scenario": self.scenario,
            "time_per_task": self.time_per_task,
            "runs": [{"seed": r.seed, "permutation": r.permutation, "task_times": r.task_times} for r in self.runs],
        }

    def accuracy_frame(self) -> pd.DataFrame:
        """Matriz de precisión de todas las corridas en formato largo"""
        frames = []
        for r in self.runs:
            frame = r.accuracy.to_frame()
            frame.insert(0, "permutation", r.permutation)
            frame.insert(0, "seed", r.seed)
            frames.append(frame)
        if not frames:
            return pd.DataFrame(columns=["seed", "permutation", "task", "accuracy"])
        return pd.concat(frames, ignore_index=True)


def comparison_table(reports: Sequence[dict]) -> pd.DataFrame:
    """
    Tabla comparativa: ACC y gap por escenario y método, más la media de todos los escenarios

    Args:
        reports: Reportes agregados (diccionarios de report.json)

    Returns:
        DataFrame indexado por método con columnas '<escenario> ACC', '<escenario> gap',
        'Average ACC' y 'Average gap'
    """
    if not reports:
        raise ComparisonError("No hay reportes para comparar")

    cells: Dict[Tuple[str, str], dict] = {}
    hashes = {r.get("dataset_hash") for r in reports}
    if len(hashes) > 1:
        raise ComparisonError(f"Los reportes provienen de datasets distintos: {sorted(map(str, hashes))}")
    for report in reports:
        key = (report["method"], report["scenario"])
        if key in cells:
            raise ComparisonError(f"Reporte duplicado para el método {key[0]} en el escenario {key[1]}")
        cells[key] = report

    methods = sorted({m for m, _ in cells}, key=_order_key(METHOD_ORDER))
    scenarios = sorted({s for _, s in cells}, key=_order_key(SCENARIO_ORDER))
    rows = []
    for method in methods:
        row = {"method": method}
        accs, gaps = [], []
        for scenario in scenarios:
            report = cells.get((method, scenario), {})
            acc, gap = report.get("final_acc"), report.get("gap")
            row[f"{scenario} ACC"] = acc
            row[f"{scenario} gap"] = gap
            if acc is not None:
                accs.append(acc)
            if gap is not None:
                gaps.append(gap)
        row["Average ACC"] = float(np.mean(accs)) if accs else None
        row["Average gap"] = float(np.mean(gaps)) if gaps else None
        rows.append(row)
    return pd.DataFrame(rows).set_index("method")


def render_comparison(table: pd.DataFrame) -> str:
    return table.to_string(float_format=lambda v: f"{v:.2f}", na_rep="-")


def _order_key(order: Sequence[str]):
    return lambda name: (order.index(name) if name in order else len(order), name)
