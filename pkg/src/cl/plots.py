"""
Figuras de comparación: precisión por tarea y tiempo de entrenamiento por tarea

Cada figura se acompaña de un CSV con los puntos graficados.
"""
import logging
from pathlib import Path
from typing import Dict, List, Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

from .errors import ComparisonError
from .evaluation import METHOD_ORDER
from .load import load_json, save_csv

logger = logging.getLogger(__name__)

BEST_METHODS = ("ER", "DERpp", "SmooER", "SmooDER")
REFERENCE_METHOD = "Joint"


def check_comparable(reports: Sequence[dict]) -> str:
    """Devuelve el escenario común; Joint es una referencia válida para cualquier escenario"""
    if not reports:
        raise ComparisonError("La lista de reportes está vacía")
    scenarios = {r["scenario"] for r in reports if r["method"] != REFERENCE_METHOD}
    if len(scenarios) > 1:
        raise ComparisonError(f"Reportes de escenarios distintos: {sorted(scenarios)}")
    return scenarios.pop() if scenarios else reports[0]["scenario"]


def _sorted(reports: Sequence[dict]) -> List[dict]:
    rank = {m: i for i, m in enumerate(METHOD_ORDER)}
    return sorted(reports, key=lambda r: (rank.get(r["method"], len(rank)), r["method"]))


def accuracy_points(reports: Sequence[dict]) -> pd.DataFrame:
    rows = [
        {"method": r["method"], "task": t, "accuracy": acc}
        for r in _sorted(reports)
        for t, acc in enumerate(r.get("accuracy_curve", []), start=1)
    ]
    return pd.DataFrame(rows, columns=["method", "task", "accuracy"])


def time_points(reports: Sequence[dict]) -> pd.DataFrame:
    """Tiempo medio por tarea, leído del timing.json junto a cada reporte"""
    rows = []
    for r in _sorted(reports):
        path = Path(r.get("_path", "")).parent / "timing.json"
        if not r.get("_path") or not path.exists():
            logger.warning(f"Sin tiempos para {r['method']}: no existe {path}")
            continue
        for t, seconds in enumerate(load_json(path).get("time_per_task", []), start=1):
            rows.append({"method": r["method"], "task": t, "seconds": seconds})
    return pd.DataFrame(rows, columns=["method", "task", "seconds"])


def _plot_accuracy(points: pd.DataFrame, n_tasks: int, title: str, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(8, 5))
    for method, group in points.groupby("method", sort=False):
        if method == REFERENCE_METHOD and len(group) == 1:
            # Joint tiene una sola tarea: se dibuja como referencia horizontal
            ax.hlines(group["accuracy"].iloc[0], 1, max(n_tasks, 1), colors="k", linestyles="--", label=method)
        else:
            ax.plot(group["task"], group["accuracy"], marker="o", label=method)
    ax.set_xlabel("Tarea")
    ax.set_ylabel("Precisión (%)")
    ax.set_title(title)
    ax.set_xticks(range(1, max(n_tasks, 1) + 1))
    ax.grid(True, linestyle="--", alpha=0.7)
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_reports(reports: Sequence[dict], output_dir: Path) -> Dict[str, Path]:
    """
    Genera las figuras de un conjunto de reportes de un mismo escenario

    Args:
        reports: Reportes agregados (con '_path' si se quieren tiempos)
        output_dir: Carpeta de salida

    Returns:
        Diccionario nombre -> ruta de los archivos escritos
    """
    scenario = check_comparable(reports)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    written = {}

    points = accuracy_points(reports)
    n_tasks = int(points["task"].max()) if len(points) else 0
    written["accuracy_points"] = save_csv(points, output_dir / "accuracy_points.csv")
    written["accuracy"] = _plot_accuracy(points, n_tasks, f"Precisión por tarea ({scenario})",
                                         output_dir / "accuracy.png")

    best = points[points["method"].isin(BEST_METHODS + (REFERENCE_METHOD,))]
    if len(best):
        written["best_methods_points"] = save_csv(best, output_dir / "best_methods_points.csv")
        written["best_methods"] = _plot_accuracy(best, n_tasks, f"Métodos con memoria ({scenario})",
                                                 output_dir / "best_methods.png")

    times = time_points(reports)
    if len(times):
        written["time_points"] = save_csv(times, output_dir / "time_points.csv")
        fig, ax = plt.subplots(figsize=(8, 5))
        for method, group in times.groupby("method", sort=False):
            ax.plot(group["task"], group["seconds"], marker="o", label=method)
        ax.set_xlabel("Tarea")
        ax.set_ylabel("Tiempo de entrenamiento (s)")
        ax.set_title(f"Tiempo por tarea ({scenario})")
        ax.grid(True, linestyle="--", alpha=0.7)
        ax.legend(loc="upper left")
        fig.tight_layout()
        written["time"] = output_dir / "time_per_task.png"
        fig.savefig(written["time"])
        plt.close(fig)

    logger.info(f"Figuras generadas en {output_dir}: {sorted(written)}")
    return written
