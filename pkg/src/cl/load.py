"""
Persistencia de artefactos de las corridas: JSON, CSV y estado de estrategias
"""
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import pandas as pd
import torch

from .errors import CheckpointError

logger = logging.getLogger(__name__)

STRATEGY_STATE_FORMAT = "drivercl-strategy/1"
PROGRESS_FORMAT = "drivercl-progress/1"


def save_json(payload: Any, path: Path) -> Path:
    """
    Guarda un documento JSON de forma atómica (archivo temporal + reemplazo)

    Args:
        payload: Contenido serializable
        path: Ruta de destino

    Returns:
        Ruta donde se guardó el archivo
    """
    try:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, 'w', encoding='utf-8') as f:
            json.dump(payload, f, indent=2, ensure_ascii=False)
            f.write("\n")
        os.replace(tmp, path)
        logger.debug(f"JSON guardado en: {path}")
        return path

    except Exception as e:
        logger.error(f"Error guardando JSON {path}: {str(e)}")
        raise


def load_json(path: Path) -> Any:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"No existe el archivo: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def save_csv(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    logger.debug(f"CSV guardado en: {path}")
    return path


def file_digest(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def save_strategy_state(state: dict, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save({"format": STRATEGY_STATE_FORMAT, "state": state}, tmp)
    os.replace(tmp, path)
    return path


def load_strategy_state(path: Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"No existe el estado de la estrategia: {path}")
    try:
        blob = torch.load(path, weights_only=True)
    except Exception as e:
        raise CheckpointError(f"Estado de estrategia ilegible {path}: {e}") from e
    if blob.get("format") != STRATEGY_STATE_FORMAT:
        raise CheckpointError(f"Versión de estado de estrategia incompatible: {blob.get('format')}")
    return blob["state"]


def save_progress(run_dir: Path, tasks_completed: int, n_tasks: int, dataset_hash: str) -> Path:
    """Marca la última frontera de tarea persistida junto con los hashes de su checkpoint"""
    run_dir = Path(run_dir)
    progress = {
        "format": PROGRESS_FORMAT,
        "tasks_completed": tasks_completed,
        "n_tasks": n_tasks,
        "dataset_hash": dataset_hash,
        "checkpoint_sha256": file_digest(run_dir / "checkpoint.pt"),
        "strategy_sha256": file_digest(run_dir / "strategy.pt"),
    }
    return save_json(progress, run_dir / "progress.json")


def load_progress(run_dir: Path) -> Union[dict, None]:
    """Lee progress.json y verifica que el checkpoint y el estado correspondan a él"""
    run_dir = Path(run_dir)
    path = run_dir / "progress.json"
    if not path.exists():
        return None
    progress = load_json(path)
    if progress.get("format") != PROGRESS_FORMAT:
        raise CheckpointError(f"Versión de progreso incompatible en {run_dir}: {progress.get('format')}")
    if progress["tasks_completed"] == 0:
        return progress
    for name, key in (("checkpoint.pt", "checkpoint_sha256"), ("strategy.pt", "strategy_sha256")):
        target = run_dir / name
        if not target.exists():
            raise CheckpointError(f"Falta {name} en {run_dir}")
        if file_digest(target) != progress[key]:
            raise CheckpointError(f"{name} no corresponde a progress.json en {run_dir} (archivo modificado)")
    return progress


def resolve_report_paths(paths: Sequence[Path]) -> List[Path]:
    """Acepta archivos report.json o directorios de experimento"""
    resolved = []
    for p in map(Path, paths):
        target = p / "report.json" if p.is_dir() else p
        if not target.exists():
            raise FileNotFoundError(f"No se encontró el reporte: {target}")
        resolved.append(target)
    return resolved


def load_reports(paths: Sequence[Path]) -> List[Dict[str, Any]]:
    reports = []
    for path in resolve_report_paths(paths):
        report = load_json(path)
        report["_path"] = str(path)
        reports.append(report)
    logger.info(f"Reportes cargados: {len(reports)}")
    return reports
