"""
Orquestación de experimentos: preparación del dataset, corridas (semilla, permutación),
checkpoints en fronteras de tarea, reanudación y reporte agregado
"""
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from src.config.experiment import ExperimentConfig, DatasetConfig, build_experiment_config
from src.config.settings import CACHE_PATH, OUTPUT_PATH
from .data import PreparedDataset, generate_synthetic, load_ocslab, prepare_dataset, validation_split
from .errors import CheckpointError, ConfigurationError, StageError
from .evaluation import (
    MetricsReport, RunRecord, account_strategy_bytes, evaluate, joint_reference_from_report, time_task,
)
from .load import (
    file_digest, load_json, load_progress, load_strategy_state, save_csv, save_json, save_progress,
    save_strategy_state,
)
from .model import init_model, load_checkpoint, register_classes, save_checkpoint, train_task
from .scenarios import TaskStream, build_stream, eval_set
from .smoothing import export_trace
from .strategies import StrategyKind, build_strategy

logger = logging.getLogger(__name__)

MANIFEST_FORMAT = "drivercl-experiment/1"


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------

def dataset_cache_key(config: DatasetConfig) -> str:
    """Clave de caché: parámetros de preparación + contenido de la fuente"""
    payload = config.model_dump(mode="json", exclude={"prepared", "validation_fraction"})
    if config.csv is not None:
        payload["csv"] = file_digest(config.csv)
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def resolve_dataset(config: DatasetConfig, cache_dir: Path = None) -> Tuple[PreparedDataset, Path]:
    """
    Devuelve el dataset preparado y su directorio, preparándolo y guardándolo en caché si hace falta

    Args:
        config: Fuente y parámetros de preparación
        cache_dir: Raíz de la caché (por defecto DRIVERCL_CACHE_DIR)
    """
    if config.prepared is not None:
        return PreparedDataset.load(config.prepared), Path(config.prepared)

    directory = Path(cache_dir or CACHE_PATH) / dataset_cache_key(config)
    if (directory / "manifest.json").exists():
        logger.info(f"Dataset preparado encontrado en caché: {directory}")
        return PreparedDataset.load(directory), directory

    prepared = build_prepared(config)
    prepared.save(directory)
    return prepared, directory


def build_prepared(config: DatasetConfig) -> PreparedDataset:
    """Carga la fuente (CSV de OCSLab o trazas sintéticas) y la prepara sin tocar la caché"""
    if config.csv is not None:
        raw = load_ocslab(config.csv)
    else:
        spec = config.synthetic
        raw = generate_synthetic(spec.n_drivers, spec.sessions_per_driver, spec.records_per_session,
                                 spec.n_features, spec.seed)
    return prepare_dataset(raw, config.window_length, config.stride, config.train_fraction,
                           config.split_mode, config.split_seed)


# ---------------------------------------------------------------------------
# Corrida individual
# ---------------------------------------------------------------------------

def task_seed(seed: int, task_id: int, stream: int = 1) -> int:
    """Semilla derivada por tarea, para que reanudar en una frontera reproduzca la corrida"""
    return int(np.random.SeedSequence([seed, task_id, stream]).generate_state(1)[0])


def run_directory(output_dir: Path, seed: int, permutation: int) -> Path:
    return Path(output_dir) / "runs" / f"seed{seed}_perm{permutation}"


def _stage(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as e:
        logger.error(f"Fallo en la etapa {stage}: {str(e)}")
        raise StageError(stage, f"{type(e).__name__}: {e}") from e


def _run_report(config: ExperimentConfig, record: RunRecord, dataset_hash: str) -> dict:
    return {
        "method": config.method,
        "scenario": config.scenario.kind.value,
        "dataset_hash": dataset_hash,
        "config": config.echo(),
        **record.to_dict(),
    }


def run_single(config: ExperimentConfig, dataset: PreparedDataset, seed: int, permutation: int,
               run_dir: Path, stop_after_task: Optional[int] = None) -> RunRecord:
    """
    Ejecuta (o reanuda) una corrida sobre el flujo de tareas de la permutación

    Por tarea: before_task -> registrar clases -> entrenar -> after_task -> evaluar
    sobre eval_set(t) -> checkpoint. Si run_dir tiene progreso previo se continúa
    desde la primera tarea incompleta.

    Args:
        config: Configuración del experimento
        dataset: Dataset preparado
        seed: Semilla de la corrida (inicialización, barajado, memoria)
        permutation: Semilla de permutación de clases / orden de sesiones
        run_dir: Directorio exclusivo de la corrida
        stop_after_task: Detenerse tras esta tarea (simula una interrupción)

    Returns:
        RunRecord con las tareas completadas hasta el momento
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    dataset_hash = dataset.dataset_hash()
    test_pool = dataset.test_pool()
    validation_pool = None
    if config.dataset.validation_fraction is not None:
        validation_pool, test_pool = validation_split(test_pool, config.dataset.validation_fraction,
                                                      config.dataset.split_seed)

    model_config = config.model.model_copy(update={"input_features": dataset.n_features})
    progress = load_progress(run_dir)

    if progress is not None and progress["tasks_completed"] > 0:
        if progress["dataset_hash"] != dataset_hash:
            raise CheckpointError(f"El dataset cambió desde la corrida guardada en {run_dir}")
        stream = TaskStream.from_manifest(load_json(run_dir / "stream.json"), dataset)
        model = _stage("resume", load_checkpoint, run_dir / "checkpoint.pt")
        strategy = build_strategy(config.strategy.kind, config.strategy.hyperparameters,
                                  dataset.sample_shape, model_config.max_classes)
        _stage("resume", strategy.load_state_dict, load_strategy_state(run_dir / "strategy.pt"), model)
        timing = load_json(run_dir / "timing.json") if (run_dir / "timing.json").exists() else {}
        record = RunRecord.from_dict(load_json(run_dir / "report.json"), timing.get("task_times", []))
        if record.tasks_completed != progress["tasks_completed"]:
            raise CheckpointError(f"report.json y progress.json no coinciden en {run_dir}")
        logger.info(f"Reanudando seed={seed} perm={permutation} desde la tarea "
                    f"{progress['tasks_completed'] + 1}/{len(stream)}")
    else:
        stream = _stage("scenario", build_stream, dataset, config.scenario.kind, permutation,
                        config.scenario.allow_partial_last_task)
        save_json(stream.to_manifest(), run_dir / "stream.json")
        model = _stage("init", init_model, model_config, seed)
        strategy = build_strategy(config.strategy.kind, config.strategy.hyperparameters,
                                  dataset.sample_shape, model_config.max_classes)
        record = RunRecord(seed=seed, permutation=permutation, n_tasks=len(stream))

    smoothing = config.smoothing
    for task in stream.tasks[record.tasks_completed:]:
        t = task.task_id
        logger.info(f"[{config.method} seed={seed} perm={permutation}] Iniciando tarea {t}/{len(stream)}: "
                    f"clases nuevas {sorted(task.classes_introduced)}, {len(task.train_windows)} ventanas")

        train_data = _stage("before_task", strategy.before_task, model, task)
        _stage("register", register_classes, model, task.classes_introduced)
        validation = eval_set(stream, t, validation_pool) if validation_pool is not None else None
        (model, log), seconds = _stage("train", time_task,
                                       lambda: train_task(model, train_data, strategy, task_seed(seed, t), validation))
        _stage("after_task", strategy.after_task, model, task, np.random.default_rng(task_seed(seed, t, 2)))

        windows = eval_set(stream, t, test_pool)
        accuracy, trace = _stage("evaluate", evaluate, model, windows, smoothing.enabled,
                                 smoothing.window, smoothing.state_policy)
        record.accuracy.record(trace, smoothing.enabled)
        record.task_times.append(seconds)
        record.epoch_losses.append(log.epoch_losses)
        record.strategy_bytes = account_strategy_bytes(strategy)

        _stage("checkpoint", _save_boundary, run_dir, config, model, strategy, record, dataset_hash, trace)
        logger.info(f"[{config.method} seed={seed} perm={permutation}] Tarea {t} completada: "
                    f"precisión {100 * accuracy:.2f}% sobre {len(windows)} ventanas, {seconds:.2f}s")

        if stop_after_task is not None and t >= stop_after_task and t < len(stream):
            logger.warning(f"Corrida detenida tras la tarea {t} (seed={seed} perm={permutation})")
            break

    return record


def _save_boundary(run_dir: Path, config: ExperimentConfig, model, strategy, record: RunRecord,
                   dataset_hash: str, trace) -> None:
    save_checkpoint(model, run_dir / "checkpoint.pt")
    save_strategy_state(strategy.state_dict(), run_dir / "strategy.pt")
    save_json(_run_report(config, record, dataset_hash), run_dir / "report.json")
    save_json({"seed": record.seed, "permutation": record.permutation, "task_times": record.task_times},
              run_dir / "timing.json")
    save_csv(record.accuracy.to_frame(), run_dir / "accuracy.csv")
    export_trace(trace, run_dir / "trace.csv")
    # progress.json va al final: referencia los hashes de los archivos anteriores
    save_progress(run_dir, record.tasks_completed, record.n_tasks, dataset_hash)


def _run_worker(config_payload: dict, dataset_dir: str, seed: int, permutation: int, run_dir: str,
                stop_after_task: Optional[int]) -> Tuple[dict, list]:
    """Punto de entrada en el proceso hijo: reconstruye configuración y dataset desde disco"""
    config = build_experiment_config(config_payload)
    dataset = PreparedDataset.load(Path(dataset_dir))
    record = run_single(config, dataset, seed, permutation, Path(run_dir), stop_after_task)
    return record.to_dict(), record.task_times


# ---------------------------------------------------------------------------
# Experimento
# ---------------------------------------------------------------------------

def _joint_reference(config: ExperimentConfig) -> Optional[Dict[int, float]]:
    if config.joint_reference is None:
        return None
    return joint_reference_from_report(load_json(config.joint_reference))


def run_experiment(config: ExperimentConfig, output_dir: Path = None, stop_after_task: Optional[int] = None,
                   cache_dir: Path = None) -> Tuple[MetricsReport, dict]:
    """
    Ejecuta todas las corridas (semilla x permutación) y persiste el reporte agregado

    Las corridas con trabajo pendiente se reanudan desde su último checkpoint, así que
    invocar de nuevo sobre el mismo directorio continúa un experimento interrumpido.

    Args:
        config: Configuración validada
        output_dir: Directorio del experimento (por defecto config.output_dir o DRIVERCL_OUTPUT_PATH/<método>)
        stop_after_task: Detiene cada corrida tras esta tarea
        cache_dir: Raíz de la caché de datasets

    Returns:
        Tupla (MetricsReport, resultados {total, success, failed, failed_runs})
    """
    output_dir = Path(output_dir or config.output_dir or OUTPUT_PATH / f"{config.method}_{config.scenario.kind.value}")
    logger.info(f"Iniciando experimento {config.method} / {config.scenario.kind.value} en {output_dir}")

    joint_reference = _stage("config", _joint_reference, config)
    dataset, dataset_dir = _stage("dataset", resolve_dataset, config.dataset, cache_dir)
    dataset_hash = dataset.dataset_hash()

    config_path = output_dir / "config.json"
    if config_path.exists() and load_json(config_path) != config.echo():
        raise ConfigurationError(f"{output_dir} contiene un experimento con otra configuración")
    # se crea solo tras validar referencia y dataset
    output_dir.mkdir(parents=True, exist_ok=True)
    save_json(config.echo(), config_path)

    pairs = [(s, p) for s in config.seeds for p in config.permutations]
    save_json({
        "format": MANIFEST_FORMAT,
        "method": config.method,
        "scenario": config.scenario.kind.value,
        "dataset_hash": dataset_hash,
        "dataset_dir": str(dataset_dir),
        "runs": [{"seed": s, "permutation": p,
                  "directory": str(run_directory(output_dir, s, p).relative_to(output_dir))} for s, p in pairs],
    }, output_dir / "manifest.json")

    results = {'total': len(pairs), 'success': 0, 'failed': 0, 'failed_runs': [], 'output_dir': str(output_dir)}
    records: Dict[Tuple[int, int], RunRecord] = {}
    workers = 1 if config.serial_timing else config.workers

    if workers == 1:
        for seed, permutation in pairs:
            try:
                records[(seed, permutation)] = run_single(config, dataset, seed, permutation,
                                                          run_directory(output_dir, seed, permutation), stop_after_task)
                results['success'] += 1
            except Exception as e:
                _record_failure(results, output_dir, seed, permutation, records, e)
    else:
        payload = config.model_dump(mode="json")
        # procesos y no hilos: el RNG global de torch no es seguro entre hilos
        with ProcessPoolExecutor(max_workers=workers) as executor:
            future_to_run = {
                executor.submit(_run_worker, payload, str(dataset_dir), s, p,
                                str(run_directory(output_dir, s, p)), stop_after_task): (s, p)
                for s, p in pairs
            }
            for future in as_completed(future_to_run):
                seed, permutation = future_to_run[future]
                try:
                    record_dict, task_times = future.result()
                    records[(seed, permutation)] = RunRecord.from_dict(record_dict, task_times)
                    results['success'] += 1
                    logger.info(f"Corrida completada: seed={seed} perm={permutation}")
                except Exception as e:
                    _record_failure(results, output_dir, seed, permutation, records, e)

    ordered = [records[pair] for pair in pairs if pair in records]
    if joint_reference is None and config.strategy.base_kind == StrategyKind.JOINT and ordered:
        joint_reference = joint_reference_from_report({"runs": [r.to_dict() for r in ordered]})

    report = MetricsReport(method=config.method, scenario=config.scenario.kind.value, runs=ordered,
                           config_echo=config.echo(), dataset_hash=dataset_hash, joint_reference=joint_reference)
    write_report(report, output_dir)

    status = "completado" if report.complete else "incompleto"
    logger.info(f"Experimento {status}: {results['success']}/{results['total']} corridas, "
                f"precisión final {_fmt(report.final_acc)}")
    return report, results


def _record_failure(results: dict, output_dir: Path, seed: int, permutation: int,
                    records: Dict[Tuple[int, int], RunRecord], error: Exception) -> None:
    results['failed'] += 1
    results['failed_runs'].append(f"seed{seed}_perm{permutation}: {error}")
    logger.error(f"Error en la corrida seed={seed} perm={permutation}: {str(error)}")
    # lo que se alcanzó a persistir entra al reporte como corrida incompleta
    run_dir = run_directory(output_dir, seed, permutation)
    if (run_dir / "report.json").exists():
        timing = load_json(run_dir / "timing.json") if (run_dir / "timing.json").exists() else {}
        records[(seed, permutation)] = RunRecord.from_dict(load_json(run_dir / "report.json"),
                                                           timing.get("task_times", []))


def write_report(report: MetricsReport, output_dir: Path) -> Path:
    output_dir = Path(output_dir)
    path = save_json(report.to_dict(), output_dir / "report.json")
    save_json(report.timing_dict(), output_dir / "timing.json")
    save_csv(report.accuracy_frame(), output_dir / "accuracy.csv")
    logger.info(f"Reporte guardado en: {path}")
    return path


def resume_experiment(output_dir: Path, workers: int = None, cache_dir: Path = None) -> Tuple[MetricsReport, dict]:
    """Continúa un experimento desde su directorio; un experimento completo se reescribe sin entrenar"""
    output_dir = Path(output_dir)
    config_path = output_dir / "config.json"
    if not config_path.exists():
        raise FileNotFoundError(f"No hay un experimento en: {output_dir}")
    payload = load_json(config_path)
    config = build_experiment_config(payload, {"workers": workers})
    if load_json(output_dir / "manifest.json").get("format") != MANIFEST_FORMAT:
        raise CheckpointError(f"Manifiesto de experimento incompatible en {output_dir}")
    return run_experiment(config, output_dir, cache_dir=cache_dir)


def _fmt(value: Optional[float]) -> str:
    return f"{value:.2f}%" if value is not None else "-"
