#!/usr/bin/env python3
"""
Script para ejecutar (o reanudar) un experimento de aprendizaje continuo
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from src.cl.errors import DriverCLError
from src.cl.pipeline import resume_experiment, run_experiment
from src.config.experiment import experiment_schema, load_experiment_config
from src.config.settings import setup_logging

logger = setup_logging()


def add_run_arguments(parser: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser.add_argument('--config', '-c', type=str, help='Documento JSON del experimento')
    parser.add_argument('--output', '-o', type=str, help='Directorio del experimento')
    parser.add_argument('--workers', '-w', type=int, help='Corridas en paralelo (por defecto: 1)')
    parser.add_argument('--epochs', type=int, help='Reemplaza model.epochs_per_task')
    parser.add_argument('--smoothing-window', type=int, help='Reemplaza smoothing.window')
    parser.add_argument('--schema', action='store_true', help='Imprimir el esquema JSON de configuración y salir')
    parser.add_argument('--stop-after-task', type=int, help=argparse.SUPPRESS)
    return parser


def add_resume_arguments(parser: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser.add_argument('run_dir', type=str, help='Directorio del experimento a reanudar')
    parser.add_argument('--workers', '-w', type=int, help='Corridas en paralelo')
    return parser


def overrides_from_args(args: argparse.Namespace) -> dict:
    return {
        "output_dir": args.output,
        "workers": args.workers,
        "model": {"epochs_per_task": args.epochs},
        "smoothing": {"window": args.smoothing_window},
    }


def print_summary(report, results: dict, output_dir: Path) -> None:
    print("\n" + "=" * 50)
    print("RESUMEN DEL EXPERIMENTO")
    print("=" * 50)
    print(f"Método: {report.method}")
    print(f"Escenario: {report.scenario}")
    print(f"Directorio: {output_dir}")
    print(f"Corridas: {results['success']}/{results['total']} (fallidas: {results['failed']})")
    summary = report.summary
    if summary["final_acc"] is not None:
        print(f"Precisión final: {summary['final_acc']:.2f}% ± {summary['final_acc_std']:.2f}")
    if summary["gap"] is not None:
        print(f"Gap contra Joint: {summary['gap']:.2f} puntos")
    print(f"Memoria de la estrategia: {summary['strategy_bytes']} bytes")
    if not report.complete:
        print("Reporte INCOMPLETO")

    if results['failed_runs']:
        print("\nCorridas con errores:")
        for run in results['failed_runs']:
            print(f"  - {run}")
    print("=" * 50)


def _exit_status(report, results: dict) -> int:
    return 0 if results['failed'] == 0 and report.complete else 1


def run(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if args.schema:
        print(json.dumps(experiment_schema(), indent=2))
        return 0
    if not args.config:
        parser.error("se necesita --config")

    try:
        # la validación ocurre antes de crear cualquier archivo de salida
        config = load_experiment_config(args.config, overrides_from_args(args))
        logger.info(f"Iniciando experimento: {config.method} sobre {config.scenario.kind.value}")
        report, results = run_experiment(config, stop_after_task=args.stop_after_task)
        print_summary(report, results, Path(results["output_dir"]))
        return _exit_status(report, results)

    except KeyboardInterrupt:
        logger.info("Experimento interrumpido por el usuario")
        print("\nExperimento interrumpido")
        return 130
    except (DriverCLError, FileNotFoundError, ValueError) as e:
        logger.error(f"Error en el experimento: {str(e)}")
        print(f"Error: {str(e)}")
        return 1


def resume(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.exists():
        parser.error(f"no existe el directorio: {run_dir}")

    try:
        logger.info(f"Reanudando experimento: {run_dir}")
        report, results = resume_experiment(run_dir, args.workers)
        print_summary(report, results, run_dir)
        return _exit_status(report, results)

    except KeyboardInterrupt:
        logger.info("Reanudación interrumpida por el usuario")
        print("\nReanudación interrumpida")
        return 130
    except (DriverCLError, FileNotFoundError, ValueError) as e:
        logger.error(f"Error reanudando el experimento: {str(e)}")
        print(f"Error: {str(e)}")
        return 1


def main(argv=None):
    """Función principal del script"""
    parser = add_run_arguments(argparse.ArgumentParser(description='Ejecutar un experimento de aprendizaje continuo'))
    args = parser.parse_args(argv)
    sys.exit(run(args, parser))


if __name__ == "__main__":
    main()
