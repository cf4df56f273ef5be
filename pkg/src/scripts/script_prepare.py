#!/usr/bin/env python3
"""
Script para preparar un dataset (CSV de OCSLab o trazas sintéticas):
poda, estandarización, ventanas y división train/test
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from src.cl.errors import DriverCLError
from src.cl.pipeline import build_prepared, dataset_cache_key
from src.config.experiment import DatasetConfig, SyntheticSpec, experiment_schema, load_experiment_config
from src.config.settings import CACHE_PATH, WINDOW_LENGTH, WINDOW_STRIDE, TRAIN_FRACTION, setup_logging

logger = setup_logging()


def add_arguments(parser: argparse.ArgumentParser) -> argparse.ArgumentParser:
    source = parser.add_mutually_exclusive_group()
    source.add_argument('--csv', type=str, help='CSV de OCSLab')
    source.add_argument('--synthetic', action='store_true', help='Generar trazas sintéticas')
    source.add_argument('--config', '-c', type=str, help='Tomar la sección dataset de una configuración de experimento')
    parser.add_argument('--output', '-o', type=str,
                        help='Carpeta del dataset preparado (por defecto: caché DRIVERCL_CACHE_DIR)')
    parser.add_argument('--window', type=int, default=WINDOW_LENGTH, help=f'Longitud de ventana (por defecto: {WINDOW_LENGTH})')
    parser.add_argument('--stride', type=int, default=WINDOW_STRIDE, help=f'Paso entre ventanas (por defecto: {WINDOW_STRIDE})')
    parser.add_argument('--train-fraction', type=float, default=TRAIN_FRACTION,
                        help=f'Fracción de entrenamiento por sesión (por defecto: {TRAIN_FRACTION})')
    parser.add_argument('--split-mode', choices=['chronological', 'random'], default='chronological')
    parser.add_argument('--drivers', type=int, default=10, help='Conductores sintéticos')
    parser.add_argument('--sessions', type=int, default=2, help='Sesiones por conductor sintético')
    parser.add_argument('--records', type=int, default=600, help='Registros por sesión sintética')
    parser.add_argument('--features', type=int, default=8, help='Variables sintéticas')
    parser.add_argument('--seed', type=int, default=0, help='Semilla del generador sintético y de la división aleatoria')
    parser.add_argument('--schema', action='store_true', help='Imprimir el esquema JSON de configuración y salir')
    return parser


def dataset_config_from_args(args: argparse.Namespace) -> DatasetConfig:
    if args.config:
        return load_experiment_config(args.config).dataset
    synthetic = None
    if args.synthetic:
        synthetic = SyntheticSpec(n_drivers=args.drivers, sessions_per_driver=args.sessions,
                                  records_per_session=args.records, n_features=args.features, seed=args.seed)
    return DatasetConfig(csv=args.csv, synthetic=synthetic, window_length=args.window, stride=args.stride,
                         train_fraction=args.train_fraction, split_mode=args.split_mode, split_seed=args.seed)


def prepare(config: DatasetConfig, output: Path = None) -> Path:
    """
    Prepara y guarda el dataset

    Returns:
        Carpeta del dataset preparado
    """
    if config.prepared is not None:
        logger.info(f"El dataset ya está preparado en: {config.prepared}")
        return Path(config.prepared)
    output = Path(output) if output else CACHE_PATH / dataset_cache_key(config)

    prepared = build_prepared(config)
    prepared.save(output)

    counts = prepared.window_counts()
    print("\n" + "=" * 50)
    print("RESUMEN DE PREPARACIÓN")
    print("=" * 50)
    print(f"Carpeta: {output}")
    print(f"Hash del dataset: {prepared.dataset_hash()}")
    print(f"Variables retenidas: {prepared.n_features} (eliminadas: {prepared.mask.removed_features})")
    print(counts.to_string(index=False))
    print("=" * 50)
    return output


def run(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if args.schema:
        print(json.dumps(experiment_schema(), indent=2))
        return 0
    if not (args.csv or args.synthetic or args.config):
        parser.error("se necesita una fuente: --csv, --synthetic o --config")

    try:
        logger.info("Iniciando preparación del dataset")
        prepare(dataset_config_from_args(args), args.output)
        logger.info("Preparación completada")
        return 0

    except KeyboardInterrupt:
        logger.info("Preparación interrumpida por el usuario")
        print("\nPreparación interrumpida")
        return 130
    except (DriverCLError, FileNotFoundError, ValueError) as e:
        logger.error(f"Error en preparación: {str(e)}")
        print(f"Error: {str(e)}")
        return 1


def main(argv=None):
    """Función principal del script"""
    parser = add_arguments(argparse.ArgumentParser(description='Preparar un dataset de conducción'))
    args = parser.parse_args(argv)
    sys.exit(run(args, parser))


if __name__ == "__main__":
    main()
