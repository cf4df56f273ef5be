#!/usr/bin/env python3
"""
Script para graficar reportes de experimentos (precisión y tiempo por tarea)
"""
import argparse
import logging
import sys
from pathlib import Path

from src.cl.errors import DriverCLError
from src.cl.load import load_reports
from src.cl.plots import plot_reports
from src.config.settings import OUTPUT_PATH, setup_logging

logger = setup_logging()


def add_arguments(parser: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser.add_argument('reports', nargs='*', help='Archivos report.json o directorios de experimento')
    parser.add_argument('--output', '-o', type=str, default=str(OUTPUT_PATH / "plots"),
                        help='Carpeta de salida de las figuras (por defecto: <DRIVERCL_OUTPUT_PATH>/plots)')
    return parser


def run(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if not args.reports:
        parser.error("se necesita al menos un reporte")

    try:
        logger.info(f"Iniciando gráficas de {len(args.reports)} reportes")
        written = plot_reports(load_reports(args.reports), Path(args.output))
        for name, path in sorted(written.items()):
            print(f"{name}: {path}")
        return 0

    except KeyboardInterrupt:
        logger.info("Graficado interrumpido por el usuario")
        print("\nGraficado interrumpido")
        return 130
    except (DriverCLError, FileNotFoundError, ValueError) as e:
        logger.error(f"Error graficando: {str(e)}")
        print(f"Error: {str(e)}")
        return 1


def main(argv=None):
    """Función principal del script"""
    parser = add_arguments(argparse.ArgumentParser(description='Graficar reportes de experimentos'))
    args = parser.parse_args(argv)
    sys.exit(run(args, parser))


if __name__ == "__main__":
    main()
