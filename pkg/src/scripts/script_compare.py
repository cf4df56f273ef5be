#!/usr/bin/env python3
"""
Script para construir la tabla comparativa (ACC y gap por escenario y método)
"""
import argparse
import logging
import sys
from pathlib import Path

from src.cl.errors import DriverCLError
from src.cl.evaluation import comparison_table, render_comparison
from src.cl.load import load_reports, save_csv
from src.config.settings import setup_logging

logger = setup_logging()


def add_arguments(parser: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser.add_argument('reports', nargs='*', help='Archivos report.json o directorios de experimento')
    parser.add_argument('--output', '-o', type=str, help='Carpeta donde guardar comparison.csv y comparison.txt')
    return parser


def run(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if not args.reports:
        parser.error("se necesita al menos un reporte")

    try:
        table = comparison_table(load_reports(args.reports))
        text = render_comparison(table)
        print(text)

        if args.output:
            output = Path(args.output)
            save_csv(table.reset_index(), output / "comparison.csv")
            with open(output / "comparison.txt", 'w', encoding='utf-8') as f:
                f.write(text + "\n")
            logger.info(f"Tabla comparativa guardada en: {output}")
        return 0

    except KeyboardInterrupt:
        logger.info("Comparación interrumpida por el usuario")
        print("\nComparación interrumpida")
        return 130
    except (DriverCLError, FileNotFoundError, ValueError) as e:
        logger.error(f"Error comparando reportes: {str(e)}")
        print(f"Error: {str(e)}")
        return 1


def main(argv=None):
    """Función principal del script"""
    parser = add_arguments(argparse.ArgumentParser(description='Comparar reportes de experimentos'))
    args = parser.parse_args(argv)
    sys.exit(run(args, parser))


if __name__ == "__main__":
    main()
