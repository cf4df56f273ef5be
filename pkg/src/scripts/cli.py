#!/usr/bin/env python3
"""
Punto de entrada único: python -m src.scripts.cli <prepare|run|resume|plot|compare>
"""
import argparse
import sys

from src.scripts import script_compare, script_plot, script_prepare, script_run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drivercl",
                                     description='Benchmark de aprendizaje continuo para identificación de conductores')
    subparsers = parser.add_subparsers(dest='command', required=True)

    commands = {
        'prepare': ('Preparar un dataset', script_prepare.add_arguments, script_prepare.run),
        'run': ('Ejecutar un experimento', script_run.add_run_arguments, script_run.run),
        'resume': ('Reanudar un experimento interrumpido', script_run.add_resume_arguments, script_run.resume),
        'plot': ('Graficar reportes', script_plot.add_arguments, script_plot.run),
        'compare': ('Tabla comparativa de reportes', script_compare.add_arguments, script_compare.run),
    }
    for name, (help_text, add_arguments, handler) in commands.items():
        sub = add_arguments(subparsers.add_parser(name, help=help_text, description=help_text))
        sub.set_defaults(handler=handler, subparser=sub)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.handler(args, args.subparser)


if __name__ == "__main__":
    sys.exit(main())
