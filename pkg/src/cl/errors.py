"""
Jerarquía de errores del framework
"""


class DriverCLError(Exception):
    """Error base de DriverCL"""


class SchemaError(DriverCLError, ValueError):
    """El CSV no corresponde al esquema de columnas declarado"""


class ParseError(DriverCLError, ValueError):
    """Fila mal formada en un archivo de entrada"""

    def __init__(self, message: str, row: int = None):
        self.row = row
        if row is not None:
            message = f"fila {row}: {message}"
        super().__init__(message)


class InsufficientDataError(DriverCLError, ValueError):
    """No hay suficientes filas para ajustar estadísticas"""


class ShapeError(DriverCLError, ValueError):
    """Dimensiones incompatibles"""


class ConfigurationError(DriverCLError, ValueError):
    """Configuración de escenario, estrategia o entrenamiento inválida"""


class ModelStateError(DriverCLError):
    """Operación inválida para el estado actual del modelo o de la estrategia"""


class CapacityError(ModelStateError):
    """Se superó el número máximo de clases de la cabeza"""


class ProtocolError(DriverCLError):
    """Violación del protocolo de evaluación"""


class ComparisonError(DriverCLError):
    """Reportes que no se pueden comparar entre sí"""


class CheckpointError(DriverCLError):
    """Checkpoint corrupto, manipulado o de versión incompatible"""


class StageError(DriverCLError):
    """Fallo de una etapa del experimento, etiquetado con la etapa"""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")
