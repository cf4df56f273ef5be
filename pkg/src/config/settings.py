import os
import logging
from dotenv import load_dotenv
from pathlib import Path

# Load environment variables
load_dotenv()

# Base directory
BASE_DIR = Path(__file__).resolve().parent.parent.parent

# Paths - objetos Path
CACHE_PATH = Path(os.getenv("DRIVERCL_CACHE_DIR", BASE_DIR / "data" / "cache"))
OUTPUT_PATH = Path(os.getenv("DRIVERCL_OUTPUT_PATH", BASE_DIR / "data" / "runs"))
LOG_PATH = Path(os.getenv("LOG_PATH", BASE_DIR / "logs"))
LOG_LEVEL = os.getenv("DRIVERCL_LOG_LEVEL", "INFO").upper()

# Dataset OCSLab (opcional, solo para las pruebas con datos reales)
OCSLAB_CSV_PATH = os.getenv("DRIVERCL_OCSLAB_CSV")

# Preprocesamiento
WINDOW_LENGTH = 60
WINDOW_STRIDE = 6
TRAIN_FRACTION = 0.7

# Modelo (LSTM de dos capas)
HIDDEN_SIZE = 128
NUM_LAYERS = 2
DROPOUT = 0.5
BATCH_SIZE = 32
LEARNING_RATE = 0.001
EPOCHS_PER_TASK = 50
EPOCHS_PER_TASK_FULL = 300
MAX_CLASSES = 10

# Estrategias
MEMORY_SIZE = 1000
REPLAY_RATIO = 0.5
EWC_LAMBDA = 10000.0
LWF_LAMBDA = 5.0
DERPP_ALPHA = 1.0
DERPP_BETA = 1.0

# Suavizado de predicciones
SMOOTHING_WINDOW = 6

# Protocolo: 4 semillas x 4 permutaciones
DEFAULT_SEEDS = [0, 1, 2, 3]
DEFAULT_PERMUTATIONS = [0, 1, 2, 3]

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


# Configure logging
def setup_logging(level: str = None):
    """Configure application logging"""
    LOG_PATH.mkdir(parents=True, exist_ok=True)
    root_logger = logging.getLogger()

    # Evitar handlers duplicados si los scripts se invocan varias veces en el mismo proceso
    if getattr(root_logger, "_drivercl_configured", False):
        return logging.getLogger(__name__)

    logging.basicConfig(
        level=level or LOG_LEVEL,
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(LOG_PATH / 'info.log'),
            logging.StreamHandler()
        ]
    )

    # Create separate log files for different levels
    error_handler = logging.FileHandler(LOG_PATH / 'error.log')
    error_handler.setLevel(logging.ERROR)
    error_handler.setFormatter(logging.Formatter(LOG_FORMAT))

    warning_handler = logging.FileHandler(LOG_PATH / 'warning.log')
    warning_handler.setLevel(logging.WARNING)
    warning_handler.setFormatter(logging.Formatter(LOG_FORMAT))

    # Add handlers to root logger
    root_logger.addHandler(error_handler)
    root_logger.addHandler(warning_handler)
    root_logger._drivercl_configured = True

    # matplotlib es muy verboso en DEBUG
    logging.getLogger("matplotlib").setLevel(logging.WARNING)

    return logging.getLogger(__name__)
