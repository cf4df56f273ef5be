"""
Esquema de configuración de experimentos (un documento JSON por experimento)
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.cl.errors import ConfigurationError
from src.cl.model import ClassifierConfig
from src.cl.scenarios import ScenarioKind
from src.cl.strategies import resolve_kind, validate_hyperparameters, StrategyKind
from src.config.settings import (
    WINDOW_LENGTH, WINDOW_STRIDE, TRAIN_FRACTION, SMOOTHING_WINDOW, DEFAULT_SEEDS, DEFAULT_PERMUTATIONS,
)

logger = logging.getLogger(__name__)

# Campos que no afectan a los resultados y no se guardan en el eco de configuración
NON_RESULT_FIELDS = {"output_dir", "workers"}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SyntheticSpec(_Strict):
    n_drivers: int = Field(default=10, ge=1)
    sessions_per_driver: int = Field(default=2, ge=1)
    records_per_session: int = Field(default=600, ge=1)
    n_features: int = Field(default=8, ge=1)
    seed: int = 0


class DatasetConfig(_Strict):
    csv: Optional[Path] = None           # export OCSLab
    prepared: Optional[Path] = None      # directorio de `prepare`
    synthetic: Optional[SyntheticSpec] = None
    window_length: int = Field(default=WINDOW_LENGTH, ge=1)
    stride: int = Field(default=WINDOW_STRIDE, ge=1)
    train_fraction: float = Field(default=TRAIN_FRACTION, gt=0, lt=1)
    split_mode: Literal["chronological", "random"] = "chronological"
    split_seed: int = 0
    validation_fraction: Optional[float] = Field(default=None, gt=0, lt=1)  # activa early stopping

    @model_validator(mode="after")
    def _one_source(self) -> "DatasetConfig":
        sources = [s for s in (self.csv, self.prepared, self.synthetic) if s is not None]
        if len(sources) != 1:
            raise ValueError("dataset necesita exactamente una fuente: csv, prepared o synthetic")
        return self


class ScenarioConfig(_Strict):
    kind: ScenarioKind = ScenarioKind.TWO_NEW_DRIVERS
    allow_partial_last_task: bool = False


class StrategyConfig(_Strict):
    kind: str = StrategyKind.ER.value
    hyperparameters: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_kind(self) -> "StrategyConfig":
        validate_hyperparameters(self.kind, self.hyperparameters)
        return self

    @property
    def base_kind(self) -> StrategyKind:
        return resolve_kind(self.kind)[0]

    @property
    def forces_smoothing(self) -> bool:
        return resolve_kind(self.kind)[1]


class SmoothingConfig(_Strict):
    enabled: bool = False
    window: int = Field(default=SMOOTHING_WINDOW, ge=1)
    state_policy: Literal["reset_per_session", "continuous"] = "reset_per_session"


class ExperimentConfig(_Strict):
    name: Optional[str] = None
    dataset: DatasetConfig
    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    strategy: StrategyConfig = Field(default_factory=StrategyConfig)
    model: ClassifierConfig = Field(default_factory=ClassifierConfig)
    smoothing: SmoothingConfig = Field(default_factory=SmoothingConfig)
    seeds: List[int] = Field(default_factory=lambda: list(DEFAULT_SEEDS), min_length=1)
    permutations: List[int] = Field(default_factory=lambda: list(DEFAULT_PERMUTATIONS), min_length=1)
    output_dir: Optional[Path] = None
    workers: int = Field(default=1, ge=1)
    serial_timing: bool = False          # fuerza una corrida a la vez para medir tiempos
    joint_reference: Optional[Path] = None  # report.json de Joint para calcular el gap

    @field_validator("seeds", "permutations")
    @classmethod
    def _unique(cls, values: List[int]) -> List[int]:
        if len(set(values)) != len(values):
            raise ValueError(f"Valores repetidos: {values}")
        return values

    @model_validator(mode="after")
    def _resolve(self) -> "ExperimentConfig":
        if self.strategy.forces_smoothing:
            self.smoothing.enabled = True
        if self.strategy.base_kind == StrategyKind.JOINT:
            self.scenario.kind = ScenarioKind.JOINT
        return self

    @property
    def method(self) -> str:
        """Nombre del método en reportes (Smoo* cuando el suavizado envuelve ER o DER++)"""
        base = self.strategy.base_kind
        if self.smoothing.enabled and base == StrategyKind.ER:
            return "SmooER"
        if self.smoothing.enabled and base == StrategyKind.DERPP:
            return "SmooDER"
        return base.value

    def echo(self) -> dict:
        """Configuración resuelta que define los resultados"""
        return self.model_dump(mode="json", exclude=NON_RESULT_FIELDS)


def experiment_schema() -> dict:
    return ExperimentConfig.model_json_schema()


def load_experiment_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    """
    Lee y valida un documento de configuración

    Args:
        path: Ruta al JSON
        overrides: Valores anidados que reemplazan los del archivo (flags de la CLI)
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"No existe el archivo de configuración: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"JSON inválido en {path}: {e}") from e

    # rutas relativas al documento
    dataset = payload.get("dataset", {})
    for key in ("csv", "prepared"):
        if isinstance(dataset.get(key), str) and not Path(dataset[key]).is_absolute():
            dataset[key] = str((path.parent / dataset[key]).resolve())
    reference = payload.get("joint_reference")
    if isinstance(reference, str) and not Path(reference).is_absolute():
        payload["joint_reference"] = str((path.parent / reference).resolve())

    return build_experiment_config(payload, overrides)


def build_experiment_config(payload: dict, overrides: Optional[dict] = None) -> ExperimentConfig:
    payload = _merge(payload, overrides or {})
    try:
        config = ExperimentConfig(**payload)
    except ValidationError as e:
        raise ConfigurationError(f"Configuración inválida:\n{e}") from e
    logger.debug(f"Configuración validada: {config.method} sobre {config.scenario.kind.value}")
    return config


def _merge(base: dict, overrides: dict) -> dict:
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict):
            section = merged.get(key) if isinstance(merged.get(key), dict) else {}
            merged[key] = _merge(section, value)
        else:
            merged[key] = value
    return merged
