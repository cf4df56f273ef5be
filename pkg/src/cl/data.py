"""
Ingesta y preparación de los datos de conducción: CSV (OCSLab) o trazas sintéticas,
poda de variables sin varianza, estandarización, ventanas y división train/test.
"""
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.config.settings import WINDOW_LENGTH, WINDOW_STRIDE, TRAIN_FRACTION
from .errors import SchemaError, ParseError, InsufficientDataError, ShapeError, ConfigurationError

logger = logging.getLogger(__name__)

SessionKey = Tuple[int, int]

SPLIT_MODES = ("chronological", "random")

# Columnas del export de OCSLab que no son sensores
OCSLAB_DRIVER_COLUMN = "Class"
OCSLAB_SESSION_COLUMN = "PathOrder"
OCSLAB_DROP_COLUMNS = ("Time(s)",)
OCSLAB_DRIVER_LABELS = {letter: i for i, letter in enumerate("ABCDEFGHIJ")}


@dataclass(frozen=True)
class ColumnSchema:
    """Mapa de roles de las columnas del CSV"""
    driver_column: str
    session_column: str
    sensor_columns: Optional[Sequence[str]] = None  # None = todas las restantes
    drop_columns: Sequence[str] = ()
    driver_labels: Optional[Dict[str, int]] = None  # None = etiquetas enteras en el archivo


@dataclass(frozen=True)
class SessionTrace:
    driver_id: int
    session_id: int
    records: np.ndarray  # T x F
    start_index: int = 0

    @property
    def key(self) -> SessionKey:
        return (self.driver_id, self.session_id)

    @property
    def length(self) -> int:
        return int(self.records.shape[0])


@dataclass
class RawDataset:
    sessions: List[SessionTrace]
    feature_names: List[str]
    sample_rate: float = 1.0

    @property
    def n_records(self) -> int:
        return sum(s.length for s in self.sessions)

    @property
    def drivers(self) -> List[int]:
        return sorted({s.driver_id for s in self.sessions})


@dataclass(frozen=True)
class FeatureMask:
    retained: np.ndarray  # bool, F_raw
    means: np.ndarray
    stds: np.ndarray
    feature_names: Tuple[str, ...] = ()

    @property
    def n_retained(self) -> int:
        return int(self.retained.sum())

    @property
    def removed_features(self) -> List[str]:
        if not self.feature_names:
            return [str(j) for j in np.flatnonzero(~self.retained)]
        return [name for name, keep in zip(self.feature_names, self.retained) if not keep]

    def to_dict(self) -> dict:
        return {
            "retained": [bool(v) for v in self.retained],
            "means": [float(v) for v in self.means],
            "stds": [float(v) for v in self.stds],
            "feature_names": list(self.feature_names),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FeatureMask":
        return cls(
            retained=np.asarray(payload["retained"], dtype=bool),
            means=np.asarray(payload["means"], dtype=np.float64),
            stds=np.asarray(payload["stds"], dtype=np.float64),
            feature_names=tuple(payload.get("feature_names", ())),
        )

    def save_json(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2)
        return path

    @classmethod
    def load_json(cls, path: Path) -> "FeatureMask":
        with open(path, 'r', encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True, eq=False)
class WindowSample:
    values: np.ndarray  # W_data x F, estandarizado
    label: int
    session_id: int
    index: int

    @property
    def session_key(self) -> SessionKey:
        return (self.label, self.session_id)


def load_csv(path, schema: ColumnSchema) -> RawDataset:
    """
    Lee un CSV de registros de sensores y lo agrupa en sesiones

    Args:
        path: Ruta al CSV (con encabezado, orden de filas = orden temporal)
        schema: Roles de las columnas

    Returns:
        RawDataset con una SessionTrace por par (conductor, sesión)
    """
    path = Path(path)
    if not path.exists() or not path.is_file():
        raise FileNotFoundError(f"No se encontró el archivo: {path}")

    logger.info(f"Leyendo CSV: {path}")
    try:
        df = pd.read_csv(path, dtype=str, encoding='utf-8', keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise ParseError(f"archivo vacío: {path}") from e
    except pd.errors.ParserError as e:
        raise ParseError(f"CSV mal formado: {e}") from e

    if df.empty:
        raise ParseError(f"el archivo no contiene registros: {path}")

    for column in (schema.driver_column, schema.session_column):
        if column not in df.columns:
            raise SchemaError(f"Falta la columna '{column}' en {path.name}")

    role_columns = {schema.driver_column, schema.session_column, *schema.drop_columns}
    if schema.sensor_columns is None:
        sensor_columns = [c for c in df.columns if c not in role_columns]
    else:
        missing = [c for c in schema.sensor_columns if c not in df.columns]
        if missing:
            raise SchemaError(f"Columnas de sensores inexistentes: {missing}")
        sensor_columns = list(schema.sensor_columns)
    if not sensor_columns:
        raise SchemaError("El esquema no define columnas de sensores")

    drivers = _parse_driver_labels(df[schema.driver_column], schema)
    sessions = _parse_integer_column(df[schema.session_column], schema.session_column)
    records = _parse_numeric_block(df[sensor_columns])

    traces = []
    order = pd.DataFrame({"driver": drivers, "session": sessions})
    # indices conserva el orden del archivo dentro de cada grupo
    groups = order.groupby(["driver", "session"]).indices
    for (driver_id, session_id), rows in sorted(groups.items()):
        rows = np.sort(rows)
        traces.append(SessionTrace(
            driver_id=int(driver_id),
            session_id=int(session_id),
            records=records[rows],
            start_index=int(rows[0]),
        ))

    dataset = RawDataset(sessions=traces, feature_names=list(sensor_columns))
    logger.info(f"CSV cargado: {len(traces)} sesiones, {dataset.n_records} registros, "
                f"{len(sensor_columns)} sensores")
    return dataset


def load_ocslab(path) -> RawDataset:
    """Carga el export de OCSLab (conductores A-J, dos recorridos por conductor)"""
    schema = ColumnSchema(
        driver_column=OCSLAB_DRIVER_COLUMN,
        session_column=OCSLAB_SESSION_COLUMN,
        drop_columns=OCSLAB_DROP_COLUMNS,
        driver_labels=OCSLAB_DRIVER_LABELS,
    )
    return load_csv(path, schema)


def _parse_driver_labels(column: pd.Series, schema: ColumnSchema) -> np.ndarray:
    if schema.driver_labels is None:
        return _parse_integer_column(column, schema.driver_column)

    labels = column.str.strip().map(schema.driver_labels)
    unknown = labels.isna()
    if unknown.any():
        first = int(np.flatnonzero(unknown.to_numpy())[0])
        raise SchemaError(f"Etiqueta de conductor desconocida '{column.iloc[first]}' en la fila {first + 2}")
    return labels.astype(np.int64).to_numpy()


def _parse_integer_column(column: pd.Series, name: str) -> np.ndarray:
    values = pd.to_numeric(column.str.strip(), errors='coerce')
    bad = values.isna() | (values != np.floor(values))
    if bad.any():
        first = int(np.flatnonzero(bad.to_numpy())[0])
        raise ParseError(f"valor no entero '{column.iloc[first]}' en la columna '{name}'", row=first + 2)
    return values.astype(np.int64).to_numpy()


def _parse_numeric_block(block: pd.DataFrame) -> np.ndarray:
    numeric = block.apply(lambda col: pd.to_numeric(col.str.strip(), errors='coerce'))
    values = numeric.to_numpy(dtype=np.float64)
    bad = ~np.isfinite(values)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise ParseError(f"valor no numérico '{block.iat[row, col]}' en la columna '{block.columns[col]}'",
                         row=int(row) + 2)
    return values


def fit_feature_mask(train_records: np.ndarray, feature_names: Sequence[str] = ()) -> FeatureMask:
    """
    Ajusta la máscara de variables y las estadísticas de estandarización

    Se eliminan las columnas constantes (máximo igual al mínimo); media y desviación
    usan la convención poblacional (1/N).

    Args:
        train_records: Filas de entrenamiento concatenadas (N x F_raw)
        feature_names: Nombres de las columnas, opcional

    Returns:
        FeatureMask ajustada
    """
    records = np.asarray(train_records, dtype=np.float64)
    if records.ndim != 2 or records.shape[0] < 2:
        raise InsufficientDataError(f"Se necesitan al menos 2 filas para ajustar la máscara, "
                                    f"recibidas: {records.shape[0] if records.ndim else 0}")

    # constante exacta: max == min (var() deja residuos ~1e-31 con valores como 0.1)
    stds_all = records.std(axis=0)
    retained = (records.max(axis=0) != records.min(axis=0)) & (stds_all > 0.0)
    means = records[:, retained].mean(axis=0)
    stds = stds_all[retained]

    mask = FeatureMask(retained=retained, means=means, stds=stds, feature_names=tuple(feature_names))
    if mask.removed_features:
        logger.info(f"Variables sin varianza eliminadas ({len(mask.removed_features)}): {mask.removed_features}")
    logger.info(f"Máscara ajustada: {mask.n_retained} de {records.shape[1]} variables retenidas")
    return mask


def standardize(trace: SessionTrace, mask: FeatureMask) -> SessionTrace:
    """Aplica x' = (x - media) / desviación sobre las columnas retenidas"""
    records = np.asarray(trace.records, dtype=np.float64)
    if records.ndim != 2 or records.shape[1] != mask.retained.shape[0]:
        raise ShapeError(f"La sesión {trace.key} tiene {records.shape[-1]} columnas, "
                         f"la máscara espera {mask.retained.shape[0]}")
    standardized = (records[:, mask.retained] - mask.means) / mask.stds
    return SessionTrace(trace.driver_id, trace.session_id, standardized, trace.start_index)


def window_offsets(n_records: int, length: int = WINDOW_LENGTH, stride: int = WINDOW_STRIDE) -> np.ndarray:
    if length < 1 or stride < 1:
        raise ConfigurationError(f"Longitud y paso de ventana deben ser >= 1 (length={length}, stride={stride})")
    if n_records < length:
        return np.empty(0, dtype=np.int64)
    return np.arange(0, n_records - length + 1, stride, dtype=np.int64)


def make_windows(trace: SessionTrace, length: int = WINDOW_LENGTH, stride: int = WINDOW_STRIDE) -> List[WindowSample]:
    """
    Corta una sesión en ventanas solapadas

    Returns:
        Lista de WindowSample en orden temporal (vacía si la sesión es más corta que la ventana)
    """
    offsets = window_offsets(trace.length, length, stride)
    return [
        WindowSample(values=trace.records[o:o + length], label=trace.driver_id,
                     session_id=trace.session_id, index=int(o))
        for o in offsets
    ]


def train_count(n_windows: int, train_fraction: float = TRAIN_FRACTION) -> int:
    # round() evita que 0.7 * 10 = 7.000000000000001 suba a 8
    return min(n_windows, math.ceil(round(train_fraction * n_windows, 9)))


def split_session(windows: List[WindowSample], train_fraction: float = TRAIN_FRACTION,
                  mode: str = "chronological", seed: int = 0) -> Tuple[List[WindowSample], List[WindowSample]]:
    """
    Divide las ventanas de una sesión en entrenamiento y prueba

    Args:
        windows: Ventanas de una sesión en orden temporal
        train_fraction: Fracción de entrenamiento (ceil de fracción * N)
        mode: 'chronological' (primeras ventanas a train) o 'random'
        seed: Semilla para el modo aleatorio

    Returns:
        Tupla (train, test), ambas en orden temporal
    """
    if not 0 < train_fraction < 1:
        raise ConfigurationError(f"train_fraction debe estar en (0, 1): {train_fraction}")
    train_idx, test_idx = split_indices(len(windows), train_fraction, mode, seed)
    return [windows[i] for i in train_idx], [windows[i] for i in test_idx]


def split_indices(n_windows: int, train_fraction: float, mode: str, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    n_train = train_count(n_windows, train_fraction)
    if mode == "chronological":
        return np.arange(n_train), np.arange(n_train, n_windows)
    if mode == "random":
        chosen = np.random.default_rng(seed).permutation(n_windows)[:n_train]
        is_train = np.zeros(n_windows, dtype=bool)
        is_train[chosen] = True
        return np.flatnonzero(is_train), np.flatnonzero(~is_train)
    raise ConfigurationError(f"Modo de división desconocido: {mode}")


def generate_synthetic(n_drivers: int, sessions_per_driver: int, records_per_session: int,
                       n_features: int, seed: int) -> RawDataset:
    """
    Genera trazas sintéticas de conductores con procesos AR(1)

    Cada conductor tiene su vector de medias, coeficiente autorregresivo y escala de ruido;
    cada sesión añade un pequeño desplazamiento de las medias.
    """
    for name, value in (("n_drivers", n_drivers), ("sessions_per_driver", sessions_per_driver),
                        ("records_per_session", records_per_session), ("n_features", n_features)):
        if value < 1:
            raise ConfigurationError(f"{name} debe ser >= 1, recibido {value}")

    rng = np.random.default_rng(seed)
    traces = []
    start = 0
    for driver in range(n_drivers):
        mean = rng.normal(0.0, 1.0, size=n_features)
        phi = rng.uniform(0.3, 0.9, size=n_features)
        sigma = rng.uniform(0.2, 0.5, size=n_features)
        for session in range(1, sessions_per_driver + 1):
            session_mean = mean + rng.normal(0.0, 0.1, size=n_features)
            records = np.empty((records_per_session, n_features))
            x = session_mean + rng.normal(0.0, 1.0, size=n_features) * sigma / np.sqrt(1.0 - phi ** 2)
            for t in range(records_per_session):
                x = session_mean + phi * (x - session_mean) + sigma * rng.normal(size=n_features)
                records[t] = x
            traces.append(SessionTrace(driver, session, records, start_index=start))
            start += records_per_session

    logger.info(f"Dataset sintético generado: {n_drivers} conductores x {sessions_per_driver} sesiones, "
                f"{records_per_session} registros, {n_features} variables (seed={seed})")
    return RawDataset(sessions=traces, feature_names=[f"sensor_{j}" for j in range(n_features)])


@dataclass
class PreparedDataset:
    """
    Dataset estandarizado y dividido, listo para construir escenarios

    Guarda las sesiones estandarizadas y los índices de ventana de cada split;
    las ventanas son vistas sobre los registros, no copias.
    """
    sessions: Dict[SessionKey, SessionTrace]
    train_index: Dict[SessionKey, np.ndarray]
    test_index: Dict[SessionKey, np.ndarray]
    mask: FeatureMask
    window_length: int = WINDOW_LENGTH
    stride: int = WINDOW_STRIDE
    train_fraction: float = TRAIN_FRACTION
    split_mode: str = "chronological"
    _windows: Dict[SessionKey, List[WindowSample]] = field(default_factory=dict, repr=False)

    @property
    def keys(self) -> List[SessionKey]:
        return sorted(self.sessions)

    @property
    def drivers(self) -> List[int]:
        return sorted({d for d, _ in self.sessions})

    @property
    def n_features(self) -> int:
        return self.mask.n_retained

    @property
    def sample_shape(self) -> Tuple[int, int]:
        return (self.window_length, self.n_features)

    def windows(self, key: SessionKey) -> List[WindowSample]:
        if key not in self._windows:
            self._windows[key] = make_windows(self.sessions[key], self.window_length, self.stride)
        return self._windows[key]

    def train_windows(self, key: SessionKey) -> List[WindowSample]:
        all_windows = self.windows(key)
        return [all_windows[i] for i in self.train_index[key]]

    def test_windows(self, key: SessionKey) -> List[WindowSample]:
        all_windows = self.windows(key)
        return [all_windows[i] for i in self.test_index[key]]

    def train_pool(self) -> Dict[SessionKey, List[WindowSample]]:
        return {key: self.train_windows(key) for key in self.keys}

    def test_pool(self) -> Dict[SessionKey, List[WindowSample]]:
        return {key: self.test_windows(key) for key in self.keys}

    def window_counts(self) -> pd.DataFrame:
        """Tabla de ventanas por sesión: conductor, sesión, train, test"""
        rows = [{"driver": d, "session": s,
                 "train": int(len(self.train_index[(d, s)])),
                 "test": int(len(self.test_index[(d, s)]))} for d, s in self.keys]
        return pd.DataFrame(rows, columns=["driver", "session", "train", "test"])

    def dataset_hash(self) -> str:
        """SHA-256 del contenido: registros estandarizados, índices y parámetros de ventana"""
        digest = hashlib.sha256()
        digest.update(json.dumps([self.window_length, self.stride]).encode())
        for key in self.keys:
            digest.update(json.dumps(list(key)).encode())
            digest.update(np.ascontiguousarray(self.sessions[key].records, dtype='<f4').tobytes())
            digest.update(np.asarray(self.train_index[key], dtype='<i8').tobytes())
            digest.update(np.asarray(self.test_index[key], dtype='<i8').tobytes())
        return digest.hexdigest()

    def save(self, directory: Path) -> Path:
        """Persiste el dataset preparado (npz + máscara + manifiesto de conteos)"""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        arrays = {}
        for d, s in self.keys:
            arrays[f"records_{d}_{s}"] = self.sessions[(d, s)].records.astype('<f4')
            arrays[f"train_{d}_{s}"] = np.asarray(self.train_index[(d, s)], dtype='<i8')
            arrays[f"test_{d}_{s}"] = np.asarray(self.test_index[(d, s)], dtype='<i8')
        np.savez(directory / "dataset.npz", **arrays)
        self.mask.save_json(directory / "feature_mask.json")

        manifest = {
            "dataset_hash": self.dataset_hash(),
            "window_length": self.window_length,
            "stride": self.stride,
            "train_fraction": self.train_fraction,
            "split_mode": self.split_mode,
            "n_features": self.n_features,
            "sessions": [[d, s, self.sessions[(d, s)].start_index] for d, s in self.keys],
            "window_counts": self.window_counts().to_dict(orient="records"),
        }
        with open(directory / "manifest.json", 'w', encoding='utf-8') as f:
            json.dump(manifest, f, indent=2)
        self.window_counts().to_csv(directory / "window_counts.csv", index=False)
        logger.info(f"Dataset preparado guardado en: {directory} (hash {manifest['dataset_hash'][:12]})")
        return directory

    @classmethod
    def load(cls, directory: Path) -> "PreparedDataset":
        directory = Path(directory)
        manifest_path = directory / "manifest.json"
        if not manifest_path.exists():
            raise FileNotFoundError(f"No existe un dataset preparado en: {directory}")
        with open(manifest_path, 'r', encoding='utf-8') as f:
            manifest = json.load(f)

        sessions, train_index, test_index = {}, {}, {}
        with np.load(directory / "dataset.npz") as arrays:
            for d, s, start in manifest["sessions"]:
                key = (int(d), int(s))
                sessions[key] = SessionTrace(key[0], key[1], arrays[f"records_{d}_{s}"], int(start))
                train_index[key] = arrays[f"train_{d}_{s}"]
                test_index[key] = arrays[f"test_{d}_{s}"]

        return cls(
            sessions=sessions, train_index=train_index, test_index=test_index,
            mask=FeatureMask.load_json(directory / "feature_mask.json"),
            window_length=manifest["window_length"], stride=manifest["stride"],
            train_fraction=manifest["train_fraction"], split_mode=manifest["split_mode"],
        )


def prepare_dataset(raw: RawDataset, length: int = WINDOW_LENGTH, stride: int = WINDOW_STRIDE,
                    train_fraction: float = TRAIN_FRACTION, mode: str = "chronological",
                    seed: int = 0) -> PreparedDataset:
    """
    Poda, estandariza, corta en ventanas y divide todas las sesiones

    La máscara se ajusta solo con las filas cubiertas por ventanas de entrenamiento.
    """
    if not 0 < train_fraction < 1:
        raise ConfigurationError(f"train_fraction debe estar en (0, 1): {train_fraction}")
    if mode not in SPLIT_MODES:
        raise ConfigurationError(f"Modo de división desconocido: {mode}")

    logger.info(f"Preparando dataset: ventana={length}, paso={stride}, train={train_fraction}, modo={mode}")
    train_index, test_index, fit_rows = {}, {}, []
    for trace in raw.sessions:
        offsets = window_offsets(trace.length, length, stride)
        train_idx, test_idx = split_indices(len(offsets), train_fraction, mode, seed + trace.driver_id * 100 + trace.session_id)
        train_index[trace.key] = train_idx
        test_index[trace.key] = test_idx

        covered = np.zeros(trace.length, dtype=bool)
        for o in offsets[train_idx]:
            covered[o:o + length] = True
        fit_rows.append(np.asarray(trace.records)[covered])

    mask = fit_feature_mask(np.concatenate(fit_rows, axis=0), raw.feature_names)
    sessions = {}
    for trace in raw.sessions:
        standardized = standardize(trace, mask)
        sessions[trace.key] = SessionTrace(trace.driver_id, trace.session_id,
                                           standardized.records.astype(np.float32), trace.start_index)

    prepared = PreparedDataset(sessions=sessions, train_index=train_index, test_index=test_index, mask=mask,
                               window_length=length, stride=stride, train_fraction=train_fraction, split_mode=mode)
    counts = prepared.window_counts()
    logger.info(f"Dataset preparado: {len(sessions)} sesiones, {int(counts['train'].sum())} ventanas train, "
                f"{int(counts['test'].sum())} ventanas test")
    return prepared


def validation_split(test_pool: Dict[SessionKey, List[WindowSample]], fraction: float = 0.5,
                     seed: int = 0) -> Tuple[Dict[SessionKey, List[WindowSample]], Dict[SessionKey, List[WindowSample]]]:
    """
    Separa una fracción de las ventanas de prueba como validación (early stopping)

    Returns:
        Tupla (validación, prueba restante); ambas conservan el orden temporal por sesión
    """
    if not 0 < fraction < 1:
        raise ConfigurationError(f"La fracción de validación debe estar en (0, 1): {fraction}")
    rng = np.random.default_rng(seed)
    validation, remaining = {}, {}
    for key in sorted(test_pool):
        windows = test_pool[key]
        chosen = np.zeros(len(windows), dtype=bool)
        chosen[rng.permutation(len(windows))[:int(round(fraction * len(windows)))]] = True
        validation[key] = [w for w, c in zip(windows, chosen) if c]
        remaining[key] = [w for w, c in zip(windows, chosen) if not c]
    return validation, remaining


def stack_windows(windows: Sequence[WindowSample]) -> Tuple[np.ndarray, np.ndarray]:
    """Apila ventanas en un arreglo N x W x F (float32) y sus etiquetas (int64)"""
    if not windows:
        return np.empty((0, 0, 0), dtype=np.float32), np.empty(0, dtype=np.int64)
    values = np.stack([w.values for w in windows]).astype(np.float32, copy=False)
    labels = np.fromiter((w.label for w in windows), dtype=np.int64, count=len(windows))
    return values, labels
