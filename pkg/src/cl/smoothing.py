"""
Suavizado causal de logits por ventana móvil (SmooER / SmooDER)

La predicción en el índice i es el argmax de la media de los últimos W vectores
de logits de la misma sesión; durante el calentamiento se promedia el prefijo disponible.
"""
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Deque, Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.config.settings import SMOOTHING_WINDOW
from .errors import ModelStateError, ProtocolError, ConfigurationError
from .data import WindowSample
from .model import predict_logits

logger = logging.getLogger(__name__)

STATE_POLICIES = ("reset_per_session", "continuous")


@dataclass
class SmoothingState:
    window_size: int = SMOOTHING_WINDOW
    stream_id: Optional[Hashable] = None
    ring: Deque[np.ndarray] = field(default_factory=deque)

    def __post_init__(self):
        if self.window_size < 1:
            raise ConfigurationError(f"La ventana de suavizado debe ser >= 1: {self.window_size}")
        self.ring = deque(self.ring, maxlen=self.window_size)

    @property
    def k(self) -> Optional[int]:
        return len(self.ring[0]) if self.ring else None

    def reset(self, stream_id: Optional[Hashable] = None) -> "SmoothingState":
        self.ring.clear()
        self.stream_id = stream_id
        return self


def smooth(state: SmoothingState, z) -> Tuple[SmoothingState, np.ndarray]:
    """Añade z al anillo (expulsa el más antiguo si está lleno) y devuelve la media elemento a elemento"""
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if state.k is not None and len(z) != state.k:
        raise ModelStateError(f"Vector de {len(z)} logits en un estado de {state.k} clases; "
                              f"hay que reiniciar el estado al crecer las clases")
    state.ring.append(z)
    return state, np.mean(np.stack(state.ring), axis=0)


def decide(z_tilde) -> int:
    """
    Clase con mayor confianza sigmoide

    La sigmoide es monótona, así que se toma el argmax sobre los logits: evita empates
    espurios cuando la sigmoide satura en float. np.argmax devuelve el primer índice en empate.
    """
    z_tilde = np.asarray(z_tilde).reshape(-1)
    if z_tilde.size == 0:
        raise ModelStateError("No se puede decidir sobre un vector de logits vacío")
    return int(np.argmax(z_tilde))


def smooth_logit_stream(logits: np.ndarray, window_size: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Suaviza una secuencia N x k de logits de un solo stream"""
    state = SmoothingState(window_size)
    out = np.empty(np.shape(logits), dtype=np.float64)
    for i, z in enumerate(logits):
        state, out[i] = smooth(state, z)
    return out


@dataclass
class PredictionTrace:
    """Trazas por ventana: logits crudos, logits suavizados y predicciones (ids de conductor)"""
    labels: np.ndarray
    sessions: List[Tuple[int, int]]
    indices: np.ndarray
    classes: List[int]
    raw_logits: np.ndarray
    smoothed_logits: np.ndarray

    @property
    def raw_predictions(self) -> np.ndarray:
        return np.asarray(self.classes)[np.argmax(self.raw_logits, axis=1)] if len(self.labels) else np.empty(0, int)

    @property
    def smoothed_predictions(self) -> np.ndarray:
        if not len(self.labels):
            return np.empty(0, dtype=int)
        return np.asarray(self.classes)[[decide(z) for z in self.smoothed_logits]]

    def accuracy(self, smoothed: bool) -> float:
        if not len(self.labels):
            return 0.0
        predictions = self.smoothed_predictions if smoothed else self.raw_predictions
        return float((predictions == self.labels).mean())

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            "driver": [s[0] for s in self.sessions],
            "session": [s[1] for s in self.sessions],
            "index": self.indices,
            "label": self.labels,
            "raw_prediction": self.raw_predictions,
            "smoothed_prediction": self.smoothed_predictions,
        })
        for j, c in enumerate(self.classes):
            frame[f"raw_logit_{c}"] = self.raw_logits[:, j] if len(self.labels) else []
            frame[f"smoothed_logit_{c}"] = self.smoothed_logits[:, j] if len(self.labels) else []
        return frame


def smoothed_eval_logits(logits: np.ndarray, windows: Sequence[WindowSample], classes: Sequence[int],
                         window_size: int = SMOOTHING_WINDOW,
                         state_policy: str = "reset_per_session") -> PredictionTrace:
    """
    Suaviza logits ya calculados para un stream de evaluación agrupado por sesión

    Args:
        logits: N x k logits crudos en el orden de windows
        windows: Ventanas de evaluación, en orden temporal dentro de cada sesión
        classes: Id de conductor de cada unidad de salida
        window_size: Ventana de suavizado
        state_policy: 'reset_per_session' (estado nuevo por sesión) o 'continuous'
    """
    if state_policy not in STATE_POLICIES:
        raise ConfigurationError(f"Política de estado desconocida: {state_policy}")
    logits = np.asarray(logits, dtype=np.float64)
    if len(logits) != len(windows):
        raise ProtocolError(f"{len(logits)} vectores de logits para {len(windows)} ventanas")

    state = SmoothingState(window_size)
    smoothed = np.empty_like(logits)
    last_index: Dict[Tuple[int, int], int] = {}
    for i, window in enumerate(windows):
        key = window.session_key
        previous = last_index.get(key)
        if previous is not None and window.index <= previous:
            raise ProtocolError(f"Stream desordenado: índice {window.index} tras {previous} en la sesión {key}")
        last_index[key] = window.index
        if state_policy == "reset_per_session" and state.stream_id != key:
            state.reset(key)
        state, smoothed[i] = smooth(state, logits[i])

    return PredictionTrace(
        labels=np.fromiter((w.label for w in windows), dtype=np.int64, count=len(windows)),
        sessions=[w.session_key for w in windows],
        indices=np.fromiter((w.index for w in windows), dtype=np.int64, count=len(windows)),
        classes=list(classes),
        raw_logits=logits,
        smoothed_logits=smoothed,
    )


def smoothed_eval(model, eval_stream: Sequence[WindowSample], window_size: int = SMOOTHING_WINDOW,
                  state_policy: str = "reset_per_session") -> PredictionTrace:
    """Evalúa el modelo sobre el stream y suaviza sus logits con un estado nuevo por sesión"""
    logits = predict_logits(model, eval_stream)
    return smoothed_eval_logits(logits, eval_stream, model.active_classes, window_size, state_policy)


def export_trace(trace: PredictionTrace, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trace.to_frame().to_csv(path, index=False, float_format="%.8g")
    logger.debug(f"Traza de predicciones exportada: {path} ({len(trace.labels)} ventanas)")
    return path
