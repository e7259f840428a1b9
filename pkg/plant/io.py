from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from core.exceptions import ReportError
from plant.state import N_X, STATE_SYMBOLS


def dump_trajectory(path: str | Path, times, states) -> Path:
    """CSV: колонка time и по колонке на каждое из 23 состояний."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.shape[1] != N_X:
        states = states.T
    frame = pd.DataFrame(states, columns=list(STATE_SYMBOLS))
    frame.insert(0, "time", np.asarray(times, dtype=float))
    path = Path(path)
    try:
        frame.to_csv(path, index=False, float_format="%.12g")
    except OSError as exc:
        raise ReportError(f"cannot write trajectory: {exc}", context=str(path)) from exc
    return path


def load_trajectory(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    frame = pd.read_csv(path)
    missing = [s for s in STATE_SYMBOLS if s not in frame.columns]
    if missing:
        raise ReportError(f"trajectory misses columns {missing}", context=str(path))
    return frame["time"].to_numpy(), frame[list(STATE_SYMBOLS)].to_numpy()
