"""
Журнал замкнутого контура и показатели качества прогона.

  E_p   — Σ |y1 − (1 + ξ)·y_e^b|, кВт по тактам;
  E_t   — Σ расстояния t_br до полосы комфорта (внутри полосы 0);
  E_e   — Σ выручки за такт + ΔC_es;
  E_glb — β1·E_p + β2·E_t − β3·E_e.

ΔC_es — стоимость по p_mg отклонения SOC и SOT от опор в конце
прогона, со знаком: запас сверх опоры — в плюс, недобор — в минус.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from core.exceptions import IncompleteLog, ReportError
from empc.objectives import sample_profit
from plant.params import PlantParams
from plant.state import C_SOC, C_SOT, DISTURBANCE_SYMBOLS, INPUT_SYMBOLS, INTEGER_SYMBOLS, STATE_SYMBOLS
from scenario.prices import PriceBook

BETAS = (0.05, 3.5, 10.0)
REQUIRED = (
    "t", "y1", "y2", "target", "y_b", "xi", "band_lo", "band_hi", "p_se", "p_d", "fuel",
    "soc", "sot", "soc_ref", "sot_ref",
)


class ScenarioLog:
    """Строка на такт; состояния — на начало такта."""

    def __init__(self, dt: float):
        self.dt = dt
        self.rows: list[dict] = []

    def __len__(self) -> int:
        return len(self.rows)

    def record(self, t: float, x, u, z, w, y, y_b: float, xi: float, band, p_se: float, x_dd) -> None:
        row = {
            "t": t, "y1": float(y[0]), "y2": float(y[1]),
            "target": (1.0 + xi) * y_b, "y_b": y_b, "xi": xi,
            "band_lo": float(band[0]), "band_hi": float(band[1]), "p_se": p_se,
            "p_d": float(w[2]), "fuel": float(u[0] + u[1]),
            "soc": float(x[C_SOC]), "sot": float(x[C_SOT]),
            "soc_ref": float(x_dd[0]), "sot_ref": float(x_dd[1]),
        }
        row.update({f"u_{name}": float(v) for name, v in zip(INPUT_SYMBOLS, u)})
        row.update({name: int(v) for name, v in zip(INTEGER_SYMBOLS, z)})
        row.update({f"w_{name}": float(v) for name, v in zip(DISTURBANCE_SYMBOLS, w)})
        row.update({f"x_{name}": float(v) for name, v in zip(STATE_SYMBOLS, x)})
        self.rows.append(row)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def checked(self) -> pd.DataFrame:
        """Кадр журнала; IncompleteLog, если прогон нельзя оценивать."""
        frame = self.frame()
        if frame.empty:
            raise IncompleteLog("log has no samples")
        missing = [c for c in REQUIRED if c not in frame.columns]
        if missing:
            raise IncompleteLog(f"log lacks columns: {', '.join(missing)}")
        bad = [c for c in REQUIRED if frame[c].isna().any()]
        if bad:
            raise IncompleteLog(f"log has gaps in: {', '.join(bad)}")
        steps = np.diff(frame["t"].to_numpy())
        if steps.size and np.max(np.abs(steps - self.dt)) > 1e-6:
            raise IncompleteLog(f"log samples are not uniformly {self.dt} s apart")
        return frame

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            self.frame().to_csv(path, index=False)
        except OSError as exc:
            raise ReportError(f"cannot write log: {exc}", context=str(path)) from exc
        return path

    @classmethod
    def read(cls, path: str | Path, dt: float) -> "ScenarioLog":
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError) as exc:
            raise ReportError(f"cannot read log: {exc}", context=str(path)) from exc
        log = cls(dt)
        log.rows = frame.to_dict("records")
        return log


@dataclass(frozen=True)
class EvalReport:
    e_p: float
    e_t: float
    e_e: float
    e_glb: float
    delta_c_es: float
    profit: float
    samples: int
    betas: tuple[float, float, float] = BETAS

    def recomposed(self) -> float:
        return global_index(self.e_p, self.e_t, self.e_e, self.betas)

    def as_dict(self) -> dict:
        data = asdict(self)
        data["betas"] = list(self.betas)
        return data


def global_index(e_p: float, e_t: float, e_e: float, betas=BETAS) -> float:
    b1, b2, b3 = betas
    return b1 * e_p + b2 * e_t - b3 * e_e


def band_distance(y2, lo, hi) -> np.ndarray:
    y2 = np.asarray(y2, dtype=float)
    return np.maximum(np.asarray(lo) - y2, 0.0) + np.maximum(y2 - np.asarray(hi), 0.0)


def storage_value(soc_gap: float, sot_gap: float, p_mg: float, params: PlantParams) -> float:
    """ΔC_es по отклонениям SOC и SOT от опор, CAD."""
    battery_kwh = params.calibration.battery_kwh
    st = params.storage
    cold_kwh = st.m_tot * params.network.c_w * (st.t_hot_nom - st.t_cold_nom) / 3600.0
    return (soc_gap * battery_kwh + sot_gap * cold_kwh) * p_mg / 1000.0


def evaluate(log: ScenarioLog, prices: PriceBook, params: PlantParams, betas=BETAS) -> EvalReport:
    frame = log.checked()
    e_p = float(np.sum(np.abs(frame["y1"] - frame["target"])))
    e_t = float(np.sum(band_distance(frame["y2"], frame["band_lo"], frame["band_hi"])))
    profit = sample_profit(
        frame["y1"].to_numpy(), frame["p_d"].to_numpy(), frame["fuel"].to_numpy(),
        frame["y_b"].to_numpy(), frame["xi"].to_numpy(), prices.prices(frame["p_se"].to_numpy()), log.dt,
    )
    last = frame.iloc[-1]
    delta = storage_value(last["soc"] - last["soc_ref"], last["sot"] - last["sot_ref"], prices.p_mg, params)
    e_e = float(np.sum(profit)) + delta
    return EvalReport(
        e_p=e_p, e_t=e_t, e_e=e_e, e_glb=global_index(e_p, e_t, e_e, betas),
        delta_c_es=float(delta), profit=float(np.sum(profit)), samples=len(frame), betas=tuple(betas),
    )
