"""
Внешние данные на горизонте прогноза — то, что регулятор получает от
сценария на каждом такте.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from empc.objectives import Prices


@dataclass(frozen=True)
class Forecast:
    """По строке на интервал горизонта; x_dd — опоры в конце интервала."""
    w: np.ndarray       # (N, 4)
    z: np.ndarray       # (N, 4)
    z_prev: np.ndarray  # (4,) двоичные входы на предыдущем такте
    y_b: np.ndarray     # (N,)
    xi: np.ndarray      # (N,)
    x_dd: np.ndarray    # (N, 2) C_soc, C_sot
    band: np.ndarray    # (N, 2) границы комфорта
    prices: Prices      # p_se по строкам

    def __post_init__(self):
        n = self.w.shape[0]
        for name in ("z", "y_b", "xi", "x_dd", "band"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"forecast field {name} does not match horizon {n}")

    @property
    def horizon(self) -> int:
        return self.w.shape[0]

    def target(self) -> np.ndarray:
        return (1.0 + self.xi) * self.y_b


class ForecastSource(Protocol):
    def window(self, t0: float, n: int, dt: float) -> Forecast:
        """Прогноз на n интервалов длины dt, начиная с момента t0 (с)."""


def constant_forecast(w, z, y_b: float, prices: Prices, n: int, xi: float = 0.0,
                      x_dd=(0.5, 0.5), band=(22.0, 26.0)) -> Forecast:
    """Неизменные условия на всём горизонте (проверки и установившиеся режимы)."""
    return Forecast(
        w=np.tile(np.asarray(w, dtype=float), (n, 1)),
        z=np.tile(np.asarray(z, dtype=float), (n, 1)),
        z_prev=np.asarray(z, dtype=float),
        y_b=np.full(n, float(y_b)),
        xi=np.full(n, float(xi)),
        x_dd=np.tile(np.asarray(x_dd, dtype=float), (n, 1)),
        band=np.tile(np.asarray(band, dtype=float), (n, 1)),
        prices=Prices(p_mg=prices.p_mg, p_se=np.broadcast_to(prices.p_se, (n,)).astype(float),
                      p_f=prices.p_f, cm_factor=prices.cm_factor, pn_factor=prices.pn_factor),
    )


class ConstantSource:
    """Источник прогнозов с неизменными условиями."""

    def __init__(self, w, z, y_b: float, prices: Prices, xi: float = 0.0, x_dd=(0.5, 0.5), band=(22.0, 26.0)):
        self.kwargs = dict(w=w, z=z, y_b=y_b, prices=prices, xi=xi, x_dd=x_dd, band=band)

    def window(self, t0: float, n: int, dt: float) -> Forecast:
        return constant_forecast(n=n, **self.kwargs)
