from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from empc.objectives import Prices
from scenario.spec import PriceSpec


@dataclass(frozen=True)
class PriceBook:
    """Цены на сутки: p_mg и p_f постоянны, p_se — по часам, CAD/МВт·ч."""
    p_mg: float
    p_f: float
    p_se: np.ndarray  # (24,)
    cm_factor: float = 1.5
    pn_factor: float = 1.5

    @classmethod
    def from_spec(cls, spec: PriceSpec) -> "PriceBook":
        hours = np.arange(24, dtype=float)
        starts = np.array([h for h, _ in spec.p_se])
        values = np.array([p for _, p in spec.p_se])
        p_se = values[np.searchsorted(starts, hours, side="right") - 1]
        return cls(p_mg=spec.p_mg, p_f=spec.p_f, p_se=p_se,
                   cm_factor=spec.cm_factor, pn_factor=spec.pn_factor)

    @property
    def p_cm(self) -> np.ndarray:
        return self.cm_factor * self.p_se

    @property
    def p_pn(self) -> np.ndarray:
        return self.pn_factor * self.p_se

    def p_se_at(self, t) -> np.ndarray:
        """p_se в моменты t (с от полуночи)."""
        hour = np.clip(np.floor(np.asarray(t, dtype=float) / 3600.0 + 1e-9).astype(int), 0, 23)
        return self.p_se[hour]

    def prices(self, p_se) -> Prices:
        return Prices(p_mg=self.p_mg, p_se=p_se, p_f=self.p_f,
                      cm_factor=self.cm_factor, pn_factor=self.pn_factor)

    def peak_hours(self) -> tuple[int, ...]:
        return tuple(int(h) for h in np.flatnonzero(self.p_se >= self.p_se.max()))
