"""
Коэффициент регулирования ξ: задание сети (1 + ξ)·y_e^b.

Суточный ξ — по часам, capacity·N(0, σ_da), обрезанный до ±capacity;
реальный — поминутно вокруг суточного с разбросом σ_rt·capacity,
обрезанный до ±1.2·capacity. При capacity = 0 сигнал нулевой.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from scenario.spec import RegulationSpec

TAIL = 1.2


@dataclass(frozen=True)
class RegulationSignal:
    capacity: float
    day_ahead: np.ndarray  # (24,)
    real_time: np.ndarray  # (1440,)

    def at(self, t) -> np.ndarray:
        k = np.clip(np.floor(np.asarray(t, dtype=float) / 60.0 + 1e-9).astype(int), 0, self.real_time.size - 1)
        return self.real_time[k]


def generate_regulation(spec: RegulationSpec, seed: int) -> RegulationSignal:
    cap = spec.capacity
    if spec.step_at is not None:
        minutes = np.arange(1440) * 60.0
        rt = np.where(minutes + 1e-9 >= spec.step_at, spec.step_value, 0.0)
        hours = np.arange(24) * 3600.0
        da = np.where(hours + 1e-9 >= spec.step_at, spec.step_value, 0.0)
        return RegulationSignal(capacity=cap, day_ahead=da, real_time=rt)

    rng = np.random.default_rng(seed)
    da = cap * np.clip(spec.sigma_day_ahead * rng.standard_normal(24), -1.0, 1.0)
    rt = np.repeat(da, 60) + spec.sigma_real_time * cap * rng.standard_normal(1440)
    return RegulationSignal(capacity=cap, day_ahead=da, real_time=np.clip(rt, -TAIL * cap, TAIL * cap))
