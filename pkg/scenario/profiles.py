"""
Суточные профили внешних условий ω = [t_a, S_ra, P_d, Q_o].

Суточный прогноз задаётся по часам формами из сценария; реальный
профиль с шагом 1 мин — прогноз, линейно интерполированный и
умноженный на (1 + δ), δ ~ N(0, σ), обрезанное до ±clip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from plant.state import N_D
from scenario.spec import AmbientShape, IrradianceShape, LoadShape, ProfileShapes

HOURS = 24
MINUTES = 24 * 60


@dataclass(frozen=True)
class Profile:
    day_ahead: np.ndarray   # (25, 4): часы 0..24, последняя строка замыкает сутки
    real_time: np.ndarray   # (1440, 4)
    seed: int

    def at(self, t: float) -> np.ndarray:
        """Реальные условия в момент t, с от полуночи (удержание на минуту)."""
        k = int(np.clip(np.floor(t / 60.0 + 1e-9), 0, MINUTES - 1))
        return self.real_time[k].copy()

    def hourly(self, hour: int) -> np.ndarray:
        return self.day_ahead[hour].copy()


def _ambient(hours: np.ndarray, shape: AmbientShape) -> np.ndarray:
    wave = 0.5 + 0.5 * np.cos(2.0 * np.pi * (hours - shape.peak_hour) / HOURS)
    level = np.clip(wave / (1.0 - shape.plateau), 0.0, 1.0)
    return shape.t_min + (shape.t_max - shape.t_min) * level


def _irradiance(hours: np.ndarray, shape: IrradianceShape) -> np.ndarray:
    phase = (hours - shape.sunrise) / (shape.sunset - shape.sunrise)
    return shape.peak * np.where((phase > 0) & (phase < 1), np.sin(np.pi * phase), 0.0)


def _load(hours: np.ndarray, shape: LoadShape) -> np.ndarray:
    value = np.full_like(hours, shape.base, dtype=float)
    for bump in shape.bumps:
        value += bump.amplitude * np.exp(-0.5 * ((hours - bump.hour) / bump.width) ** 2)
    return np.maximum(value, 0.0)


def day_ahead_series(shapes: ProfileShapes) -> np.ndarray:
    hours = np.arange(HOURS + 1, dtype=float)
    return np.column_stack([
        _ambient(hours, shapes.t_a), _irradiance(hours, shapes.s_ra),
        _load(hours, shapes.p_d), _load(hours, shapes.q_o),
    ])


def generate_profiles(shapes: ProfileShapes, seed: int) -> Profile:
    da = day_ahead_series(shapes)
    minutes = np.arange(MINUTES) / 60.0
    base = np.column_stack([np.interp(minutes, np.arange(HOURS + 1), da[:, j]) for j in range(N_D)])
    rng = np.random.default_rng(seed)
    noise = np.clip(shapes.sigma * rng.standard_normal(base.shape), -shapes.clip, shapes.clip)
    rt = base * (1.0 + noise)
    return Profile(day_ahead=da, real_time=rt, seed=seed)
