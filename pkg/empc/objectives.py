"""
Слагаемые целей и общие ограничения на входы.

Цены — за МВт·ч, денежная сумма за такт — price·P_кВт·Δ/3.6e6;
топливо — p_f·G·Δ.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from plant.equilibrium import reference_equilibrium
from plant.params import PlantParams
from plant.state import C_SOC, C_SOT, INPUT_GATE, N_X, P_MTF, TEMPERATURE_STATES

KW_SECONDS_PER_MWH = 3.6e6


@dataclass(frozen=True)
class Prices:
    """Цены на одном интервале или на горизонте (массивы по стадиям)."""
    p_mg: float | np.ndarray
    p_se: float | np.ndarray
    p_f: float | np.ndarray
    cm_factor: float = 1.5
    pn_factor: float = 1.5

    @property
    def p_cm(self):
        return self.cm_factor * np.asarray(self.p_se)

    @property
    def p_pn(self):
        return self.pn_factor * np.asarray(self.p_se)


def power_target(y_b, xi):
    """(1 + ξ)·y_e^b."""
    return (1.0 + np.asarray(xi)) * np.asarray(y_b)


def sample_profit(y1, p_d, fuel, y_b, xi, prices: Prices, dt: float):
    """
    Выручка за такт (со знаком минус это J3): продажа в микросеть и
    в сеть, компенсация за регулирование, минус топливо и штраф за
    отклонение от задания сети.
    """
    target = power_target(y_b, xi)
    dev = np.asarray(y1) - target
    scale = dt / KW_SECONDS_PER_MWH
    revenue = (prices.p_mg * np.asarray(p_d) + prices.p_se * np.asarray(y1)
               + prices.p_cm * np.abs(xi) * np.asarray(y_b)) * scale
    return revenue - prices.p_f * np.asarray(fuel) * dt - prices.p_pn * dev ** 2 * scale


# ==============================
# Ограничения на входы
# ==============================

def input_range(params: PlantParams) -> np.ndarray:
    return np.maximum(params.u_max - params.u_min, 1e-12)


def state_scale(params: PlantParams) -> np.ndarray:
    """Масштаб состояний: модуль опорного равновесия, нули — единицей."""
    scale = np.abs(np.asarray(reference_equilibrium(params).x, dtype=float))
    scale[P_MTF] = params.microturbine.p_nom
    scale[scale < 1e-9] = 1.0
    return scale


def state_bounds(params: PlantParams) -> tuple[np.ndarray, np.ndarray]:
    """Пределы состояний для прогноза: температуры, SOC и SOT; прочие свободны."""
    lo, hi = np.full(N_X, -np.inf), np.full(N_X, np.inf)
    env = params.envelope
    lo[list(TEMPERATURE_STATES)], hi[list(TEMPERATURE_STATES)] = env.temperature
    lo[C_SOC], hi[C_SOC] = env.soc
    lo[C_SOT], hi[C_SOT] = env.sot
    return lo, hi


def gate_vector(z) -> np.ndarray:
    """Для каждого непрерывного входа значение его двоичного входа (1 — не гейтится)."""
    z = np.asarray(z, dtype=float)
    gates = [np.ones_like(z[..., 0]) if g is None else z[..., g] for g in INPUT_GATE]
    return np.stack(gates, axis=-1)


def gated_bounds(z, params: PlantParams) -> tuple[np.ndarray, np.ndarray]:
    """z_r·u_min <= u_r <= z_r·u_max; z (4,) или (N, 4)."""
    g = gate_vector(z)
    return g * params.u_min, g * params.u_max


def big_m_relaxation(z, z_prev, params: PlantParams, big_m: float) -> np.ndarray:
    """V = |z(k) − z(k−1)|·C_n по каждому входу, C_n = big_m·диапазон."""
    change = np.abs(gate_vector(z) - gate_vector(z_prev))
    return change * big_m * input_range(params)


def rate_limits(dt, params: PlantParams) -> np.ndarray:
    """dt — число или период каждого входа."""
    return params.u_rate * np.asarray(dt, dtype=float)


def project_input(u, u_prev, z, z_prev, dt, params: PlantParams, big_m: float = 10.0) -> np.ndarray:
    """Проекция на коробку с гейтингом и на ограничение скорости."""
    u = np.asarray(u, dtype=float).copy()
    lo, hi = gated_bounds(z, params)
    if u_prev is not None:
        slack = rate_limits(dt, params) + big_m_relaxation(z, z_prev, params, big_m)
        u = np.clip(u, np.asarray(u_prev) - slack, np.asarray(u_prev) + slack)
    return np.clip(u, lo, hi)


def check_inputs(u_log, z_log, periods, params: PlantParams, big_m: float = 10.0, tol: float = 1e-9) -> list[str]:
    """
    Проверка применённых входов по журналу: коробка, гейтинг и скорость.
    periods — период обновления каждого входа, с. Возвращает список нарушений.
    """
    u_log, z_log = np.asarray(u_log, dtype=float), np.asarray(z_log, dtype=float)
    periods = np.asarray(periods, dtype=float)
    problems: list[str] = []
    for k in range(u_log.shape[0]):
        lo, hi = gated_bounds(z_log[k], params)
        bad = np.flatnonzero((u_log[k] < lo - tol) | (u_log[k] > hi + tol))
        problems += [f"sample {k}: u{i + 1} outside its gated box" for i in bad]
        if k == 0:
            continue
        du = np.abs(u_log[k] - u_log[k - 1])
        limit = params.u_rate * periods + big_m_relaxation(z_log[k], z_log[k - 1], params, big_m)
        bad = np.flatnonzero(du > limit + tol)
        problems += [f"sample {k}: u{i + 1} exceeds its rate limit" for i in bad]
    return problems
