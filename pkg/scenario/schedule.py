"""
Упрощённое суточное планирование: по часу на установившийся режим.

Для каждого часа решается задача NLP: равновесие установки (кроме
интегрирующих состояний накопителей) при суточном прогнозе условий,
максимум выручки p_se·y1 − p_f·G_топл, температура здания в полосе
комфорта. Накопители ведутся эвристикой: заряд в ночные часы, разряд
в часы пиковой цены; опоры SOC/SOT — кусочно-линейные между часами.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from core.exceptions import ModelError, SolverError
from empc.config import SolverSettings
from empc.objectives import gated_bounds, input_range, state_bounds, state_scale
from empc.slow import accept
from nlp.sqp import NlpProblem, solve
from plant.equilibrium import nominal_point, reference_equilibrium
from plant.model import derivatives, outputs
from plant.params import PlantParams
from plant.state import (
    C_SOC, C_SOT, C_STC, C_STH, INPUT_SYMBOLS, INTEGER_SYMBOLS, N_U, N_X, N_Z, T_BR,
)
from scenario.prices import PriceBook
from scenario.profiles import HOURS, Profile
from scenario.spec import StorageSpec

logger = logging.getLogger(__name__)

STORAGE_STATES = (C_SOC, C_SOT, C_STC, C_STH)
FREE_STATES = tuple(i for i in range(N_X) if i not in STORAGE_STATES)
G_STU, P_BAR = 5, 6
# слабая регуляризация входов к номиналу: делит поровну вырожденные направления
INPUT_REGULARIZATION = 1e-3


@dataclass(frozen=True)
class StoragePlan:
    z_st: np.ndarray     # (24,)
    g_stu: np.ndarray    # (24,)
    p_bar: np.ndarray    # (24,)
    soc_ref: np.ndarray  # (25,) на начало каждого часа и конец суток
    sot_ref: np.ndarray  # (25,)


@dataclass(frozen=True)
class HourPlan:
    x: np.ndarray
    u: np.ndarray
    y_b: float
    status: str
    fallback: bool = False


@dataclass(frozen=True)
class Schedule:
    y_b: np.ndarray      # (24,)
    z: np.ndarray        # (24, 4)
    u: np.ndarray        # (24, 7) установившиеся входы
    x: np.ndarray        # (24, 23) установившиеся состояния
    soc_ref: np.ndarray  # (25,)
    sot_ref: np.ndarray  # (25,)
    status: tuple[str, ...]

    @staticmethod
    def hour_of(t) -> np.ndarray:
        return np.clip(np.floor(np.asarray(t, dtype=float) / 3600.0 + 1e-9).astype(int), 0, HOURS - 1)

    def y_b_at(self, t) -> np.ndarray:
        return self.y_b[self.hour_of(t)]

    def z_at(self, t) -> np.ndarray:
        return self.z[self.hour_of(t)]

    def x_dd_at(self, t) -> np.ndarray:
        """Опоры (C_soc, C_sot) в моменты t; форма (..., 2)."""
        hours = np.asarray(t, dtype=float) / 3600.0
        grid = np.arange(HOURS + 1, dtype=float)
        return np.stack([np.interp(hours, grid, self.soc_ref), np.interp(hours, grid, self.sot_ref)], axis=-1)

    @property
    def fallback_hours(self) -> list[int]:
        return [h for h, s in enumerate(self.status) if s.startswith("fallback")]

    def frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"hour": np.arange(HOURS), "y_b": self.y_b, "status": list(self.status)})
        for j, name in enumerate(INTEGER_SYMBOLS):
            frame[name] = self.z[:, j].astype(int)
        for j, name in enumerate(INPUT_SYMBOLS):
            frame[f"u_{name}"] = self.u[:, j]
        frame["soc_ref"] = self.soc_ref[:HOURS]
        frame["sot_ref"] = self.sot_ref[:HOURS]
        return frame

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.frame().to_csv(path, index=False)
        return path


# ==============================
# Накопители
# ==============================

def storage_plan(spec: StorageSpec, prices: PriceBook, params: PlantParams) -> StoragePlan:
    """
    Заряд в часы charge_hours, разряд в часы максимальной цены, иначе
    простой. Мощность урезается, если опора упирается в предел с запасом.
    """
    kwh = params.calibration.battery_kwh
    m_tot = params.storage.m_tot
    env = params.envelope
    peak = set(prices.peak_hours())
    soc_lo, soc_hi = env.soc[0] + spec.margin, env.soc[1] - spec.margin
    sot_lo, sot_hi = env.sot[0] + spec.margin, env.sot[1] - spec.margin

    z_st, g_stu, p_bar = np.ones(HOURS), np.zeros(HOURS), np.zeros(HOURS)
    soc, sot = np.empty(HOURS + 1), np.empty(HOURS + 1)
    soc[0] = np.clip(spec.soc0, soc_lo, soc_hi)
    sot[0] = np.clip(spec.sot0, sot_lo, sot_hi)
    for h in range(HOURS):
        if h in spec.charge_hours:
            sign, z_st[h] = -1.0, 0.0
        elif h in peak:
            sign = 1.0
        else:
            sign = 0.0
        # P_bar > 0 — разряд батареи; G_st > 0 — разряд бака, SOT убывает
        soc[h + 1] = np.clip(soc[h] - sign * spec.battery_power / kwh, soc_lo, soc_hi)
        sot[h + 1] = np.clip(sot[h] - sign * spec.charge_flow * 3600.0 / m_tot, sot_lo, sot_hi)
        p_bar[h] = (soc[h] - soc[h + 1]) * kwh
        g_stu[h] = abs(sot[h] - sot[h + 1]) * m_tot / 3600.0
    return StoragePlan(z_st=z_st, g_stu=g_stu, p_bar=p_bar, soc_ref=soc, sot_ref=sot)


# ==============================
# Установившийся режим часа
# ==============================

def storage_state(x, soc: float, sot: float, params: PlantParams) -> np.ndarray:
    """Состояния накопителей при заданных SOC/SOT и номинальных температурах баков."""
    x = np.array(x, dtype=float)
    k = params.calibration.storage_mj_per_k
    x[C_SOC], x[C_SOT] = soc, sot
    x[C_STC] = k * sot * params.storage.t_cold_nom
    x[C_STH] = k * (1.0 - sot) * params.storage.t_hot_nom
    return x


def _column(a: np.ndarray, like: np.ndarray) -> np.ndarray:
    """a формы (n,) как столбец для пачки like формы (m, B) или (m,)."""
    return a.reshape(-1, *(1,) * (np.ndim(like) - 1))


def steady_state_problem(
    w: np.ndarray,
    z: np.ndarray,
    p_se: float,
    p_f: float,
    fixed: dict[int, float],
    template: np.ndarray,
    params: PlantParams,
    band: tuple[float, float],
    guess: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[NlpProblem, Callable]:
    """
    Переменные — масштабированные свободные состояния и все входы;
    fixed — входы, заданные эвристикой накопителей (lb = ub).
    """
    free = list(FREE_STATES)
    nf = len(free)
    sx = state_scale(params)[free]
    su = input_range(params)
    scale = np.concatenate([sx, su])
    tau = params.tau[free]
    u_nom = nominal_point(params).u

    def split(v):
        v = np.asarray(v, dtype=float)
        x = np.broadcast_to(_column(template, v), (N_X, *v.shape[1:])).copy()
        x[free] = v[:nf] * _column(sx, v)
        return x, v[nf:] * _column(su, v)

    def objective(v):
        x, u = split(v)
        y1 = outputs(x, u, z, w, params)[0]
        cash = p_se * y1 / 1000.0 - p_f * (u[0] + u[1]) * 3600.0
        reg = INPUT_REGULARIZATION * np.sum(((u - _column(u_nom, u)) / _column(su, u)) ** 2, axis=0)
        return -cash + reg

    def eq(v):
        x, u = split(v)
        f = derivatives(x, u, z, w, params)[free]
        return f * _column(tau / sx, f)

    x_lo, x_hi = state_bounds(params)
    x_lo, x_hi = x_lo[free].copy(), x_hi[free].copy()
    k_br = free.index(T_BR)
    x_lo[k_br], x_hi[k_br] = band
    u_lo, u_hi = gated_bounds(z, params)
    for i, value in fixed.items():
        u_lo[i] = u_hi[i] = float(np.clip(value, u_lo[i], u_hi[i]))

    x0, u0 = guess if guess is not None else (template, u_nom)
    u0 = np.clip(np.asarray(u0, dtype=float), u_lo, u_hi)
    problem = NlpProblem(
        n=nf + N_U, objective=objective, eq=eq,
        lb=np.concatenate([x_lo, u_lo]) / scale, ub=np.concatenate([x_hi, u_hi]) / scale,
        x0=np.concatenate([np.asarray(x0, dtype=float)[free], u0]) / scale,
        batched=True,
    )
    return problem, split


def steady_state_hour(
    w: np.ndarray,
    z: np.ndarray,
    p_se: float,
    p_f: float,
    fixed: dict[int, float],
    soc: float,
    sot: float,
    params: PlantParams,
    band: tuple[float, float],
    solver: SolverSettings | None = None,
    guess: HourPlan | None = None,
) -> HourPlan:
    """Raises SolverError, если режим часа не найден."""
    solver = solver or SolverSettings(max_iter=100, tol=1e-6)
    template = storage_state(reference_equilibrium(params).x, soc, sot, params)
    start = None if guess is None else (storage_state(guess.x, soc, sot, params), guess.u)
    problem, split = steady_state_problem(w, z, p_se, p_f, fixed, template, params, band, start)
    sol = solve(problem, settings=solver.sqp())
    if not accept(sol.status, sol.violation, solver.feasibility_tol):
        raise SolverError(f"steady state not found: {sol.status.value}, violation {sol.violation:.2e}")
    x, u = split(sol.x)
    y1 = float(outputs(x, u, z, w, params)[0])
    return HourPlan(x=x, u=u, y_b=max(0.0, y1), status=sol.status.value)


def day_ahead(
    profile: Profile,
    prices: PriceBook,
    storage: StorageSpec,
    params: PlantParams,
    band: tuple[float, float],
    solver: SolverSettings | None = None,
) -> Schedule:
    """
    Суточный план по часам. Если час не решён, берётся план
    предыдущего часа; для первого часа — опорное равновесие.
    """
    plan = storage_plan(storage, prices, params)
    z_all = np.ones((HOURS, N_Z))
    z_all[:, 3] = plan.z_st

    hours: list[HourPlan] = []
    previous: HourPlan | None = None
    for h in range(HOURS):
        fixed = {G_STU: plan.g_stu[h], P_BAR: plan.p_bar[h]}
        try:
            hour = steady_state_hour(
                profile.hourly(h), z_all[h], float(prices.p_se[h]), prices.p_f, fixed,
                plan.soc_ref[h], plan.sot_ref[h], params, band, solver, guess=previous,
            )
        except (ModelError, SolverError, np.linalg.LinAlgError) as exc:
            if previous is None:
                eq = reference_equilibrium(params)
                y1 = float(outputs(eq.x, eq.u, eq.z, eq.w, params)[0])
                previous = HourPlan(x=eq.x.copy(), u=eq.u.copy(), y_b=max(0.0, y1), status="reference")
            logger.warning("Суточный план, час %d: %s, взят план предыдущего часа", h, exc)
            hour = HourPlan(x=previous.x, u=previous.u, y_b=previous.y_b,
                            status=f"fallback:{type(exc).__name__}", fallback=True)
        hours.append(hour)
        previous = hour
        logger.debug("Суточный план, час %d: y_b = %.2f кВт (%s)", h, hour.y_b, hour.status)

    logger.info("Суточный план построен: y_b от %.1f до %.1f кВт, часов с подстановкой %d",
                min(p.y_b for p in hours), max(p.y_b for p in hours), sum(p.fallback for p in hours))
    return Schedule(
        y_b=np.array([p.y_b for p in hours]),
        z=z_all,
        u=np.array([p.u for p in hours]),
        x=np.array([p.x for p in hours]),
        soc_ref=plan.soc_ref, sot_ref=plan.sot_ref,
        status=tuple(p.status for p in hours),
    )
