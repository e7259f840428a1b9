"""
Номинальная рабочая точка и опорное равновесие f(x, u, z, ω) = 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from nlp.finite_diff import central_jacobian
from plant.model import derivatives
from plant.params import PlantParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OperatingPoint:
    x: np.ndarray
    u: np.ndarray
    z: np.ndarray
    w: np.ndarray


def nominal_point(params: PlantParams) -> OperatingPoint:
    """Начальное приближение из номинальных значений агрегатов."""
    fc, ec = params.fuel_cell, params.chiller
    st, bld, net = params.storage, params.building, params.network
    cal = params.calibration
    nom = params.nominal
    sot = 0.5
    x = np.array([
        fc.i_nom, fc.g_h2_nom, fc.p_o2_nom, fc.p_h2o_nom, fc.p_h2_nom,
        0.0, 0.0, 0.0, 0.0,
        ec.t_c_nom, ec.t_cs_nom, ec.t_cwm_nom, ec.t_e_nom, ec.t_es_nom, cal.t_ewm_nom,
        0.0, 0.5, 0.0,
        sot,
        cal.storage_mj_per_k * sot * st.t_cold_nom,
        cal.storage_mj_per_k * (1.0 - sot) * st.t_hot_nom,
        net.t_return_nom, bld.t_nom,
    ])
    u = np.array([
        fc.g_ff_nom, params.microturbine.g_fm_nom, cal.g_ab_nom, ec.n_nom, cal.g_ec_nom, 0.0, 0.0,
    ])
    z = np.array(nom.z, dtype=float)
    w = np.array([nom.t_a, nom.s_ra, nom.p_d, nom.q_o])
    return OperatingPoint(x=x, u=u, z=z, w=w)


def find_equilibrium(x0, u, z, w, params: PlantParams, tol: float = 1e-10, max_iter: int = 50) -> np.ndarray:
    """
    Демпфированный метод Ньютона по x при фиксированных u, z, ω.

    Шаг — решение наименьших квадратов: интегрирующие состояния
    (ёмкости накопителей в простое) дают вырожденный Якобиан.
    """
    x = np.asarray(x0, dtype=float).copy()

    def residual(v):
        return derivatives(v, u, z, w, params)

    f = residual(x)
    norm = np.max(np.abs(f))
    for it in range(max_iter):
        if norm <= tol:
            break
        jac = central_jacobian(residual, x)
        dx, *_ = np.linalg.lstsq(jac, -f, rcond=None)
        alpha = 1.0
        while alpha > 1e-6:
            trial = x + alpha * dx
            f_trial = residual(trial)
            trial_norm = np.max(np.abs(f_trial))
            if np.isfinite(trial_norm) and trial_norm < norm:
                x, f, norm = trial, f_trial, trial_norm
                break
            alpha *= 0.5
        else:
            logger.warning("Поиск равновесия остановлен: шаг не уменьшает невязку (%.3e)", norm)
            break
        logger.debug("Равновесие: итерация %d, невязка %.3e", it + 1, norm)
    if norm > tol:
        logger.warning("Невязка равновесия %.3e выше допуска %.1e", norm, tol)
    return x


@lru_cache(maxsize=8)
def reference_equilibrium(params: PlantParams) -> OperatingPoint:
    """Опорное равновесие: номинальная точка, уточнённая Ньютоном."""
    nominal = nominal_point(params)
    x_e = find_equilibrium(nominal.x, nominal.u, nominal.z, nominal.w, params)
    for arr in (x_e, nominal.u, nominal.z, nominal.w):
        arr.setflags(write=False)
    return OperatingPoint(x=x_e, u=nominal.u, z=nominal.z, w=nominal.w)
