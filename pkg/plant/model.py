"""
Нелинейная модель IES: алгебраическая сеть воды и мощности, векторное
поле dx/dτ, выходы и явный интегратор РК4.

Все функции принимают либо векторы формы (n,), либо пачки формы (n, B):
последняя ось — номер пробной точки. Так конечные разности для Якобианов
считаются одним вызовом.
"""

from __future__ import annotations

import math

import numpy as np

from core.exceptions import DegenerateFlow, IntegrationDiverged
from plant.params import GRAVITY, PlantParams
from plant.state import (
    C_SOC, C_SOT, C_STC, C_STH, CAPACITY_STATES, G_H2, I_BA, I_F, P_H2, P_H2O, P_MTF,
    P_O2, T_ABF, T_ABT, T_ABW, T_BR, T_C, T_CS, T_CWM, T_E, T_ES, T_EWM, T_RE,
    TEMPERATURE_STATES, V_CAP, NetworkFlows, UnitPowers, as_array,
)

FLOW_EPS = 1e-9
PRESSURE_FLOOR = 1e-3
FRACTION_FLOOR = 1e-3


# ==============================
# Алгебраическая часть
# ==============================

def pv_power(w, params: PlantParams):
    """Мощность ФЭП в точке максимальной мощности, кВт."""
    w = as_array(w)
    pv = params.pv
    t_a, s_ra = w[0], np.maximum(w[1], 0.0)
    i_mp = pv.i_mp_ref * s_ra / pv.s_ref
    v_mp = pv.v_mp_ref * np.maximum(0.0, 1.0 - pv.temp_coeff * (t_a - pv.t_ref))
    return pv.n_pp * pv.n_sp * i_mp * v_mp / 1000.0


def pump_power(g_all, params: PlantParams):
    net = params.network
    g_all = np.asarray(g_all, dtype=float)
    head = net.head_0 - net.head_2 * g_all ** 2
    eta = net.eta_max - net.eta_curv * (g_all - net.g_bep) ** 2
    return g_all * GRAVITY * head / (1000.0 * eta)


def tank_temperatures(x, params: PlantParams):
    """Температуры холодного и горячего баков из их теплосодержания (МДж)."""
    x = as_array(x)
    k = params.calibration.storage_mj_per_k
    cold = np.maximum(x[C_SOT], FRACTION_FLOOR)
    hot = np.maximum(1.0 - x[C_SOT], FRACTION_FLOOR)
    return x[C_STC] / (k * cold), x[C_STH] / (k * hot)


def water_network(u, z, x, params: PlantParams) -> NetworkFlows:
    u, z, x = as_array(u), as_array(z), as_array(x)
    cw = params.network.c_w
    g_ab, g_ec, g_stu = u[2], u[4], u[5]
    z_st = z[3]

    g_ch = g_ab + g_ec
    chillers_on = (z[1] > 0) | (z[2] > 0)
    if np.any((g_ch <= FLOW_EPS) & chillers_on):
        raise DegenerateFlow("G_ab + G_ec <= 0 while a chiller is switched on")

    g_st = (2.0 * z_st - 1.0) * g_stu
    g_sl = g_ch + g_st
    g_all = g_ch + g_stu

    t_ab = params.absorption.t_nom + x[T_ABF] + x[T_ABW] + x[T_ABT]
    t_re = x[T_RE]
    t_stc, t_sth = tank_temperatures(x, params)
    t_hp = z_st * t_re + (1.0 - z_st) * t_sth

    has_ch = g_ch > FLOW_EPS
    g_ch_safe = np.where(has_ch, g_ch, 1.0)
    t_rec = np.where(has_ch, (g_sl * t_re - g_st * t_hp) / g_ch_safe, t_re)
    t_ec = 2.0 * x[T_EWM] - t_rec
    t_slc = np.where(has_ch, (g_ab * t_ab + g_ec * t_ec) / g_ch_safe, t_rec)
    t_cp = z_st * t_stc + (1.0 - z_st) * t_slc

    has_sl = g_sl > FLOW_EPS
    g_sl_safe = np.where(has_sl, g_sl, 1.0)
    t_sl = np.where(has_sl, (g_ab * t_ab + g_ec * t_ec + g_st * t_cp) / g_sl_safe, t_slc)

    q_sl = np.maximum(g_sl, 0.0) * cw * (t_re - t_sl)
    return NetworkFlows(
        t_sl=t_sl, t_rec=t_rec, t_slc=t_slc, t_cp=t_cp, t_hp=t_hp,
        g_sl=g_sl, g_st=g_st, g_all=g_all, p_pmp=pump_power(g_all, params), q_sl=q_sl,
        t_ab=t_ab, t_ec=t_ec, t_stc=t_stc, t_sth=t_sth,
    )


def fc_voltage(x, params: PlantParams):
    """Напряжение стека ТЭ: Нернст минус активационные и омические потери."""
    x = as_array(x)
    fc, cal = params.fuel_cell, params.calibration
    current = np.maximum(x[I_F], 0.0)
    p_h2 = np.maximum(x[P_H2], PRESSURE_FLOOR)
    p_o2 = np.maximum(x[P_O2], PRESSURE_FLOOR)
    p_h2o = np.maximum(x[P_H2O], PRESSURE_FLOOR)
    nernst = cal.rt_2f * np.log(p_h2 * np.sqrt(p_o2) / p_h2o)
    activation = fc.tafel_b * np.log1p(current / fc.i_exchange)
    return fc.n_cells * (cal.e0 + nernst - activation - fc.r_ohm * current)


def battery_voltage(x, params: PlantParams):
    x = as_array(x)
    ba = params.battery
    i_cell = x[I_BA] / ba.n_pb
    return ba.n_sb * (ba.e_m0 + ba.k_em * x[C_SOC] - x[V_CAP] - ba.r0 * i_cell)


def compressor_power(x, u, z, params: PlantParams):
    x, u, z = as_array(x), as_array(u), as_array(z)
    ec, cal = params.chiller, params.calibration
    speed = u[3] / ec.n_nom
    g_r = ec.g_r_nom * speed * (1.0 + ec.k_gr_evap * (x[T_E] - ec.t_e_nom))
    lift = (x[T_C] - ec.t_c_nom) - (x[T_E] - ec.t_e_nom)
    work = cal.work_nom * (1.0 + ec.k_work_lift * lift)
    eta = ec.eta_nom * (1.0 - ec.k_eta_speed * (speed - 1.0) ** 2)
    return z[2] * g_r * work / eta


def unit_powers(x, u, z, w, params: PlantParams, net: NetworkFlows | None = None) -> UnitPowers:
    x, u, z, w = as_array(x), as_array(u), as_array(z), as_array(w)
    if net is None:
        net = water_network(u, z, x, params)
    cw = params.network.c_w
    return UnitPowers(
        p_pv=pv_power(w, params),
        p_fc=z[0] * fc_voltage(x, params) * np.maximum(x[I_F], 0.0) / 1000.0,
        p_mt=z[1] * (params.microturbine.p_nom + x[P_MTF]),
        p_ba=battery_voltage(x, params) * x[I_BA] / 1000.0,
        p_cp=compressor_power(x, u, z, params),
        p_pmp=net.p_pmp,
        q_ab=u[2] * cw * (net.t_rec - net.t_ab),
        q_ec=u[4] * cw * (net.t_rec - net.t_ec),
        q_st=net.g_st * cw * (net.t_hp - net.t_cp),
        q_sl=net.q_sl,
    )


def outputs(x, u, z, w, params: PlantParams) -> np.ndarray:
    """y = [P_sl, t_br]."""
    x, w = as_array(x), as_array(w)
    pw = unit_powers(x, u, z, w, params)
    p_sl = pw.p_pv + pw.p_fc + pw.p_mt + pw.p_ba - pw.p_cp - pw.p_pmp - w[2]
    p_sl, t_br = np.broadcast_arrays(p_sl, x[T_BR])
    return np.stack([p_sl, t_br])


# ==============================
# Векторное поле
# ==============================

def derivatives(x, u, z, w, params: PlantParams) -> np.ndarray:
    x, u, z, w = as_array(x), as_array(u), as_array(z), as_array(w)
    tau = params.tau
    cal = params.calibration
    fc, mt, ab, ec = params.fuel_cell, params.microturbine, params.absorption, params.chiller
    ba, st, bld = params.battery, params.storage, params.building
    cw = params.network.c_w
    t_a, q_o = w[0], w[3]
    net = water_network(u, z, x, params)

    def lag(i, target):
        return (target - x[i]) / tau[i]

    # топливный элемент
    flow_ratio = x[G_H2] / fc.g_h2_nom
    current_ratio = x[I_F] / fc.i_nom
    i_f_target = (
        fc.i_nom * flow_ratio
        * (1.0 + fc.k_current_pressure * (x[P_H2] / fc.p_h2_nom - 1.0))
        * (1.0 - fc.k_current_vcap * x[V_CAP])
    )
    d_i_f = lag(I_F, i_f_target)
    d_g_h2 = lag(G_H2, fc.g_h2_nom * u[0] / fc.g_ff_nom)
    d_p_o2 = lag(P_O2, fc.p_o2_nom * (1.0 + fc.k_po2_flow * (flow_ratio - 1.0)
                                      - fc.k_po2_current * (current_ratio - 1.0)))
    d_p_h2o = lag(P_H2O, fc.p_h2o_nom * (1.0 + fc.k_ph2o_current * (current_ratio - 1.0)))
    d_p_h2 = lag(P_H2, fc.p_h2_nom * (1.0 + fc.k_ph2_flow * (flow_ratio - 1.0)
                                      - fc.k_ph2_current * (current_ratio - 1.0)))

    # микротурбина и абсорбционная машина
    d_p_mtf = lag(P_MTF, mt.p_nom * (u[1] / mt.g_fm_nom - 1.0))
    d_t_abf = lag(T_ABF, -ab.gain_exhaust * x[P_MTF])
    d_t_abw = lag(T_ABW, ab.gain_flow * (u[2] / cal.g_ab_nom - 1.0) - ab.gain_flow_power * x[P_MTF])
    d_t_abt = lag(T_ABT, ab.gain_return * (net.t_rec - params.network.t_return_nom)
                  - ab.gain_return_power * x[P_MTF])

    # электрический чиллер: конденсатор и испаритель
    speed = u[3] / ec.n_nom
    z_ec = z[2]
    d_t_c = lag(T_C, x[T_CS] + z_ec * (cal.rise_cond * speed + ec.cross_cond * (x[T_E] - ec.t_e_nom)))
    d_t_cs = lag(T_CS, x[T_C] + cal.theta_cond * (x[T_CWM] - x[T_C]))
    d_t_cwm = lag(T_CWM, t_a + cal.theta_water * (x[T_CS] - t_a))
    d_t_e = lag(T_E, x[T_ES] + z_ec * (-cal.drop_evap * speed + ec.cross_evap * (x[T_C] - ec.t_c_nom)))
    d_t_es = lag(T_ES, x[T_E] + cal.theta_evap * (x[T_EWM] - x[T_E]))
    g2 = 2.0 * u[4] * cw
    d_t_ewm = lag(T_EWM, (g2 * net.t_rec + cal.ua_evap * x[T_ES]) / (g2 + cal.ua_evap))

    # аккумуляторная батарея
    v_oc = ba.n_sb * (ba.e_m0 + ba.k_em * x[C_SOC] - x[V_CAP])
    i_ba_target = 1000.0 * u[6] / v_oc - ba.k_fc_bus * z[0] * (x[I_F] - fc.i_nom)
    d_v_cap = lag(V_CAP, ba.r1 * x[I_BA] / ba.n_pb)
    d_soc = -x[I_BA] / (3600.0 * ba.q_ah)
    d_i_ba = lag(I_BA, i_ba_target)

    # аккумулятор холода, G_st > 0 — разряд
    d_sot = -net.g_st / st.m_tot
    d_stc = -net.g_st * cw * net.t_cp / 1000.0
    d_sth = net.g_st * cw * net.t_hp / 1000.0

    # фанкойл и здание
    g_sl = np.maximum(net.g_sl, FLOW_EPS)
    effectiveness = 1.0 - np.exp(-cal.ua_fcu / (g_sl * cw))
    t_re_target = net.t_sl + effectiveness * (x[T_BR] - net.t_sl)
    d_t_re = (t_re_target - x[T_RE]) / bld.tau_fcu
    d_t_br = (bld.u_br * (t_a - x[T_BR]) - net.q_sl + q_o) / bld.c_br

    rows = [
        d_i_f, d_g_h2, d_p_o2, d_p_h2o, d_p_h2,
        d_p_mtf, d_t_abf, d_t_abw, d_t_abt,
        d_t_c, d_t_cs, d_t_cwm, d_t_e, d_t_es, d_t_ewm,
        d_v_cap, d_soc, d_i_ba,
        d_sot, d_stc, d_sth,
        d_t_re, d_t_br,
    ]
    return np.stack(np.broadcast_arrays(*rows)).astype(float)


# ==============================
# Интегрирование
# ==============================

def rk4_step(fun, x, h: float):
    """Один шаг классического Рунге-Кутты 4-го порядка."""
    k1 = fun(x)
    k2 = fun(x + 0.5 * h * k1)
    k3 = fun(x + 0.5 * h * k2)
    k4 = fun(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(x, u, z, w, dt: float, params: PlantParams, max_substep: float | None = None):
    """Интегрирует на dt с подшагами РК4 не длиннее max_substep; без проверки пределов."""
    x = as_array(x)
    u, z, w = as_array(u), as_array(z), as_array(w)
    max_substep = max_substep or params.max_substep
    n = max(1, math.ceil(dt / max_substep - 1e-12))
    h = dt / n

    def fun(s):
        return derivatives(s, u, z, w, params)

    for _ in range(n):
        x = rk4_step(fun, x, h)
    return x


def integrate_subset(rows, x, u, z, w, dt: float, params: PlantParams, max_substep: float | None = None):
    """
    Интегрирует только состояния rows; остальные компоненты x заморожены.
    Возвращает новые значения rows формы (len(rows),) или (len(rows), B).
    """
    rows = list(rows)
    x = as_array(x)
    u, z, w = as_array(u), as_array(z), as_array(w)
    max_substep = max_substep or params.max_substep
    n = max(1, math.ceil(dt / max_substep - 1e-12))
    h = dt / n
    frozen = x.copy()

    def fun(part):
        frozen[rows] = part
        return derivatives(frozen, u, z, w, params)[rows]

    part = x[rows]
    for _ in range(n):
        part = rk4_step(fun, part, h)
    return part


def check_envelope(x, params: PlantParams) -> None:
    x = as_array(x)
    if not np.all(np.isfinite(x)):
        raise IntegrationDiverged("state became non-finite")
    lo, hi = params.envelope.temperature
    temps = x[list(TEMPERATURE_STATES)]
    if np.any(temps < lo) or np.any(temps > hi):
        raise IntegrationDiverged(f"temperature state left [{lo}, {hi}] °C")
    cap = x[list(CAPACITY_STATES)]
    if np.any(cap < 0.0) or np.any(cap > 1.0):
        raise IntegrationDiverged("capacity state left [0, 1]")


def step(x, u, z, w, dt: float, params: PlantParams) -> np.ndarray:
    """x(τ+Δ) явным РК4; Δ не больше params.max_step."""
    if dt <= 0:
        raise ValueError("step size must be positive")
    if dt > params.max_step + 1e-12:
        raise ValueError(f"step size {dt} s exceeds max_step {params.max_step} s")
    x_next = integrate(x, u, z, w, dt, params)
    check_envelope(x_next, params)
    return x_next
