"""
Векторы модели в пространстве состояний и их обозначения.

Порядок компонентов фиксирован: x(23), u(7), z(4), ω(4), y(2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STATE_SYMBOLS = (
    "I_f", "G_H2", "p_O2", "p_H2O", "p_H2",
    "P_mtf", "t_abf", "t_abw", "t_abt",
    "t_c", "t_cs", "t_cwm", "t_e", "t_es", "t_ewm",
    "v_cap", "C_soc", "I_ba",
    "C_sot", "C_stc", "C_sth",
    "t_re", "t_br",
)
INPUT_SYMBOLS = ("G_ff", "G_fm", "G_ab", "N_ec", "G_ec", "G_stu", "P_bar")
INTEGER_SYMBOLS = ("z_fc", "z_ma", "z_ec", "z_st")
DISTURBANCE_SYMBOLS = ("t_a", "S_ra", "P_d", "Q_o")
OUTPUT_SYMBOLS = ("P_sl", "t_br")

N_X = len(STATE_SYMBOLS)
N_U = len(INPUT_SYMBOLS)
N_Z = len(INTEGER_SYMBOLS)
N_D = len(DISTURBANCE_SYMBOLS)
N_Y = len(OUTPUT_SYMBOLS)

# индексы (с нуля) часто используемых состояний
I_F, G_H2, P_O2, P_H2O, P_H2 = 0, 1, 2, 3, 4
P_MTF, T_ABF, T_ABW, T_ABT = 5, 6, 7, 8
T_C, T_CS, T_CWM, T_E, T_ES, T_EWM = 9, 10, 11, 12, 13, 14
V_CAP, C_SOC, I_BA = 15, 16, 17
C_SOT, C_STC, C_STH = 18, 19, 20
T_RE, T_BR = 21, 22

TEMPERATURE_STATES = (T_C, T_CS, T_CWM, T_E, T_ES, T_EWM, T_RE, T_BR)
CAPACITY_STATES = (C_SOC, C_SOT)

# какой двоичный вход включает непрерывный вход (None — не гейтится)
INPUT_GATE = (0, 1, 1, 2, 2, None, None)
FLOW_INPUTS = (0, 1, 2, 3, 4, 5)

DEFAULT_TEMPERATURE_ENVELOPE = (-20.0, 120.0)


def as_array(value) -> np.ndarray:
    """Принимает запись или массив и отдаёт float-массив."""
    return np.asarray(getattr(value, "values", value), dtype=float)


def _vector(values, size: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.shape != (size,):
        raise ValueError(f"{name} must have exactly {size} components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PlantState:
    values: np.ndarray
    envelope: tuple[float, float] = DEFAULT_TEMPERATURE_ENVELOPE

    def __post_init__(self):
        x = _vector(self.values, N_X, "PlantState")
        object.__setattr__(self, "values", x)
        cap = x[list(CAPACITY_STATES)]
        if np.any(cap < 0.0) or np.any(cap > 1.0):
            raise ValueError("capacity states C_soc, C_sot must lie in [0, 1]")
        lo, hi = self.envelope
        temps = x[list(TEMPERATURE_STATES)]
        if np.any(temps < lo) or np.any(temps > hi):
            raise ValueError(f"temperature states must lie in [{lo}, {hi}]")

    def __getitem__(self, symbol: str) -> float:
        return float(self.values[STATE_SYMBOLS.index(symbol)])


@dataclass(frozen=True)
class ContinuousInput:
    values: np.ndarray
    u_min: np.ndarray | None = None
    u_max: np.ndarray | None = None

    def __post_init__(self):
        u = _vector(self.values, N_U, "ContinuousInput")
        object.__setattr__(self, "values", u)
        if np.any(u[list(FLOW_INPUTS)] < 0.0):
            raise ValueError("flow components must be nonnegative")
        if self.u_min is not None and np.any(u < np.asarray(self.u_min) - 1e-12):
            raise ValueError("input below u_min")
        if self.u_max is not None and np.any(u > np.asarray(self.u_max) + 1e-12):
            raise ValueError("input above u_max")


@dataclass(frozen=True)
class IntegerInput:
    values: np.ndarray

    def __post_init__(self):
        z = _vector(self.values, N_Z, "IntegerInput")
        if not np.all((z == 0.0) | (z == 1.0)):
            raise ValueError("integer inputs must be exactly 0 or 1")
        object.__setattr__(self, "values", z)


@dataclass(frozen=True)
class Disturbance:
    values: np.ndarray

    def __post_init__(self):
        w = _vector(self.values, N_D, "Disturbance")
        if w[1] < 0.0 or w[2] < 0.0:
            raise ValueError("S_ra and P_d must be nonnegative")
        object.__setattr__(self, "values", w)


@dataclass(frozen=True)
class Output:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _vector(self.values, N_Y, "Output"))

    @property
    def p_sl(self) -> float:
        return float(self.values[0])

    @property
    def t_br(self) -> float:
        return float(self.values[1])


@dataclass(frozen=True)
class NetworkFlows:
    t_sl: np.ndarray
    t_rec: np.ndarray
    t_slc: np.ndarray
    t_cp: np.ndarray
    t_hp: np.ndarray
    g_sl: np.ndarray
    g_st: np.ndarray
    g_all: np.ndarray
    p_pmp: np.ndarray
    q_sl: np.ndarray
    # промежуточные температуры, нужны для балансов
    t_ab: np.ndarray = field(repr=False, default=None)
    t_ec: np.ndarray = field(repr=False, default=None)
    t_stc: np.ndarray = field(repr=False, default=None)
    t_sth: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class UnitPowers:
    p_pv: np.ndarray
    p_fc: np.ndarray
    p_mt: np.ndarray
    p_ba: np.ndarray
    p_cp: np.ndarray
    p_pmp: np.ndarray
    q_ab: np.ndarray
    q_ec: np.ndarray
    q_st: np.ndarray
    q_sl: np.ndarray

    @property
    def generated(self):
        return self.p_pv + self.p_fc + self.p_mt + self.p_ba

    @property
    def consumed(self):
        return self.p_cp + self.p_pmp
