"""
Параметры установки (IES): записи по агрегатам, номинальная точка и
производные калибровочные константы.

Файл параметров — YAML с обязательной первой строкой `# gridsyn-params v1`.
Всё, что выводится из номинальной точки (E0 топливного элемента,
коэффициенты теплообменников, UA фанкойла), считается в `Calibration`,
а не хранится в файле: так номинальный режим воспроизводится всегда.
"""

from __future__ import annotations

import math
from functools import cached_property
from pathlib import Path

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.exceptions import ConfigError

PARAMS_HEADER = "# gridsyn-params v1"

FARADAY = 96485.0
GAS_CONSTANT = 8.314
GRAVITY = 9.81


class _Record(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# ==============================
# Агрегаты
# ==============================

class PvParams(_Record):
    n_pp: int = 20
    n_sp: int = 10
    i_mp_ref: float = 7.5
    v_mp_ref: float = 29.3333
    s_ref: float = 800.0
    t_ref: float = 30.0
    temp_coeff: float = 0.004


class FuelCellParams(_Record):
    n_cells: int = 500
    p_nom: float = 40.0
    i_nom: float = 100.0
    g_ff_nom: float = 0.0018
    g_h2_nom: float = 0.45
    p_o2_nom: float = 1.0
    p_h2o_nom: float = 0.5
    p_h2_nom: float = 1.2
    temp_k: float = 343.0
    tafel_b: float = 0.05
    i_exchange: float = 1.0
    r_ohm: float = 0.0008
    k_ph2_flow: float = 0.6
    k_ph2_current: float = 0.4
    k_po2_flow: float = 0.3
    k_po2_current: float = 0.2
    k_ph2o_current: float = 0.5
    k_current_pressure: float = 0.2
    k_current_vcap: float = 0.5


class MicroturbineParams(_Record):
    p_nom: float = 80.0
    g_fm_nom: float = 0.0054


class AbsorptionParams(_Record):
    t_nom: float = 7.0
    q_nom: float = 75.0
    gain_exhaust: float = 0.05
    gain_flow: float = 2.0
    gain_return: float = 0.6
    gain_flow_power: float = 0.01
    gain_return_power: float = 0.005


class ElectricChillerParams(_Record):
    q_nom: float = 50.0
    n_nom: float = 50.0
    p_cp_nom: float = 12.6
    t_c_nom: float = 40.0
    t_cs_nom: float = 37.0
    t_cwm_nom: float = 32.0
    t_e_nom: float = 2.0
    t_es_nom: float = 4.5
    t_ec_nom: float = 7.0
    g_r_nom: float = 0.3
    eta_nom: float = 0.7
    k_gr_evap: float = 0.03
    k_work_lift: float = 0.02
    k_eta_speed: float = 0.05
    cross_evap: float = 0.1
    cross_cond: float = 0.1


class BatteryParams(_Record):
    n_sb: int = 100
    n_pb: int = 2
    e_m0: float = 3.2
    k_em: float = 0.8
    r0: float = 0.002
    r1: float = 0.0015
    q_ah: float = 460.0
    k_fc_bus: float = 0.1
    p_max: float = 40.0


class StorageParams(_Record):
    m_tot: float = 18000.0
    g_stu_max: float = 1.0
    t_cold_nom: float = 7.0
    t_hot_nom: float = 12.0


class BuildingParams(_Record):
    u_br: float = 5.0
    c_br: float = 63260.0
    t_nom: float = 24.0
    comfort_min: float = 22.0
    comfort_max: float = 26.0
    tau_fcu: float = 25.0


class NetworkParams(_Record):
    c_w: float = 4.18
    t_return_nom: float = 12.0
    t_supply_nom: float = 7.0
    # квадратичная напорная характеристика насоса и парабола КПД
    head_0: float = 200.0
    head_2: float = 0.623
    eta_max: float = 0.75
    eta_curv: float = 0.01
    g_bep: float = 6.0


class NominalPoint(_Record):
    t_a: float = 30.0
    s_ra: float = 800.0
    p_d: float = 57.5
    q_o: float = 95.0
    z: tuple[int, int, int, int] = (1, 1, 1, 1)


class InputBounds(_Record):
    u_min: tuple[float, ...] = (0.0009, 0.0027, 1.5, 20.0, 1.0, 0.0, -40.0)
    u_max: tuple[float, ...] = (0.0027, 0.0068, 5.5, 80.0, 4.0, 1.0, 40.0)
    # допустимая скорость изменения входа, единиц в секунду
    rate: tuple[float, ...] = (0.0001, 0.0002, 0.2, 4.0, 0.2, 0.05, 8.0)

    @model_validator(mode="after")
    def _shapes(self) -> "InputBounds":
        for name in ("u_min", "u_max", "rate"):
            if len(getattr(self, name)) != 7:
                raise ValueError(f"{name} must have 7 entries")
        if any(lo > hi for lo, hi in zip(self.u_min, self.u_max)):
            raise ValueError("u_min must not exceed u_max")
        if any(lo < 0 for lo in self.u_min[:6]):
            raise ValueError("flow bounds must be nonnegative")
        return self


class Envelope(_Record):
    temperature: tuple[float, float] = (-20.0, 120.0)
    soc: tuple[float, float] = (0.1, 0.9)
    sot: tuple[float, float] = (0.05, 0.95)


# ==============================
# Производные константы
# ==============================

class Calibration:
    """Константы, выведенные из номинальной точки."""

    def __init__(self, p: "PlantParams"):
        net, ec, fc, bld = p.network, p.chiller, p.fuel_cell, p.building
        cw = net.c_w
        self.g_ab_nom = p.absorption.q_nom / (cw * (net.t_return_nom - p.absorption.t_nom))
        self.g_ec_nom = ec.q_nom / (cw * (net.t_return_nom - ec.t_ec_nom))
        self.g_sl_nom = self.g_ab_nom + self.g_ec_nom

        # испаритель: t_ewm — среднее по воде, UA_e из баланса средней температуры
        t_ewm = 0.5 * (net.t_return_nom + ec.t_ec_nom)
        self.t_ewm_nom = t_ewm
        self.ua_evap = 2.0 * self.g_ec_nom * cw * (net.t_return_nom - t_ewm) / (t_ewm - ec.t_es_nom)
        self.theta_evap = (ec.t_es_nom - ec.t_e_nom) / (t_ewm - ec.t_e_nom)
        self.drop_evap = ec.t_es_nom - ec.t_e_nom
        self.theta_cond = (ec.t_cs_nom - ec.t_c_nom) / (ec.t_cwm_nom - ec.t_c_nom)
        self.rise_cond = ec.t_c_nom - ec.t_cs_nom
        self.theta_water = (ec.t_cwm_nom - p.nominal.t_a) / (ec.t_cs_nom - p.nominal.t_a)
        self.work_nom = ec.p_cp_nom * ec.eta_nom / ec.g_r_nom

        # фанкойл: эффективность по номинальным температурам
        eff = (net.t_return_nom - net.t_supply_nom) / (bld.t_nom - net.t_supply_nom)
        self.ua_fcu = -math.log(1.0 - eff) * self.g_sl_nom * cw

        # топливный элемент: E0 из номинальной мощности
        self.rt_2f = GAS_CONSTANT * fc.temp_k / (2.0 * FARADAY)
        v_cell = fc.p_nom * 1000.0 / (fc.i_nom * fc.n_cells)
        nernst = self.rt_2f * math.log(fc.p_h2_nom * math.sqrt(fc.p_o2_nom) / fc.p_h2o_nom)
        self.e0 = v_cell - nernst + fc.tafel_b * math.log1p(fc.i_nom / fc.i_exchange) + fc.r_ohm * fc.i_nom

        ba = p.battery
        self.battery_kwh = ba.q_ah * ba.n_sb * (ba.e_m0 + 0.5 * ba.k_em) / 1000.0
        self.storage_mj_per_k = cw * p.storage.m_tot / 1000.0


# ==============================
# Полный набор параметров
# ==============================

class PlantParams(_Record):
    pv: PvParams = Field(default_factory=PvParams)
    fuel_cell: FuelCellParams = Field(default_factory=FuelCellParams)
    microturbine: MicroturbineParams = Field(default_factory=MicroturbineParams)
    absorption: AbsorptionParams = Field(default_factory=AbsorptionParams)
    chiller: ElectricChillerParams = Field(default_factory=ElectricChillerParams)
    battery: BatteryParams = Field(default_factory=BatteryParams)
    storage: StorageParams = Field(default_factory=StorageParams)
    building: BuildingParams = Field(default_factory=BuildingParams)
    network: NetworkParams = Field(default_factory=NetworkParams)
    nominal: NominalPoint = Field(default_factory=NominalPoint)
    bounds: InputBounds = Field(default_factory=InputBounds)
    envelope: Envelope = Field(default_factory=Envelope)
    # доминирующие постоянные времени состояний, с
    time_constants: tuple[float, ...] = (
        0.8, 5.0, 2.9, 78.0, 26.0, 20.0, 130.0, 80.0, 70.0, 1.2, 1.5, 23.3,
        1.2, 1.5, 19.6, 6.2, 14865.0, 0.8, 18000.0, 18000.0, 18000.0, 20.0, 12652.0,
    )
    max_step: float = 5.0
    max_substep: float = 1.0

    @model_validator(mode="after")
    def _all_positive(self) -> "PlantParams":
        if len(self.time_constants) != 23:
            raise ValueError("time_constants must have 23 entries")
        if any(t <= 0 for t in self.time_constants):
            raise ValueError("time_constants must be positive")
        skip = {"t_ref", "t_a", "t_nom", "t_e_nom", "t_ec_nom"}
        for group in ("pv", "fuel_cell", "microturbine", "absorption", "chiller",
                      "battery", "storage", "building", "network"):
            record = getattr(self, group)
            for name, value in record.model_dump().items():
                if name in skip or name.startswith("k_") or name.startswith("gain_"):
                    continue
                if isinstance(value, (int, float)) and value <= 0:
                    raise ValueError(f"{group}.{name} must be strictly positive")
        if self.max_substep <= 0 or self.max_step <= 0:
            raise ValueError("integration steps must be positive")
        return self

    @cached_property
    def calibration(self) -> Calibration:
        return Calibration(self)

    @property
    def tau(self) -> np.ndarray:
        return np.asarray(self.time_constants, dtype=float)

    @property
    def u_min(self) -> np.ndarray:
        return np.asarray(self.bounds.u_min, dtype=float)

    @property
    def u_max(self) -> np.ndarray:
        return np.asarray(self.bounds.u_max, dtype=float)

    @property
    def u_rate(self) -> np.ndarray:
        return np.asarray(self.bounds.rate, dtype=float)


def load_params(path: str | Path) -> PlantParams:
    """Читает и проверяет файл параметров."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read params file: {exc}", context=str(path)) from exc

    first = text.splitlines()[0].strip() if text else ""
    if first != PARAMS_HEADER:
        raise ConfigError(f"expected header {PARAMS_HEADER!r}, got {first!r}", context=f"{path}:1")

    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}", context=str(path)) from exc

    try:
        return PlantParams.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        key = ".".join(str(p) for p in err["loc"])
        raise ConfigError(f"{key}: {err['msg']}", context=str(path)) from exc
