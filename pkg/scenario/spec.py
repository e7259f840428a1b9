"""
Файл сценария: профили внешних условий, цены, регулирование,
накопители и выбор регулятора.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.exceptions import ConfigError
from empc.config import ControllerSettings

DAY_SECONDS = 86400.0


class _Spec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# ==============================
# Формы суточных профилей
# ==============================

class Bump(_Spec):
    """Гауссов пик нагрузки: час центра, амплитуда, ширина в часах."""
    hour: float
    amplitude: float
    width: float = Field(gt=0)


class AmbientShape(_Spec):
    # синусоида с полкой у максимума
    t_min: float = 26.0
    t_max: float = 32.0
    peak_hour: float = 15.0
    plateau: float = Field(0.2, ge=0, lt=1)


class IrradianceShape(_Spec):
    peak: float = Field(800.0, ge=0)
    sunrise: float = 6.0
    sunset: float = 19.0

    @model_validator(mode="after")
    def _day(self) -> "IrradianceShape":
        if not 0 <= self.sunrise < self.sunset <= 24:
            raise ValueError("sunrise must precede sunset within the day")
        return self


class LoadShape(_Spec):
    base: float = Field(ge=0)
    bumps: tuple[Bump, ...] = ()


class ProfileShapes(_Spec):
    t_a: AmbientShape = Field(default_factory=AmbientShape)
    s_ra: IrradianceShape = Field(default_factory=IrradianceShape)
    p_d: LoadShape = LoadShape(base=40.0, bumps=(Bump(hour=12.0, amplitude=20.0, width=2.0),
                                                  Bump(hour=19.0, amplitude=30.0, width=2.5)))
    q_o: LoadShape = LoadShape(base=70.0, bumps=(Bump(hour=14.0, amplitude=30.0, width=3.0),))
    # отклонение реального профиля от суточного прогноза, доли
    sigma: float = Field(0.02, ge=0)
    clip: float = Field(0.06, ge=0)


# ==============================
# Цены, регулирование, накопители
# ==============================

class PriceSpec(_Spec):
    p_mg: float = Field(80.0, ge=0)
    p_f: float = Field(0.2, ge=0)
    # ступени цены продажи в сеть: [час начала, CAD/МВт·ч]
    p_se: tuple[tuple[float, float], ...] = (
        (0.0, 25.0), (7.0, 45.0), (10.0, 90.0), (13.0, 45.0), (17.0, 90.0), (21.0, 45.0), (23.0, 25.0),
    )
    cm_factor: float = Field(1.5, ge=0)
    pn_factor: float = Field(1.5, ge=0)

    @model_validator(mode="after")
    def _steps(self) -> "PriceSpec":
        hours = [h for h, _ in self.p_se]
        if not hours or hours[0] != 0.0 or hours != sorted(hours):
            raise ValueError("p_se steps must start at hour 0 and be sorted")
        if any(p < 0 for _, p in self.p_se):
            raise ValueError("p_se must be nonnegative")
        return self


class RegulationSpec(_Spec):
    capacity: float = Field(0.25, ge=0, le=1)
    # разброс суточного ξ в долях ёмкости и реального вокруг суточного
    sigma_day_ahead: float = Field(0.5, ge=0)
    sigma_real_time: float = Field(1.0 / 6.0, ge=0)
    # ступенчатый сигнал вместо случайного: ξ = step_value с момента step_at, с
    step_at: float | None = None
    step_value: float = 0.0


class StorageSpec(_Spec):
    soc0: float = Field(0.5, ge=0, le=1)
    sot0: float = Field(0.5, ge=0, le=1)
    battery_power: float = Field(10.0, ge=0)
    charge_flow: float = Field(0.2, ge=0)
    charge_hours: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 22, 23)
    # запас до пределов SOC/SOT при построении опор
    margin: float = Field(0.02, ge=0, lt=0.5)


class ScenarioSpec(_Spec):
    name: str = "desk"
    seed: int = 20210701
    start_hour: float = Field(12.0, ge=0, lt=24)
    duration: float = Field(3600.0, gt=0)
    controller: Literal["p1", "p2", "p3", "p4"] = "p1"
    subsystems: Literal["detected", "reference"] = "reference"
    comfort: tuple[float, float] = (22.0, 26.0)
    profiles: ProfileShapes = Field(default_factory=ProfileShapes)
    prices: PriceSpec = Field(default_factory=PriceSpec)
    regulation: RegulationSpec = Field(default_factory=RegulationSpec)
    storage: StorageSpec = Field(default_factory=StorageSpec)
    settings: ControllerSettings = Field(default_factory=ControllerSettings)

    @model_validator(mode="after")
    def _one_day(self) -> "ScenarioSpec":
        if self.comfort[0] >= self.comfort[1]:
            raise ValueError("comfort band must have lower < upper")
        if self.start_hour * 3600.0 + self.duration > DAY_SECONDS + 1e-9:
            raise ValueError("scenario must end within one day")
        ratio = self.duration / self.settings.fast.dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("duration must be a multiple of the fast sampling time")
        if self.settings.supervisory.dt_low != self.settings.fast.dt:
            raise ValueError("supervisory dt_low must equal the fast sampling time")
        return self

    @property
    def t0(self) -> float:
        return self.start_hour * 3600.0

    @property
    def samples(self) -> int:
        return int(round(self.duration / self.settings.fast.dt))

    def with_overrides(self, **values) -> "ScenarioSpec":
        """Значения флагов командной строки поверх файла; None пропускается."""
        update = {k: v for k, v in values.items() if v is not None}
        data = self.model_dump()
        capacity = update.pop("capacity", None)
        if capacity is not None:
            data["regulation"]["capacity"] = capacity
        data.update(update)
        try:
            return ScenarioSpec.model_validate(data)
        except ValidationError as exc:
            raise ConfigError(_first_error(exc)) from exc


def _first_error(exc: ValidationError) -> str:
    err = exc.errors()[0]
    key = ".".join(str(p) for p in err["loc"]) or "<root>"
    return f"{key}: {err['msg']}"


def load_scenario(path: str | Path) -> ScenarioSpec:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc}", context=str(path)) from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}", context=str(path)) from exc
    try:
        return ScenarioSpec.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_first_error(exc), context=str(path)) from exc
