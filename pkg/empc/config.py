"""
Настройки регуляторов: медленный EMPC, быстрые агенты и
супервизорная схема сравнения. Значения по умолчанию — поставляемая
настройка; в сценарии их можно переопределить секцией `controller`.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field, model_validator

from nlp.sqp import SqpSettings


class _Settings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class SolverSettings(_Settings):
    tol: float = Field(1e-5, gt=0)
    max_iter: int = Field(40, ge=1)
    # решение с IterLimit принимается, если нарушение ограничений не выше
    feasibility_tol: float = Field(1e-4, gt=0)

    def sqp(self) -> SqpSettings:
        return SqpSettings(tol=self.tol, max_iter=self.max_iter)


class SlowEmpcConfig(_Settings):
    dt: float = Field(60.0, gt=0)
    horizon: int = Field(12, ge=1)
    # α1 — 1/кВт², α2 — 1/°C², α3 — 1/CAD
    alpha: tuple[float, float, float] = (0.1, 10.0, 100.0)
    # R_s для C_soc и C_sot
    r_storage: tuple[float, float] = (100.0, 100.0)
    # C_n в долях диапазона входа
    big_m: float = Field(10.0, gt=0)
    substep: float = Field(60.0, gt=0)
    solver: SolverSettings = Field(default_factory=SolverSettings)

    @model_validator(mode="after")
    def _nonnegative(self) -> "SlowEmpcConfig":
        if min(self.alpha) < 0 or min(self.r_storage) < 0:
            raise ValueError("slow weights must be nonnegative")
        return self


class FastEmpcConfig(_Settings):
    dt: float = Field(5.0, gt=0)
    horizons: tuple[int, int, int] = (10, 12, 10)
    # α1 — слежение за мощностью, 1/кВт²; α2 — экономика, 1/CAD
    alpha: tuple[float, float] = (0.1, 100.0)
    # R1 — близость к опорам медленного слоя, R2 — штраф невязки ε,
    # обе в масштабированных переменных
    r1: float = Field(0.1, ge=0)
    r2: float = Field(10.0, ge=0)
    # ширины окрестностей Δu_s, Δu_c, Δu_p в долях диапазона входа
    width_s: float = Field(0.1, ge=0)
    width_c: float = Field(0.1, ge=0)
    width_p: float = Field(0.1, ge=0)
    big_m: float = Field(10.0, gt=0)
    c_max: int = Field(12, ge=1)
    psi: float = Field(0.05, gt=0)
    substep: float = Field(1.0, gt=0)
    solver: SolverSettings = Field(default_factory=SolverSettings)

    @model_validator(mode="after")
    def _horizons(self) -> "FastEmpcConfig":
        if min(self.horizons) < 1:
            raise ValueError("fast horizons must be at least 1")
        if min(self.alpha) < 0:
            raise ValueError("fast weights must be nonnegative")
        return self

    def horizon(self, number: int) -> int:
        return self.horizons[number - 1]


class SupervisoryConfig(_Settings):
    dt_high: float = Field(60.0, gt=0)
    horizon_high: int = Field(12, ge=1)
    dt_low: float = Field(5.0, gt=0)
    # горизонт локального MPC: long — если в подсистеме микротурбина
    horizon_short: int = Field(10, ge=1)
    horizon_long: int = Field(12, ge=1)
    q_state: float = Field(1.0, ge=0)
    r_input: float = Field(1.0, ge=0)
    r_rate: float = Field(0.1, ge=0)
    big_m: float = Field(10.0, gt=0)
    substep: float = Field(1.0, gt=0)
    solver: SolverSettings = Field(default_factory=SolverSettings)

    def high_level(self, slow: SlowEmpcConfig) -> SlowEmpcConfig:
        """Верхний уровень — задача медленного слоя на своей сетке."""
        return slow.model_copy(update={"dt": self.dt_high, "horizon": self.horizon_high})


class ControllerSettings(_Settings):
    slow: SlowEmpcConfig = Field(default_factory=SlowEmpcConfig)
    fast: FastEmpcConfig = Field(default_factory=FastEmpcConfig)
    supervisory: SupervisoryConfig = Field(default_factory=SupervisoryConfig)

    @model_validator(mode="after")
    def _cadence(self) -> "ControllerSettings":
        for slow, fast in ((self.slow.dt, self.fast.dt), (self.supervisory.dt_high, self.supervisory.dt_low)):
            ratio = slow / fast
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise ValueError(f"slow sampling time {slow} s must be a multiple of fast {fast} s")
        return self

    @property
    def slow_every(self) -> int:
        """Через сколько быстрых тактов обновляется медленный слой."""
        return int(round(self.slow.dt / self.fast.dt))

    @property
    def high_every(self) -> int:
        return int(round(self.supervisory.dt_high / self.supervisory.dt_low))
