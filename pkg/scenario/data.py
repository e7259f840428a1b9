"""
Сценарий в сборе: профили, цены, ξ и суточный план. ScenarioData
отдаёт регулятору прогноз на горизонте (протокол ForecastSource).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from empc.config import SolverSettings
from empc.forecast import Forecast
from plant.params import PlantParams
from scenario.prices import PriceBook
from scenario.profiles import Profile, generate_profiles
from scenario.regulation import RegulationSignal, generate_regulation
from scenario.schedule import Schedule, day_ahead, storage_state
from scenario.spec import ScenarioSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScenarioData:
    spec: ScenarioSpec
    profile: Profile
    prices: PriceBook
    regulation: RegulationSignal
    schedule: Schedule

    def z_at(self, t: float) -> np.ndarray:
        return self.schedule.z_at(t).copy()

    def w_at(self, t: float) -> np.ndarray:
        return self.profile.at(t)

    def window(self, t0: float, n: int, dt: float) -> Forecast:
        """
        Прогноз на n интервалов: условия и задания — на начало интервала,
        опоры накопителей — на конец. Реальные условия известны точно.
        """
        starts = t0 + dt * np.arange(n)
        z = self.schedule.z_at(starts)
        # до первого такта переключений не было
        z_prev = z[0] if t0 - dt < self.spec.t0 - 1e-9 else self.schedule.z_at(t0 - dt)
        return Forecast(
            w=np.array([self.profile.at(s) for s in starts]),
            z=z.astype(float),
            z_prev=np.asarray(z_prev, dtype=float),
            y_b=self.schedule.y_b_at(starts).astype(float),
            xi=np.asarray(self.regulation.at(starts), dtype=float),
            x_dd=self.schedule.x_dd_at(starts + dt),
            band=np.tile(np.asarray(self.spec.comfort, dtype=float), (n, 1)),
            prices=self.prices.prices(self.prices.p_se_at(starts)),
        )

    def with_regulation(self, spec: ScenarioSpec) -> "ScenarioData":
        """
        Тот же сценарий с другими настройками ξ: профили и суточный план
        от ёмкости регулирования не зависят и не пересчитываются.
        """
        return ScenarioData(spec=spec, profile=self.profile, prices=self.prices,
                            regulation=regulation_for(spec), schedule=self.schedule)

    def initial_condition(self, params: PlantParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """x0, u0, z0: установившийся режим часа старта с опорами накопителей."""
        t0 = self.spec.t0
        hour = int(self.schedule.hour_of(t0))
        soc, sot = self.schedule.x_dd_at(t0)
        x0 = storage_state(self.schedule.x[hour], soc, sot, params)
        return x0, self.schedule.u[hour].copy(), self.z_at(t0)


def regulation_for(spec: ScenarioSpec) -> RegulationSignal:
    # соседнее зерно: профили не зависят от настроек регулирования
    return generate_regulation(spec.regulation, spec.seed + 1)


def build_scenario(spec: ScenarioSpec, params: PlantParams, solver: SolverSettings | None = None) -> ScenarioData:
    profile = generate_profiles(spec.profiles, spec.seed)
    regulation = regulation_for(spec)
    prices = PriceBook.from_spec(spec.prices)
    schedule = day_ahead(profile, prices, spec.storage, params, spec.comfort, solver)
    logger.info("Сценарий %s: seed %d, ёмкость регулирования %.2f, старт %.1f ч, %d тактов",
                spec.name, spec.seed, spec.regulation.capacity, spec.start_hour, spec.samples)
    return ScenarioData(spec=spec, profile=profile, prices=prices, regulation=regulation, schedule=schedule)
