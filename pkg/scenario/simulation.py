"""
Прогон замкнутого контура: установка с шагом быстрого такта и
выбранный регулятор.

Каждый такт: регулятор получает измерение x(k) и прежний вход,
вход проецируется на коробку, гейтинг и ограничение скорости,
установка делает шаг РК4 при реальных условиях ω(k).
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass
from pathlib import Path

from core.exceptions import DecompositionError, GridsynError
from decomp.pipeline import DecompositionSettings, decompose
from decomp.subsystems import SubsystemSpec
from empc.controllers import make_controller
from empc.objectives import project_input
from plant.model import outputs, step
from plant.params import PlantParams
from scenario.data import ScenarioData, build_scenario
from scenario.evaluation import EvalReport, ScenarioLog, evaluate
from scenario.spec import ScenarioSpec

logger = logging.getLogger(__name__)

PARTIAL_LOG = "scenario_log.partial.csv"


@dataclass
class RunResult:
    spec: ScenarioSpec
    data: ScenarioData
    log: ScenarioLog
    controller: object
    report: EvalReport

    def iteration_stats(self) -> dict:
        """Итерации быстрых агентов за такт и доля тактов без роста Σ_j J_fj."""
        frame = self.controller.log.fast_frame()
        if frame.empty:
            return {"min": 0, "mean": float("nan"), "max": 0, "monotone_share": float("nan"), "held": 0}
        its = frame["iterations"]
        return {
            "min": int(its.min()), "mean": float(its.mean()), "max": int(its.max()),
            "monotone_share": self.controller.log.monotone_share(),
            "held": self.controller.log.held_samples,
        }


class ClosedLoop:
    def __init__(self, data: ScenarioData, controller, params: PlantParams):
        self.data = data
        self.controller = controller
        self.params = params
        self.log = ScenarioLog(data.spec.settings.fast.dt)

    async def run(self) -> ScenarioLog:
        spec, params = self.data.spec, self.params
        dt = spec.settings.fast.dt
        big_m = spec.settings.fast.big_m
        x, u_prev, z_prev = self.data.initial_condition(params)
        for k in range(spec.samples):
            t = spec.t0 + k * dt
            z, w = self.data.z_at(t), self.data.w_at(t)
            action = await self.controller.act(t, x, u_prev)
            u = project_input(action.u, u_prev, z, z_prev, self.controller.periods, params, big_m)
            y = outputs(x, u, z, w, params)
            self.log.record(
                t, x, u, z, w, y,
                y_b=float(self.data.schedule.y_b_at(t)), xi=float(self.data.regulation.at(t)),
                band=spec.comfort, p_se=float(self.data.prices.p_se_at(t)),
                x_dd=self.data.schedule.x_dd_at(t),
            )
            x = step(x, u, z, w, dt, params)
            u_prev, z_prev = u, z
            if (k + 1) % 60 == 0:
                logger.info("t = %.0f с: y1 = %.1f кВт (задание %.1f), t_br = %.2f °C",
                            t, y[0], self.log.rows[-1]["target"], y[1])
        return self.log

    def run_sync(self) -> ScenarioLog:
        return asyncio.run(self.run())


def scenario_subsystems(spec: ScenarioSpec, params: PlantParams) -> SubsystemSpec:
    result = decompose(params, DecompositionSettings(subsystems=spec.subsystems), seed=spec.seed)
    if result.subsystems is None:
        raise DecompositionError("decomposition produced no subsystems for the controller")
    return result.subsystems


async def simulate(
    spec: ScenarioSpec,
    params: PlantParams,
    data: ScenarioData | None = None,
    subsystems: SubsystemSpec | None = None,
    out_dir: str | Path | None = None,
) -> RunResult:
    """
    Прогон сценария выбранным регулятором. При ошибке журнал, набранный
    до неё, пишется в out_dir/scenario_log.partial.csv.
    """
    if data is None:
        data = await asyncio.to_thread(build_scenario, spec, params)
    if subsystems is None:
        subsystems = await asyncio.to_thread(scenario_subsystems, spec, params)
    controller = make_controller(spec.controller, params, spec.settings, subsystems, data)
    loop = ClosedLoop(data, controller, params)
    logger.info("Прогон %s: регулятор %s, %d тактов", spec.name, controller.name, spec.samples)
    try:
        await loop.run()
    except GridsynError:
        if out_dir is not None and len(loop.log):
            path = loop.log.write(Path(out_dir) / PARTIAL_LOG)
            logger.warning("Прогон прерван на такте %d, частичный журнал: %s", len(loop.log), path)
        raise
    report = evaluate(loop.log, data.prices, params)
    logger.info("Прогон %s/%s: E_p %.1f, E_t %.2f, E_e %.3f, E_glb %.2f",
                spec.name, controller.name, report.e_p, report.e_t, report.e_e, report.e_glb)
    return RunResult(spec=spec, data=data, log=loop.log, controller=controller, report=report)


def simulate_sync(spec: ScenarioSpec, params: PlantParams, **kwargs) -> RunResult:
    return asyncio.run(simulate(spec, params, **kwargs))

