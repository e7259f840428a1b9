"""
Регуляторы замкнутого контура.

  p1 — распределённый EMPC: медленный агент и три быстрых;
  p2, p3, p4 — супервизорная схема с группировками a, b, c.

act() — корутина: решения агентов одного такта идут в потоках.
act_sync() — обёртка для синхронного кода.
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass, field

import numpy as np

from decomp.subsystems import SubsystemSpec
from empc.board import ExchangeBoard, fit_length, shift
from empc.config import ControllerSettings
from empc.fast import AgentContext, AgentSeed, CoordinationResult, coordinate_fast
from empc.forecast import ForecastSource
from empc.log import ControllerLog
from empc.slow import SlowPlan, slow_empc_step
from empc.supervisory import PartitionMode, TrackingSolution, group_horizon, partition_groups, tracking_step
from plant.params import PlantParams
from plant.state import N_U

logger = logging.getLogger(__name__)

CONTROLLERS = ("p1", "p2", "p3", "p4")
PARTITION_OF = {"p2": "a", "p3": "b", "p4": "c"}


@dataclass(frozen=True)
class ControlAction:
    u: np.ndarray
    z: np.ndarray
    iterations: int = 1
    info: dict = field(default_factory=dict)


class _Controller:
    name = ""

    def __init__(self, params: PlantParams, settings: ControllerSettings, subsystems: SubsystemSpec,
                 source: ForecastSource):
        self.params = params
        self.settings = settings
        self.subsystems = subsystems
        self.source = source
        self.log = ControllerLog()
        self.plan: SlowPlan | None = None
        self.samples = 0

    @property
    def dt(self) -> float:
        raise NotImplementedError

    @property
    def periods(self) -> np.ndarray:
        """Период обновления каждого входа, с."""
        return np.full(N_U, self.dt)

    async def act(self, t: float, x: np.ndarray, u_prev: np.ndarray) -> ControlAction:
        raise NotImplementedError

    def act_sync(self, t: float, x: np.ndarray, u_prev: np.ndarray) -> ControlAction:
        return asyncio.run(self.act(t, x, u_prev))


class DistributedEmpc(_Controller):
    name = "p1"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.x_slow: np.ndarray | None = None
        self.u_slow: np.ndarray | None = None
        self.seeds: dict[int, AgentSeed] = {}
        self.last_result: CoordinationResult | None = None

    @property
    def dt(self) -> float:
        return self.settings.fast.dt

    @property
    def periods(self) -> np.ndarray:
        periods = np.full(N_U, self.settings.fast.dt)
        periods[list(self.subsystems.split.slow_inputs)] = self.settings.slow.dt
        return periods

    async def act(self, t: float, x: np.ndarray, u_prev: np.ndarray) -> ControlAction:
        slow, fast = self.settings.slow, self.settings.fast
        x, u_prev = np.asarray(x, dtype=float), np.asarray(u_prev, dtype=float)

        # медленные значения меняются только на медленном такте
        if self.samples % self.settings.slow_every == 0:
            window = self.source.window(t, slow.horizon, slow.dt)
            self.plan = await asyncio.to_thread(
                slow_empc_step, t, x, u_prev, window, self.params, slow, self.subsystems.split, self.plan,
            )
            self.x_slow = x.copy()
            self.u_slow = self.plan.u_applied.copy()
            self.log.record_slow(t, self.plan)

        n_max = max(fast.horizons)
        forecast = self.source.window(t, n_max, fast.dt)
        u_ref, x_ref = self.plan.at(t, n_max, fast.dt)
        board = ExchangeBoard(x_now=x, u_ref=u_ref, x_ref=x_ref, x_slow=self.x_slow, u_slow=self.u_slow)
        z_changed = not np.array_equal(forecast.z[0], forecast.z_prev)

        contexts = []
        for sub in self.subsystems:
            n = fast.horizon(sub.number)
            seed = self.seeds.get(sub.number)
            warm = seed is not None
            if not warm:
                seed = AgentSeed(u_seq=np.tile(u_prev[list(sub.inputs)], (n, 1)),
                                 x_seq=np.tile(x[list(sub.states)], (n, 1)))
            board.u_seq[sub.number] = fit_length(seed.u_seq, n)
            board.x_seq[sub.number] = fit_length(seed.x_seq, n)
            contexts.append(AgentContext(
                sub=sub, subsystems=self.subsystems, x=x, u_prev=u_prev, forecast=forecast, seed=seed,
                predicted=seed.u_seq if warm and not z_changed else None,
            ))

        result = await coordinate_fast(contexts, board, self.params, fast)
        self.last_result = result

        u = self.u_slow.copy()
        for sub in self.subsystems:
            sol = result.solutions[sub.number]
            u[list(sub.inputs)] = sol.u_seq[0]
            self.seeds[sub.number] = AgentSeed(u_seq=shift(sol.u_seq), x_seq=shift(sol.x_seq))

        self.samples += 1
        agents = {f"f{j}": {"objective": s.objective, "status": s.status, "slack": s.slack, "held": s.held}
                  for j, s in result.solutions.items()}
        self.log.record_fast(t, u, result.iterations, agents, monotone=result.monotone)
        return ControlAction(u=u, z=forecast.z[0].copy(), iterations=result.iterations)


class SupervisoryMpc(_Controller):
    def __init__(self, mode: PartitionMode, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.mode = mode
        self.name = {v: k for k, v in PARTITION_OF.items()}[mode]
        self.groups = partition_groups(mode, self.subsystems)
        self.high = self.settings.supervisory.high_level(self.settings.slow)
        self.previous: dict[str, TrackingSolution] = {}

    @property
    def dt(self) -> float:
        return self.settings.supervisory.dt_low

    async def act(self, t: float, x: np.ndarray, u_prev: np.ndarray) -> ControlAction:
        """
        Верхний уровень раз в dt_high, затем локальные MPC слежения
        групп; входы вне групп берутся из опор.
        """
        cfg = self.settings.supervisory
        x, u_prev = np.asarray(x, dtype=float), np.asarray(u_prev, dtype=float)
        if self.samples % self.settings.high_every == 0:
            window = self.source.window(t, self.high.horizon, self.high.dt)
            self.plan = await asyncio.to_thread(
                slow_empc_step, t, x, u_prev, window, self.params, self.high, self.subsystems.split, self.plan,
            )
            self.log.record_slow(t, self.plan)

        n_max = max(cfg.horizon_long, cfg.horizon_short)
        forecast = self.source.window(t, n_max, cfg.dt_low)
        u_ref, x_ref = self.plan.at(t, n_max, cfg.dt_low)
        solutions = await asyncio.gather(*(
            asyncio.to_thread(
                tracking_step, group, x, u_prev,
                u_ref[:group_horizon(group, cfg)], x_ref[:group_horizon(group, cfg)],
                forecast, self.params, cfg, self.previous.get(group.name),
            )
            for group in self.groups
        ))

        u = u_ref[0].copy()
        for group, sol in zip(self.groups, solutions):
            u[list(group.inputs)] = sol.u_seq[0]
            self.previous[group.name] = sol

        self.samples += 1
        agents = {sol.name: {"objective": sol.objective, "status": sol.status, "held": sol.held}
                  for sol in solutions}
        self.log.record_fast(t, u, 1, agents)
        return ControlAction(u=u, z=forecast.z[0].copy())


def make_controller(name: str, params: PlantParams, settings: ControllerSettings, subsystems: SubsystemSpec,
                    source: ForecastSource) -> _Controller:
    if name == "p1":
        return DistributedEmpc(params, settings, subsystems, source)
    if name in PARTITION_OF:
        return SupervisoryMpc(PARTITION_OF[name], params, settings, subsystems, source)
    raise ValueError(f"unknown controller {name!r}, expected one of {', '.join(CONTROLLERS)}")
