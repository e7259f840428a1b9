"""
Супервизорная схема сравнения: верхний MPC (задача медленного слоя)
выдаёт опоры u^r, x^r, нижние децентрализованные MPC отслеживают их
по своим группам без обмена между собой.

Группировки:
  a — медленная подсистема и три быстрые из декомпозиции;
  b — по агрегатам;
  c — выработка электроэнергии и холодоснабжение.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np

from core.exceptions import ModelError, SolverError
from decomp.subsystems import SubsystemSpec
from empc.board import fit_length, shift
from empc.config import SupervisoryConfig
from empc.forecast import Forecast
from empc.objectives import gated_bounds, input_range, rate_limits, state_bounds, state_scale
from empc.shooting import ShootingProblem, StageLayout, StageTerms
from empc.slow import accept, stage_arrays, stage_relaxation
from nlp.sqp import solve
from plant.model import integrate_subset
from plant.params import PlantParams
from plant.state import P_MTF

logger = logging.getLogger(__name__)

PartitionMode = Literal["a", "b", "c"]

UNIT_GROUPS = (
    ("FC", range(0, 5), (0,)),
    ("MT+AB", range(5, 9), (1, 2)),
    ("EC", range(9, 15), (3, 4)),
    ("CS", range(18, 21), (5,)),
    ("BA", range(15, 18), (6,)),
)
ENERGY_GROUPS = (
    ("electricity", (*range(0, 6), *range(15, 18)), (0, 1, 6)),
    ("cooling", (*range(6, 15), *range(18, 23)), (2, 3, 4, 5)),
)


@dataclass(frozen=True)
class TrackingGroup:
    name: str
    states: tuple[int, ...]
    inputs: tuple[int, ...]

    @property
    def has_microturbine(self) -> bool:
        return P_MTF in self.states


def partition_groups(mode: PartitionMode, subsystems: SubsystemSpec) -> list[TrackingGroup]:
    if mode == "a":
        split = subsystems.split
        groups = [TrackingGroup("slow", tuple(split.slow_states), tuple(split.slow_inputs))]
        groups += [TrackingGroup(f"fast{sub.number}", sub.states, sub.inputs) for sub in subsystems]
        return groups
    table = {"b": UNIT_GROUPS, "c": ENERGY_GROUPS}.get(mode)
    if table is None:
        raise ValueError(f"unknown partition mode {mode!r}")
    return [TrackingGroup(name, tuple(states), tuple(inputs)) for name, states, inputs in table]


@dataclass(frozen=True)
class TrackingSolution:
    name: str
    u_seq: np.ndarray
    x_seq: np.ndarray
    objective: float
    status: str
    held: bool = False


def build_tracking_problem(
    group: TrackingGroup,
    x: np.ndarray,
    u_prev: np.ndarray,
    u_ref: np.ndarray,
    x_ref: np.ndarray,
    forecast: Forecast,
    params: PlantParams,
    cfg: SupervisoryConfig,
    guess: tuple[np.ndarray, np.ndarray] | None = None,
) -> ShootingProblem:
    """
    u_ref (N, 7), x_ref (N, 23) — опоры верхнего уровня; чужие входы
    равны опорам, чужие состояния заморожены на измерении.
    """
    n = u_ref.shape[0]
    dt = cfg.dt_low
    own_x, own_u = list(group.states), list(group.inputs)
    layout = StageLayout(u=len(own_u), x=len(own_x))
    w, z, _ = stage_arrays(forecast, n)

    rng = input_range(params)[own_u][:, None, None]
    sx = state_scale(params)[own_x][:, None, None]
    slack = (rate_limits(dt, params)[:, None, None]
             + stage_relaxation(forecast, n, params, cfg.big_m))[own_u]
    u_frozen = u_ref.T[:, :, None]
    x_frozen = np.repeat(x[:, None, None], n, axis=1)
    u_ref_own = u_ref[:, own_u].T[:, :, None]
    x_ref_own = x_ref[:, own_x].T[:, :, None]
    q, r, r_rate = np.sqrt(cfg.q_state), np.sqrt(cfg.r_input), np.sqrt(cfg.r_rate)

    def stage(cur: dict, prev: dict) -> StageTerms:
        batch = cur["u"].shape[2]
        u = np.repeat(u_frozen, batch, axis=2)
        u[own_u] = cur["u"]
        x_start = np.repeat(x_frozen, batch, axis=2)
        x_start[own_x] = prev["x"]
        predicted = integrate_subset(own_x, x_start, u, z, w, dt, params, max_substep=cfg.substep)
        du = cur["u"] - prev["u"]
        return StageTerms(
            residuals=np.concatenate([
                q * (cur["x"] - x_ref_own) / sx,
                r * (cur["u"] - u_ref_own) / rng,
                r_rate * du / rng,
            ]),
            cost=np.zeros((n, batch)),
            eq=(cur["x"] - predicted) / sx,
            ineq=np.concatenate([(du - slack) / rng, (-du - slack) / rng]),
        )

    u_lo, u_hi = gated_bounds(forecast.z[:n], params)
    x_lo, x_hi = state_bounds(params)
    rng_own = input_range(params)[own_u]
    s_own = state_scale(params)[own_x]
    if guess is None:
        guess = (np.tile(u_prev[own_u], (n, 1)), np.tile(x[own_x], (n, 1)))
    return ShootingProblem(
        layout=layout, horizon=n, stage_fn=stage,
        initial={"u": u_prev[own_u], "x": x[own_x]},
        lb=layout.pack(u=u_lo[:, own_u], x=np.tile(x_lo[own_x], (n, 1))),
        ub=layout.pack(u=u_hi[:, own_u], x=np.tile(x_hi[own_x], (n, 1))),
        scale=layout.pack(u=np.tile(rng_own, (n, 1)), x=np.tile(s_own, (n, 1))),
        guess=layout.pack(u=fit_length(guess[0], n), x=fit_length(guess[1], n)),
    )


def tracking_step(
    group: TrackingGroup,
    x: np.ndarray,
    u_prev: np.ndarray,
    u_ref: np.ndarray,
    x_ref: np.ndarray,
    forecast: Forecast,
    params: PlantParams,
    cfg: SupervisoryConfig,
    previous: TrackingSolution | None = None,
) -> TrackingSolution:
    """Локальный MPC слежения; при неудаче группа удерживает свои входы."""
    n = u_ref.shape[0]
    guess = None if previous is None else (shift(previous.u_seq), shift(previous.x_seq))
    try:
        problem = build_tracking_problem(group, x, u_prev, u_ref, x_ref, forecast, params, cfg, guess)
        sol = solve(problem.nlp(), settings=cfg.solver.sqp())
    except (ModelError, SolverError, np.linalg.LinAlgError) as exc:
        logger.warning("Группа %s: задача слежения не решена (%s), входы удержаны", group.name, exc)
        return _hold(group, x, u_prev, n, type(exc).__name__)
    if not accept(sol.status, sol.violation, cfg.solver.feasibility_tol):
        logger.warning("Группа %s: %s, входы удержаны", group.name, sol.status.value)
        return _hold(group, x, u_prev, n, sol.status.value)
    fields = problem.unpack(sol.x)
    return TrackingSolution(name=group.name, u_seq=fields["u"], x_seq=fields["x"],
                            objective=sol.objective, status=sol.status.value)


def _hold(group: TrackingGroup, x, u_prev, n: int, status: str) -> TrackingSolution:
    return TrackingSolution(
        name=group.name,
        u_seq=np.tile(u_prev[list(group.inputs)], (n, 1)),
        x_seq=np.tile(x[list(group.states)], (n, 1)),
        objective=float("nan"), status=status, held=True,
    )


def group_horizon(group: TrackingGroup, cfg: SupervisoryConfig) -> int:
    return cfg.horizon_long if group.has_microturbine else cfg.horizon_short
