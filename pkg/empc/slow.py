"""
Медленный экономический MPC.

Медленные состояния интегрируются одним шагом РК4 на Δ_s, быстрые
заменены квазиравновесием: на каждой стадии f_f(x_s, x_f, u) = 0
входит равенством. Цель — слежение за заданием сети (J1), за уставкой
комфорта (J2), экономика (J3) и возврат накопителей к суточному
плану (J4). Та же задача служит верхним уровнем супервизорной схемы.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import ModelError, SolverError
from decomp.timescale import TimeScaleSplit
from empc.board import fit_length, shift
from empc.config import SlowEmpcConfig
from empc.forecast import Forecast
from empc.objectives import (
    Prices, big_m_relaxation, gated_bounds, input_range, rate_limits, sample_profit,
    state_bounds, state_scale,
)
from empc.shooting import ShootingProblem, StageLayout, StageTerms
from nlp.sqp import SolveStatus, solve
from plant.model import derivatives, integrate_subset, outputs
from plant.params import PlantParams
from plant.state import C_SOC, C_SOT, N_U, N_X, T_BR

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SlowPlan:
    """План на горизонте: x_seq — состояния в конце каждого интервала."""
    t0: float
    dt: float
    u_seq: np.ndarray
    x_seq: np.ndarray
    ysp: np.ndarray
    status: str
    iterations: int = 0
    objective: float = float("nan")
    breakdown: dict[str, float] = field(default_factory=dict)
    held: bool = False

    @property
    def u_applied(self) -> np.ndarray:
        return self.u_seq[0]

    def at(self, t: float, n: int, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """
        Опоры на более мелкой сетке с момента t: вход интервала, в который
        попадает начало быстрого шага, и состояние в конце этого интервала.
        """
        last = self.u_seq.shape[0] - 1
        starts = (t - self.t0 + dt * np.arange(n)) / self.dt
        ends = starts + dt / self.dt
        iu = np.clip(np.floor(starts + 1e-9).astype(int), 0, last)
        ix = np.clip(np.ceil(ends - 1e-9).astype(int) - 1, 0, last)
        return self.u_seq[iu].copy(), self.x_seq[ix].copy()


def stage_arrays(forecast: Forecast, n: int):
    """Данные прогноза в форме (q, N, 1) для стадийных функций."""
    w = forecast.w[:n].T[:, :, None]
    z = forecast.z[:n].T[:, :, None]
    p_se = np.broadcast_to(np.asarray(forecast.prices.p_se, dtype=float), (forecast.horizon,))[:n]
    prices = Prices(p_mg=forecast.prices.p_mg, p_se=p_se[:, None], p_f=forecast.prices.p_f,
                    cm_factor=forecast.prices.cm_factor, pn_factor=forecast.prices.pn_factor)
    return w, z, prices


def stage_relaxation(forecast: Forecast, n: int, params: PlantParams, big_m: float) -> np.ndarray:
    """V по стадиям, (7, N, 1): z предыдущей стадии для k = 0 — z_prev."""
    z_before = np.vstack([forecast.z_prev[None], forecast.z[:n - 1]])
    return big_m_relaxation(forecast.z[:n], z_before, params, big_m).T[:, :, None]


def build_slow_problem(
    x: np.ndarray,
    u_prev: np.ndarray,
    forecast: Forecast,
    params: PlantParams,
    cfg: SlowEmpcConfig,
    split: TimeScaleSplit,
    previous: SlowPlan | None = None,
) -> ShootingProblem:
    n, dt = cfg.horizon, cfg.dt
    if forecast.horizon < n:
        raise ValueError(f"forecast covers {forecast.horizon} intervals, slow horizon needs {n}")
    slow, fast = list(split.slow_states), list(split.fast_states)
    layout = StageLayout(u=N_U, xs=len(slow), xf=len(fast), ysp=1)

    w, z, prices = stage_arrays(forecast, n)
    y_b, xi = forecast.y_b[:n, None], forecast.xi[:n, None]
    target = forecast.target()[:n, None]
    x_dd = forecast.x_dd[:n].T[:, :, None]
    slack = rate_limits(dt, params)[:, None, None] + stage_relaxation(forecast, n, params, cfg.big_m)
    rng = input_range(params)[:, None, None]
    sx = state_scale(params)
    tau = params.tau
    a1, a2, a3 = cfg.alpha
    r_st = np.sqrt(np.asarray(cfg.r_storage, dtype=float))[:, None, None]

    def stage(cur: dict, prev: dict) -> StageTerms:
        u = cur["u"]
        batch = u.shape[2]
        x_start = np.empty((N_X, n, batch))
        x_start[slow] = prev["xs"]
        x_start[fast] = cur["xf"]
        predicted = integrate_subset(slow, x_start, u, z, w, dt, params, max_substep=cfg.substep)
        x_end = x_start
        x_end[slow] = cur["xs"]
        f = derivatives(x_end, u, z, w, params)
        eq = np.concatenate([
            (cur["xs"] - predicted) / sx[slow][:, None, None],
            f[fast] * (tau[fast] / sx[fast])[:, None, None],
        ])
        y1, t_br = outputs(x_end, u, z, w, params)
        residuals = np.concatenate([
            np.sqrt(a1) * (y1 - target)[None],
            np.sqrt(a2) * (t_br - cur["ysp"][0])[None],
            r_st * (x_end[[C_SOC, C_SOT]] - x_dd),
        ])
        profit = sample_profit(y1, w[2], u[0] + u[1], y_b, xi, prices, dt)
        du = u - prev["u"]
        ineq = np.concatenate([(du - slack) / rng, (-du - slack) / rng])
        return StageTerms(
            residuals=residuals,
            cost=-a3 * np.broadcast_to(profit, (n, batch)),
            eq=eq,
            ineq=ineq,
            groups={"J1": slice(0, 1), "J2": slice(1, 2), "J4": slice(2, 4)},
        )

    x_lo, x_hi = state_bounds(params)
    u_lo, u_hi = gated_bounds(forecast.z[:n], params)
    band = forecast.band[:n]
    lb = layout.pack(u=u_lo, xs=np.tile(x_lo[slow], (n, 1)), xf=np.tile(x_lo[fast], (n, 1)), ysp=band[:, 0])
    ub = layout.pack(u=u_hi, xs=np.tile(x_hi[slow], (n, 1)), xf=np.tile(x_hi[fast], (n, 1)), ysp=band[:, 1])
    scale = layout.pack(u=np.tile(input_range(params), (n, 1)), xs=np.tile(sx[slow], (n, 1)),
                        xf=np.tile(sx[fast], (n, 1)), ysp=np.full(n, sx[T_BR]))

    if previous is not None:
        u_guess = fit_length(shift(previous.u_seq), n)
        x_guess = fit_length(shift(previous.x_seq), n)
        ysp_guess = fit_length(shift(previous.ysp), n)
    else:
        u_guess = np.tile(u_prev, (n, 1))
        x_guess = np.tile(x, (n, 1))
        ysp_guess = np.clip(np.full(n, x[T_BR]), band[:, 0], band[:, 1])
    guess = layout.pack(u=u_guess, xs=x_guess[:, slow], xf=x_guess[:, fast], ysp=ysp_guess)

    return ShootingProblem(
        layout=layout, horizon=n, stage_fn=stage,
        initial={"u": u_prev, "xs": x[slow]},
        lb=lb, ub=ub, scale=scale, guess=guess,
    )


def hold_plan(t: float, x: np.ndarray, u_prev: np.ndarray, forecast: Forecast, cfg: SlowEmpcConfig,
              previous: SlowPlan | None, status: str) -> SlowPlan:
    """План удержания: предыдущий вход и сдвинутая прежняя траектория."""
    n = cfg.horizon
    if previous is not None:
        x_seq = fit_length(shift(previous.x_seq), n)
        ysp = fit_length(shift(previous.ysp), n)
    else:
        x_seq = np.tile(x, (n, 1))
        ysp = np.clip(np.full(n, x[T_BR]), forecast.band[:n, 0], forecast.band[:n, 1])
    return SlowPlan(t0=t, dt=cfg.dt, u_seq=np.tile(u_prev, (n, 1)), x_seq=x_seq, ysp=ysp,
                    status=status, held=True)


def accept(status: SolveStatus, violation: float, feasibility_tol: float) -> bool:
    return status is SolveStatus.CONVERGED or (
        status in (SolveStatus.ITER_LIMIT, SolveStatus.STALLED) and violation <= feasibility_tol
    )


def slow_empc_step(
    t: float,
    x: np.ndarray,
    u_prev: np.ndarray,
    forecast: Forecast,
    params: PlantParams,
    cfg: SlowEmpcConfig,
    split: TimeScaleSplit,
    previous: SlowPlan | None = None,
) -> SlowPlan:
    """
    Один медленный такт. Если решение не принято, остаётся прежний
    вход: регулятор не прерывает прогон, такт помечается held.
    """
    x, u_prev = np.asarray(x, dtype=float), np.asarray(u_prev, dtype=float)
    try:
        problem = build_slow_problem(x, u_prev, forecast, params, cfg, split, previous)
        sol = solve(problem.nlp(), settings=cfg.solver.sqp())
    except (ModelError, SolverError, np.linalg.LinAlgError) as exc:
        logger.warning("Медленный EMPC, t=%.0f с: задача не решена (%s), вход удержан", t, exc)
        return hold_plan(t, x, u_prev, forecast, cfg, previous, status=type(exc).__name__)

    if not accept(sol.status, sol.violation, cfg.solver.feasibility_tol):
        logger.warning("Медленный EMPC, t=%.0f с: %s, нарушение %.2e, вход удержан",
                       t, sol.status.value, sol.violation)
        return hold_plan(t, x, u_prev, forecast, cfg, previous, status=sol.status.value)

    fields = problem.unpack(sol.x)
    slow, fast = list(split.slow_states), list(split.fast_states)
    x_seq = np.empty((cfg.horizon, N_X))
    x_seq[:, slow] = fields["xs"]
    x_seq[:, fast] = fields["xf"]
    parts = problem.breakdown(sol.x)
    breakdown = {"J1": parts["J1"], "J2": parts["J2"], "J3": parts["other"], "J4": parts["J4"]}
    logger.debug("Медленный EMPC, t=%.0f с: %s за %d итераций, J=%.4e",
                 t, sol.status.value, sol.iterations, sol.objective)
    return SlowPlan(
        t0=t, dt=cfg.dt, u_seq=fields["u"], x_seq=x_seq, ysp=fields["ysp"][:, 0],
        status=sol.status.value, iterations=sol.iterations, objective=sol.objective,
        breakdown=breakdown,
    )
