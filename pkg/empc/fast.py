"""
Итеративный распределённый быстрый EMPC.

Агент j решает свою задачу при замороженных соседях: их состояния и
входы берутся с доски (итерация c−1), медленные значения постоянны до
следующего медленного такта. На каждой итерации все агенты решают
задачи параллельно, затем на барьере доска обновляется.
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import ModelError, SolverError
from decomp.subsystems import FastSubsystem, SubsystemSpec
from empc.board import AgentSolution, ExchangeBoard, fit_length
from empc.config import FastEmpcConfig
from empc.forecast import Forecast
from empc.objectives import (
    gated_bounds, input_range, rate_limits, sample_profit, state_bounds, state_scale,
)
from empc.shooting import ShootingProblem, StageLayout, StageTerms
from empc.slow import accept, stage_arrays, stage_relaxation
from nlp.sqp import solve
from plant.model import integrate_subset, outputs
from plant.params import PlantParams

logger = logging.getLogger(__name__)

# входы расхода топлива: ТЭ и микротурбина
FUEL_INPUTS = (0, 1)


@dataclass
class AgentSeed:
    """Последовательности агента с прошлого такта, сдвинутые на один шаг."""
    u_seq: np.ndarray
    x_seq: np.ndarray


@dataclass(frozen=True)
class AgentContext:
    """Всё, что агент знает на текущем такте, кроме доски."""
    sub: FastSubsystem
    subsystems: SubsystemSpec
    x: np.ndarray
    u_prev: np.ndarray
    forecast: Forecast
    seed: AgentSeed
    # прогноз входа с прошлого такта; None — ограничение между тактами не действует
    predicted: np.ndarray | None = None


def neighborhood_box(
    lo: np.ndarray,
    hi: np.ndarray,
    centers: list[tuple[np.ndarray, float]],
    fallback: np.ndarray,
    rng: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Пересечение коробки с окрестностями |u − center| <= width·range.
    Пустое пересечение стягивается в точку fallback, прижатую к коробке.
    """
    box_lo, box_hi = lo, hi
    lo, hi = lo.copy(), hi.copy()
    for center, width in centers:
        lo = np.maximum(lo, center - width * rng)
        hi = np.minimum(hi, center + width * rng)
    empty = lo > hi
    if np.any(empty):
        point = np.clip(fallback, box_lo, box_hi)
        lo = np.where(empty, point, lo)
        hi = np.where(empty, point, hi)
    return lo, hi


def build_agent_problem(
    ctx: AgentContext,
    board: ExchangeBoard,
    params: PlantParams,
    cfg: FastEmpcConfig,
) -> ShootingProblem:
    sub, subsystems = ctx.sub, ctx.subsystems
    n, dt = cfg.horizon(sub.number), cfg.dt
    own_x, own_u = list(sub.states), list(sub.inputs)
    layout = StageLayout(u=len(own_u), x=len(own_x), eps=len(own_u))

    forecast = ctx.forecast
    w, z, prices = stage_arrays(forecast, n)
    y_b, xi = forecast.y_b[:n, None], forecast.xi[:n, None]
    target = forecast.target()[:n, None]

    x_path = board.state_path(subsystems, n, own=sub.number)   # (23, n+1)
    u_path = board.input_path(subsystems, n)                    # (7, n)
    x_start_frozen = x_path[:, :-1, None]
    x_end_frozen = x_path[:, 1:, None]
    u_frozen = u_path[:, :, None]

    u_ref = fit_length(board.u_ref, n)[:, own_u]
    x_ref = fit_length(board.x_ref, n)[:, own_x]
    rng_all = input_range(params)
    rng = rng_all[own_u][:, None, None]
    sx = state_scale(params)
    slack = (rate_limits(dt, params)[:, None, None]
             + stage_relaxation(forecast, n, params, cfg.big_m))[own_u]
    a1, a2 = cfg.alpha
    r1, r2 = np.sqrt(cfg.r1), np.sqrt(cfg.r2)
    u_ref_t = u_ref.T[:, :, None]
    x_ref_t = x_ref.T[:, :, None]
    sx_own = sx[own_x][:, None, None]

    def stage(cur: dict, prev: dict) -> StageTerms:
        batch = cur["u"].shape[2]
        u = np.repeat(u_frozen, batch, axis=2)
        u[own_u] = cur["u"]
        x_start = np.repeat(x_start_frozen, batch, axis=2)
        x_start[own_x] = prev["x"]
        predicted = integrate_subset(own_x, x_start, u, z, w, dt, params, max_substep=cfg.substep)
        x_end = np.repeat(x_end_frozen, batch, axis=2)
        x_end[own_x] = cur["x"]
        y1 = outputs(x_end, u, z, w, params)[0]
        residuals = np.concatenate([
            np.sqrt(a1) * (y1 - target)[None],
            r1 * (cur["x"] - x_ref_t) / sx_own,
            r1 * (cur["u"] - u_ref_t) / rng,
            r2 * cur["eps"] / rng,
        ])
        fuel = u[FUEL_INPUTS[0]] + u[FUEL_INPUTS[1]]
        profit = sample_profit(y1, w[2], fuel, y_b, xi, prices, dt)
        du = cur["u"] - prev["u"]
        offset = (cur["u"] - u_ref_t + cur["eps"]) / rng
        ineq = np.concatenate([
            (du - slack) / rng,
            (-du - slack) / rng,
            offset - cfg.width_s,
            -offset - cfg.width_s,
        ])
        n_x = len(own_x)
        return StageTerms(
            residuals=residuals,
            cost=-a2 * np.broadcast_to(profit, (n, batch)),
            eq=(cur["x"] - predicted) / sx_own,
            ineq=ineq,
            groups={"power": slice(0, 1), "reference": slice(1, 1 + n_x + len(own_u)),
                    "slack": slice(1 + n_x + len(own_u), 1 + n_x + 2 * len(own_u))},
        )

    u_lo, u_hi = gated_bounds(forecast.z[:n], params)
    u_lo, u_hi = u_lo[:, own_u], u_hi[:, own_u]
    previous = fit_length(board.u_seq.get(sub.number, ctx.seed.u_seq), n)
    centers = []
    if board.iteration >= 1 and sub.number in board.u_seq:
        centers.append((previous, cfg.width_c))
    if ctx.predicted is not None:
        centers.append((fit_length(ctx.predicted, n), cfg.width_p))
    u_lo, u_hi = neighborhood_box(u_lo, u_hi, centers, previous, rng_all[own_u])

    x_lo, x_hi = state_bounds(params)
    eps_bound = np.tile(rng_all[own_u], (n, 1))
    lb = layout.pack(u=u_lo, x=np.tile(x_lo[own_x], (n, 1)), eps=-eps_bound)
    ub = layout.pack(u=u_hi, x=np.tile(x_hi[own_x], (n, 1)), eps=eps_bound)
    scale = layout.pack(u=np.tile(rng_all[own_u], (n, 1)), x=np.tile(sx[own_x], (n, 1)),
                        eps=np.tile(rng_all[own_u], (n, 1)))
    guess = layout.pack(u=previous, x=fit_length(board.x_seq.get(sub.number, ctx.seed.x_seq), n),
                        eps=np.zeros((n, len(own_u))))
    return ShootingProblem(
        layout=layout, horizon=n, stage_fn=stage,
        initial={"u": ctx.u_prev[own_u], "x": ctx.x[own_x]},
        lb=lb, ub=ub, scale=scale, guess=guess,
    )


def fast_agent_solve(
    ctx: AgentContext,
    board: ExchangeBoard,
    params: PlantParams,
    cfg: FastEmpcConfig,
) -> AgentSolution:
    """
    Задача агента при замороженных соседях. Если решение не принято,
    агент повторяет сдвинутое решение прошлого такта.
    """
    sub = ctx.sub
    n = cfg.horizon(sub.number)
    try:
        problem = build_agent_problem(ctx, board, params, cfg)
        sol = solve(problem.nlp(), settings=cfg.solver.sqp())
    except (ModelError, SolverError, np.linalg.LinAlgError) as exc:
        logger.warning("Агент %d: задача не решена (%s), повтор прошлого решения", sub.number, exc)
        return _seed_solution(ctx, n, type(exc).__name__)

    if not accept(sol.status, sol.violation, cfg.solver.feasibility_tol):
        logger.warning("Агент %d: %s, нарушение %.2e, повтор прошлого решения",
                       sub.number, sol.status.value, sol.violation)
        return _seed_solution(ctx, n, sol.status.value, problem)

    fields = problem.unpack(sol.x)
    return AgentSolution(
        number=sub.number, u_seq=fields["u"], x_seq=fields["x"], objective=sol.objective,
        slack=fields["eps"], status=sol.status.value, iterations=sol.iterations,
        breakdown=problem.breakdown(sol.x),
    )


def _seed_solution(ctx: AgentContext, n: int, status: str, problem: ShootingProblem | None = None) -> AgentSolution:
    u_seq = fit_length(ctx.seed.u_seq, n)
    x_seq = fit_length(ctx.seed.x_seq, n)
    objective = float("nan")
    if problem is not None:
        v = (problem.layout.pack(u=u_seq, x=x_seq, eps=np.zeros_like(u_seq)) / problem.scale).reshape(-1)
        objective = problem.objective(v)
    return AgentSolution(
        number=ctx.sub.number, u_seq=u_seq, x_seq=x_seq, objective=objective,
        slack=np.zeros_like(u_seq), status=status, held=True,
    )


# ==============================
# Координация
# ==============================

@dataclass
class CoordinationResult:
    solutions: dict[int, AgentSolution]
    iterations: int
    history: list[dict[int, float]] = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        """Σ_j J_fj не растёт от итерации к итерации."""
        totals = [sum(h.values()) for h in self.history]
        return all(b <= a + 1e-9 * max(1.0, abs(a)) for a, b in zip(totals, totals[1:]))


def relative_change(current: float, previous: float | None) -> float:
    if previous is None or not np.isfinite(previous) or not np.isfinite(current):
        return float("inf")
    return abs(current - previous) / max(abs(previous), 1e-12)


async def coordinate_fast(
    contexts: list[AgentContext],
    board: ExchangeBoard,
    params: PlantParams,
    cfg: FastEmpcConfig,
) -> CoordinationResult:
    """
    Итерации до c_max или пока у всех агентов относительное изменение
    цели не превысит ψ. Решения одной итерации независимы и идут в
    потоках; доска пишется только после того, как собраны все.
    """
    previous: dict[int, float] = {}
    history: list[dict[int, float]] = []
    solutions: dict[int, AgentSolution] = {}
    iterations = 0
    for c in range(1, cfg.c_max + 1):
        results = await asyncio.gather(*(
            asyncio.to_thread(fast_agent_solve, ctx, board, params, cfg) for ctx in contexts
        ))
        board.publish(results)
        iterations = c
        solutions = {sol.number: sol for sol in results}
        objectives = {sol.number: sol.objective for sol in results}
        history.append(objectives)
        changes = [relative_change(objectives[j], previous.get(j)) for j in objectives]
        logger.debug("Итерация %d: J = %s, изменения %s", c, objectives, changes)
        if all(change <= cfg.psi for change in changes):
            break
        previous = objectives
    return CoordinationResult(solutions=solutions, iterations=iterations, history=history)
