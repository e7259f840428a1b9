"""
Гладкая задача нелинейного программирования и решатель SQP.

    min f(x)  при  c_e(x) = 0,  c_i(x) <= 0,  lb <= x <= ub

Подзадача QP решается quadprog. Гессиан Лагранжиана — демпфированный
BFGS, сброс в единичную матрицу при потере кривизны. Шаг принимается
по ℓ1-штрафной функции (немонотонный Армихо). Несовместная QP
решается в эластичной постановке; если нарушение ограничений застряло,
запускается фаза восстановления допустимости.

Градиенты считаются центральными разностями, если задача не даёт своих.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np
import quadprog

from nlp.finite_diff import DEFAULT_H_REL, central_gradient, central_jacobian

logger = logging.getLogger(__name__)


class SolveStatus(str, Enum):
    CONVERGED = "Converged"
    ITER_LIMIT = "IterLimit"
    # шаг не найден и после сброса Гессиана, max_iter не исчерпан
    STALLED = "Stalled"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class NlpProblem:
    """
    batched=True: все функции принимают пачку (n, B) и отдают (m, B)
    (цель — (B,)); тогда конечные разности идут одним вызовом.
    hessian — начальное приближение Гессиана (по умолчанию единичная
    матрица), им же заменяется BFGS при сбросе.
    """
    n: int
    objective: Callable
    eq: Callable | None = None
    ineq: Callable | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    x0: np.ndarray | None = None
    gradient: Callable | None = None
    eq_jacobian: Callable | None = None
    ineq_jacobian: Callable | None = None
    hessian: Callable | None = None
    batched: bool = False
    h_rel: float = DEFAULT_H_REL

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("decision dimension must be nonnegative")
        lb = np.full(self.n, -np.inf) if self.lb is None else np.array(self.lb, dtype=float)
        ub = np.full(self.n, np.inf) if self.ub is None else np.array(self.ub, dtype=float)
        if lb.shape != (self.n,) or ub.shape != (self.n,):
            raise ValueError("bounds must have shape (n,)")
        if np.any(lb > ub):
            raise ValueError("lower bound exceeds upper bound")
        x0 = np.zeros(self.n) if self.x0 is None else np.array(self.x0, dtype=float)
        if x0.shape != (self.n,):
            raise ValueError("initial guess must have shape (n,)")
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)
        object.__setattr__(self, "x0", x0)

    # ---- значения ----

    def f(self, x) -> float:
        return float(np.asarray(self.objective(x)).reshape(-1)[0])

    def ce(self, x) -> np.ndarray:
        return np.zeros(0) if self.eq is None else np.asarray(self.eq(x), dtype=float).reshape(-1)

    def ci(self, x) -> np.ndarray:
        return np.zeros(0) if self.ineq is None else np.asarray(self.ineq(x), dtype=float).reshape(-1)

    # ---- производные ----

    def grad(self, x) -> np.ndarray:
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=float)
        if self.batched:
            return central_jacobian(self.objective, x, h_rel=self.h_rel)[0]
        return central_gradient(self.f, x, h_rel=self.h_rel)

    def je(self, x) -> np.ndarray:
        return self._jacobian(self.eq, self.eq_jacobian, x)

    def ji(self, x) -> np.ndarray:
        return self._jacobian(self.ineq, self.ineq_jacobian, x)

    def _jacobian(self, fun, jac, x) -> np.ndarray:
        if fun is None:
            return np.zeros((0, self.n))
        if jac is not None:
            return np.atleast_2d(np.asarray(jac(x), dtype=float)).reshape(-1, self.n)
        return central_jacobian(fun, x, h_rel=self.h_rel, batched=self.batched).reshape(-1, self.n)


@dataclass(frozen=True)
class NlpSolution:
    x: np.ndarray
    objective: float
    status: SolveStatus
    kkt_residual: float
    iterations: int
    violation: float = 0.0
    eq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    ineq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED


@dataclass(frozen=True)
class SqpSettings:
    tol: float = 1e-6
    max_iter: int = 100
    rho0: float = 1.0
    armijo: float = 1e-4
    min_alpha: float = 1e-10
    nonmonotone: int = 3
    stall_window: int = 5
    restoration: bool = True
    elastic_penalty: float = 100.0


# ==============================
# Вспомогательное
# ==============================

@dataclass
class _Point:
    x: np.ndarray
    f: float
    g: np.ndarray
    ce: np.ndarray
    je: np.ndarray
    ci: np.ndarray
    ji: np.ndarray

    @property
    def violation(self) -> float:
        return float(np.sum(np.abs(self.ce)) + np.sum(np.maximum(self.ci, 0.0)))

    @property
    def max_violation(self) -> float:
        parts = [np.abs(self.ce), np.maximum(self.ci, 0.0)]
        return float(max((p.max() for p in parts if p.size), default=0.0))


def _evaluate(problem: NlpProblem, x: np.ndarray) -> _Point:
    return _Point(
        x=x, f=problem.f(x), g=problem.grad(x),
        ce=problem.ce(x), je=problem.je(x), ci=problem.ci(x), ji=problem.ji(x),
    )


def _merit(f: float, violation: float, rho: float) -> float:
    return f + rho * violation


def _values(problem: NlpProblem, x: np.ndarray) -> tuple[float, float]:
    f = problem.f(x)
    viol = float(np.sum(np.abs(problem.ce(x))) + np.sum(np.maximum(problem.ci(x), 0.0)))
    return f, viol


@dataclass
class _QpResult:
    d: np.ndarray
    lam_e: np.ndarray
    lam_i: np.ndarray
    nu_lo: np.ndarray
    nu_hi: np.ndarray
    elastic: bool


def _bound_columns(lo: np.ndarray, hi: np.ndarray, skip: np.ndarray | None = None):
    n = lo.size
    eye = np.eye(n)
    keep = np.ones(n, dtype=bool) if skip is None else ~skip
    lo_idx = np.flatnonzero(np.isfinite(lo) & keep)
    hi_idx = np.flatnonzero(np.isfinite(hi) & keep)
    cols = np.hstack([eye[:, lo_idx], -eye[:, hi_idx]])
    rhs = np.concatenate([lo[lo_idx], -hi[hi_idx]])
    return cols, rhs, lo_idx, hi_idx


def _quadprog(G, a, C, b, meq):
    G = np.ascontiguousarray(G, dtype=float)
    a = np.ascontiguousarray(a, dtype=float)
    if C.shape[1] == 0:
        sol = quadprog.solve_qp(G, a)
        return sol[0], np.zeros(0)
    sol = quadprog.solve_qp(G, a, np.ascontiguousarray(C, dtype=float), np.ascontiguousarray(b, dtype=float), meq)
    return sol[0], sol[4]


def _solve_qp(B: np.ndarray, p: _Point, lo: np.ndarray, hi: np.ndarray, elastic_penalty: float) -> _QpResult:
    """QP по шагу d; lo/hi — границы d, полученные из коробки."""
    n, m_e, m_i = p.x.size, p.ce.size, p.ci.size
    # закреплённые переменные (lo == hi) идут равенствами
    fixed = np.isfinite(lo) & (lo == hi)
    fixed_idx = np.flatnonzero(fixed)
    n_f = fixed_idx.size
    fcols, frhs, f_lo, f_hi = _bound_columns(lo, hi, skip=fixed)
    C = np.hstack([p.je.T, np.eye(n)[:, fixed_idx], -p.ji.T, fcols])
    b = np.concatenate([-p.ce, lo[fixed_idx], p.ci, frhs])
    try:
        d, lag = _quadprog(B, -p.g, C, b, m_e + n_f)
    except ValueError:
        bcols, brhs, lo_idx, hi_idx = _bound_columns(lo, hi)
        # эластичная постановка: нарушение каждой строки t >= 0 со штрафом
        m = m_e + m_i
        G = np.zeros((n + m, n + m))
        G[:n, :n] = B
        G[n:, n:] = 1e-6 * np.eye(m)
        a = -np.concatenate([p.g, np.full(m, elastic_penalty)])
        t_e = np.vstack([np.zeros((n, m_e)), np.eye(m)[:, :m_e]]) if m_e else np.zeros((n + m, 0))
        t_i = np.vstack([np.zeros((n, m_i)), np.eye(m)[:, m_e:]]) if m_i else np.zeros((n + m, 0))
        pad = np.zeros((m, bcols.shape[1]))
        C = np.hstack([
            np.vstack([-p.je.T, np.zeros((m, m_e))]) + t_e,
            np.vstack([p.je.T, np.zeros((m, m_e))]) + t_e,
            np.vstack([-p.ji.T, np.zeros((m, m_i))]) + t_i,
            np.vstack([np.zeros((n, m)), np.eye(m)]),
            np.vstack([bcols, pad]),
        ])
        b = np.concatenate([p.ce, -p.ce, p.ci, np.zeros(m), brhs])
        z, lag = _quadprog(G, a, C, b, 0)
        d = z[:n]
        elastic = True
        lam_e = lag[:m_e] - lag[m_e:2 * m_e]
        lam_i = lag[2 * m_e:2 * m_e + m_i]
        lag_b = lag[2 * m_e + m_i + m:]
    else:
        elastic = False
        lam_e, lam_i = -lag[:m_e], lag[m_e + n_f:m_e + n_f + m_i]
        lo_idx, hi_idx = f_lo, f_hi
        lag_b = lag[m_e + n_f + m_i:]

    nu_lo = np.zeros(n)
    nu_hi = np.zeros(n)
    if not elastic:
        nu_lo[fixed_idx] = lag[m_e:m_e + n_f]
    nu_lo[lo_idx] += lag_b[:lo_idx.size]
    nu_hi[hi_idx] = lag_b[lo_idx.size:]
    return _QpResult(d=d, lam_e=lam_e, lam_i=lam_i, nu_lo=nu_lo, nu_hi=nu_hi, elastic=elastic)


def _lagrangian_grad(p: _Point, lam_e: np.ndarray, lam_i: np.ndarray) -> np.ndarray:
    return p.g + p.je.T @ lam_e + p.ji.T @ lam_i


def _kkt(problem: NlpProblem, p: _Point, qp: _QpResult) -> float:
    stationarity = _lagrangian_grad(p, qp.lam_e, qp.lam_i) - qp.nu_lo + qp.nu_hi
    lo_gap = np.where(np.isfinite(problem.lb), p.x - problem.lb, 0.0)
    hi_gap = np.where(np.isfinite(problem.ub), problem.ub - p.x, 0.0)
    complementarity = np.concatenate([
        np.abs(qp.lam_i * p.ci), np.abs(qp.nu_lo * lo_gap), np.abs(qp.nu_hi * hi_gap),
        np.maximum(-qp.lam_i, 0.0),
    ])
    parts = [np.abs(stationarity), complementarity, [p.max_violation]]
    return float(max(np.max(part) if len(part) else 0.0 for part in parts))


def _damped_bfgs(B: np.ndarray, s: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, bool]:
    """Обновление Пауэлла; второй элемент — был ли сброс."""
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 1e-16:
        return np.eye(B.shape[0]), True
    sy = float(s @ y)
    theta = 1.0 if sy >= 0.2 * sBs else 0.8 * sBs / (sBs - sy)
    r = theta * y + (1.0 - theta) * Bs
    sr = float(s @ r)
    if sr <= 1e-16:
        return np.eye(B.shape[0]), True
    B_new = B - np.outer(Bs, Bs) / sBs + np.outer(r, r) / sr
    B_new = 0.5 * (B_new + B_new.T)
    try:
        np.linalg.cholesky(B_new)
    except np.linalg.LinAlgError:
        return np.eye(B.shape[0]), True
    return B_new, False


def _start_hessian(problem: NlpProblem, x: np.ndarray) -> np.ndarray:
    if problem.hessian is None:
        return np.eye(problem.n)
    B = np.asarray(problem.hessian(x), dtype=float)
    B = 0.5 * (B + B.T)
    try:
        np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        logger.debug("Начальный Гессиан не положительно определён, берётся единичная матрица")
        return np.eye(problem.n)
    return B


def _restore(problem: NlpProblem, x: np.ndarray, settings: SqpSettings) -> np.ndarray:
    """Минимизация квадрата нарушения в коробке."""
    logger.debug("Фаза восстановления допустимости из точки с нарушением %.3e",
                 _values(problem, x)[1])

    def violation(v):
        total = 0.0
        if problem.eq is not None:
            total = total + np.sum(np.asarray(problem.eq(v)) ** 2, axis=0)
        if problem.ineq is not None:
            total = total + np.sum(np.maximum(np.asarray(problem.ineq(v)), 0.0) ** 2, axis=0)
        return 0.5 * total

    aux = replace(problem, objective=violation, eq=None, ineq=None, gradient=None,
                  eq_jacobian=None, ineq_jacobian=None, hessian=None, x0=x)
    sub = replace(settings, restoration=False, tol=settings.tol * 1e-2)
    return solve(aux, settings=sub).x


# ==============================
# Решатель
# ==============================

def solve(problem: NlpProblem, tol: float | None = None, max_iter: int | None = None,
          settings: SqpSettings | None = None) -> NlpSolution:
    settings = settings or SqpSettings()
    if tol is not None:
        settings = replace(settings, tol=tol)
    if max_iter is not None:
        settings = replace(settings, max_iter=max_iter)
    tol = settings.tol

    n = problem.n
    x = np.clip(problem.x0, problem.lb, problem.ub)
    if n == 0:
        return NlpSolution(x=x, objective=problem.f(x), status=SolveStatus.CONVERGED, kkt_residual=0.0, iterations=0)
    point = _evaluate(problem, x)
    B = _start_hessian(problem, x)
    fresh = True
    rho = settings.rho0
    merits: list[float] = []
    violations: list[float] = [point.violation]
    restored = False
    kkt = np.inf
    lam_e, lam_i = np.zeros(point.ce.size), np.zeros(point.ci.size)
    status = SolveStatus.ITER_LIMIT
    iterations = 0

    for k in range(settings.max_iter):
        iterations = k + 1
        qp = _solve_qp(B, point, problem.lb - x, problem.ub - x, max(settings.elastic_penalty, 10.0 * rho))
        lam_e, lam_i = qp.lam_e, qp.lam_i
        kkt = _kkt(problem, point, qp)
        if kkt <= tol:
            status = SolveStatus.CONVERGED
            break

        lam_max = float(max(np.max(np.abs(lam_e), initial=0.0), np.max(np.abs(lam_i), initial=0.0)))
        while rho < 1.1 * lam_max:
            rho *= 2.0

        d = qp.d
        phi = _merit(point.f, point.violation, rho)
        merits.append(phi)
        lin = np.sum(np.abs(point.ce + point.je @ d)) + np.sum(np.maximum(point.ci + point.ji @ d, 0.0))
        slope = float(point.g @ d) - rho * (point.violation - lin)
        reference = max(merits[-settings.nonmonotone:])

        alpha = 1.0
        accepted = False
        while alpha >= settings.min_alpha:
            trial = np.clip(x + alpha * d, problem.lb, problem.ub)
            f_t, v_t = _values(problem, trial)
            if np.isfinite(f_t) and np.isfinite(v_t) and \
                    _merit(f_t, v_t, rho) <= reference + settings.armijo * alpha * min(slope, 0.0):
                accepted = True
                break
            alpha *= 0.5

        if not accepted:
            if fresh:
                status = SolveStatus.INFEASIBLE if point.max_violation > tol else SolveStatus.STALLED
                logger.debug("SQP: шаг не найден, остановка на итерации %d (%s)", iterations, status.value)
                break
            B = _start_hessian(problem, x)
            fresh = True
            continue

        new_point = _evaluate(problem, trial)
        s = trial - x
        y = _lagrangian_grad(new_point, lam_e, lam_i) - _lagrangian_grad(point, lam_e, lam_i)
        B, fresh = _damped_bfgs(B, s, y)
        if fresh:
            B = _start_hessian(problem, trial)
        x, point = trial, new_point
        violations.append(point.violation)
        logger.debug("SQP iter %d: merit %.6e, step %.3e, kkt %.3e, violation %.3e%s",
                     iterations, phi, float(np.max(np.abs(s), initial=0.0)), kkt, point.violation,
                     " (elastic)" if qp.elastic else "")

        window = settings.stall_window
        if len(violations) > window and point.max_violation > tol \
                and violations[-1] >= 0.99 * violations[-1 - window]:
            if settings.restoration and not restored:
                restored = True
                x = _restore(problem, x, settings)
                point = _evaluate(problem, x)
                B = _start_hessian(problem, x)
                fresh = True
                violations.append(point.violation)
                merits.clear()
                continue
            status = SolveStatus.INFEASIBLE
            break

    if status is SolveStatus.ITER_LIMIT and restored and point.max_violation > tol:
        status = SolveStatus.INFEASIBLE
    x = np.clip(x, problem.lb, problem.ub)
    return NlpSolution(
        x=x, objective=point.f, status=status, kkt_residual=float(kkt), iterations=iterations,
        violation=point.max_violation, eq_multipliers=lam_e, ineq_multipliers=lam_i,
    )
