"""
Прямая многократная стрельба для задач MPC.

Решение — N стадий одинаковой ширины m. Слагаемые стадии k зависят
только от её переменных и от переменных стадии k-1 (для k = 0 — от
заданных начальных значений). Поэтому производные считаются
раскрашенными центральными разностями: одна пара проб возмущает одну
компоненту сразу во всех стадиях одной чётности, всего 4m проб на
Якобианы ограничений, градиент и матрицу Гаусса-Ньютона.

Переменные решателя масштабированы: v = raw / scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from nlp.finite_diff import DEFAULT_H_REL
from nlp.sqp import NlpProblem

# регуляризация начального Гессиана Гаусса-Ньютона
GN_REGULARIZATION = 1e-6


@dataclass(frozen=True)
class StageTerms:
    """
    residuals: (r, N, B), цель содержит Σ residuals²;
    cost: (N, B), прочие слагаемые цели;
    eq: (m_e, N, B); ineq: (m_i, N, B), допустимо <= 0.
    groups: имя -> срез строк residuals, для разбивки цели.
    """
    residuals: np.ndarray
    cost: np.ndarray
    eq: np.ndarray
    ineq: np.ndarray
    groups: Mapping[str, slice] = field(default_factory=dict)


StageFn = Callable[[dict, dict], StageTerms]


class StageLayout:
    """Именованные поля одной стадии в фиксированном порядке."""

    def __init__(self, **sizes: int):
        self.sizes = dict(sizes)
        self.slices: dict[str, slice] = {}
        start = 0
        for name, size in self.sizes.items():
            self.slices[name] = slice(start, start + size)
            start += size
        self.width = start

    def split(self, stages: np.ndarray) -> dict[str, np.ndarray]:
        """(N, m, B) -> {поле: (size, N, B)}."""
        return {name: np.moveaxis(stages[:, sl, :], 1, 0) for name, sl in self.slices.items()}

    def pack(self, **fields: np.ndarray) -> np.ndarray:
        """Поля формы (N, size) -> матрица стадий (N, m)."""
        return np.concatenate([np.asarray(fields[name], dtype=float).reshape(-1, size)
                               for name, size in self.sizes.items()], axis=1)


class ShootingProblem:
    def __init__(
        self,
        layout: StageLayout,
        horizon: int,
        stage_fn: StageFn,
        initial: Mapping[str, np.ndarray],
        lb: np.ndarray,
        ub: np.ndarray,
        scale: np.ndarray,
        guess: np.ndarray,
        h_rel: float = DEFAULT_H_REL,
    ):
        self.layout = layout
        self.horizon = horizon
        self.stage_fn = stage_fn
        self.initial = {name: np.asarray(value, dtype=float) for name, value in initial.items()}
        shape = (horizon, layout.width)
        self.scale = np.broadcast_to(np.asarray(scale, dtype=float), shape).copy()
        if np.any(self.scale <= 0):
            raise ValueError("variable scales must be positive")
        self.lb = np.broadcast_to(np.asarray(lb, dtype=float), shape).copy()
        self.ub = np.broadcast_to(np.asarray(ub, dtype=float), shape).copy()
        if np.any(self.lb > self.ub):
            raise ValueError("stage lower bound exceeds upper bound")
        self.guess = np.clip(np.asarray(guess, dtype=float).reshape(shape), self.lb, self.ub)
        self.h_rel = h_rel
        self._terms_cache: tuple[bytes, StageTerms] | None = None
        self._deriv_cache: tuple[bytes, dict] | None = None

        probe = self._terms(self.guess.reshape(-1) / self.scale.reshape(-1))
        self.n_res = probe.residuals.shape[0]
        self.n_eq = probe.eq.shape[0]
        self.n_ineq = probe.ineq.shape[0]
        self.groups = dict(probe.groups)

    @property
    def n(self) -> int:
        return self.horizon * self.layout.width

    # ---- вычисление слагаемых ----

    def _stages(self, v: np.ndarray) -> np.ndarray:
        """v (n,) или (n, B) -> сырые значения (N, m, B)."""
        batch = v.reshape(self.horizon, self.layout.width, -1)
        return batch * self.scale[:, :, None]

    def _terms(self, v: np.ndarray) -> StageTerms:
        single = v.ndim == 1
        if single:
            key = v.tobytes()
            if self._terms_cache is not None and self._terms_cache[0] == key:
                return self._terms_cache[1]
        cur = self.layout.split(self._stages(v))
        batch = next(iter(cur.values())).shape[2]
        prev = {}
        for name, value in self.initial.items():
            head = np.broadcast_to(value.reshape(-1, 1, 1), (value.size, 1, batch))
            prev[name] = np.concatenate([head, cur[name][:, :-1, :]], axis=1)
        terms = self.stage_fn(cur, prev)
        if single:
            self._terms_cache = (key, terms)
        return terms

    @staticmethod
    def _rows(values: np.ndarray) -> np.ndarray:
        """(q, N, B) -> (N·q, B), строки по стадиям."""
        q, n_stages, batch = values.shape
        return values.transpose(1, 0, 2).reshape(n_stages * q, batch)

    def _objective(self, v):
        t = self._terms(np.asarray(v, dtype=float))
        value = np.sum(t.residuals ** 2, axis=(0, 1)) + np.sum(t.cost, axis=0)
        return value if np.ndim(v) > 1 else float(value[0])

    def _eq(self, v):
        out = self._rows(self._terms(np.asarray(v, dtype=float)).eq)
        return out if np.ndim(v) > 1 else out[:, 0]

    def _ineq(self, v):
        out = self._rows(self._terms(np.asarray(v, dtype=float)).ineq)
        return out if np.ndim(v) > 1 else out[:, 0]

    # ---- раскрашенные разности ----

    def _derivatives(self, v: np.ndarray) -> dict:
        v = np.asarray(v, dtype=float)
        key = v.tobytes()
        if self._deriv_cache is not None and self._deriv_cache[0] == key:
            return self._deriv_cache[1]

        n_st, m = self.horizon, self.layout.width
        V = v.reshape(n_st, m)
        h = self.h_rel * np.maximum(1.0, np.abs(V))
        colors = 2 * m
        probes = np.repeat(V[:, :, None], 2 * colors, axis=2)
        parity = np.arange(n_st) % 2
        for p in (0, 1):
            rows = parity == p
            for j in range(m):
                c = p * m + j
                probes[rows, j, c] += h[rows, j]
                probes[rows, j, colors + c] -= h[rows, j]
        terms = self._terms(probes.reshape(n_st * m, 2 * colors))

        k = np.arange(n_st)
        j = np.arange(m)

        def jacobian(values: np.ndarray) -> np.ndarray:
            q = values.shape[0]
            jac = np.zeros((n_st * q, n_st * m))
            if q == 0:
                return jac
            diff = values[:, :, :colors] - values[:, :, colors:]
            for p in (0, 1):
                source = np.where(k % 2 == p, k, k - 1)
                valid = source >= 0
                src = source[valid]
                step = 2.0 * h[src][:, j]
                block = diff[:, valid, p * m:(p + 1) * m] / step[None]
                rows = (k[valid][None, :, None] * q + np.arange(q)[:, None, None])
                cols = (src[:, None] * m + j[None, :])[None]
                rows, cols = np.broadcast_arrays(rows, cols)
                jac[rows.reshape(-1), cols.reshape(-1)] = block.reshape(-1)
            return jac

        base = self._terms(v)
        j_res = jacobian(terms.residuals)
        j_cost = jacobian(terms.cost[None])
        res = self._rows(base.residuals[..., :1])[:, 0] if self.n_res else np.zeros(0)
        out = {
            "gradient": 2.0 * j_res.T @ res + j_cost.sum(axis=0),
            "eq": jacobian(terms.eq),
            "ineq": jacobian(terms.ineq),
            "gauss_newton": 2.0 * j_res.T @ j_res,
        }
        self._deriv_cache = (key, out)
        return out

    def _hessian(self, v):
        gn = self._derivatives(v)["gauss_newton"]
        reg = GN_REGULARIZATION * (1.0 + float(np.max(np.diag(gn), initial=0.0)))
        return gn + reg * np.eye(gn.shape[0])

    def nlp(self) -> NlpProblem:
        return NlpProblem(
            n=self.n,
            objective=self._objective,
            eq=self._eq if self.n_eq else None,
            ineq=self._ineq if self.n_ineq else None,
            lb=(self.lb / self.scale).reshape(-1),
            ub=(self.ub / self.scale).reshape(-1),
            x0=(self.guess / self.scale).reshape(-1),
            gradient=lambda v: self._derivatives(v)["gradient"],
            eq_jacobian=lambda v: self._derivatives(v)["eq"],
            ineq_jacobian=lambda v: self._derivatives(v)["ineq"],
            hessian=self._hessian,
            batched=True,
            h_rel=self.h_rel,
        )

    # ---- результат ----

    def unpack(self, v: np.ndarray) -> dict[str, np.ndarray]:
        """Сырые значения полей (N, size), строго внутри исходных границ."""
        raw = np.asarray(v, dtype=float).reshape(self.horizon, self.layout.width) * self.scale
        raw = np.clip(raw, self.lb, self.ub)
        fixed = self.lb == self.ub
        raw[fixed] = self.lb[fixed]
        return {name: raw[:, sl].copy() for name, sl in self.layout.slices.items()}

    def breakdown(self, v: np.ndarray) -> dict[str, float]:
        """Цель по группам невязок плюс прочие слагаемые."""
        t = self._terms(np.asarray(v, dtype=float))
        squares = t.residuals[..., 0] ** 2
        parts = {name: float(np.sum(squares[sl])) for name, sl in self.groups.items()}
        parts["other"] = float(np.sum(t.cost[:, 0]))
        return parts

    def objective(self, v: np.ndarray) -> float:
        return self._objective(np.asarray(v, dtype=float))

    def violation(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float)
        parts = [np.abs(self._eq(v)) if self.n_eq else np.zeros(0),
                 np.maximum(self._ineq(v), 0.0) if self.n_ineq else np.zeros(0)]
        return float(max((p.max() for p in parts if p.size), default=0.0))
