"""
Вертикальная декомпозиция: постоянные времени, разбиение состояний на
медленные и быстрые, малый параметр ε и матрица смежности быстрой части.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from core.exceptions import NoScaleGap, ZeroDiagonal
from netgraph.graph import AdjacencyMatrix, JacobianSet

logger = logging.getLogger(__name__)

TAU_CLAMP = (1e-3, 1e6)
ZERO_DIAGONAL = 1e-12
DEFAULT_GAP_MIN = 50.0


@dataclass(frozen=True)
class TimeScaleSplit:
    slow_states: tuple[int, ...]
    fast_states: tuple[int, ...]
    slow_inputs: tuple[int, ...]
    fast_inputs: tuple[int, ...]
    slow_outputs: tuple[int, ...]
    fast_outputs: tuple[int, ...]
    tau_f_rep: float
    tau_s_rep: float

    def __post_init__(self):
        states = set(self.slow_states) | set(self.fast_states)
        if set(self.slow_states) & set(self.fast_states):
            raise ValueError("slow and fast state sets overlap")
        if states != set(range(len(states))):
            raise ValueError("slow and fast state sets must partition the state indices")
        if not 0.0 < self.epsilon < 0.1:
            raise ValueError(f"epsilon {self.epsilon:.4g} is not small")

    @property
    def epsilon(self) -> float:
        return self.tau_f_rep / self.tau_s_rep

    @property
    def n_x(self) -> int:
        return len(self.slow_states) + len(self.fast_states)

    def labels(self) -> dict[str, list[str]]:
        return {
            "slow_states": [f"x{i + 1}" for i in self.slow_states],
            "fast_states": [f"x{i + 1}" for i in self.fast_states],
            "slow_inputs": [f"u{i + 1}" for i in self.slow_inputs],
            "fast_inputs": [f"u{i + 1}" for i in self.fast_inputs],
            "slow_outputs": [f"y{i + 1}" for i in self.slow_outputs],
            "fast_outputs": [f"y{i + 1}" for i in self.fast_outputs],
        }


def time_constants(jac: JacobianSet | None = None, table: Sequence[float] | None = None) -> np.ndarray:
    """
    Доминирующие постоянные времени состояний, с.

    Без Якобиана возвращается таблица как есть. С Якобианом τ_i = 1/|Ã_ii|
    (с ограничением TAU_CLAMP); нулевая диагональ берётся из таблицы, а
    если таблицы нет — ZeroDiagonal.
    """
    if jac is None:
        if table is None:
            raise ValueError("either a Jacobian set or a time-constant table is required")
        return np.array(table, dtype=float)

    diag = np.abs(np.diag(jac.a))
    if table is not None and len(table) != diag.size:
        raise ValueError("time-constant table does not match the state dimension")
    tau = np.empty_like(diag)
    for i, value in enumerate(diag):
        try:
            tau[i] = _estimate(value, i)
        except ZeroDiagonal as exc:
            if table is None:
                raise
            logger.warning("x%d: %s, беру табличное значение %.4g с", i + 1, exc, table[i])
            tau[i] = float(table[i])
    return tau


def _estimate(diag_abs: float, index: int) -> float:
    if not np.isfinite(diag_abs):
        raise ValueError(f"non-finite diagonal entry for state x{index + 1}")
    if diag_abs <= ZERO_DIAGONAL:
        raise ZeroDiagonal(index)
    return float(np.clip(1.0 / diag_abs, *TAU_CLAMP))


def vertical_split(
    tau,
    adj: AdjacencyMatrix,
    gap_min: float = DEFAULT_GAP_MIN,
    representatives: tuple[int, int] | None = None,
) -> TimeScaleSplit:
    """
    Разрез по наибольшему скачку отсортированных log τ.

    representatives — индексы (быстрого, медленного) состояний, чьи τ
    задают ε; по умолчанию наибольшая быстрая и наименьшая медленная.
    """
    tau = np.asarray(tau, dtype=float)
    if gap_min <= 1.0:
        raise ValueError("gap_min must exceed 1")
    if np.any(tau <= 0) or not np.all(np.isfinite(tau)):
        raise ValueError("time constants must be positive and finite")
    if tau.size < 2:
        raise NoScaleGap("a single state has no time-scale gap")

    order = np.argsort(tau, kind="stable")
    ratios = tau[order][1:] / tau[order][:-1]
    cut = int(np.argmax(ratios))
    if ratios[cut] < gap_min:
        raise NoScaleGap(f"largest time-constant ratio {ratios[cut]:.3g} is below {gap_min:g}")

    threshold = tau[order][cut]
    slow = tuple(int(i) for i in np.flatnonzero(tau > threshold))
    fast = tuple(int(i) for i in np.flatnonzero(tau <= threshold))

    if representatives is None:
        tau_f, tau_s = float(tau[list(fast)].max()), float(tau[list(slow)].min())
    else:
        f_rep, s_rep = representatives
        if f_rep not in fast or s_rep not in slow:
            raise ValueError("representative states must lie in the fast and slow sets respectively")
        tau_f, tau_s = float(tau[f_rep]), float(tau[s_rep])

    n_x = tau.size
    matrix = adj.matrix
    kinds = [node.kind for node in adj.nodes]
    input_cols = [j for j, k in enumerate(kinds) if k == "input"]
    output_rows = [i for i, k in enumerate(kinds) if k == "output"]

    # вход медленный, если он входит хотя бы в одно уравнение медленного состояния
    slow_inputs, fast_inputs = [], []
    for k, col in enumerate(input_cols):
        feeds_slow = bool(matrix[list(slow), col].any())
        (slow_inputs if feeds_slow else fast_inputs).append(k)

    # выход медленный, если все его зависимости по состояниям медленные
    slow_outputs, fast_outputs = [], []
    for k, row in enumerate(output_rows):
        deps = set(np.flatnonzero(matrix[row, :n_x]).tolist())
        (slow_outputs if deps and deps <= set(slow) else fast_outputs).append(k)

    split = TimeScaleSplit(
        slow_states=slow, fast_states=fast,
        slow_inputs=tuple(slow_inputs), fast_inputs=tuple(fast_inputs),
        slow_outputs=tuple(slow_outputs), fast_outputs=tuple(fast_outputs),
        tau_f_rep=tau_f, tau_s_rep=tau_s,
    )
    logger.info("Вертикальный разрез: %d медленных, %d быстрых, ε = %.5f",
                len(slow), len(fast), split.epsilon)
    return split


def fast_adjacency(adj: AdjacencyMatrix, split: TimeScaleSplit) -> AdjacencyMatrix:
    """Зануляет строки медленных состояний, входов и выходов; столбцы не трогает."""
    kinds = [node.kind for node in adj.nodes]
    input_cols = [j for j, k in enumerate(kinds) if k == "input"]
    output_rows = [i for i, k in enumerate(kinds) if k == "output"]
    rows = list(split.slow_states)
    rows += [input_cols[k] for k in split.slow_inputs]
    rows += [output_rows[k] for k in split.slow_outputs]
    matrix = np.array(adj.matrix)
    matrix[rows, :] = 0
    return adj.with_matrix(matrix)
