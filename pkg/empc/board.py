"""
Доска обмена быстрых агентов.

Доска пишется только на барьере между итерациями: агенты итерации c
читают последовательности итерации c−1 и медленные значения,
замороженные до следующего медленного такта.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def fit_length(seq: np.ndarray, n: int) -> np.ndarray:
    """Обрезка или продление удержанием последнего элемента до длины n."""
    seq = np.asarray(seq, dtype=float)
    if seq.shape[0] >= n:
        return seq[:n].copy()
    tail = np.repeat(seq[-1:], n - seq.shape[0], axis=0)
    return np.concatenate([seq, tail], axis=0)


def shift(seq: np.ndarray) -> np.ndarray:
    """Сдвиг на один такт с экстраполяцией нулевого порядка."""
    seq = np.asarray(seq, dtype=float)
    return np.concatenate([seq[1:], seq[-1:]], axis=0)


@dataclass(frozen=True)
class AgentSolution:
    number: int
    u_seq: np.ndarray      # (N_j, |u_fj|)
    x_seq: np.ndarray      # (N_j, |x_fj|), состояния в k+1..k+N_j
    objective: float
    slack: np.ndarray      # (N_j, |u_fj|)
    status: str
    iterations: int = 0
    held: bool = False
    breakdown: dict = field(default_factory=dict)


@dataclass
class ExchangeBoard:
    """
    u_seq/x_seq — последние последовательности агентов;
    u_ref/x_ref — опоры медленного слоя на быстрой сетке (полные векторы);
    x_slow/u_slow — медленные значения, постоянные между медленными тактами.
    """
    x_now: np.ndarray
    u_ref: np.ndarray
    x_ref: np.ndarray
    x_slow: np.ndarray
    u_slow: np.ndarray
    u_seq: dict[int, np.ndarray] = field(default_factory=dict)
    x_seq: dict[int, np.ndarray] = field(default_factory=dict)
    iteration: int = 0

    def publish(self, solutions: list[AgentSolution]) -> None:
        for sol in solutions:
            self.u_seq[sol.number] = sol.u_seq.copy()
            self.x_seq[sol.number] = sol.x_seq.copy()
        self.iteration += 1

    def state_path(self, subsystems, n: int, own: int | None = None) -> np.ndarray:
        """
        Полные состояния в начале каждого из n интервалов: столбец 0 —
        измерение, далее последовательности агентов; медленные — x_slow.
        """
        path = np.repeat(self.x_now[:, None], n + 1, axis=1)
        for sub in subsystems:
            if sub.number == own or sub.number not in self.x_seq:
                continue
            path[list(sub.states), 1:] = fit_length(self.x_seq[sub.number], n).T
        slow = list(subsystems.split.slow_states)
        path[slow, :] = self.x_slow[slow, None]
        return path

    def input_path(self, subsystems, n: int) -> np.ndarray:
        """Полные входы (7, n): агенты — с доски, медленные — u_slow."""
        path = np.repeat(self.u_slow[:, None], n, axis=1)
        for sub in subsystems:
            if sub.number in self.u_seq:
                path[list(sub.inputs), :] = fit_length(self.u_seq[sub.number], n).T
        return path
