"""
Центральные конечные разности с шагом h = h_rel·max(1, |v_i|).
"""

from __future__ import annotations

from typing import Callable

import numpy as np

DEFAULT_H_REL = 1e-6


def fd_steps(v: np.ndarray, h_rel: float = DEFAULT_H_REL) -> np.ndarray:
    return h_rel * np.maximum(1.0, np.abs(v))


def central_jacobian(
    fun: Callable[[np.ndarray], np.ndarray],
    v,
    h_rel: float = DEFAULT_H_REL,
    batched: bool = True,
) -> np.ndarray:
    """
    Якобиан (m, n) функции R^n -> R^m.

    batched=True: fun принимает пачку (n, B) и отдаёт (m, B); все 2n проб
    идут одним вызовом. Иначе fun вызывается по одной точке.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    h = fd_steps(v, h_rel)
    shift = np.diag(h)
    if batched:
        probes = np.concatenate([v[:, None] + shift, v[:, None] - shift], axis=1)
        values = np.asarray(fun(probes), dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        plus, minus = values[:, :n], values[:, n:]
    else:
        plus = np.column_stack([np.atleast_1d(fun(v + shift[:, i])) for i in range(n)])
        minus = np.column_stack([np.atleast_1d(fun(v - shift[:, i])) for i in range(n)])
    return (plus - minus) / (2.0 * h)


def central_gradient(fun: Callable[[np.ndarray], float], v, h_rel: float = DEFAULT_H_REL) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    h = fd_steps(v, h_rel)
    grad = np.empty_like(v)
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = h[i]
        grad[i] = (fun(v + e) - fun(v - e)) / (2.0 * h[i])
    return grad
