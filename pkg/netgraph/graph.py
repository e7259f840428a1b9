"""
Ориентированный граф динамики: Якобианы в равновесии, расширенная
матрица Ã_e и бинарная матрица смежности A_e.

Соглашение о направлении: a_ij = 1 — ребро из переменной j в переменную i
(j входит в определяющее уравнение i с ненулевой производной).
Порядок узлов: состояния, затем u_g = [u; ω], затем выходы.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from core.exceptions import NonFiniteDerivative
from nlp.finite_diff import DEFAULT_H_REL, central_jacobian
from plant.equilibrium import OperatingPoint
from plant.model import derivatives, outputs
from plant.params import PlantParams
from plant.state import N_D, N_U, N_X, N_Y

logger = logging.getLogger(__name__)

NodeKind = Literal["state", "input", "disturbance", "output"]
_PREFIX = {"state": "x", "input": "u", "disturbance": "w", "output": "y"}

EQUILIBRIUM_WARN = 1e-6
DEFAULT_TOL_ABS = 1e-8


@dataclass(frozen=True)
class NodeId:
    kind: NodeKind
    index: int
    label: str


def node_ids(n_x: int = N_X, n_u: int = N_U, n_d: int = N_D, n_y: int = N_Y) -> tuple[NodeId, ...]:
    nodes = []
    for kind, count in (("state", n_x), ("input", n_u), ("disturbance", n_d), ("output", n_y)):
        nodes.extend(NodeId(kind, i, f"{_PREFIX[kind]}{i + 1}") for i in range(count))
    return tuple(nodes)


@dataclass(frozen=True)
class DynModel:
    """
    Модель для линеаризации: f(x, g) и h(x, g), g = [u; ω].
    Обе функции принимают пачки (n, B).
    """
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    h: Callable[[np.ndarray, np.ndarray], np.ndarray]
    n_x: int
    n_u: int
    n_d: int
    n_y: int

    @property
    def n_g(self) -> int:
        return self.n_u + self.n_d

    @property
    def nodes(self) -> tuple[NodeId, ...]:
        return node_ids(self.n_x, self.n_u, self.n_d, self.n_y)


def plant_model(params: PlantParams, z) -> DynModel:
    """Обёртка модели установки при фиксированных двоичных входах z."""
    z = np.asarray(z, dtype=float)

    def split(g):
        return g[:N_U], g[N_U:]

    def f(x, g):
        u, w = split(g)
        return derivatives(x, u, z, w, params)

    def h(x, g):
        u, w = split(g)
        return outputs(x, u, z, w, params)

    return DynModel(f=f, h=h, n_x=N_X, n_u=N_U, n_d=N_D, n_y=N_Y)


@dataclass(frozen=True)
class JacobianSet:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        n_x, n_g = self.b.shape
        n_y = self.c.shape[0]
        if self.a.shape != (n_x, n_x) or self.c.shape != (n_y, n_x) or self.d.shape != (n_y, n_g):
            raise ValueError("inconsistent Jacobian shapes")
        for m in (self.a, self.b, self.c, self.d):
            if not np.all(np.isfinite(m)):
                raise NonFiniteDerivative("Jacobian has non-finite entries")

    @property
    def n_x(self) -> int:
        return self.a.shape[0]

    @property
    def n_g(self) -> int:
        return self.b.shape[1]

    @property
    def n_y(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class AdjacencyMatrix:
    matrix: np.ndarray
    nodes: tuple[NodeId, ...] = field(repr=False)

    def __post_init__(self):
        raw = np.asarray(self.matrix)
        if raw.ndim != 2 or raw.shape[0] != raw.shape[1] or raw.shape[0] != len(self.nodes):
            raise ValueError("adjacency must be square and match the node list")
        if not np.all((raw == 0) | (raw == 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        a = np.array(raw, dtype=np.int8)
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(n.label for n in self.nodes)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def has_edge(self, source: str, target: str) -> bool:
        return bool(self.matrix[self.index(target), self.index(source)])

    def edges(self) -> list[tuple[str, str]]:
        """Рёбра (откуда, куда) в порядке строк, затем столбцов."""
        labels = self.labels
        rows, cols = np.nonzero(self.matrix)
        return [(labels[j], labels[i]) for i, j in zip(rows, cols)]

    def with_matrix(self, matrix: np.ndarray) -> "AdjacencyMatrix":
        return AdjacencyMatrix(matrix=matrix, nodes=self.nodes)


# ==============================
# Операции
# ==============================

def jacobians(model: DynModel, point: OperatingPoint, h_rel: float = DEFAULT_H_REL) -> JacobianSet:
    x = np.asarray(point.x, dtype=float)
    g = np.concatenate([np.asarray(point.u, dtype=float), np.asarray(point.w, dtype=float)])
    if g.size != model.n_g or x.size != model.n_x:
        raise ValueError("operating point does not match the model dimensions")

    n_x = model.n_x

    def stacked(v):
        xs, gs = v[:n_x], v[n_x:]
        return np.concatenate([model.f(xs, gs), model.h(xs, gs)], axis=0)

    with np.errstate(all="ignore"):
        residual = float(np.max(np.abs(model.f(x, g)))) if x.size else 0.0
        jac = central_jacobian(stacked, np.concatenate([x, g]), h_rel=h_rel)
    if not residual <= EQUILIBRIUM_WARN:
        logger.warning("Точка линеаризации не равновесная: ||f||∞ = %.3e", residual)
    if not np.all(np.isfinite(jac)):
        bad = np.argwhere(~np.isfinite(jac))[0]
        raise NonFiniteDerivative(f"non-finite probe at row {bad[0]}, column {bad[1]}")
    return JacobianSet(
        a=jac[:n_x, :n_x], b=jac[:n_x, n_x:], c=jac[n_x:, :n_x], d=jac[n_x:, n_x:],
    )


def augment(jac: JacobianSet) -> np.ndarray:
    n_x, n_g, n_y = jac.n_x, jac.n_g, jac.n_y
    n_v = n_x + n_g + n_y
    ae = np.zeros((n_v, n_v))
    ae[:n_x, :n_x] = jac.a
    ae[:n_x, n_x:n_x + n_g] = jac.b
    ae[n_x + n_g:, :n_x] = jac.c
    ae[n_x + n_g:, n_x:n_x + n_g] = jac.d
    return ae


def adjacency(
    ae: np.ndarray,
    tol_abs: float = DEFAULT_TOL_ABS,
    nodes: tuple[NodeId, ...] | None = None,
    row_scaled: bool = True,
) -> AdjacencyMatrix:
    """
    a_ij = 1, если |Ã_e[i, j]| > tol_abs и i ≠ j.

    При row_scaled строки предварительно делятся на max(1, max|строки|).
    """
    if tol_abs <= 0:
        raise ValueError("tol_abs must be positive")
    ae = np.asarray(ae, dtype=float)
    if row_scaled:
        scale = np.maximum(1.0, np.max(np.abs(ae), axis=1, initial=0.0))
        ae = ae / scale[:, None]
    a = (np.abs(ae) > tol_abs).astype(np.int8)
    np.fill_diagonal(a, 0)
    if nodes is None:
        nodes = node_ids() if a.shape[0] == N_X + N_U + N_D + N_Y else _generic_nodes(a.shape[0])
    return AdjacencyMatrix(matrix=a, nodes=nodes)


def _generic_nodes(n: int) -> tuple[NodeId, ...]:
    return tuple(NodeId("state", i, f"v{i + 1}") for i in range(n))


def build_adjacency(params: PlantParams, point: OperatingPoint, h_rel: float = DEFAULT_H_REL,
                    tol_abs: float = DEFAULT_TOL_ABS) -> tuple[JacobianSet, np.ndarray, AdjacencyMatrix]:
    model = plant_model(params, point.z)
    jac = jacobians(model, point, h_rel=h_rel)
    ae = augment(jac)
    return jac, ae, adjacency(ae, tol_abs=tol_abs, nodes=model.nodes)
