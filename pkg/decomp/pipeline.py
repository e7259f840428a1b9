"""
Полный конвейер декомпозиции: равновесие → Якобианы → граф →
вертикальный разрез → граф быстрой части → сообщества → подсистемы.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from core.exceptions import NoScaleGap
from decomp.community import Partition, detect_communities
from decomp.subsystems import (
    DEFAULT_SHARING, SubsystemSpec, build_subsystems, compare_with_reference,
    horizontal_first, reference_partition,
)
from decomp.timescale import DEFAULT_GAP_MIN, TimeScaleSplit, fast_adjacency, time_constants, vertical_split
from netgraph.graph import DEFAULT_TOL_ABS, AdjacencyMatrix, JacobianSet, build_adjacency
from nlp.finite_diff import DEFAULT_H_REL
from plant.equilibrium import OperatingPoint, reference_equilibrium
from plant.params import PlantParams

logger = logging.getLogger(__name__)

Order = Literal["vertical-first", "horizontal-first"]


class DecompositionSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    tau_mode: Literal["table", "estimate"] = "table"
    gap_min: float = DEFAULT_GAP_MIN
    # состояния, чьи τ задают ε; None — крайние по обе стороны разреза
    representatives: tuple[str, str] | None = ("x5", "x23")
    n_c_upper: int = 3
    n_l_lower: int = 10
    n_m_lower: int = 3
    max_restarts: int | None = None
    refine: bool = True
    tol_abs: float = DEFAULT_TOL_ABS
    h_rel: float = DEFAULT_H_REL
    sharing: dict[str, tuple[int, ...]] = dict(DEFAULT_SHARING)
    subsystems: Literal["detected", "reference"] = "detected"

    @field_validator("representatives")
    @classmethod
    def _state_labels(cls, value):
        if value is not None:
            for label in value:
                if not (label.startswith("x") and label[1:].isdigit()):
                    raise ValueError(f"{label!r} is not a state label")
        return value

    def representative_indices(self) -> tuple[int, int] | None:
        if self.representatives is None:
            return None
        fast, slow = self.representatives
        return int(fast[1:]) - 1, int(slow[1:]) - 1


@dataclass
class DecompositionResult:
    order: Order
    seed: int
    point: OperatingPoint = field(repr=False)
    jacobians: JacobianSet = field(repr=False)
    adjacency: AdjacencyMatrix = field(repr=False)
    tau: np.ndarray
    tau_table: np.ndarray
    tau_estimate: np.ndarray | None
    split: TimeScaleSplit | None
    fast_adjacency: AdjacencyMatrix | None = field(repr=False)
    partition: Partition
    subsystems: SubsystemSpec | None
    reference_check: dict | None = None
    horizontal_first: dict | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def epsilon(self) -> float | None:
        return None if self.split is None else self.split.epsilon

    def report(self) -> dict:
        """Отчёт для JSON: τ, ε, множества, M_max, seed, подсистемы."""
        tau_rows = []
        for i, value in enumerate(self.tau):
            row = {"state": f"x{i + 1}", "tau": float(value), "table": float(self.tau_table[i])}
            if self.tau_estimate is not None:
                row["estimate"] = float(self.tau_estimate[i])
                row["ratio"] = float(self.tau_estimate[i] / self.tau_table[i])
            tau_rows.append(row)
        return {
            "order": self.order,
            "seed": self.seed,
            "time_constants": tau_rows,
            "epsilon": self.epsilon,
            "tau_f_rep": None if self.split is None else self.split.tau_f_rep,
            "tau_s_rep": None if self.split is None else self.split.tau_s_rep,
            "split": None if self.split is None else self.split.labels(),
            "modularity": self.partition.modularity,
            "communities": {str(c): labels for c, labels in self.partition.communities().items()},
            "isolated": list(self.partition.isolated),
            "restarts": self.partition.restarts,
            "subsystems": None if self.subsystems is None else [s.labels() for s in self.subsystems],
            "reference_check": self.reference_check,
            "horizontal_first": self.horizontal_first,
            "notes": self.notes,
        }


def decompose(
    params: PlantParams,
    settings: DecompositionSettings | None = None,
    seed: int | None = None,
    order: Order = "vertical-first",
    point: OperatingPoint | None = None,
) -> DecompositionResult:
    settings = settings or DecompositionSettings()
    point = point or reference_equilibrium(params)
    jac, _, adj = build_adjacency(params, point, h_rel=settings.h_rel, tol_abs=settings.tol_abs)

    table = params.tau
    estimate = time_constants(jac, table=table)
    tau = estimate if settings.tau_mode == "estimate" else time_constants(table=table)

    notes: list[str] = []
    try:
        split = vertical_split(tau, adj, gap_min=settings.gap_min,
                               representatives=settings.representative_indices())
    except NoScaleGap as exc:
        logger.warning("Разделения по шкалам времени нет (%s), только горизонтальная декомпозиция", exc)
        notes.append(f"NoScaleGap: {exc}")
        split = None

    detect = dict(
        n_c_upper=settings.n_c_upper, n_l_lower=settings.n_l_lower, n_m_lower=settings.n_m_lower,
        seed=seed, max_restarts=settings.max_restarts, refine=settings.refine,
    )

    summary = None
    if split is None:
        fast_adj = None
        partition = detect_communities(adj, **detect)
    elif order == "horizontal-first":
        fast_adj = None
        partition = detect_communities(adj, **{**detect, "n_c_upper": adj.matrix.shape[0]})
        summary = horizontal_first(partition, split)
        logger.info("Порядок «сначала горизонтальная»: подсистем %d, с медленными состояниями %d",
                    summary["subsystems"], summary["with_slow_states"])
    else:
        fast_adj = fast_adjacency(adj, split)
        partition = detect_communities(fast_adj, **detect)

    subsystems, check = None, None
    if split is not None and fast_adj is not None:
        check = compare_with_reference(partition, split)
        source = partition
        if settings.subsystems == "reference":
            source = reference_partition(fast_adj, partition)
        subsystems = build_subsystems(source, split, sharing=settings.sharing)

    return DecompositionResult(
        order=order, seed=partition.seed, point=point, jacobians=jac, adjacency=adj,
        tau=tau, tau_table=table, tau_estimate=estimate, split=split,
        fast_adjacency=fast_adj, partition=partition, subsystems=subsystems,
        reference_check=check, horizontal_first=summary, notes=notes,
    )
