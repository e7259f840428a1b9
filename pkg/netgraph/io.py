"""
Экспорт/импорт матрицы смежности: список рёбер `<откуда> <куда>` и
плотный CSV 0/1 с подписями строк и столбцов.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from core.exceptions import ConfigError, ReportError
from netgraph.graph import AdjacencyMatrix, NodeId


def write_edge_list(adj: AdjacencyMatrix, path: str | Path) -> Path:
    path = Path(path)
    lines = [f"{source} {target}" for source, target in adj.edges()]
    try:
        path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    except OSError as exc:
        raise ReportError(f"cannot write edge list: {exc}", context=str(path)) from exc
    return path


def read_edge_list(path: str | Path, nodes: tuple[NodeId, ...]) -> AdjacencyMatrix:
    path = Path(path)
    labels = [n.label for n in nodes]
    position = {label: i for i, label in enumerate(labels)}
    matrix = np.zeros((len(labels), len(labels)), dtype=np.int8)
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2 or parts[0] not in position or parts[1] not in position:
            raise ConfigError(f"bad edge line {line!r}", context=f"{path}:{lineno}")
        matrix[position[parts[1]], position[parts[0]]] = 1
    return AdjacencyMatrix(matrix=matrix, nodes=nodes)


def write_dense_csv(adj: AdjacencyMatrix, path: str | Path) -> Path:
    path = Path(path)
    frame = pd.DataFrame(adj.matrix, index=list(adj.labels), columns=list(adj.labels))
    try:
        frame.to_csv(path, index_label="node")
    except OSError as exc:
        raise ReportError(f"cannot write adjacency CSV: {exc}", context=str(path)) from exc
    return path


def read_dense_csv(path: str | Path, nodes: tuple[NodeId, ...]) -> AdjacencyMatrix:
    frame = pd.read_csv(path, index_col="node")
    labels = [n.label for n in nodes]
    if list(frame.index) != labels or list(frame.columns) != labels:
        raise ConfigError("adjacency CSV labels do not match the node ordering", context=str(path))
    return AdjacencyMatrix(matrix=frame.to_numpy(), nodes=nodes)
