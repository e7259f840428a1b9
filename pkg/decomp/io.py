"""
Экспорт/импорт разбиения (`<подпись-узла> <номер-сообщества>`) и запись
отчёта декомпозиции в JSON.
"""

from __future__ import annotations

import json
from pathlib import Path

from core.exceptions import ConfigError, ReportError
from decomp.community import Partition, modularity
from netgraph.graph import AdjacencyMatrix


def write_partition(partition: Partition, path: str | Path) -> Path:
    path = Path(path)
    lines = [f"{label} {partition.tags[label]}" for label in partition.adjacency.labels if label in partition.tags]
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ReportError(f"cannot write partition: {exc}", context=str(path)) from exc
    return path


def read_partition(path: str | Path, adj: AdjacencyMatrix) -> Partition:
    path = Path(path)
    known = set(adj.labels)
    tags: dict[str, int] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2 or parts[0] not in known or not parts[1].lstrip("-").isdigit():
            raise ConfigError(f"bad partition line {line!r}", context=f"{path}:{lineno}")
        tags[parts[0]] = int(parts[1])
    connected = (adj.matrix.sum(axis=0) + adj.matrix.sum(axis=1)) > 0
    isolated = tuple(label for label, c in zip(adj.labels, connected) if not c and label not in tags)
    try:
        value = modularity(adj, tags)
    except ValueError as exc:
        raise ConfigError(str(exc), context=str(path)) from exc
    return Partition(adjacency=adj, tags=tags, modularity=value, isolated=isolated)


def write_report(report: dict, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.write_text(json.dumps(report, ensure_ascii=False, indent=2), encoding="utf-8")
    except (OSError, TypeError) as exc:
        raise ReportError(f"cannot write report: {exc}", context=str(path)) from exc
    return path
