"""
Конфигурация быстрых подсистем по найденному разбиению.

Каждая подсистема j получает собственные состояния x_fj и входы u_fj,
соседние состояния x̄_fj и входы ū_fj, выходы y_fj. Совместное
использование (y1 и ФЭП в подсистемах 2 и 3) задаётся переопределениями.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from core.exceptions import CardinalityMismatch
from decomp.community import Partition, modularity
from decomp.timescale import TimeScaleSplit
from netgraph.graph import AdjacencyMatrix

N_FAST_SUBSYSTEMS = 3

# эталонные быстрые подсистемы: состояния, собственные входы, выход
REFERENCE_MEMBERSHIP: tuple[tuple[str, ...], ...] = (
    ("x1", "x2", "x3", "x4", "x5", "x16", "x18", "u1", "u7", "y1"),
    ("x6", "x7", "x8", "x9", "x15", "x22", "u2"),
    ("x10", "x11", "x12", "x13", "x14", "u4"),
)

# y1 и возмущения ФЭП (t_a, S_ra) доступны всем трём подсистемам
DEFAULT_SHARING: Mapping[str, tuple[int, ...]] = {
    "y1": (1, 2, 3),
    "w1": (1, 2, 3),
    "w2": (1, 2, 3),
}


@dataclass(frozen=True)
class FastSubsystem:
    number: int
    states: tuple[int, ...]
    inputs: tuple[int, ...]
    neighbor_states: tuple[int, ...]
    neighbor_inputs: tuple[int, ...]
    outputs: tuple[int, ...]
    disturbances: tuple[int, ...] = ()

    def labels(self) -> dict[str, list[str]]:
        return {
            "x_f": [f"x{i + 1}" for i in self.states],
            "u_f": [f"u{i + 1}" for i in self.inputs],
            "x_bar": [f"x{i + 1}" for i in self.neighbor_states],
            "u_bar": [f"u{i + 1}" for i in self.neighbor_inputs],
            "y_f": [f"y{i + 1}" for i in self.outputs],
            "w": [f"w{i + 1}" for i in self.disturbances],
        }


@dataclass(frozen=True)
class SubsystemSpec:
    subsystems: tuple[FastSubsystem, ...]
    split: TimeScaleSplit
    sharing: Mapping[str, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        owned = [i for sub in self.subsystems for i in sub.states]
        if len(owned) != len(set(owned)):
            raise ValueError("own-state sets of fast subsystems overlap")
        if set(owned) != set(self.split.fast_states):
            raise ValueError("own-state sets must cover the fast states exactly")

    def __iter__(self):
        return iter(self.subsystems)

    def __len__(self):
        return len(self.subsystems)

    def __getitem__(self, number: int) -> FastSubsystem:
        return self.subsystems[number - 1]

    def owner_of_input(self, k: int) -> int | None:
        for sub in self.subsystems:
            if k in sub.inputs:
                return sub.number
        return None


def _indices(labels, prefix: str) -> list[int]:
    return sorted(int(label[1:]) - 1 for label in labels if label.startswith(prefix))


def build_subsystems(
    partition: Partition,
    split: TimeScaleSplit,
    sharing: Mapping[str, tuple[int, ...]] | None = None,
) -> SubsystemSpec:
    """
    Подсистемы нумеруются по наименьшему индексу своих быстрых состояний.

    x̄_fj — все быстрые состояния других подсистем и медленные состояния,
    входящие в уравнения x_fj. ū_fj — медленные входы и быстрые входы
    других подсистем, входящие в уравнения x_fj или в y_fj.
    """
    sharing = dict(DEFAULT_SHARING if sharing is None else sharing)
    adj = partition.adjacency
    tags = partition.tags

    fast_labels = [f"x{i + 1}" for i in split.fast_states]
    # порядок первого появления по возрастанию индекса состояния
    communities = list(dict.fromkeys(tags[label] for label in fast_labels if label in tags))
    untagged = [label for label in fast_labels if label not in tags]
    if len(communities) != N_FAST_SUBSYSTEMS or untagged:
        raise CardinalityMismatch(
            f"expected {N_FAST_SUBSYSTEMS} fast communities, got {len(communities)}"
            + (f" and untagged fast states {untagged}" if untagged else "")
        )
    number_of = {c: j + 1 for j, c in enumerate(communities)}

    members: dict[int, list[str]] = {j: [] for j in range(1, N_FAST_SUBSYSTEMS + 1)}
    for label, c in tags.items():
        if c in number_of:
            members[number_of[c]].append(label)
    for label, numbers in sharing.items():
        for j in numbers:
            if j not in members:
                raise ValueError(f"sharing override names unknown subsystem {j}")
            if label not in members[j]:
                members[j].append(label)

    matrix = adj.matrix
    n_x = split.n_x
    kinds = [node.kind for node in adj.nodes]
    input_cols = [j for j, k in enumerate(kinds) if k == "input"]
    output_rows = [i for i, k in enumerate(kinds) if k == "output"]
    fast_inputs, slow_inputs = set(split.fast_inputs), set(split.slow_inputs)
    fast_outputs = set(split.fast_outputs)

    own_states = {j: [i for i in _indices(members[j], "x") if i in split.fast_states] for j in members}
    own_inputs = {j: [k for k in _indices(members[j], "u") if k in fast_inputs] for j in members}

    # быстрый вход вне трёх сообществ отдаётся подсистеме, в чьи уравнения он входит чаще
    owned = {k for inputs in own_inputs.values() for k in inputs}
    for k in sorted(fast_inputs - owned):
        hits = [int(matrix[own_states[j], input_cols[k]].sum()) for j in members]
        own_inputs[int(np.argmax(hits)) + 1].append(k)

    # выход принадлежит подсистеме, если помечен её сообществом или передан ей
    # переопределением; медленные выходы быстрым подсистемам не достаются
    outputs = {j: [k for k in _indices(members[j], "y") if k in fast_outputs] for j in members}

    subsystems = []
    for j in members:
        rows = list(own_states[j])
        feeding_states = set(np.flatnonzero(matrix[rows, :n_x].any(axis=0)).tolist()) if rows else set()
        neighbor_states = sorted(
            {i for other in members if other != j for i in own_states[other]}
            | {i for i in feeding_states if i in split.slow_states}
        )
        target_rows = rows + [output_rows[k] for k in outputs[j]]
        feeding_inputs = {
            k for k, col in enumerate(input_cols) if target_rows and matrix[target_rows, col].any()
        }
        neighbor_inputs = sorted(
            slow_inputs
            | {k for k in feeding_inputs if k in fast_inputs and k not in own_inputs[j]}
        )
        subsystems.append(FastSubsystem(
            number=j,
            states=tuple(own_states[j]),
            inputs=tuple(sorted(own_inputs[j])),
            neighbor_states=tuple(neighbor_states),
            neighbor_inputs=tuple(neighbor_inputs),
            outputs=tuple(outputs[j]),
            disturbances=tuple(_indices(members[j], "w")),
        ))
    return SubsystemSpec(subsystems=tuple(subsystems), split=split, sharing=sharing)


# ==============================
# Эталонное разбиение
# ==============================

def reference_partition(adj: AdjacencyMatrix, detected: Partition | None = None) -> Partition:
    """
    Эталонное разбиение быстрых подсистем. Остальные связные узлы
    переходят за сообществом, с которым их связало найденное разбиение,
    а без него попадают в подсистему 1.
    """
    reference = {label: j for j, group in enumerate(REFERENCE_MEMBERSHIP, start=1) for label in group}
    detected_tags = detected.tags if detected is not None else {}
    old_to_new: dict[int, int] = {}
    for label, j in reference.items():
        if label in detected_tags:
            old_to_new.setdefault(detected_tags[label], j)

    connected = (adj.matrix.sum(axis=0) + adj.matrix.sum(axis=1)) > 0
    tags, isolated = {}, []
    for label, linked in zip(adj.labels, connected):
        if label in reference:
            tags[label] = reference[label]
        elif linked:
            tags[label] = old_to_new.get(detected_tags.get(label), 1)
        else:
            isolated.append(label)
    return Partition(
        adjacency=adj, tags=tags, modularity=modularity(adj, tags), isolated=tuple(isolated),
        seed=None if detected is None else detected.seed,
        restarts=0 if detected is None else detected.restarts,
    )


def compare_with_reference(partition: Partition, split: TimeScaleSplit) -> dict:
    """Совпадает ли разбиение быстрых состояний с эталонным и какие состояния расходятся."""
    reference = {
        label: j for j, group in enumerate(REFERENCE_MEMBERSHIP, start=1)
        for label in group if label.startswith("x")
    }
    fast_labels = [f"x{i + 1}" for i in split.fast_states]
    # сопоставление сообществ по большинству
    votes: dict[int, dict[int, int]] = {}
    for label in fast_labels:
        c = partition.tags.get(label)
        if c is not None and label in reference:
            votes.setdefault(c, {}).setdefault(reference[label], 0)
            votes[c][reference[label]] += 1
    mapping = {c: max(v.items(), key=lambda kv: (kv[1], -kv[0]))[0] for c, v in votes.items()}
    disagree = [
        label for label in fast_labels
        if label in reference and mapping.get(partition.tags.get(label)) != reference[label]
    ]
    # взаимно однозначное соответствие нужно и для равенства
    matches = not disagree and len(set(mapping.values())) == len(mapping) == len(REFERENCE_MEMBERSHIP)
    return {"matches": matches, "disagreeing_states": disagree}


# ==============================
# Обратный порядок декомпозиции
# ==============================

def horizontal_first(partition: Partition, split: TimeScaleSplit) -> dict:
    """
    Сводка для порядка «сначала горизонтальная»: каждое сообщество
    полного графа делится по шкалам времени.
    """
    slow = {f"x{i + 1}" for i in split.slow_states}
    blocks = []
    for c, labels in partition.communities().items():
        states = [label for label in labels if label.startswith("x")]
        slow_part = [label for label in states if label in slow]
        fast_part = [label for label in states if label not in slow]
        for part, scale in ((slow_part, "slow"), (fast_part, "fast")):
            if part:
                blocks.append({"community": c, "scale": scale, "states": part})
    slow_blocks = [b for b in blocks if b["scale"] == "slow"]
    return {
        "subsystems": len(blocks),
        "with_slow_states": len(slow_blocks),
        "single_slow_state": sum(1 for b in slow_blocks if len(b["states"]) == 1),
        "blocks": blocks,
    }
