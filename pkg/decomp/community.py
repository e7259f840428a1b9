"""
Горизонтальная декомпозиция: модулярность Ньюмана для ориентированного
графа и улучшенный fast unfolding (Louvain).

Соглашение как в netgraph: a_ij = 1 — ребро j → i, поэтому
k_in_i — сумма строки, k_out_j — сумма столбца.

Улучшения относительно классического алгоритма:
  - набор перезапусков со случайным порядком узлов, лучший по M;
  - верхняя граница числа сообществ N_c_upper, лишние сливаются попарно
    с максимальным итоговым M;
  - внешний цикл идёт, пока перезапусков не меньше N_l_lower и лучший M
    не повторился N_m_lower раз.

Сверх этих шагов каждый перезапуск по умолчанию заканчивается доводкой
на исходных узлах (refine=True), как modularity_finetune в BCT: переносы
узлов и пар узлов и слияния сообществ, пока M растёт. С refine=False
остаются только шаги выше.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from core import config
from core.exceptions import EmptyGraph
from netgraph.graph import AdjacencyMatrix

logger = logging.getLogger(__name__)

GAIN_TOL = 1e-12
RECUR_TOL = 1e-10
MAX_LEVELS = 100


# ==============================
# Модулярность
# ==============================

def _labels_vector(adj, tags) -> np.ndarray:
    """Метки сообществ по узлам; -1 — узел без метки."""
    n = np.asarray(getattr(adj, "matrix", adj)).shape[0]
    if isinstance(tags, Mapping):
        if not isinstance(adj, AdjacencyMatrix):
            raise TypeError("tags keyed by label need an AdjacencyMatrix")
        return np.array([int(tags.get(label, -1)) for label in adj.labels], dtype=int)
    vec = np.array([-1 if t is None else int(t) for t in tags], dtype=int)
    if vec.size != n:
        raise ValueError("tag vector does not match the node count")
    return vec


def _matrix_modularity(a: np.ndarray, labels: np.ndarray) -> float:
    m = a.sum()
    _, inverse = np.unique(labels, return_inverse=True)
    s = np.zeros((labels.size, inverse.max() + 1))
    s[np.arange(labels.size), inverse] = 1.0
    intra = np.trace(s.T @ a @ s)
    expected = (s.T @ a.sum(axis=1)) @ (s.T @ a.sum(axis=0)) / m
    return float((intra - expected) / m)


def modularity(adj: AdjacencyMatrix | np.ndarray, tags: Mapping[str, int] | Sequence[int]) -> float:
    """
    M = (1/m) Σ_ij (a_ij − k_in_i·k_out_j / m)·δ(c_i, c_j).

    Изолированные узлы можно не помечать: они не дают вклада.
    """
    a = np.asarray(getattr(adj, "matrix", adj), dtype=float)
    if a.sum() == 0:
        raise EmptyGraph("graph has no edges")
    labels = _labels_vector(adj, tags)
    connected = (a.sum(axis=0) + a.sum(axis=1)) > 0
    if np.any(connected & (labels < 0)):
        raise ValueError("every non-isolated node must be tagged")
    # непомеченным изолированным узлам — собственные метки, на M это не влияет
    free = np.flatnonzero(labels < 0)
    labels = labels.copy()
    labels[free] = labels.max(initial=0) + 1 + np.arange(free.size)
    return _matrix_modularity(a, labels)


@dataclass(frozen=True)
class Partition:
    adjacency: AdjacencyMatrix = field(repr=False)
    tags: Mapping[str, int]
    modularity: float
    isolated: tuple[str, ...] = ()
    seed: int | None = None
    restarts: int = 0

    def __post_init__(self):
        recomputed = modularity(self.adjacency, self.tags)
        if abs(recomputed - self.modularity) > 1e-12:
            raise ValueError(f"modularity {self.modularity} disagrees with recomputed {recomputed}")

    @property
    def n_communities(self) -> int:
        return len(set(self.tags.values()))

    def communities(self) -> dict[int, list[str]]:
        """Сообщество → подписи узлов в порядке узлов."""
        out: dict[int, list[str]] = {}
        for label in self.adjacency.labels:
            if label in self.tags:
                out.setdefault(self.tags[label], []).append(label)
        return dict(sorted(out.items()))


# ==============================
# Шаги алгоритма
# ==============================

def _canonical(labels: np.ndarray) -> np.ndarray:
    """Перенумерация 0..C-1 в порядке первого появления."""
    mapping: dict[int, int] = {}
    out = np.empty_like(labels)
    for i, c in enumerate(labels):
        out[i] = mapping.setdefault(int(c), len(mapping))
    return out


def _aggregate(w: np.ndarray, comm: np.ndarray) -> np.ndarray:
    s = np.zeros((comm.size, comm.max() + 1))
    s[np.arange(comm.size), comm] = 1.0
    return s.T @ w @ s


def _local_moving(w: np.ndarray, order: np.ndarray) -> np.ndarray:
    """
    Шаг 2.2: узлы по очереди переходят в сообщество с наибольшим приростом M,
    пока проход не перестанет что-либо менять.
    """
    n = w.shape[0]
    m = w.sum()
    k_in, k_out = w.sum(axis=1), w.sum(axis=0)
    comm = np.arange(n)
    tot_in = k_in.copy()
    tot_out = k_out.copy()
    current = _matrix_modularity(w, comm)

    moved = True
    while moved:
        moved = False
        for u in order:
            ca = comm[u]
            tot_in[ca] -= k_in[u]
            tot_out[ca] -= k_out[u]
            link = np.bincount(comm, weights=w[u, :], minlength=n) + np.bincount(comm, weights=w[:, u], minlength=n)
            link[ca] -= 2.0 * w[u, u]
            gain = link - (k_in[u] * tot_out + k_out[u] * tot_in) / m
            best = int(np.flatnonzero(gain >= gain.max() - GAIN_TOL)[0])
            if gain[best] - gain[ca] > GAIN_TOL:
                comm[u] = best
                moved = True
            else:
                best = ca
            tot_in[best] += k_in[u]
            tot_out[best] += k_out[u]
        if moved:
            updated = _matrix_modularity(w, comm)
            assert updated >= current - GAIN_TOL, "local moving decreased modularity"
            current = updated
    return _canonical(comm)


def _reduce_communities(a: np.ndarray, labels: np.ndarray, n_c_upper: int) -> np.ndarray:
    """Шаг 2.3: попарные слияния с наибольшим итоговым M, пока N_c > N_c_upper."""
    labels = _canonical(labels)
    m = a.sum()
    while labels.max() + 1 > n_c_upper:
        w = _aggregate(a, labels)
        k_in, k_out = w.sum(axis=1), w.sum(axis=0)
        best, best_pair = -np.inf, (0, 1)
        for p, q in combinations(range(w.shape[0]), 2):
            delta = w[p, q] + w[q, p] - (k_in[p] * k_out[q] + k_in[q] * k_out[p]) / m
            if delta > best + GAIN_TOL:
                best, best_pair = delta, (p, q)
        p, q = best_pair
        labels = _canonical(np.where(labels == q, p, labels))
    return labels


def _refine(a: np.ndarray, labels: np.ndarray, n_c_upper: int) -> np.ndarray:
    """
    Доводка на исходных узлах: перенос одного узла, пары узлов и слияние
    двух сообществ, пока что-то из этого увеличивает M. Граница N_c_upper
    не нарушается.
    """
    labels = _canonical(labels)
    current = _matrix_modularity(a, labels)
    n = labels.size

    def targets():
        count = labels.max() + 1
        return list(range(count)) + ([count] if count < n_c_upper else [])

    def single_moves():
        for u in range(n):
            for c in targets():
                if c != labels[u]:
                    trial = labels.copy()
                    trial[u] = c
                    yield trial

    def pair_moves():
        for u, v in combinations(range(n), 2):
            for c in targets():
                if c != labels[u] or c != labels[v]:
                    trial = labels.copy()
                    trial[[u, v]] = c
                    yield trial

    def merges():
        for p, q in combinations(range(labels.max() + 1), 2):
            yield np.where(labels == q, p, labels)

    improved = True
    while improved:
        improved = False
        for moves in (single_moves, pair_moves, merges):
            best, best_labels = current, None
            for trial in moves():
                value = _matrix_modularity(a, trial)
                if value > best + GAIN_TOL:
                    best, best_labels = value, trial
            if best_labels is not None:
                labels, current, improved = _canonical(best_labels), best, True
                break
    return labels


def _unfold(a: np.ndarray, rng: np.random.Generator, n_c_upper: int, refine: bool) -> tuple[np.ndarray, float]:
    """Один перезапуск: уровни локальных переносов и агрегаций, затем сокращение."""
    membership = np.arange(a.shape[0])
    w = a.astype(float)
    best = _matrix_modularity(a, membership)
    for _ in range(MAX_LEVELS):
        comm = _local_moving(w, rng.permutation(w.shape[0]))
        candidate = comm[membership]
        value = _matrix_modularity(a, candidate)
        if value - best <= GAIN_TOL:
            break
        membership, best = candidate, value
        w = _aggregate(w, comm)
        if w.shape[0] == 1:
            break
    membership = _reduce_communities(a, membership, n_c_upper)
    if refine:
        membership = _refine(a, membership, n_c_upper)
    return _canonical(membership), _matrix_modularity(a, membership)


# ==============================
# Внешний цикл
# ==============================

def detect_communities(
    adj: AdjacencyMatrix,
    n_c_upper: int = 3,
    n_l_lower: int = 10,
    n_m_lower: int = 3,
    seed: int | None = None,
    max_restarts: int | None = None,
    refine: bool = True,
    workers: int | None = None,
) -> Partition:
    if n_c_upper < 1 or n_l_lower < 1 or n_m_lower < 1:
        raise ValueError("N_c_upper, N_l_lower and N_m_lower must be at least 1")
    seed = config.SEED if seed is None else int(seed)
    workers = max(1, config.WORKERS if workers is None else int(workers))
    max_restarts = max_restarts or 20 * n_l_lower

    full = np.asarray(adj.matrix, dtype=float)
    connected = (full.sum(axis=0) + full.sum(axis=1)) > 0
    active = np.flatnonzero(connected)
    a = full[np.ix_(active, active)]
    if a.sum() == 0:
        raise EmptyGraph("graph has no edges")
    logger.info("Поиск сообществ: seed=%d, узлов %d, рёбер %d", seed, active.size, int(a.sum()))

    def run(index: int):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
        return _unfold(a, rng, n_c_upper, refine)

    best_labels, best_value, recurrences, done = None, -np.inf, 0, 0
    with ThreadPoolExecutor(max_workers=workers) as pool:
        while done < max_restarts:
            batch = range(done, min(done + workers, max_restarts))
            for labels, value in pool.map(run, batch):
                done += 1
                if value > best_value + RECUR_TOL:
                    best_labels, best_value, recurrences = labels, value, 1
                elif abs(value - best_value) <= RECUR_TOL:
                    recurrences += 1
                if done >= n_l_lower and recurrences >= n_m_lower:
                    break
            if done >= n_l_lower and recurrences >= n_m_lower:
                break
        else:
            logger.warning("Достигнут предел перезапусков %d, M_max повторился %d раз",
                           max_restarts, recurrences)

    labels = [adj.labels[i] for i in active]
    tags = {label: int(c) + 1 for label, c in zip(labels, best_labels)}
    isolated = tuple(adj.labels[i] for i in np.flatnonzero(~connected))
    partition = Partition(
        adjacency=adj, tags=tags, modularity=modularity(adj, tags),
        isolated=isolated, seed=seed, restarts=done,
    )
    logger.info("Найдено сообществ: %d, M = %.6f, перезапусков %d",
                partition.n_communities, partition.modularity, done)
    return partition
