import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag

from core.exceptions import CardinalityMismatch, EmptyGraph, NoScaleGap, ZeroDiagonal
from decomp.community import Partition, detect_communities, modularity
from decomp.io import read_partition, write_partition, write_report
from decomp.pipeline import DecompositionSettings, decompose
from decomp.subsystems import (
    REFERENCE_MEMBERSHIP, build_subsystems, compare_with_reference, horizontal_first, reference_partition,
)
from decomp.timescale import TimeScaleSplit, fast_adjacency, time_constants, vertical_split
from netgraph.graph import JacobianSet, adjacency, build_adjacency
from plant.equilibrium import reference_equilibrium
from plant.params import PlantParams


def jacobian_of(a):
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    return JacobianSet(a=a, b=np.zeros((n, 0)), c=np.zeros((0, n)), d=np.zeros((0, 0)))


def random_digraph(rng, n, density):
    while True:
        a = (rng.random((n, n)) < density).astype(np.int8)
        np.fill_diagonal(a, 0)
        if a.sum() > 0:
            return a


def two_cycles():
    a = np.zeros((6, 6), dtype=np.int8)
    for group in ((0, 1, 2), (3, 4, 5)):
        for k in range(3):
            # ребро group[k] -> group[k+1]
            a[group[(k + 1) % 3], group[k]] = 1
    return adjacency(a, tol_abs=0.5, row_scaled=False)


def set_partitions(n):
    """Все разбиения {0..n-1} в виде строк ограниченного роста."""
    labels = [0] * n

    def grow(i, top):
        if i == n:
            yield list(labels)
            return
        for c in range(top + 2):
            labels[i] = c
            yield from grow(i + 1, max(top, c))

    if n == 0:
        return
    labels[0] = 0
    yield from grow(1, 0)


def brute_force_max(a):
    return max(modularity(a, labels) for labels in set_partitions(a.shape[0]))


# ==============================
# Постоянные времени и вертикальный разрез
# ==============================

class TimeConstantTests(SimpleTestCase):
    def test_scalar_decay(self):
        np.testing.assert_allclose(time_constants(jacobian_of([[-1.0 / 50.0]])), [50.0])

    def test_decoupled_diagonal(self):
        tau = time_constants(jacobian_of(np.diag([-1.0 / 2.0, -1.0 / 200.0])))
        np.testing.assert_allclose(tau, [2.0, 200.0])

    def test_table_mode_returns_values_verbatim(self):
        tau = time_constants(table=PlantParams().time_constants)
        self.assertEqual(tau[4], 26.0)
        self.assertEqual(tau[22], 12652.0)

    def test_zero_diagonal_falls_back_to_table(self):
        jac = jacobian_of(np.diag([-0.5, 0.0]))
        with self.assertLogs("decomp.timescale", "WARNING"):
            tau = time_constants(jac, table=[9.0, 777.0])
        np.testing.assert_allclose(tau, [2.0, 777.0])

    def test_zero_diagonal_without_table(self):
        with self.assertRaises(ZeroDiagonal) as ctx:
            time_constants(jacobian_of(np.diag([-0.5, 0.0])))
        self.assertEqual(ctx.exception.index, 1)

    def test_estimate_is_clamped(self):
        tau = time_constants(jacobian_of(np.diag([-1e9, -1e-9])))
        np.testing.assert_allclose(tau, [1e-3, 1e6])


class VerticalSplitTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.params = PlantParams()
        _, _, cls.adj = build_adjacency(cls.params, reference_equilibrium(cls.params))
        cls.split = vertical_split(cls.params.tau, cls.adj, representatives=(4, 22))

    def test_slow_states(self):
        self.assertEqual(self.split.slow_states, (16, 18, 19, 20, 22))
        self.assertEqual(len(self.split.fast_states), 18)

    def test_inputs_and_outputs(self):
        self.assertEqual(self.split.slow_inputs, (2, 4, 5))
        self.assertEqual(self.split.fast_inputs, (0, 1, 3, 6))
        self.assertEqual(self.split.slow_outputs, (1,))
        self.assertEqual(self.split.fast_outputs, (0,))

    def test_epsilon(self):
        self.assertEqual(round(self.split.epsilon, 5), 0.00206)
        self.assertEqual(self.split.epsilon * self.split.tau_s_rep, self.split.tau_f_rep)
        self.assertEqual((self.split.tau_f_rep, self.split.tau_s_rep), (26.0, 12652.0))

    def test_default_representatives_use_the_gap_edges(self):
        split = vertical_split(self.params.tau, self.adj)
        self.assertEqual((split.tau_f_rep, split.tau_s_rep), (130.0, 12652.0))

    def test_single_scale_has_no_gap(self):
        with self.assertRaises(NoScaleGap):
            vertical_split(np.full(23, 20.0), self.adj)

    def test_representatives_must_match_sets(self):
        with self.assertRaises(ValueError):
            vertical_split(self.params.tau, self.adj, representatives=(22, 4))

    def test_fast_adjacency_zeroes_slow_rows(self):
        fast = fast_adjacency(self.adj, self.split)
        for label in ("x17", "x19", "x20", "x21", "x23", "u3", "u5", "u6", "y2"):
            self.assertEqual(int(fast.matrix[fast.index(label)].sum()), 0, label)
        kept = [i for i, label in enumerate(fast.labels)
                if label not in ("x17", "x19", "x20", "x21", "x23", "y2")]
        self.assertTrue(np.array_equal(fast.matrix[kept], self.adj.matrix[kept]))

    def test_fast_adjacency_single_and_empty_slow_set(self):
        n_u = tuple(range(7))
        empty = TimeScaleSplit(
            slow_states=(), fast_states=tuple(range(23)), slow_inputs=(), fast_inputs=n_u,
            slow_outputs=(), fast_outputs=(0, 1), tau_f_rep=1.0, tau_s_rep=100.0,
        )
        self.assertTrue(np.array_equal(fast_adjacency(self.adj, empty).matrix, self.adj.matrix))

        single = TimeScaleSplit(
            slow_states=(22,), fast_states=tuple(range(22)), slow_inputs=(), fast_inputs=n_u,
            slow_outputs=(), fast_outputs=(0, 1), tau_f_rep=1.0, tau_s_rep=100.0,
        )
        fast = fast_adjacency(self.adj, single)
        self.assertEqual(int(fast.matrix[22].sum()), 0)
        self.assertTrue(np.array_equal(fast.matrix[:, 22][:22], self.adj.matrix[:, 22][:22]))
        self.assertTrue(np.array_equal(fast.matrix[:22], self.adj.matrix[:22]))


# ==============================
# Модулярность и поиск сообществ
# ==============================

class ModularityTests(SimpleTestCase):
    def test_one_community_is_exactly_zero(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            a = random_digraph(rng, int(rng.integers(3, 9)), 0.4)
            self.assertEqual(modularity(a, [0] * a.shape[0]), 0.0)

    def test_singletons(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            a = random_digraph(rng, int(rng.integers(3, 9)), 0.4).astype(float)
            m = a.sum()
            expected = -np.sum(a.sum(axis=1) * a.sum(axis=0)) / m ** 2
            self.assertAlmostEqual(modularity(a, list(range(a.shape[0]))), expected, delta=1e-12)

    def test_two_cycles(self):
        self.assertAlmostEqual(modularity(two_cycles(), [1, 1, 1, 2, 2, 2]), 0.5, delta=1e-12)

    def test_empty_graph(self):
        with self.assertRaises(EmptyGraph):
            modularity(np.zeros((3, 3)), [0, 1, 2])

    def test_untagged_connected_node(self):
        adj = two_cycles()
        with self.assertRaises(ValueError):
            modularity(adj, {"v1": 1, "v2": 1})


class DetectionTests(SimpleTestCase):
    def test_two_cycles(self):
        partition = detect_communities(two_cycles(), n_c_upper=4, seed=5)
        self.assertEqual(partition.n_communities, 2)
        self.assertAlmostEqual(partition.modularity, 0.5, delta=1e-12)
        self.assertEqual(partition.communities(), {1: ["v1", "v2", "v3"], 2: ["v4", "v5", "v6"]})

    def test_complete_graph_is_one_community(self):
        a = np.ones((4, 4)) - np.eye(4)
        partition = detect_communities(adjacency(a, tol_abs=0.5), n_c_upper=4, seed=5)
        self.assertEqual(partition.n_communities, 1)
        self.assertAlmostEqual(partition.modularity, 0.0, delta=1e-12)

    def test_upper_bound_forces_merge(self):
        partition = detect_communities(two_cycles(), n_c_upper=1, seed=5)
        self.assertEqual(partition.n_communities, 1)
        self.assertAlmostEqual(partition.modularity, 0.0, delta=1e-12)

    def test_isolated_nodes_are_reported(self):
        a = np.zeros((4, 4))
        a[1, 0] = a[0, 1] = 1.0
        partition = detect_communities(adjacency(a, tol_abs=0.5), seed=1)
        self.assertEqual(partition.isolated, ("v3", "v4"))
        self.assertEqual(set(partition.tags), {"v1", "v2"})

    def test_empty_graph(self):
        with self.assertRaises(EmptyGraph):
            detect_communities(adjacency(np.zeros((3, 3)), tol_abs=0.5))

    def test_deterministic_for_seed(self):
        rng = np.random.default_rng(21)
        adj = adjacency(random_digraph(rng, 8, 0.4), tol_abs=0.5)
        first = detect_communities(adj, seed=99)
        second = detect_communities(adj, seed=99, workers=3)
        self.assertEqual(first.tags, second.tags)
        self.assertEqual(first.modularity, second.modularity)

    def test_plain_steps_two_cycles(self):
        partition = detect_communities(two_cycles(), n_c_upper=4, seed=5, refine=False)
        self.assertEqual(partition.communities(), {1: ["v1", "v2", "v3"], 2: ["v4", "v5", "v6"]})
        self.assertAlmostEqual(partition.modularity, 0.5, delta=1e-12)

    def test_plain_steps_complete_graph(self):
        a = np.ones((4, 4)) - np.eye(4)
        partition = detect_communities(adjacency(a, tol_abs=0.5), n_c_upper=4, seed=5, refine=False)
        self.assertEqual(partition.n_communities, 1)
        self.assertAlmostEqual(partition.modularity, 0.0, delta=1e-12)

    def test_plain_steps_respect_upper_bound(self):
        partition = detect_communities(two_cycles(), n_c_upper=1, seed=5, refine=False)
        self.assertEqual(partition.n_communities, 1)

    def test_refinement_never_lowers_modularity(self):
        rng = np.random.default_rng(7)
        for case in range(10):
            adj = adjacency(random_digraph(rng, 8, 0.35), tol_abs=0.5)
            plain = detect_communities(adj, n_c_upper=8, n_m_lower=1, seed=case, refine=False)
            refined = detect_communities(adj, n_c_upper=8, n_m_lower=1, seed=case)
            self.assertGreaterEqual(refined.modularity, plain.modularity - 1e-12, msg=f"case {case}")

    def test_matches_brute_force_on_small_graphs(self):
        rng = np.random.default_rng(2021)
        for case in range(50):
            n = int(rng.integers(3, 9))
            a = random_digraph(rng, n, float(rng.uniform(0.2, 0.6)))
            partition = detect_communities(
                adjacency(a, tol_abs=0.5), n_c_upper=n, n_l_lower=30, n_m_lower=5, seed=case,
            )
            self.assertAlmostEqual(partition.modularity, brute_force_max(a), delta=1e-9, msg=f"case {case}")


@tag("slow")
class ReferenceMembershipTests(SimpleTestCase):
    """Разбиение быстрой части установки по сообществам против эталонного."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        params = PlantParams()
        _, _, adj = build_adjacency(params, reference_equilibrium(params))
        cls.split = vertical_split(params.tau, adj, representatives=(4, 22))
        cls.fast = fast_adjacency(adj, cls.split)

    def test_three_fast_communities_match_reference(self):
        matches = 0
        for seed in range(50):
            partition = detect_communities(self.fast, n_c_upper=3, seed=seed)
            self.assertEqual(partition.n_communities, 3, msg=f"seed {seed}")
            matches += compare_with_reference(partition, self.split)["matches"]
        self.assertGreaterEqual(matches, 45)


# ==============================
# Подсистемы и конвейер
# ==============================

class SubsystemTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        params = PlantParams()
        _, _, adj = build_adjacency(params, reference_equilibrium(params))
        cls.split = vertical_split(params.tau, adj, representatives=(4, 22))
        cls.fast = fast_adjacency(adj, cls.split)
        cls.spec = build_subsystems(reference_partition(cls.fast), cls.split)

    def test_own_states_follow_reference(self):
        for sub, group in zip(self.spec, REFERENCE_MEMBERSHIP):
            expected = [label for label in group if label.startswith("x")]
            self.assertEqual(sub.labels()["x_f"], sorted(expected, key=lambda s: int(s[1:])))

    def test_first_subsystem_lists(self):
        first = self.spec[1].labels()
        self.assertEqual(first["u_f"], ["u1", "u7"])
        self.assertEqual(first["y_f"], ["y1"])
        self.assertEqual(first["u_bar"], ["u3", "u4", "u5", "u6"])
        own_others = self.spec[2].labels()["x_f"] + self.spec[3].labels()["x_f"]
        self.assertEqual(sorted(first["x_bar"], key=lambda s: int(s[1:])),
                         sorted(own_others, key=lambda s: int(s[1:])))

    def test_second_subsystem_sees_slow_building(self):
        second = self.spec[2].labels()
        self.assertIn("x23", second["x_bar"])
        self.assertEqual(second["u_f"], ["u2"])

    def test_third_subsystem_neighbor_inputs_are_slow(self):
        third = self.spec[3].labels()
        self.assertEqual(third["u_bar"], ["u3", "u5", "u6"])
        self.assertEqual(third["u_f"], ["u4"])

    def test_sharing_gives_every_subsystem_y1(self):
        for sub in self.spec:
            self.assertEqual(sub.outputs, (0,))
            self.assertIn(1, sub.disturbances)

    def test_single_community_is_rejected(self):
        tags = {label: 1 for label in self.fast.labels
                if (self.fast.matrix[self.fast.index(label)].any() or self.fast.matrix[:, self.fast.index(label)].any())}
        partition = Partition(adjacency=self.fast, tags=tags, modularity=modularity(self.fast, tags))
        with self.assertRaises(CardinalityMismatch):
            build_subsystems(partition, self.split, sharing={})

    def test_reference_check_on_reference_partition(self):
        check = compare_with_reference(reference_partition(self.fast), self.split)
        self.assertEqual(check, {"matches": True, "disagreeing_states": []})

    def test_horizontal_first_summary(self):
        summary = horizontal_first(reference_partition(self.fast), self.split)
        self.assertGreaterEqual(summary["with_slow_states"], 1)
        states = [s for block in summary["blocks"] for s in block["states"]]
        self.assertEqual(len(states), len(set(states)))


class PipelineTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.result = decompose(PlantParams(), DecompositionSettings(subsystems="reference"), seed=7)

    def test_epsilon_and_subsystems(self):
        self.assertEqual(round(self.result.epsilon, 5), 0.00206)
        self.assertEqual(len(self.result.subsystems), 3)
        self.assertEqual(self.result.partition.n_communities, 3)
        self.assertTrue(self.result.reference_check["matches"])

    def test_report_is_json_serializable(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_report(self.result.report(), Path(tmp) / "report.json")
            report = json.loads(path.read_text(encoding="utf-8"))
        self.assertEqual(report["seed"], 7)
        self.assertEqual(report["split"]["slow_states"], ["x17", "x19", "x20", "x21", "x23"])
        self.assertEqual(len(report["time_constants"]), 23)
        self.assertIn("ratio", report["time_constants"][0])

    def test_partition_round_trip(self):
        partition = self.result.partition
        with tempfile.TemporaryDirectory() as tmp:
            path = write_partition(partition, Path(tmp) / "partition.txt")
            again = read_partition(path, partition.adjacency)
        self.assertEqual(dict(again.tags), dict(partition.tags))
        self.assertAlmostEqual(again.modularity, partition.modularity, delta=1e-12)

    def test_single_scale_plant_goes_horizontal_only(self):
        params = PlantParams(time_constants=(20.0,) * 23)
        result = decompose(params, DecompositionSettings(n_l_lower=2, n_m_lower=1), seed=3)
        self.assertIsNone(result.split)
        self.assertIsNone(result.subsystems)
        self.assertTrue(result.notes[0].startswith("NoScaleGap"))
