import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import NonFiniteDerivative
from netgraph.graph import (
    DynModel, JacobianSet, adjacency, augment, build_adjacency, jacobians, node_ids, plant_model,
)
from netgraph.io import read_dense_csv, read_edge_list, write_dense_csv, write_edge_list
from plant.equilibrium import OperatingPoint, reference_equilibrium
from plant.params import PlantParams


def linear_model(m, n, c, n_d=1):
    n_u = n.shape[1]

    def f(x, g):
        return m @ x + n @ g[:n_u]

    def h(x, g):
        return c @ x

    return DynModel(f=f, h=h, n_x=m.shape[0], n_u=n_u, n_d=n_d, n_y=c.shape[0])


class JacobianTests(SimpleTestCase):
    def test_linear_system_recovered(self):
        rng = np.random.default_rng(3)
        m = rng.normal(size=(3, 3))
        n = rng.normal(size=(3, 2))
        c = rng.normal(size=(2, 3))
        model = linear_model(m, n, c)
        point = OperatingPoint(x=np.zeros(3), u=np.zeros(2), z=np.zeros(0), w=np.zeros(1))
        jac = jacobians(model, point)
        np.testing.assert_allclose(jac.a, m, atol=1e-8)
        np.testing.assert_allclose(jac.b[:, :2], n, atol=1e-8)
        np.testing.assert_allclose(jac.b[:, 2], 0.0, atol=1e-12)
        np.testing.assert_allclose(jac.c, c, atol=1e-8)

    def test_non_finite_probe(self):
        model = DynModel(f=lambda x, g: np.log(x), h=lambda x, g: x[:1],
                         n_x=1, n_u=1, n_d=0, n_y=1)
        point = OperatingPoint(x=np.zeros(1), u=np.zeros(1), z=np.zeros(0), w=np.zeros(0))
        with self.assertLogs("netgraph.graph", "WARNING"):
            with self.assertRaises(NonFiniteDerivative):
                jacobians(model, point)

    def test_off_equilibrium_warns(self):
        model = linear_model(np.eye(2), np.eye(2), np.eye(2), n_d=0)
        point = OperatingPoint(x=np.ones(2), u=np.zeros(2), z=np.zeros(0), w=np.zeros(0))
        with self.assertLogs("netgraph.graph", "WARNING"):
            jacobians(model, point)


class AugmentTests(SimpleTestCase):
    def test_zero_set(self):
        jac = JacobianSet(a=np.zeros((2, 2)), b=np.zeros((2, 3)), c=np.zeros((1, 2)), d=np.zeros((1, 3)))
        self.assertTrue(np.array_equal(augment(jac), np.zeros((6, 6))))

    def test_block_placement(self):
        jac = JacobianSet(a=np.array([[1.5]]), b=np.array([[2.5]]), c=np.array([[3.5]]), d=np.array([[4.5]]))
        expected = np.array([[1.5, 2.5, 0.0], [0.0, 0.0, 0.0], [3.5, 4.5, 0.0]])
        self.assertTrue(np.array_equal(augment(jac), expected))


class AdjacencyRuleTests(SimpleTestCase):
    def test_zero_and_diagonal_only(self):
        self.assertEqual(int(adjacency(np.zeros((4, 4)), 1e-9).matrix.sum()), 0)
        self.assertEqual(int(adjacency(np.diag([1.0, -2.0, 3.0]), 1e-9).matrix.sum()), 0)

    def test_threshold_entrywise(self):
        adj = adjacency(np.array([[0.0, 5e-3], [1e-12, 0.0]]), tol_abs=1e-9)
        self.assertTrue(np.array_equal(adj.matrix, np.array([[0, 1], [0, 0]])))

    def test_rejects_nonpositive_tolerance(self):
        with self.assertRaises(ValueError):
            adjacency(np.zeros((2, 2)), tol_abs=0.0)


# ==============================
# Граф калиброванной установки
# ==============================

class PlantGraphTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.params = PlantParams()
        cls.point = reference_equilibrium(cls.params)
        cls.jac, cls.ae, cls.adj = build_adjacency(cls.params, cls.point)

    def test_node_ordering(self):
        labels = self.adj.labels
        self.assertEqual(len(labels), 36)
        self.assertEqual(labels[0], "x1")
        self.assertEqual(labels[22], "x23")
        self.assertEqual(labels[23], "u1")
        self.assertEqual(labels[30], "w1")
        self.assertEqual(labels[34:], ("y1", "y2"))
        self.assertEqual(len(set(labels)), 36)

    def test_spot_edges(self):
        self.assertTrue(self.adj.has_edge("u3", "x23"))
        self.assertTrue(self.adj.has_edge("w1", "x23"))
        self.assertTrue(self.adj.has_edge("w2", "y1"))
        self.assertTrue(self.adj.has_edge("x18", "x17"))

    def test_idle_battery_charge_has_no_outgoing_edges(self):
        self.assertEqual(int(self.adj.matrix[:, self.adj.index("x17")].sum()), 0)

    def test_augmented_input_rows_are_zero(self):
        self.assertEqual(int(self.adj.matrix[23:34].sum()), 0)
        self.assertTrue(np.all(self.ae[23:34] == 0.0))

    def test_zero_diagonal(self):
        self.assertEqual(int(np.trace(self.adj.matrix)), 0)

    def test_deterministic(self):
        _, ae2, adj2 = build_adjacency(self.params, self.point)
        self.assertTrue(np.array_equal(self.ae, ae2))
        self.assertTrue(np.array_equal(self.adj.matrix, adj2.matrix))

    def test_second_order_step_refinement(self):
        model = plant_model(self.params, self.point.z)
        coarse = jacobians(model, self.point, h_rel=1e-4)
        fine = jacobians(model, self.point, h_rel=5e-5)
        for got, want in ((coarse.a, fine.a), (coarse.b, fine.b), (coarse.c, fine.c)):
            mask = np.abs(want) > 1e-6
            np.testing.assert_allclose(got[mask], want[mask], rtol=1e-5)

    def test_edge_list_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_edge_list(self.adj, Path(tmp) / "edges.txt")
            again = read_edge_list(path, node_ids())
        self.assertTrue(np.array_equal(again.matrix, self.adj.matrix))

    def test_dense_csv_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_dense_csv(self.adj, Path(tmp) / "adj.csv")
            again = read_dense_csv(path, node_ids())
        self.assertTrue(np.array_equal(again.matrix, self.adj.matrix))
