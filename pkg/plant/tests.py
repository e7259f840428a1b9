import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import ConfigError, DegenerateFlow, IntegrationDiverged
from nlp.finite_diff import central_jacobian
from plant.equilibrium import find_equilibrium, nominal_point, reference_equilibrium
from plant.io import dump_trajectory, load_trajectory
from plant.model import (
    check_envelope, derivatives, outputs, pv_power, rk4_step, step, unit_powers, water_network,
)
from plant.params import PlantParams, load_params
from plant.state import (
    C_SOC, P_MTF, STATE_SYMBOLS, T_ABF, T_BR, T_EWM, T_RE, PlantState, IntegerInput,
)

PARAMS_FILE = Path(__file__).resolve().parent.parent / "data" / "ies_params.yaml"


class PlantTestMixin:
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.params = PlantParams()
        cls.eq = reference_equilibrium(cls.params)

    def point(self):
        return self.eq.x.copy(), self.eq.u.copy(), self.eq.z.copy(), self.eq.w.copy()


# ==============================
# Файл параметров и записи
# ==============================

class ParamsFileTests(SimpleTestCase):
    def test_shipped_file_matches_defaults(self):
        self.assertEqual(load_params(PARAMS_FILE), PlantParams())

    def test_wrong_header_is_config_error(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "p.yaml"
            path.write_text("# gridsyn-params v2\npv: {}\n", encoding="utf-8")
            with self.assertRaises(ConfigError):
                load_params(path)

    def test_nonpositive_constant_is_config_error(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "p.yaml"
            path.write_text("# gridsyn-params v1\nbuilding:\n  c_br: -1.0\n", encoding="utf-8")
            with self.assertRaises(ConfigError) as ctx:
                load_params(path)
            self.assertIn("c_br", str(ctx.exception))

    def test_state_record_invariants(self):
        x = reference_equilibrium(PlantParams()).x.copy()
        PlantState(x)
        with self.assertRaises(ValueError):
            PlantState(x[:22])
        x[C_SOC] = 1.2
        with self.assertRaises(ValueError):
            PlantState(x)
        with self.assertRaises(ValueError):
            IntegerInput(np.array([1, 0, 2, 1]))


# ==============================
# Алгебраическая часть
# ==============================

class AlgebraTests(PlantTestMixin, SimpleTestCase):
    def test_pv_nominal_power(self):
        self.assertAlmostEqual(float(pv_power(self.eq.w, self.params)), 44.0, delta=0.44)

    def test_pv_zero_irradiance(self):
        for t_a in (-5.0, 20.0, 38.0):
            self.assertEqual(float(pv_power([t_a, 0.0, 10.0, 10.0], self.params)), 0.0)

    def test_pv_half_irradiance_by_hand(self):
        pv = self.params.pv
        expected = pv.n_pp * pv.n_sp * (pv.i_mp_ref * 0.5) * pv.v_mp_ref / 1000.0
        self.assertAlmostEqual(float(pv_power([pv.t_ref, 400.0, 0.0, 0.0], self.params)), expected, places=12)

    def test_pv_monotone_in_irradiance(self):
        s = np.linspace(0.0, 1000.0, 21)
        w = np.vstack([np.full_like(s, 33.0), s, np.zeros_like(s), np.zeros_like(s)])
        p = pv_power(w, self.params)
        self.assertTrue(np.all(np.diff(p) >= 0.0))

    def test_supply_is_seven_when_all_streams_are_seven(self):
        x, u, z, _ = self.point()
        net = water_network(u, z, x, self.params)
        self.assertAlmostEqual(float(net.t_sl), 7.0, places=9)

    def test_equal_flow_average(self):
        x, u, z, _ = self.point()
        u[2] = u[4] = 2.0
        u[5] = 0.0
        x[T_ABF] = -1.0            # t_ab = 6
        x[T_EWM] = 10.0            # t_ec = 2·10 − 12 = 8
        net = water_network(u, z, x, self.params)
        self.assertAlmostEqual(float(net.t_ab), 6.0, places=12)
        self.assertAlmostEqual(float(net.t_ec), 8.0, places=12)
        self.assertAlmostEqual(float(net.t_sl), 7.0, places=12)

    def test_nominal_pump_power(self):
        x, u, z, _ = self.point()
        net = water_network(u, z, x, self.params)
        self.assertAlmostEqual(float(net.p_pmp), 13.9, delta=0.139)
        self.assertAlmostEqual(float(net.g_all), float(u[2] + u[4] + u[5]), places=12)

    def test_flow_sums_and_mixing_while_discharging(self):
        x, u, z, _ = self.point()
        u[5] = 0.6
        z[3] = 1
        net = water_network(u, z, x, self.params)
        self.assertAlmostEqual(float(net.g_sl), float(u[2] + u[4] + net.g_st), places=12)
        lhs = net.g_sl * net.t_sl
        rhs = u[2] * net.t_ab + u[4] * net.t_ec + net.g_st * net.t_cp
        self.assertLessEqual(abs(float(lhs - rhs)), 1e-9 * abs(float(rhs)))

    def test_degenerate_flow(self):
        x, u, z, _ = self.point()
        u[2] = u[4] = 0.0
        with self.assertRaises(DegenerateFlow):
            water_network(u, z, x, self.params)

    def test_table_one_values(self):
        x, u, z, w = self.point()
        pw = unit_powers(x, u, z, w, self.params)
        for got, want in ((pw.p_fc, 40.0), (pw.p_mt, 80.0), (pw.p_cp, 12.6),
                          (pw.q_ab, 75.0), (pw.q_ec, 50.0), (pw.q_sl, 125.0)):
            self.assertAlmostEqual(float(got), want, delta=0.01 * want)
        self.assertEqual(float(pw.q_st), 0.0)


# ==============================
# Векторное поле и выходы
# ==============================

class DynamicsTests(PlantTestMixin, SimpleTestCase):
    def test_reference_equilibrium_residual(self):
        x, u, z, w = self.point()
        self.assertLessEqual(np.max(np.abs(derivatives(x, u, z, w, self.params))), 1e-6)

    def test_building_row_formula(self):
        x, u, z, w = self.point()
        x[T_BR] = 25.3
        w[0] = 31.0
        dx = derivatives(x, u, z, w, self.params)
        net = water_network(u, z, x, self.params)
        bld = self.params.building
        expected = (bld.u_br * (w[0] - x[T_BR]) - net.q_sl + w[3]) / bld.c_br
        self.assertEqual(dx[T_BR], expected)

    def test_building_row_cancels(self):
        x, u, z, w = self.point()
        w[0] = x[T_BR]
        w[3] = float(water_network(u, z, x, self.params).q_sl)
        self.assertAlmostEqual(derivatives(x, u, z, w, self.params)[T_BR], 0.0, places=15)

    def test_fuel_increase_raises_turbine_power(self):
        x, u, z, w = self.point()
        u[1] *= 1.01
        self.assertGreater(derivatives(x, u, z, w, self.params)[P_MTF], 0.0)

    def test_nominal_export_without_local_load(self):
        x, u, z, w = self.point()
        w[2] = 0.0
        y = outputs(x, u, z, w, self.params)
        self.assertAlmostEqual(float(y[0]), 137.5, delta=1.375)

    def test_fuel_cell_gating(self):
        x, u, z, w = self.point()
        z[0] = 0
        u[0] = 0.0
        pw = unit_powers(x, u, z, w, self.params)
        self.assertEqual(float(pw.p_fc), 0.0)

    def test_turbine_gating(self):
        x, u, z, w = self.point()
        z[1] = 0
        u[1] = u[2] = 0.0
        pw = unit_powers(x, u, z, w, self.params)
        self.assertEqual(float(pw.p_mt), 0.0)
        self.assertEqual(float(pw.q_ab), 0.0)

    def test_y2_is_building_state(self):
        rng = np.random.default_rng(7)
        x, u, z, w = self.point()
        for _ in range(5):
            x[T_BR] = rng.uniform(18.0, 30.0)
            self.assertEqual(outputs(x, u, z, w, self.params)[1], x[T_BR])

    def test_batched_evaluation_matches_single(self):
        x, u, z, w = self.point()
        batch = np.repeat(x[:, None], 3, axis=1)
        batch[T_RE, 1] += 0.3
        batch[T_BR, 2] -= 0.5
        many = derivatives(batch, u, z, w, self.params)
        for k in range(3):
            np.testing.assert_allclose(many[:, k], derivatives(batch[:, k], u, z, w, self.params),
                                       rtol=1e-12, atol=1e-15)

    def test_jacobian_two_schemes_agree(self):
        x, u, z, w = self.point()

        def f(v):
            return derivatives(v, u, z, w, self.params)

        j1 = central_jacobian(f, x, h_rel=1e-6)
        j2 = central_jacobian(f, x, h_rel=1e-5)
        mask = np.abs(j1) > 1e-6
        np.testing.assert_allclose(j1[mask], j2[mask], rtol=1e-4, atol=1e-9)

    def test_equilibrium_refinement_from_perturbed_guess(self):
        x, u, z, w = self.point()
        guess = x.copy()
        guess[:15] *= 1.01
        guess[T_RE] += 0.2
        guess[T_BR] += 0.2
        x_e = find_equilibrium(guess, u, z, w, self.params)
        self.assertLessEqual(np.max(np.abs(derivatives(x_e, u, z, w, self.params))), 1e-9)

    def test_nominal_guess_is_already_equilibrium(self):
        nominal = nominal_point(self.params)
        np.testing.assert_allclose(nominal.x, self.eq.x, atol=1e-9)


# ==============================
# Интегратор
# ==============================

class IntegratorTests(PlantTestMixin, SimpleTestCase):
    def test_equilibrium_is_fixed_point(self):
        x, u, z, w = self.point()
        x_next = step(x, u, z, w, 5.0, self.params)
        self.assertLessEqual(np.max(np.abs(x_next - x)), 1e-9)

    def test_scalar_decay(self):
        value = rk4_step(lambda v: -v, np.array([1.0]), 0.1)[0]
        self.assertAlmostEqual(value, 0.904837, delta=1e-7)

    def test_fourth_order_convergence(self):
        matrix = np.array([[-1.0, 2.0], [-2.0, -1.0]])
        x0 = np.array([1.0, 0.0])
        exact = np.exp(-1.0) * np.array([math.cos(2.0), -math.sin(2.0)])

        def error(h):
            v = x0.copy()
            for _ in range(int(round(1.0 / h))):
                v = rk4_step(lambda s: matrix @ s, v, h)
            return np.max(np.abs(v - exact))

        slope = math.log2(error(0.05) / error(0.025))
        self.assertGreaterEqual(slope, 3.9)

    def test_step_too_long(self):
        x, u, z, w = self.point()
        with self.assertRaises(ValueError):
            step(x, u, z, w, 6.0, self.params)

    def test_envelope_violation(self):
        x, *_ = self.point()
        x[T_BR] = 150.0
        with self.assertRaises(IntegrationDiverged):
            check_envelope(x, self.params)

    def test_balances_along_a_run(self):
        x, u, z, w = self.point()
        u[1] *= 1.1
        u[5] = 0.5
        u[6] = 15.0
        for _ in range(600):
            x = step(x, u, z, w, 1.0, self.params)
            pw = unit_powers(x, u, z, w, self.params)
            y1 = outputs(x, u, z, w, self.params)[0]
            residual = y1 + pw.p_cp + pw.p_pmp + w[2] - pw.generated
            self.assertLessEqual(abs(float(residual)), 1e-9 * float(pw.generated))
            net = water_network(u, z, x, self.params)
            mix = net.g_sl * net.t_sl - (u[2] * net.t_ab + u[4] * net.t_ec + net.g_st * net.t_cp)
            self.assertLessEqual(abs(float(mix)), 1e-9 * abs(float(net.g_sl * net.t_sl)))
        self.assertLess(x[C_SOC], 0.5)


class TrajectoryFileTests(PlantTestMixin, SimpleTestCase):
    def test_header_names_all_states(self):
        x, *_ = self.point()
        with tempfile.TemporaryDirectory() as tmp:
            path = dump_trajectory(Path(tmp) / "traj.csv", [0.0, 1.0], np.vstack([x, x]))
            header = path.read_text(encoding="utf-8").splitlines()[0].split(",")
            self.assertEqual(header, ["time", *STATE_SYMBOLS])
            times, states = load_trajectory(path)
            np.testing.assert_allclose(states[1], x, rtol=1e-11)
            self.assertEqual(list(times), [0.0, 1.0])
