import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag
from pydantic import ValidationError

from core import config
from core.exceptions import ConfigError, IncompleteLog
from decomp.pipeline import DecompositionSettings, decompose
from empc.config import ControllerSettings, FastEmpcConfig, SlowEmpcConfig, SupervisoryConfig
from empc.controllers import make_controller
from empc.objectives import check_inputs, state_scale
from plant.equilibrium import reference_equilibrium
from plant.model import derivatives, outputs
from plant.params import PlantParams
from plant.state import N_X
from scenario.data import ScenarioData, build_scenario, regulation_for
from scenario.evaluation import BETAS, ScenarioLog, evaluate, global_index
from scenario.prices import PriceBook
from scenario.profiles import Profile, day_ahead_series, generate_profiles
from scenario.regulation import generate_regulation
from scenario.schedule import FREE_STATES, Schedule, steady_state_hour, storage_plan
from scenario.simulation import ClosedLoop, scenario_subsystems, simulate_sync
from scenario.spec import PriceSpec, ProfileShapes, RegulationSpec, ScenarioSpec, StorageSpec, load_scenario

DESK = config.BASE_DIR / "data" / "scenarios" / "desk.yaml"


# ==============================
# Файл сценария
# ==============================

class ScenarioSpecTests(SimpleTestCase):
    def test_shipped_desk_matches_defaults(self):
        self.assertEqual(load_scenario(DESK), ScenarioSpec())

    def test_bad_value_names_key(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "bad.yaml"
            path.write_text("regulation:\n  capacity: 2.0\n", encoding="utf-8")
            with self.assertRaises(ConfigError) as ctx:
                load_scenario(path)
        self.assertIn("regulation.capacity", str(ctx.exception))
        self.assertEqual(ctx.exception.exit_code, 2)

    def test_single_day_only(self):
        with self.assertRaises(ValidationError):
            ScenarioSpec(start_hour=23.5, duration=3600.0)
        with self.assertRaises(ValidationError):
            ScenarioSpec(duration=7.0)

    def test_overrides(self):
        spec = ScenarioSpec().with_overrides(capacity=0.0, seed=3, controller=None)
        self.assertEqual(spec.regulation.capacity, 0.0)
        self.assertEqual(spec.seed, 3)
        self.assertEqual(spec.controller, "p1")
        with self.assertRaises(ConfigError):
            ScenarioSpec().with_overrides(controller="p9")


# ==============================
# Профили, цены, регулирование
# ==============================

class ProfileTests(SimpleTestCase):
    def test_same_seed_same_series(self):
        a = generate_profiles(ProfileShapes(), seed=5)
        b = generate_profiles(ProfileShapes(), seed=5)
        np.testing.assert_array_equal(a.real_time, b.real_time)

    def test_zero_spread_is_day_ahead(self):
        profile = generate_profiles(ProfileShapes(sigma=0.0), seed=5)
        np.testing.assert_allclose(profile.real_time[::60], profile.day_ahead[:24], rtol=1e-12, atol=1e-12)

    def test_real_time_within_band(self):
        shapes = ProfileShapes(sigma=0.05)
        profile = generate_profiles(shapes, seed=11)
        base = generate_profiles(shapes.model_copy(update={"sigma": 0.0}), seed=11).real_time
        positive = base > 0
        ratio = np.abs(profile.real_time[positive] - base[positive]) / base[positive]
        self.assertEqual(profile.real_time.shape, (1440, 4))
        self.assertLessEqual(ratio.max(), 0.06 + 1e-12)
        self.assertTrue(np.all(profile.real_time[:, 1:3] >= 0.0))

    def test_no_sun_at_night(self):
        da = day_ahead_series(ProfileShapes())
        self.assertEqual(da[2, 1], 0.0)
        self.assertGreater(da[12, 1], 0.0)

    def test_minute_hold(self):
        profile = generate_profiles(ProfileShapes(), seed=1)
        np.testing.assert_array_equal(profile.at(60.0), profile.real_time[1])
        np.testing.assert_array_equal(profile.at(119.9), profile.real_time[1])
        np.testing.assert_array_equal(profile.at(1e9), profile.real_time[-1])


class PriceTests(SimpleTestCase):
    def test_steps_and_multipliers(self):
        book = PriceBook.from_spec(PriceSpec())
        self.assertEqual(book.p_se[6], 25.0)
        self.assertEqual(book.p_se[7], 45.0)
        self.assertEqual(book.p_se[12], 90.0)
        self.assertEqual(book.p_se[23], 25.0)
        np.testing.assert_array_equal(book.p_cm, 1.5 * book.p_se)
        np.testing.assert_array_equal(book.p_pn, 1.5 * book.p_se)
        self.assertEqual(book.peak_hours(), (10, 11, 12, 17, 18, 19, 20))
        self.assertEqual(book.p_se_at(10 * 3600.0), 90.0)

    def test_steps_must_start_at_midnight(self):
        with self.assertRaises(ValidationError):
            PriceSpec(p_se=((1.0, 30.0),))


class RegulationTests(SimpleTestCase):
    def test_zero_capacity_is_zero(self):
        signal = generate_regulation(RegulationSpec(capacity=0.0), seed=3)
        self.assertFalse(np.any(signal.real_time))
        self.assertFalse(np.any(signal.day_ahead))

    def test_signal_bounds(self):
        signal = generate_regulation(RegulationSpec(capacity=0.25), seed=3)
        self.assertLessEqual(np.max(np.abs(signal.day_ahead)), 0.25 + 1e-12)
        self.assertLessEqual(np.max(np.abs(signal.real_time)), 1.2 * 0.25 + 1e-12)
        self.assertGreater(np.std(signal.real_time), 0.0)

    def test_step_signal(self):
        signal = generate_regulation(RegulationSpec(capacity=0.25, step_at=600.0, step_value=0.25), seed=3)
        self.assertEqual(float(signal.at(540.0)), 0.0)
        self.assertEqual(float(signal.at(600.0)), 0.25)


# ==============================
# Суточный план
# ==============================

class StoragePlanTests(SimpleTestCase):
    def test_charge_at_night_discharge_at_peak(self):
        params = PlantParams()
        spec = StorageSpec()
        plan = storage_plan(spec, PriceBook.from_spec(PriceSpec()), params)
        d_soc = np.diff(plan.soc_ref)
        for h in spec.charge_hours:
            self.assertGreaterEqual(d_soc[h], 0.0)
            self.assertEqual(plan.z_st[h], 0.0)
        for h in (10, 11, 12, 17, 18, 19, 20):
            self.assertLessEqual(d_soc[h], 0.0)
            self.assertGreaterEqual(plan.p_bar[h], 0.0)
        self.assertTrue(np.all(plan.soc_ref >= 0.1 + spec.margin - 1e-12))
        self.assertTrue(np.all(plan.soc_ref <= 0.9 - spec.margin + 1e-12))
        np.testing.assert_allclose(plan.p_bar, -d_soc * params.calibration.battery_kwh, rtol=1e-12)
        self.assertTrue(np.all(plan.g_stu >= 0.0))


class SteadyStateTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.params = PlantParams()
        cls.eq = reference_equilibrium(cls.params)

    def hour(self, p_se):
        return steady_state_hour(self.eq.w, self.eq.z, p_se, 0.2, {5: 0.0, 6: 0.0}, 0.5, 0.5,
                                 self.params, (22.0, 26.0))

    def test_hour_is_equilibrium_in_band(self):
        plan = self.hour(45.0)
        f = derivatives(plan.x, plan.u, self.eq.z, self.eq.w, self.params)
        scale = state_scale(self.params)
        free = list(FREE_STATES)
        self.assertLess(np.max(np.abs(f[free]) * self.params.tau[free] / scale[free]), 1e-3)
        self.assertTrue(22.0 - 1e-4 <= plan.x[22] <= 26.0 + 1e-4)
        self.assertGreaterEqual(plan.y_b, 0.0)
        self.assertAlmostEqual(plan.y_b, max(0.0, float(outputs(plan.x, plan.u, self.eq.z, self.eq.w,
                                                                     self.params)[0])))

    def test_peak_price_exports_more(self):
        self.assertGreaterEqual(self.hour(90.0).y_b, self.hour(25.0).y_b - 1e-2)


class ScenarioDataTests(SimpleTestCase):
    """Суточный план строится один раз на класс."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.params = PlantParams()
        cls.spec = ScenarioSpec()
        cls.data = build_scenario(cls.spec, cls.params)

    def test_schedule_shape(self):
        schedule = self.data.schedule
        self.assertEqual(schedule.y_b.shape, (24,))
        self.assertTrue(np.all(schedule.y_b >= 0.0))
        self.assertTrue(set(np.unique(schedule.z)) <= {0.0, 1.0})
        self.assertTrue(np.all((schedule.soc_ref >= 0.0) & (schedule.soc_ref <= 1.0)))
        self.assertTrue(np.all((schedule.sot_ref >= 0.0) & (schedule.sot_ref <= 1.0)))
        self.assertEqual(len(schedule.frame()), 24)

    def test_window(self):
        t0 = self.spec.t0
        forecast = self.data.window(t0, 12, 60.0)
        self.assertEqual(forecast.horizon, 12)
        np.testing.assert_array_equal(forecast.z_prev, forecast.z[0])
        np.testing.assert_array_equal(forecast.y_b, self.data.schedule.y_b[12])
        np.testing.assert_array_equal(np.asarray(forecast.prices.p_se), np.full(12, 90.0))
        np.testing.assert_allclose(forecast.x_dd[-1], self.data.schedule.x_dd_at(t0 + 720.0))
        np.testing.assert_array_equal(forecast.band[0], [22.0, 26.0])
        np.testing.assert_array_equal(forecast.w[1], self.data.profile.at(t0 + 60.0))

    def test_capacity_leaves_baseline(self):
        spec = self.spec.with_overrides(capacity=0.0)
        other = self.data.with_regulation(spec)
        np.testing.assert_array_equal(other.schedule.y_b, self.data.schedule.y_b)
        self.assertFalse(np.any(other.regulation.real_time))
        np.testing.assert_array_equal(regulation_for(self.spec).real_time, self.data.regulation.real_time)

    def test_schedule_written(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = self.data.schedule.write(Path(tmp) / "schedule.csv")
            self.assertTrue(path.exists())


# ==============================
# Оценка
# ==============================

def synthetic_log(n, y1=100.0, target=100.0, t_br=24.0, soc=0.5, dt=5.0):
    log = ScenarioLog(dt)
    x = np.zeros(N_X)
    x[16], x[18], x[22] = soc, 0.5, t_br
    for k in range(n):
        log.record(k * dt, x, np.zeros(7), np.ones(4), np.zeros(4), (y1, t_br),
                   y_b=target, xi=0.0, band=(22.0, 26.0), p_se=0.0, x_dd=(0.5, 0.5))
    return log


FREE = PriceBook(p_mg=0.0, p_f=0.0, p_se=np.zeros(24))


class EvaluationTests(SimpleTestCase):
    def setUp(self):
        self.params = PlantParams()

    def test_perfect_run_scores_zero(self):
        report = evaluate(synthetic_log(10), FREE, self.params)
        self.assertEqual((report.e_p, report.e_t, report.e_e, report.e_glb), (0.0, 0.0, 0.0, 0.0))

    def test_constant_deviation(self):
        report = evaluate(synthetic_log(12, y1=101.0), FREE, self.params)
        self.assertAlmostEqual(report.e_p, 12.0, places=12)

    def test_band_distance(self):
        report = evaluate(synthetic_log(4, t_br=27.0), FREE, self.params)
        self.assertAlmostEqual(report.e_t, 4.0, places=12)

    def test_global_index_recomposes(self):
        prices = PriceBook.from_spec(PriceSpec())
        report = evaluate(synthetic_log(20, y1=90.0, t_br=21.5, soc=0.45), prices, self.params)
        self.assertAlmostEqual(report.recomposed(), report.e_glb, delta=1e-12)
        self.assertEqual(report.e_glb, global_index(report.e_p, report.e_t, report.e_e, BETAS))
        self.assertLess(report.delta_c_es, 0.0)

    def test_incomplete_logs(self):
        with self.assertRaises(IncompleteLog):
            evaluate(ScenarioLog(5.0), FREE, self.params)
        log = synthetic_log(3)
        log.rows[2]["t"] = 12.0
        with self.assertRaises(IncompleteLog):
            evaluate(log, FREE, self.params)
        log = synthetic_log(3)
        log.rows[1]["y1"] = float("nan")
        with self.assertRaises(IncompleteLog):
            evaluate(log, FREE, self.params)

    def test_csv_log_scores_the_same(self):
        log = synthetic_log(6, y1=95.0)
        prices = PriceBook.from_spec(PriceSpec())
        with tempfile.TemporaryDirectory() as tmp:
            path = log.write(Path(tmp) / "log.csv")
            again = ScenarioLog.read(path, 5.0)
        self.assertAlmostEqual(evaluate(again, prices, self.params).e_glb,
                               evaluate(log, prices, self.params).e_glb, places=9)


# ==============================
# Замкнутый контур
# ==============================

def equilibrium_data(spec, params, eq):
    """Неизменные условия опорного равновесия на все сутки, задание y_b = y1 равновесия."""
    y1 = float(outputs(eq.x, eq.u, eq.z, eq.w, params)[0])
    schedule = Schedule(
        y_b=np.full(24, y1), z=np.tile(eq.z, (24, 1)), u=np.tile(eq.u, (24, 1)),
        x=np.tile(eq.x, (24, 1)), soc_ref=np.full(25, eq.x[16]), sot_ref=np.full(25, eq.x[18]),
        status=("Converged",) * 24,
    )
    profile = Profile(day_ahead=np.tile(eq.w, (25, 1)), real_time=np.tile(eq.w, (1440, 1)), seed=0)
    return ScenarioData(spec=spec, profile=profile, prices=PriceBook.from_spec(PriceSpec()),
                        regulation=regulation_for(spec), schedule=schedule)


class ClosedLoopTests(SimpleTestCase):
    """Три такта при неизменных условиях опорного равновесия."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.params = PlantParams()
        cls.eq = reference_equilibrium(cls.params)
        cls.subsystems = decompose(cls.params, DecompositionSettings(subsystems="reference"), seed=7).subsystems
        settings = ControllerSettings(
            slow=SlowEmpcConfig(horizon=3, alpha=(0.1, 10.0, 0.0)),
            fast=FastEmpcConfig(horizons=(3, 3, 3), c_max=2, alpha=(0.1, 0.0)),
            supervisory=SupervisoryConfig(horizon_high=3, horizon_short=3, horizon_long=3),
        )
        cls.spec = ScenarioSpec(duration=15.0, settings=settings, regulation=RegulationSpec(capacity=0.0))
        cls.data = equilibrium_data(cls.spec, cls.params, cls.eq)

    def run_loop(self, name):
        spec = self.spec.with_overrides(controller=name)
        return simulate_sync(spec, self.params, data=self.data.with_regulation(spec), subsystems=self.subsystems)

    def test_distributed_run(self):
        result = self.run_loop("p1")
        frame = result.log.frame()
        self.assertEqual(len(frame), 3)
        u_log = frame[[c for c in frame.columns if c.startswith("u_")]].to_numpy()
        z_log = frame[["z_fc", "z_ma", "z_ec", "z_st"]].to_numpy()
        self.assertEqual(check_inputs(u_log, z_log, result.controller.periods, self.params), [])
        self.assertEqual(result.report.samples, 3)
        stats = result.iteration_stats()
        self.assertTrue(1 <= stats["min"] <= stats["max"] <= 2)

    def test_same_seed_same_log(self):
        first = self.run_loop("p4").log.frame()
        second = self.run_loop("p4").log.frame()
        self.assertTrue(first.equals(second))

    def test_loop_object(self):
        controller = make_controller("p2", self.params, self.spec.settings, self.subsystems, self.data)
        log = ClosedLoop(self.data, controller, self.params).run_sync()
        self.assertEqual(len(log), 3)
        np.testing.assert_array_equal(log.frame()["t"], self.spec.t0 + np.array([0.0, 5.0, 10.0]))

    def test_same_seed_same_report(self):
        first = self.run_loop("p1").report
        second = self.run_loop("p1").report
        self.assertEqual(first, second)


@tag("slow")
class RegulationStepTests(SimpleTestCase):
    """Ступень ξ 0 → +25 % при неизменных условиях, настройки регулятора настольного сценария."""

    STEP_AT = 12 * 3600.0 + 60.0

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.params = PlantParams()
        eq = reference_equilibrium(cls.params)
        subsystems = decompose(cls.params, DecompositionSettings(subsystems="reference"), seed=7).subsystems
        spec = ScenarioSpec(duration=300.0, regulation=RegulationSpec(
            capacity=0.25, step_at=cls.STEP_AT, step_value=0.25))
        cls.frame = simulate_sync(spec, cls.params, data=equilibrium_data(spec, cls.params, eq),
                                  subsystems=subsystems).log.frame()

    def test_signal_steps_once(self):
        before = self.frame[self.frame["t"] < self.STEP_AT]
        after = self.frame[self.frame["t"] >= self.STEP_AT]
        self.assertEqual(set(before["xi"]), {0.0})
        self.assertEqual(set(after["xi"]), {0.25})

    def test_settles_within_two_minutes(self):
        settled = self.frame[self.frame["t"] >= self.STEP_AT + 120.0]
        self.assertFalse(settled.empty)
        error = np.abs(settled["y1"] - 1.25 * settled["y_b"]) / settled["y_b"]
        self.assertLess(error.max(), 0.05)


@tag("slow")
class DeskScenarioTests(SimpleTestCase):
    """Час настольного сценария: комфорт, слежение, порядок регуляторов по E_glb, итерации."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.params = PlantParams()
        cls.spec = load_scenario(DESK)
        cls.data = build_scenario(cls.spec, cls.params)
        cls.subsystems = scenario_subsystems(cls.spec, cls.params)
        cls.results = {}

    @classmethod
    def run_cell(cls, controller, capacity):
        key = (controller, capacity)
        if key not in cls.results:
            spec = cls.spec.with_overrides(controller=controller, capacity=capacity)
            cls.results[key] = simulate_sync(spec, cls.params, data=cls.data.with_regulation(spec),
                                             subsystems=cls.subsystems)
        return cls.results[key]

    def test_comfort_and_tracking_without_regulation(self):
        frame = self.run_cell("p1", 0.0).log.frame()
        self.assertEqual(len(frame), 720)
        inside = (frame["y2"] >= frame["band_lo"]) & (frame["y2"] <= frame["band_hi"])
        self.assertGreaterEqual(inside.mean(), 0.95)
        last = frame[frame["t"] >= frame["t"].iloc[-1] - 600.0 + 1e-9]
        self.assertEqual(len(last), 120)
        error = np.abs(last["y1"] - last["y_b"]) / last["y_b"]
        self.assertLessEqual(error.mean(), 0.05)

    def test_global_index_ordering(self):
        e_glb = {name: self.run_cell(name, 0.25).report.e_glb for name in ("p1", "p2", "p3", "p4")}
        self.assertLess(e_glb["p1"], e_glb["p2"])
        self.assertLess(e_glb["p2"], max(e_glb["p3"], e_glb["p4"]))

    def test_fast_iterations(self):
        stats = self.run_cell("p1", 0.25).iteration_stats()
        self.assertGreaterEqual(stats["mean"], 1.5)
        self.assertLessEqual(stats["mean"], 4.0)
        self.assertLessEqual(stats["max"], self.spec.settings.fast.c_max)
