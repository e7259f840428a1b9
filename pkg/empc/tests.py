import asyncio
import math
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase
from pydantic import ValidationError

from decomp.pipeline import DecompositionSettings, decompose
from empc.board import AgentSolution, ExchangeBoard, fit_length, shift
from empc.config import ControllerSettings, FastEmpcConfig, SlowEmpcConfig, SupervisoryConfig
from empc.controllers import DistributedEmpc, SupervisoryMpc, make_controller
from empc.fast import (
    AgentContext, AgentSeed, CoordinationResult, build_agent_problem, coordinate_fast, fast_agent_solve,
    neighborhood_box, relative_change,
)
from empc.forecast import ConstantSource, constant_forecast
from empc.log import ControllerLog
from empc.objectives import (
    Prices, check_inputs, gated_bounds, input_range, project_input, sample_profit,
)
from empc.shooting import ShootingProblem, StageLayout, StageTerms
from empc.slow import SlowPlan, accept, build_slow_problem, slow_empc_step
from empc.supervisory import group_horizon, partition_groups, tracking_step
from nlp.finite_diff import central_jacobian
from nlp.sqp import SolveStatus
from plant.equilibrium import reference_equilibrium
from plant.model import outputs
from plant.params import PlantParams
from plant.state import C_SOC, C_SOT, T_BR

PRICES = Prices(p_mg=80.0, p_se=45.0, p_f=0.2)


class EquilibriumMixin:
    """Опорное равновесие, эталонные подсистемы и прогноз «всё как сейчас»."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.params = PlantParams()
        cls.eq = reference_equilibrium(cls.params)
        cls.subsystems = decompose(cls.params, DecompositionSettings(subsystems="reference"), seed=7).subsystems
        cls.y1 = float(outputs(cls.eq.x, cls.eq.u, cls.eq.z, cls.eq.w, cls.params)[0])
        t_br = cls.eq.x[T_BR]
        cls.source_kwargs = dict(
            w=cls.eq.w, z=cls.eq.z, y_b=cls.y1, prices=PRICES,
            x_dd=(cls.eq.x[C_SOC], cls.eq.x[C_SOT]), band=(t_br - 1.0, t_br + 1.0),
        )

    def forecast(self, n, **overrides):
        kwargs = {**self.source_kwargs, **overrides}
        return constant_forecast(n=n, **kwargs)

    def board(self, n=12):
        return ExchangeBoard(
            x_now=self.eq.x.copy(), u_ref=np.tile(self.eq.u, (n, 1)), x_ref=np.tile(self.eq.x, (n, 1)),
            x_slow=self.eq.x.copy(), u_slow=self.eq.u.copy(),
        )

    def context(self, number, forecast, cfg, u_seq=None):
        sub = self.subsystems[number]
        n = cfg.horizon(number)
        seed = AgentSeed(
            u_seq=np.tile(self.eq.u[list(sub.inputs)], (n, 1)) if u_seq is None else u_seq,
            x_seq=np.tile(self.eq.x[list(sub.states)], (n, 1)),
        )
        return AgentContext(sub=sub, subsystems=self.subsystems, x=self.eq.x, u_prev=self.eq.u,
                            forecast=forecast, seed=seed)


# ==============================
# Цели и ограничения на входы
# ==============================

class ObjectiveTests(SimpleTestCase):
    def setUp(self):
        self.params = PlantParams()

    def test_profit_without_regulation(self):
        profit = sample_profit(y1=30.0, p_d=20.0, fuel=0.004, y_b=30.0, xi=0.0, prices=PRICES, dt=5.0)
        expected = (80.0 * 20.0 + 45.0 * 30.0) * 5.0 / 3.6e6 - 0.2 * 0.004 * 5.0
        self.assertAlmostEqual(float(profit), expected, places=12)

    def test_deviation_is_penalized(self):
        on_target = sample_profit(36.0, 20.0, 0.0, 30.0, 0.2, PRICES, 5.0)
        off_target = sample_profit(30.0, 20.0, 0.0, 30.0, 0.2, PRICES, 5.0)
        self.assertGreater(float(on_target), float(off_target))

    def test_gating_zeroes_chiller_inputs(self):
        lo, hi = gated_bounds([1, 1, 0, 1], self.params)
        self.assertEqual((lo[3], hi[3], lo[4], hi[4]), (0.0, 0.0, 0.0, 0.0))
        self.assertEqual(hi[6], 40.0)

    def test_projection_respects_rate_limit(self):
        u_prev = np.array([0.0018, 0.0054, 3.0, 50.0, 2.0, 0.0, 0.0])
        wanted = u_prev + np.array([0.001, 0.001, 2.0, 20.0, 1.0, 0.5, 30.0])
        z = [1, 1, 1, 1]
        u = project_input(wanted, u_prev, z, z, 5.0, self.params)
        np.testing.assert_allclose(u - u_prev, self.params.u_rate * 5.0)
        self.assertEqual(check_inputs([u_prev, u], [z, z], np.full(7, 5.0), self.params), [])

    def test_switching_off_relaxes_rate_limit(self):
        u_prev = np.array([0.0018, 0.0054, 3.0, 50.0, 2.0, 0.0, 0.0])
        u = project_input(u_prev, u_prev, [1, 1, 0, 1], [1, 1, 1, 1], 5.0, self.params)
        self.assertEqual((u[3], u[4]), (0.0, 0.0))
        log = [u_prev, u]
        self.assertEqual(check_inputs(log, [[1, 1, 1, 1], [1, 1, 0, 1]], np.full(7, 5.0), self.params), [])
        self.assertTrue(check_inputs(log, [[1, 1, 0, 1], [1, 1, 0, 1]], np.full(7, 5.0), self.params))

    def test_rate_check_flags_jump(self):
        u0 = np.array([0.0018, 0.0054, 3.0, 50.0, 2.0, 0.0, 0.0])
        u1 = u0.copy()
        u1[6] = 39.0
        problems = check_inputs([u0, u1], [[1, 1, 1, 1]] * 2, np.full(7, 1.0), self.params)
        self.assertEqual(problems, ["sample 1: u7 exceeds its rate limit"])


# ==============================
# Доска и стрельба
# ==============================

class BoardTests(SimpleTestCase):
    def test_fit_length_cuts_and_holds(self):
        seq = np.arange(6.0).reshape(3, 2)
        np.testing.assert_array_equal(fit_length(seq, 2), seq[:2])
        np.testing.assert_array_equal(fit_length(seq, 5)[3:], [[4.0, 5.0], [4.0, 5.0]])

    def test_shift_holds_tail(self):
        np.testing.assert_array_equal(shift(np.array([1.0, 2.0, 3.0])), [2.0, 3.0, 3.0])

    def test_publish_advances_iteration(self):
        board = ExchangeBoard(x_now=np.zeros(3), u_ref=np.zeros((2, 1)), x_ref=np.zeros((2, 3)),
                              x_slow=np.zeros(3), u_slow=np.zeros(1))
        board.publish([AgentSolution(number=1, u_seq=np.ones((2, 1)), x_seq=np.ones((2, 1)),
                                     objective=0.0, slack=np.zeros((2, 1)), status="Converged")])
        self.assertEqual(board.iteration, 1)
        np.testing.assert_array_equal(board.u_seq[1], np.ones((2, 1)))


def toy_problem(horizon=5):
    layout = StageLayout(a=1, b=2)

    def stage(cur, prev):
        a, b = cur["a"][0], cur["b"]
        a_prev = prev["a"][0]
        return StageTerms(
            residuals=np.stack([a - 0.3, b[0] * a_prev]),
            cost=0.1 * b[1] ** 3,
            eq=(b[0] - np.sin(a_prev) * a)[None],
            ineq=(a ** 2 + b[1] * a_prev - 1.0)[None],
            groups={"fit": slice(0, 1)},
        )

    rng = np.random.default_rng(4)
    return ShootingProblem(
        layout=layout, horizon=horizon, stage_fn=stage, initial={"a": [0.2]},
        lb=-5.0, ub=5.0, scale=[1.0, 2.0, 0.5], guess=rng.uniform(-1.0, 1.0, (horizon, 3)),
    )


class ShootingTests(SimpleTestCase):
    def setUp(self):
        self.problem = toy_problem()
        self.nlp = self.problem.nlp()
        self.v = self.nlp.x0 + 0.05

    def test_colored_jacobians_match_dense_differences(self):
        np.testing.assert_allclose(self.nlp.eq_jacobian(self.v), central_jacobian(self.nlp.eq, self.v), atol=1e-7)
        np.testing.assert_allclose(self.nlp.ineq_jacobian(self.v), central_jacobian(self.nlp.ineq, self.v),
                                   atol=1e-7)

    def test_colored_gradient_matches_dense_difference(self):
        dense = central_jacobian(self.nlp.objective, self.v)[0]
        np.testing.assert_allclose(self.nlp.gradient(self.v), dense, atol=1e-6)

    def test_hessian_is_positive_definite(self):
        np.linalg.cholesky(self.nlp.hessian(self.v))

    def test_unpack_respects_scale_and_bounds(self):
        fields = self.problem.unpack(np.full(self.problem.n, 100.0))
        np.testing.assert_array_equal(fields["a"], np.full((5, 1), 5.0))
        self.assertEqual(set(self.problem.breakdown(self.v)), {"fit", "other"})

    def test_layout_pack_and_split(self):
        layout = StageLayout(u=2, x=1)
        stages = layout.pack(u=np.ones((3, 2)), x=np.zeros(3))
        self.assertEqual(stages.shape, (3, 3))
        parts = layout.split(stages[:, :, None])
        self.assertEqual(parts["u"].shape, (2, 3, 1))


# ==============================
# Настройки
# ==============================

class SettingsTests(SimpleTestCase):
    def test_defaults(self):
        settings = ControllerSettings()
        self.assertEqual(settings.slow_every, 12)
        self.assertEqual(settings.fast.horizons, (10, 12, 10))
        self.assertEqual(settings.supervisory.high_level(settings.slow).dt, 60.0)

    def test_slow_sampling_must_be_multiple_of_fast(self):
        with self.assertRaises(ValidationError):
            ControllerSettings(slow=SlowEmpcConfig(dt=62.0))

    def test_infinite_threshold_is_allowed(self):
        self.assertEqual(FastEmpcConfig(psi=math.inf).psi, math.inf)

    def test_nonpositive_threshold_is_rejected(self):
        with self.assertRaises(ValidationError):
            FastEmpcConfig(psi=0.0)


# ==============================
# Медленный слой
# ==============================

class SlowEmpcTests(EquilibriumMixin, SimpleTestCase):
    def setUp(self):
        self.cfg = SlowEmpcConfig(alpha=(0.1, 10.0, 0.0))

    def test_equilibrium_is_held(self):
        plan = slow_empc_step(0.0, self.eq.x, self.eq.u, self.forecast(12), self.params, self.cfg,
                              self.subsystems.split)
        self.assertFalse(plan.held)
        np.testing.assert_allclose(plan.u_applied, self.eq.u, atol=0.01 * input_range(self.params).max())
        self.assertLess(abs(plan.u_applied[2] - self.eq.u[2]), 0.01 * self.eq.u[2])
        self.assertEqual(set(plan.breakdown), {"J1", "J2", "J3", "J4"})

    def test_chiller_off_forces_zero_inputs(self):
        z = self.eq.z.copy()
        z[2] = 0.0
        problem = build_slow_problem(self.eq.x, self.eq.u, self.forecast(12, z=z), self.params, self.cfg,
                                     self.subsystems.split)
        fields = problem.unpack(problem.nlp().x0 + 0.3)
        np.testing.assert_array_equal(fields["u"][:, 3:5], 0.0)

    def test_setpoint_moves_into_band(self):
        t_br = self.eq.x[T_BR]
        forecast = self.forecast(12, band=(t_br + 0.5, t_br + 2.0))
        plan = slow_empc_step(0.0, self.eq.x, self.eq.u, forecast, self.params, self.cfg, self.subsystems.split)
        np.testing.assert_allclose(plan.ysp, t_br + 0.5, atol=1e-6)

    def test_short_forecast_rejected(self):
        with self.assertRaises(ValueError):
            build_slow_problem(self.eq.x, self.eq.u, self.forecast(3), self.params, self.cfg,
                               self.subsystems.split)

    def test_accept_by_status(self):
        self.assertTrue(accept(SolveStatus.CONVERGED, 1.0, 1e-6))
        self.assertTrue(accept(SolveStatus.STALLED, 1e-9, 1e-6))
        self.assertTrue(accept(SolveStatus.ITER_LIMIT, 1e-9, 1e-6))
        self.assertFalse(accept(SolveStatus.STALLED, 1e-3, 1e-6))
        self.assertFalse(accept(SolveStatus.INFEASIBLE, 0.0, 1e-6))

    def test_unaccepted_solution_holds_input(self):
        strict = self.cfg.model_copy(update={"solver": self.cfg.solver.model_copy(
            update={"max_iter": 1, "feasibility_tol": 1e-300})})
        z = self.eq.z.copy()
        z[1] = 0.0
        with self.assertLogs("empc.slow", "WARNING"):
            plan = slow_empc_step(0.0, self.eq.x, self.eq.u, self.forecast(12, z=z), self.params,
                                  strict, self.subsystems.split)
        self.assertTrue(plan.held)
        np.testing.assert_array_equal(plan.u_applied, self.eq.u)

    def test_plan_on_fast_grid(self):
        u_seq = np.arange(3.0)[:, None] * np.ones((1, 7))
        x_seq = 10.0 + np.arange(3.0)[:, None] * np.ones((1, 23))
        plan = SlowPlan(t0=0.0, dt=60.0, u_seq=u_seq, x_seq=x_seq, ysp=np.zeros(3), status="Converged")
        u, x = plan.at(55.0, 3, 5.0)
        np.testing.assert_array_equal(u[:, 0], [0.0, 1.0, 1.0])
        np.testing.assert_array_equal(x[:, 0], [10.0, 11.0, 11.0])
        u, _ = plan.at(600.0, 2, 5.0)
        np.testing.assert_array_equal(u[:, 0], [2.0, 2.0])


# ==============================
# Быстрые агенты и координация
# ==============================

class FastAgentTests(EquilibriumMixin, SimpleTestCase):
    def setUp(self):
        self.cfg = FastEmpcConfig(alpha=(0.1, 0.0))

    def test_agents_stay_at_equilibrium(self):
        forecast = self.forecast(12)
        board = self.board()
        for number in (1, 2, 3):
            with self.subTest(agent=number):
                sub = self.subsystems[number]
                sol = fast_agent_solve(self.context(number, forecast, self.cfg), board, self.params, self.cfg)
                self.assertFalse(sol.held)
                self.assertEqual(sol.u_seq.shape, (self.cfg.horizon(number), len(sub.inputs)))
                np.testing.assert_allclose(
                    sol.u_seq, np.tile(self.eq.u[list(sub.inputs)], (sol.u_seq.shape[0], 1)),
                    atol=1e-3 * input_range(self.params)[list(sub.inputs)].max(),
                )
                self.assertLess(np.max(np.abs(sol.slack)), 1e-6 * input_range(self.params).max())

    def test_zero_iteration_width_pins_previous_sequence(self):
        cfg = self.cfg.model_copy(update={"width_c": 0.0})
        sub = self.subsystems[1]
        n = cfg.horizon(1)
        pinned = np.tile(self.eq.u[list(sub.inputs)] + 0.02 * input_range(self.params)[list(sub.inputs)], (n, 1))
        board = self.board()
        board.u_seq[1] = pinned
        board.x_seq[1] = np.tile(self.eq.x[list(sub.states)], (n, 1))
        board.iteration = 1
        ctx = self.context(1, self.forecast(12), cfg, u_seq=pinned)
        problem = build_agent_problem(ctx, board, self.params, cfg)
        cols = problem.layout.slices["u"]
        np.testing.assert_allclose(problem.lb[:, cols], pinned)
        np.testing.assert_allclose(problem.ub[:, cols], pinned)
        sol = fast_agent_solve(ctx, board, self.params, cfg)
        np.testing.assert_array_equal(sol.u_seq, pinned)

    def test_fuel_cell_off_forces_zero_flow(self):
        z = self.eq.z.copy()
        z[0] = 0.0
        problem = build_agent_problem(self.context(1, self.forecast(12, z=z), self.cfg), self.board(),
                                      self.params, self.cfg)
        fields = problem.unpack(problem.nlp().x0 + 0.5)
        column = list(self.subsystems[1].inputs).index(0)
        np.testing.assert_array_equal(fields["u"][:, column], 0.0)

    def test_empty_neighborhood_collapses_to_previous(self):
        lo, hi = neighborhood_box(np.zeros(2), np.ones(2), [(np.array([0.1, 0.9]), 0.0), (np.array([0.5, 0.5]), 0.1)],
                                  fallback=np.array([0.1, 2.0]), rng=np.ones(2))
        np.testing.assert_array_equal(lo, [0.1, 1.0])
        np.testing.assert_array_equal(hi, [0.1, 1.0])

    def test_relative_change(self):
        self.assertEqual(relative_change(1.0, None), math.inf)
        self.assertAlmostEqual(relative_change(0.9, 1.0), 0.1)
        self.assertAlmostEqual(relative_change(-1.1, -1.0), 0.1)


class CoordinationTests(EquilibriumMixin, SimpleTestCase):
    def run_coordination(self, cfg):
        forecast = self.forecast(12)
        board = self.board()
        contexts = [self.context(j, forecast, cfg) for j in (1, 2, 3)]
        for ctx in contexts:
            board.u_seq[ctx.sub.number] = ctx.seed.u_seq
            board.x_seq[ctx.sub.number] = ctx.seed.x_seq
        return asyncio.run(coordinate_fast(contexts, board, self.params, cfg)), board

    def test_equilibrium_converges_on_second_iteration(self):
        result, board = self.run_coordination(FastEmpcConfig(alpha=(0.1, 0.0)))
        self.assertEqual(result.iterations, 2)
        self.assertEqual(board.iteration, 2)
        self.assertEqual(len(result.history), 2)

    def test_single_iteration_cap(self):
        result, _ = self.run_coordination(FastEmpcConfig(c_max=1))
        self.assertEqual(result.iterations, 1)

    def test_infinite_threshold_runs_once(self):
        result, _ = self.run_coordination(FastEmpcConfig(psi=math.inf))
        self.assertEqual(result.iterations, 1)

    def test_monotone_flag(self):
        self.assertTrue(CoordinationResult(solutions={}, iterations=2, history=[{1: 2.0}, {1: 1.0}]).monotone)
        self.assertFalse(CoordinationResult(solutions={}, iterations=2, history=[{1: 1.0}, {1: 2.0}]).monotone)


# ==============================
# Супервизорная схема
# ==============================

class SupervisoryTests(EquilibriumMixin, SimpleTestCase):
    def test_partitions_cover_all_inputs(self):
        for mode, count in (("a", 4), ("b", 5), ("c", 2)):
            with self.subTest(mode=mode):
                groups = partition_groups(mode, self.subsystems)
                self.assertEqual(len(groups), count)
                inputs = sorted(k for g in groups for k in g.inputs)
                self.assertEqual(inputs, list(range(7)))

    def test_unknown_partition(self):
        with self.assertRaises(ValueError):
            partition_groups("d", self.subsystems)

    def test_horizon_depends_on_microturbine(self):
        cfg = SupervisoryConfig()
        groups = {g.name: g for g in partition_groups("b", self.subsystems)}
        self.assertEqual(group_horizon(groups["MT+AB"], cfg), 12)
        self.assertEqual(group_horizon(groups["FC"], cfg), 10)

    def test_tracking_at_reference_keeps_inputs(self):
        cfg = SupervisoryConfig()
        for group in partition_groups("c", self.subsystems):
            with self.subTest(group=group.name):
                n = group_horizon(group, cfg)
                sol = tracking_step(group, self.eq.x, self.eq.u, np.tile(self.eq.u, (n, 1)),
                                    np.tile(self.eq.x, (n, 1)), self.forecast(12), self.params, cfg)
                self.assertFalse(sol.held)
                rng = input_range(self.params)[list(group.inputs)]
                np.testing.assert_allclose(sol.u_seq[0], self.eq.u[list(group.inputs)], atol=1e-6 * rng.max())


# ==============================
# Регуляторы целиком
# ==============================

class ControllerTests(EquilibriumMixin, SimpleTestCase):
    def settings(self):
        return ControllerSettings(slow=SlowEmpcConfig(alpha=(0.1, 10.0, 0.0)), fast=FastEmpcConfig(alpha=(0.1, 0.0)))

    def test_distributed_controller_holds_equilibrium(self):
        controller = DistributedEmpc(self.params, self.settings(), self.subsystems, ConstantSource(**self.source_kwargs))
        action = controller.act_sync(0.0, self.eq.x, self.eq.u)
        np.testing.assert_allclose(action.u, self.eq.u, atol=0.01 * input_range(self.params).max())
        self.assertTrue(1 <= action.iterations <= controller.settings.fast.c_max)
        for sub in self.subsystems:
            head = controller.last_result.solutions[sub.number].u_seq[0]
            np.testing.assert_array_equal(action.u[list(sub.inputs)], head)
        periods = controller.periods
        self.assertEqual(periods[2], 60.0)
        self.assertEqual(periods[0], 5.0)
        self.assertEqual(len(controller.log.slow_rows), 1)
        self.assertEqual(len(controller.log.fast_rows), 1)

    def test_slow_values_frozen_between_slow_samples(self):
        controller = DistributedEmpc(self.params, self.settings(), self.subsystems, ConstantSource(**self.source_kwargs))
        first = controller.act_sync(0.0, self.eq.x, self.eq.u)
        u_slow = controller.u_slow.copy()
        controller.act_sync(5.0, self.eq.x, first.u)
        np.testing.assert_array_equal(controller.u_slow, u_slow)
        self.assertEqual(len(controller.log.slow_rows), 1)

    def test_supervisory_controller_names(self):
        source = ConstantSource(**self.source_kwargs)
        for name in ("p2", "p3", "p4"):
            controller = make_controller(name, self.params, ControllerSettings(), self.subsystems, source)
            self.assertIsInstance(controller, SupervisoryMpc)
            self.assertEqual(controller.name, name)
        with self.assertRaises(ValueError):
            make_controller("p5", self.params, ControllerSettings(), self.subsystems, source)

    def test_supervisory_controller_holds_equilibrium(self):
        controller = make_controller("p2", self.params, self.settings(), self.subsystems,
                                     ConstantSource(**self.source_kwargs))
        action = controller.act_sync(0.0, self.eq.x, self.eq.u)
        np.testing.assert_allclose(action.u, self.eq.u, atol=0.01 * input_range(self.params).max())


class ControllerLogTests(SimpleTestCase):
    def test_csv_files(self):
        log = ControllerLog()
        plan = SlowPlan(t0=0.0, dt=60.0, u_seq=np.ones((2, 7)), x_seq=np.ones((2, 23)), ysp=np.array([24.0, 24.0]),
                        status="Converged", breakdown={"J1": 1.0, "J2": 2.0, "J3": -3.0, "J4": 4.0})
        log.record_slow(0.0, plan)
        log.record_fast(0.0, np.ones(7), 2, {"f1": {"objective": 1.0, "status": "Converged", "slack": np.zeros(3)}},
                        monotone=True)
        with tempfile.TemporaryDirectory() as tmp:
            fast_path, slow_path = log.write(Path(tmp))
            fast = pd.read_csv(fast_path)
            slow = pd.read_csv(slow_path)
        self.assertEqual(fast.loc[0, "iterations"], 2)
        self.assertEqual(slow.loc[0, "J3s"], -3.0)
        self.assertEqual(log.mean_iterations(), 2.0)
        self.assertEqual(log.monotone_share(), 1.0)
        self.assertEqual(log.held_samples, 0)
