import json
import tempfile
from io import StringIO
from pathlib import Path
from types import SimpleNamespace

import pandas as pd
import yaml
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings

from core import config
from core.exceptions import ConfigError
from netgraph.io import read_edge_list
from runner.models import SimulationRun
from runner.services import SWEEP_COLUMNS, RunConfig, record_run
from scenario.spec import ScenarioSpec

PARAMS = config.BASE_DIR / "data" / "ies_params.yaml"
DESK = config.BASE_DIR / "data" / "scenarios" / "desk.yaml"


def recording(flag=True):
    return override_settings(GRIDSYN={**settings.GRIDSYN, "RECORD_RUNS": flag})


class RunConfigTests(SimpleTestCase):
    def test_missing_file(self):
        with self.assertRaises(ConfigError) as ctx:
            RunConfig(params=Path("/nonexistent/ies.yaml"))
        self.assertEqual(ctx.exception.exit_code, 2)

    def test_capacity_from_list(self):
        cfg = RunConfig(params=PARAMS, scenario=DESK, capacities=(0.1, 0.2))
        self.assertEqual(cfg.capacity, 0.1)
        self.assertIsNone(RunConfig(params=PARAMS).capacity)


# ==============================
# decompose
# ==============================

class DecomposeCommandTests(SimpleTestCase):
    def test_report_and_edge_list(self):
        with tempfile.TemporaryDirectory() as tmp:
            call_command("decompose", params=PARAMS, out=tmp, seed=7, emit_adjacency=True, stdout=StringIO())
            out = Path(tmp)
            report = json.loads((out / "decomposition.json").read_text(encoding="utf-8"))
            manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
            self.assertTrue((out / "partition.txt").exists())
            self.assertTrue((out / "adjacency_fast.edges").exists())
            edges = (out / "adjacency.edges").read_text(encoding="utf-8").split()
            self.assertIn("u1", edges)

        self.assertEqual(round(report["epsilon"], 5), 0.00206)
        self.assertIsNotNone(report["subsystems"])
        self.assertEqual(report["seed"], 7)
        self.assertEqual(manifest["seed"], 7)
        self.assertEqual(len(manifest["config_hash"]), 64)
        self.assertIn("numpy", manifest["versions"])

    def test_edge_list_imports_back(self):
        from decomp.pipeline import decompose
        from netgraph.io import write_edge_list
        from plant.params import load_params

        adj = decompose(load_params(PARAMS), seed=7).adjacency
        with tempfile.TemporaryDirectory() as tmp:
            path = write_edge_list(adj, Path(tmp) / "a.edges")
            again = read_edge_list(path, adj.nodes)
        self.assertEqual(again.edges(), adj.edges())

    def test_bad_header_exit_code(self):
        with tempfile.TemporaryDirectory() as tmp:
            params = Path(tmp) / "bad.yaml"
            params.write_text("# some-other-format\nplant: {}\n", encoding="utf-8")
            with self.assertRaises(CommandError) as ctx:
                call_command("decompose", params=params, out=tmp, stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn("bad.yaml:1", str(ctx.exception))

    def test_missing_params_exit_code(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError) as ctx:
                call_command("decompose", params=Path(tmp) / "none.yaml", out=tmp, stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)


# ==============================
# compare
# ==============================

class CompareCommandTests(SimpleTestCase):
    def test_empty_sweep(self):
        with tempfile.TemporaryDirectory() as tmp:
            call_command("compare", params=PARAMS, scenario=DESK, out=tmp, capacities=[], stdout=StringIO())
            table = pd.read_csv(Path(tmp) / "sweep.csv")
            manifest = json.loads((Path(tmp) / "manifest.json").read_text(encoding="utf-8"))
        self.assertTrue(table.empty)
        self.assertEqual(tuple(table.columns), SWEEP_COLUMNS)
        self.assertEqual(manifest["capacities"], [])

    def test_bad_controller_override(self):
        with tempfile.TemporaryDirectory() as tmp:
            scenario = Path(tmp) / "s.yaml"
            scenario.write_text("controller: p7\n", encoding="utf-8")
            with self.assertRaises(CommandError) as ctx:
                call_command("compare", params=PARAMS, scenario=scenario, out=tmp, capacities=[],
                             stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn("controller", str(ctx.exception))


# ==============================
# Реестр прогонов
# ==============================

class RegistryTests(TestCase):
    def fake_result(self):
        report = SimpleNamespace(e_p=10.0, e_t=0.5, e_e=1.25, e_glb=-9.0)
        return SimpleNamespace(report=report, iteration_stats=lambda: {"mean": 2.5})

    def test_off_by_default(self):
        with recording(False):
            self.assertIsNone(record_run(ScenarioSpec(), "0" * 64, self.fake_result(), Path("out")))
        self.assertEqual(SimulationRun.objects.count(), 0)

    def test_success_and_failure_rows(self):
        spec = ScenarioSpec().with_overrides(controller="p3", capacity=0.1)
        with recording():
            record_run(spec, "a" * 64, self.fake_result(), Path("out"))
            record_run(spec, "a" * 64, None, Path("out"), error="solver gave up")
        ok = SimulationRun.objects.get(status="ok")
        failed = SimulationRun.objects.get(status="failed")
        self.assertEqual((ok.controller, ok.capacity, ok.seed), ("p3", 0.1, 20210701))
        self.assertEqual(ok.e_glb, -9.0)
        self.assertEqual(ok.mean_iterations, 2.5)
        self.assertIsNone(failed.e_glb)
        self.assertEqual(failed.error, "solver gave up")


class SimulateCommandTests(TestCase):
    """Короткий прогон: два быстрых такта, укороченные горизонты."""

    def scenario(self, tmp) -> Path:
        data = {
            "name": "smoke",
            "duration": 10.0,
            "settings": {
                "slow": {"horizon": 3},
                "fast": {"horizons": [3, 3, 3], "c_max": 2},
                "supervisory": {"horizon_high": 3, "horizon_short": 3, "horizon_long": 3},
            },
        }
        path = Path(tmp) / "smoke.yaml"
        path.write_text(yaml.safe_dump(data), encoding="utf-8")
        return path

    def test_run_writes_artifacts_and_registry(self):
        with tempfile.TemporaryDirectory() as tmp, recording():
            out = Path(tmp) / "run"
            call_command("simulate", params=PARAMS, scenario=self.scenario(tmp), out=out, capacity=0.0,
                         controller="p1", emit_plots=True, stdout=StringIO())
            log = pd.read_csv(out / "scenario_log.csv")
            report = json.loads((out / "report.json").read_text(encoding="utf-8"))
            for name in ("manifest.json", "schedule.csv", "controller_fast.csv", "power.png", "storage.png"):
                self.assertTrue((out / name).exists(), name)

        self.assertEqual(len(log), 2)
        self.assertEqual(report["samples"], 2)
        self.assertEqual(report["capacity"], 0.0)
        self.assertEqual(set(log["xi"]), {0.0})
        run = SimulationRun.objects.get()
        self.assertEqual((run.scenario, run.controller, run.status), ("smoke", "p1", "ok"))
        self.assertAlmostEqual(run.e_glb, report["e_glb"])
