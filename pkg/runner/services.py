"""
Сценарии команд manage.py: decompose, simulate, compare.

Каждая команда пишет результаты в свой каталог и manifest.json рядом с
ними: хеш конфигурации, зерно и версии пакетов, по которым прогон
повторяется бит в бит.
"""

from __future__ import annotations

import hashlib
import json
import logging
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from itertools import product
from pathlib import Path

import django
import numpy as np
import pandas as pd
import pydantic
from django.conf import settings

from core.exceptions import ConfigError, GridsynError, ReportError
from decomp.io import write_partition, write_report
from decomp.pipeline import DecompositionResult, Order, decompose
from netgraph.io import write_edge_list
from plant.params import PlantParams, load_params
from runner.models import SimulationRun
from runner.plots import plot_run, plot_sweep
from scenario.data import build_scenario
from scenario.simulation import RunResult, scenario_subsystems, simulate_sync
from scenario.spec import ScenarioSpec, load_scenario

logger = logging.getLogger(__name__)

CONTROLLERS = ("p1", "p2", "p3", "p4")
SWEEP_COLUMNS = (
    "controller", "capacity", "status", "e_p", "e_t", "e_e", "e_glb", "delta_c_es",
    "it_min", "it_mean", "it_max", "monotone_share", "held", "error",
)


@dataclass(frozen=True)
class RunConfig:
    params: Path
    scenario: Path | None = None
    out: Path | None = None
    seed: int | None = None
    controller: str | None = None
    capacities: tuple[float, ...] | None = None
    emit_plots: bool = False
    emit_adjacency: bool = False
    order: Order = "vertical-first"
    command: str = ""
    argv: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("params", "scenario"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{name} file not found", context=str(path))

    @property
    def capacity(self) -> float | None:
        return None if not self.capacities else self.capacities[0]

    def out_dir(self) -> Path:
        out = Path(self.out or settings.GRIDSYN["OUT"])
        try:
            out.mkdir(parents=True, exist_ok=True)
            probe = out / ".write-check"
            probe.touch()
            probe.unlink()
        except OSError as exc:
            raise ReportError(f"output directory is not writable: {exc}", context=str(out)) from exc
        return out


# ==============================
# Воспроизводимость
# ==============================

def config_hash(params_path: Path, spec: ScenarioSpec | None, seed: int) -> str:
    digest = hashlib.sha256()
    digest.update(Path(params_path).read_bytes())
    if spec is not None:
        digest.update(spec.model_dump_json().encode("utf-8"))
    digest.update(str(seed).encode("ascii"))
    return digest.hexdigest()


def versions() -> dict:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "pydantic": pydantic.VERSION,
        "django": django.get_version(),
    }


def write_manifest(out_dir: Path, cfg: RunConfig, digest: str, seed: int, extra: dict | None = None) -> Path:
    manifest = {
        "command": cfg.command,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config_hash": digest,
        "seed": seed,
        "params": str(cfg.params),
        "scenario": None if cfg.scenario is None else str(cfg.scenario),
        "options": cfg.argv,
        "versions": versions(),
        **(extra or {}),
    }
    path = out_dir / "manifest.json"
    try:
        path.write_text(json.dumps(manifest, ensure_ascii=False, indent=2), encoding="utf-8")
    except OSError as exc:
        raise ReportError(f"cannot write manifest: {exc}", context=str(path)) from exc
    return path


def load_inputs(cfg: RunConfig) -> tuple[PlantParams, ScenarioSpec]:
    """Файлы, поверх них флаги командной строки."""
    params = load_params(cfg.params)
    spec = load_scenario(cfg.scenario or settings.GRIDSYN["SCENARIO"])
    spec = spec.with_overrides(seed=cfg.seed, controller=cfg.controller, capacity=cfg.capacity)
    return params, spec


def record_run(spec: ScenarioSpec, digest: str, result: RunResult | None, out_dir: Path,
               error: str = "") -> SimulationRun | None:
    if not settings.GRIDSYN["RECORD_RUNS"]:
        return None
    run = SimulationRun(
        scenario=spec.name, controller=spec.controller, capacity=spec.regulation.capacity,
        seed=spec.seed, config_hash=digest, out_dir=str(out_dir),
        status="ok" if result is not None else "failed", error=error,
    )
    if result is not None:
        report = result.report
        run.e_p, run.e_t, run.e_e, run.e_glb = report.e_p, report.e_t, report.e_e, report.e_glb
        mean = result.iteration_stats()["mean"]
        run.mean_iterations = None if np.isnan(mean) else mean
    run.save()
    return run


# ==============================
# decompose
# ==============================

def run_decompose(cfg: RunConfig) -> tuple[DecompositionResult, list[Path]]:
    out = cfg.out_dir()
    params = load_params(cfg.params)
    seed = cfg.seed if cfg.seed is not None else settings.GRIDSYN["SEED"]
    result = decompose(params, seed=seed, order=cfg.order)
    logger.info("Декомпозиция: ε = %s, сообществ %d, seed %d",
                "—" if result.epsilon is None else f"{result.epsilon:.5f}",
                len(result.partition.communities()), result.seed)

    paths = [write_report(result.report(), out / "decomposition.json"),
             write_partition(result.partition, out / "partition.txt")]
    if cfg.emit_adjacency:
        paths.append(write_edge_list(result.adjacency, out / "adjacency.edges"))
        if result.fast_adjacency is not None:
            paths.append(write_edge_list(result.fast_adjacency, out / "adjacency_fast.edges"))
    paths.append(write_manifest(out, cfg, config_hash(cfg.params, None, seed), seed))
    return result, paths


# ==============================
# simulate
# ==============================

def write_run(result: RunResult, out: Path, emit_plots: bool) -> list[Path]:
    frame = result.log.frame()
    summary = {**result.report.as_dict(), "controller": result.controller.name,
               "capacity": result.spec.regulation.capacity, "iterations": result.iteration_stats(),
               "schedule_fallback_hours": result.data.schedule.fallback_hours}
    paths = [result.log.write(out / "scenario_log.csv"),
             result.data.schedule.write(out / "schedule.csv"),
             *result.controller.log.write(out)]
    path = out / "report.json"
    try:
        path.write_text(json.dumps(summary, ensure_ascii=False, indent=2, default=float), encoding="utf-8")
    except OSError as exc:
        raise ReportError(f"cannot write report: {exc}", context=str(path)) from exc
    paths.append(path)
    if emit_plots:
        paths.extend(plot_run(frame, out))
    return paths


def run_simulate(cfg: RunConfig) -> tuple[RunResult, list[Path]]:
    out = cfg.out_dir()
    params, spec = load_inputs(cfg)
    digest = config_hash(cfg.params, spec, spec.seed)
    write_manifest(out, cfg, digest, spec.seed)
    try:
        result = simulate_sync(spec, params, out_dir=out)
    except GridsynError as exc:
        record_run(spec, digest, None, out, error=str(exc))
        raise
    paths = write_run(result, out, cfg.emit_plots)
    record_run(spec, digest, result, out)
    return result, paths


# ==============================
# compare
# ==============================

def _sweep_row(controller: str, capacity: float, result: RunResult | None, error: str = "") -> dict:
    row = dict.fromkeys(SWEEP_COLUMNS)
    row.update(controller=controller, capacity=capacity, status="failed" if result is None else "ok", error=error)
    if result is not None:
        report = result.report
        stats = result.iteration_stats()
        row.update(e_p=report.e_p, e_t=report.e_t, e_e=report.e_e, e_glb=report.e_glb,
                   delta_c_es=report.delta_c_es, it_min=stats["min"], it_mean=stats["mean"],
                   it_max=stats["max"], monotone_share=stats["monotone_share"], held=stats["held"])
    return row


def run_compare(cfg: RunConfig) -> tuple[pd.DataFrame, list[Path]]:
    """
    Все четыре регулятора на каждой ёмкости. Ошибка ячейки пишется в
    таблицу, развёртка продолжается.
    """
    out = cfg.out_dir()
    params, spec = load_inputs(replace(cfg, capacities=None))
    capacities = tuple(cfg.capacities or ())
    digest = config_hash(cfg.params, spec, spec.seed)
    paths = [write_manifest(out, cfg, digest, spec.seed, {"capacities": list(capacities)})]

    results: dict[tuple[str, float], RunResult | GridsynError] = {}
    if capacities:
        # суточный план и подсистемы от ёмкости и регулятора не зависят
        data = build_scenario(spec, params)
        subsystems = scenario_subsystems(spec, params)

        def cell(key):
            controller, capacity = key
            cell_spec = spec.with_overrides(controller=controller, capacity=capacity)
            cell_dir = out / "cells" / f"{controller}_{capacity:.3f}"
            try:
                result = simulate_sync(cell_spec, params, data=data.with_regulation(cell_spec),
                                       subsystems=subsystems, out_dir=cell_dir)
                result.log.write(cell_dir / "scenario_log.csv")
                return result
            except GridsynError as exc:
                logger.warning("Ячейка %s / %.2f не досчитана: %s", controller, capacity, exc)
                return exc

        keys = list(product(CONTROLLERS, capacities))
        with ThreadPoolExecutor(max_workers=max(1, settings.GRIDSYN["WORKERS"])) as pool:
            results = dict(zip(keys, pool.map(cell, keys)))

    rows = []
    for (controller, capacity), outcome in results.items():
        cell_spec = spec.with_overrides(controller=controller, capacity=capacity)
        if isinstance(outcome, GridsynError):
            rows.append(_sweep_row(controller, capacity, None, str(outcome)))
            record_run(cell_spec, digest, None, out, error=str(outcome))
        else:
            rows.append(_sweep_row(controller, capacity, outcome))
            record_run(cell_spec, digest, outcome, out)

    table = pd.DataFrame(rows, columns=list(SWEEP_COLUMNS))
    path = out / "sweep.csv"
    try:
        table.to_csv(path, index=False)
    except OSError as exc:
        raise ReportError(f"cannot write sweep table: {exc}", context=str(path)) from exc
    paths.append(path)
    if cfg.emit_plots and not table.empty:
        paths.append(plot_sweep(table, out))
    logger.info("Развёртка: %d ячеек, с ошибкой %d", len(table), int((table["status"] == "failed").sum()))
    return table, paths
