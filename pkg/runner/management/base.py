"""
Общая часть команд: флаги путей и зерна, перевод GridsynError в код выхода.
"""

from __future__ import annotations

import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from core.exceptions import GridsynError
from runner.services import RunConfig

logger = logging.getLogger(__name__)


class GridsynCommand(BaseCommand):
    uses_scenario = True

    def add_arguments(self, parser):
        parser.add_argument("--params", type=Path, default=None, help="файл параметров установки")
        if self.uses_scenario:
            parser.add_argument("--scenario", type=Path, default=None, help="файл сценария")
        parser.add_argument("--seed", type=int, default=None)
        parser.add_argument("--out", type=Path, default=None, help="каталог результатов")

    def run(self, cfg: RunConfig, **options) -> str:
        raise NotImplementedError

    def config(self, **options) -> RunConfig:
        scenario = options.get("scenario")
        if self.uses_scenario and scenario is None:
            scenario = settings.GRIDSYN["SCENARIO"]
        capacities = options.get("capacities")
        if capacities is None and options.get("capacity") is not None:
            capacities = [options["capacity"]]
        argv = {k: (str(v) if isinstance(v, Path) else v) for k, v in options.items()
                if k in ("params", "scenario", "seed", "controller", "capacity", "capacities", "out",
                         "emit_plots", "emit_adjacency", "order")}
        return RunConfig(
            params=Path(options.get("params") or settings.GRIDSYN["PARAMS"]),
            scenario=None if scenario is None else Path(scenario),
            out=options.get("out"),
            seed=options.get("seed"),
            controller=options.get("controller"),
            capacities=None if capacities is None else tuple(capacities),
            emit_plots=bool(options.get("emit_plots")),
            emit_adjacency=bool(options.get("emit_adjacency")),
            order=options.get("order") or "vertical-first",
            command=self.name,
            argv=argv,
        )

    @property
    def name(self) -> str:
        return self.__module__.rsplit(".", 1)[-1]

    def handle(self, *args, **options):
        try:
            cfg = self.config(**options)
            message = self.run(cfg, **options)
        except GridsynError as exc:
            logger.error("%s: %s", self.name, exc)
            raise CommandError(str(exc), returncode=exc.exit_code) from exc
        self.stdout.write(self.style.SUCCESS(message))
