from runner.management.base import GridsynCommand
from runner.services import run_compare


class Command(GridsynCommand):
    help = "Развёртка по ёмкости регулирования: все четыре регулятора на каждой ёмкости"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--capacities", type=float, nargs="*", default=[0.0, 0.1, 0.2, 0.3])
        parser.add_argument("--emit-plots", action="store_true")

    def run(self, cfg, **options):
        table, paths = run_compare(cfg)
        failed = int((table["status"] == "failed").sum())
        return f"Развёртка: {len(table)} ячеек, с ошибкой {failed}; файлы в {paths[0].parent}"
