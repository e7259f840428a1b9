from runner.management.base import GridsynCommand
from runner.services import CONTROLLERS, run_simulate


class Command(GridsynCommand):
    help = "Прогон сценария в замкнутом контуре выбранным регулятором"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--controller", choices=CONTROLLERS, default=None)
        parser.add_argument("--capacity", type=float, default=None, help="ёмкость регулирования, доли")
        parser.add_argument("--emit-plots", action="store_true")

    def run(self, cfg, **options):
        result, paths = run_simulate(cfg)
        r = result.report
        return (f"{result.controller.name}: E_p {r.e_p:.1f}, E_t {r.e_t:.2f}, E_e {r.e_e:.3f}, "
                f"E_glb {r.e_glb:.2f}; файлы в {paths[0].parent}")
