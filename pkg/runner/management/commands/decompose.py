from runner.management.base import GridsynCommand
from runner.services import run_decompose


class Command(GridsynCommand):
    help = "Декомпозиция установки: ε, сообщества быстрой части, подсистемы"
    uses_scenario = False

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--emit-adjacency", action="store_true", help="записать графы списком рёбер")
        parser.add_argument("--order", choices=("vertical-first", "horizontal-first"), default="vertical-first")

    def run(self, cfg, **options):
        result, paths = run_decompose(cfg)
        eps = "нет разделения" if result.epsilon is None else f"ε = {result.epsilon:.5f}"
        return f"Готово: {eps}, сообществ {len(result.partition.communities())}, файлы в {paths[0].parent}"
