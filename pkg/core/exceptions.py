"""
Общие исключения проекта.

Каждое семейство несёт свой код выхода: команды manage.py ловят
GridsynError и завершаются с exit_code семейства.
"""

from __future__ import annotations


class GridsynError(Exception):
    exit_code = 1

    def __init__(self, message: str = "", *, context: str | None = None):
        self.context = context
        super().__init__(message)

    def __str__(self) -> str:
        text = super().__str__()
        if self.context:
            return f"{self.context}: {text}"
        return text


# ==============================
# Конфигурация
# ==============================

class ConfigError(GridsynError):
    exit_code = 2


# ==============================
# Модель установки
# ==============================

class ModelError(GridsynError):
    exit_code = 3


class DegenerateFlow(ModelError):
    """Охладители включены, а расход через них нулевой."""


class IntegrationDiverged(ModelError):
    """Состояние вышло за физические пределы при интегрировании."""


class NonFiniteDerivative(ModelError):
    pass


class ZeroDiagonal(ModelError):
    """Нулевой диагональный элемент Якобиана: постоянную времени не оценить."""

    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"zero diagonal entry for state x{index + 1}")


# ==============================
# Декомпозиция
# ==============================

class DecompositionError(GridsynError):
    exit_code = 3


class NoScaleGap(DecompositionError):
    pass


class EmptyGraph(DecompositionError):
    pass


class CardinalityMismatch(DecompositionError):
    pass


# ==============================
# Решатели
# ==============================

class SolverError(GridsynError):
    exit_code = 4


class SolverInfeasible(SolverError):
    pass


# ==============================
# Отчёты и ввод/вывод
# ==============================

class ReportError(GridsynError):
    exit_code = 5


class IncompleteLog(ReportError):
    pass
