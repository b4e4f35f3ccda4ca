"""
Иерархия исключений IFCDA.

Все ошибки наследуются от IFCDAError и одновременно от встроенного
исключения, которое бросил бы обычный код (ValueError для плохих входных
данных, RuntimeError для численных сбоев). CLI превращает категории
в разные коды выхода.
"""

from __future__ import annotations


class IFCDAError(Exception):
    """Базовая ошибка пакета"""

    exit_code: int = 1


# --- входные данные ---

class DataFileError(IFCDAError, FileNotFoundError):
    """Файл с признаками не найден или не читается"""

    exit_code = 3


class FormatError(IFCDAError, ValueError):
    """Файл прочитан, но его структура битая (рваные строки, неверный заголовок)"""

    exit_code = 4


class DataError(IFCDAError, ValueError):
    """Нечисловые или бесконечные значения признаков"""

    exit_code = 4


class LabelError(IFCDAError, ValueError):
    """Метка вне диапазона 1..C+1"""

    exit_code = 4


class ConfigError(IFCDAError, ValueError):
    """Ошибка разбора конфигурации эксперимента"""

    exit_code = 2


class ParameterError(IFCDAError, ValueError):
    """Недопустимое значение гиперпараметра"""

    exit_code = 2


# --- численный конвейер ---

class PropagationError(IFCDAError, RuntimeError):
    """Система распространения меток вырождена"""

    exit_code = 5


class NormalizationError(IFCDAError, RuntimeError):
    """Столбец меток с нулевой суммой"""

    exit_code = 5


class FilterError(IFCDAError, ValueError):
    """Вход фильтра не является распределением вероятностей"""

    exit_code = 5


class DegenerateWeightsError(IFCDAError, RuntimeError):
    """Нулевая суммарная масса весов в домене"""

    exit_code = 5


class EmptyLossError(IFCDAError, RuntimeError):
    """Все классы пропущены, матрица потерь пуста"""

    exit_code = 5


class SolverError(IFCDAError, RuntimeError):
    """Сбой обобщённой задачи на собственные значения"""

    exit_code = 5


class MetricsError(IFCDAError, ValueError):
    """Некорректные входы для метрик"""

    exit_code = 4


def annotate_iteration(error: IFCDAError, iteration: int) -> IFCDAError:
    """Возвращает ошибку того же типа с номером итерации в сообщении."""
    return type(error)(f"iteration {iteration}: {error}")
