"""
Конфигурация процесса IFCDA

Поддерживает:
- Переменные окружения с префиксом IFCDA_
- Файл .env в рабочей директории (не перекрывает реальные переменные)
- Фасад Settings.load()
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

# Загружаем .env
try:
    from dotenv import load_dotenv, find_dotenv
    _dotenv_path = find_dotenv(usecwd=True)
    load_dotenv(_dotenv_path or ".env", override=False)
except Exception:
    pass


class AppConfig(BaseSettings):
    """Общая конфигурация приложения"""

    # Логирование
    log_level: str = Field("INFO", description="Уровень логирования")

    # Артефакты
    out_dir: Path = Field(Path("ifcda_out"), description="Директория отчётов и артефактов")
    dump_graph: bool = Field(False, description="Писать списки рёбер графа на каждой итерации")

    # Данные
    csv_header: bool = Field(False, description="CSV-файлы признаков содержат заголовок")
    standardize: bool = Field(True, description="Стандартизировать признаки каждого домена при загрузке")

    # Вычисления
    dense_solver_limit: int = Field(3000, description="Порог плотного решателя распространения", ge=1)
    sweep_workers: int = Field(1, description="Потоков для перебора сетки параметров", ge=1)
    progress: bool = Field(True, description="Показывать прогресс перебора")

    model_config = SettingsConfigDict(
        env_prefix="IFCDA_",
        env_file=".env",
        extra="ignore"
    )

    def log_level_value(self) -> int:
        """Числовой уровень логирования; неизвестное имя -> INFO"""
        level = logging.getLevelName(self.log_level.upper())
        return level if isinstance(level, int) else logging.INFO


class Settings:
    """
    Главный класс настроек приложения.
    """

    def __init__(self, app: Optional[AppConfig] = None):
        self.app = app or AppConfig()

    @classmethod
    def load(cls) -> "Settings":
        """Загружает настройки из переменных окружения"""
        return cls()
