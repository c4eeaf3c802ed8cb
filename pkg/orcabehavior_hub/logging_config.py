import logging
import os
import sys
from logging.handlers import RotatingFileHandler

from orcabehavior_hub.infra.settings import SettingsLoader

_LOGGER_NAME = "orcabehavior.pipeline"
_MAX_BYTES = 1_000_000  # 1 MB
_BACKUPS = 5
_configured = False


def _truthy(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in {"1", "true", "yes", "on"}


def _level(settings: SettingsLoader) -> int:
    name = str(settings.get("LOG_LEVEL", "INFO")).strip().upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.INFO


def _formatter(settings: SettingsLoader) -> logging.Formatter:
    return logging.Formatter(
        fmt=settings.get("LOG_FORMAT", "%(levelname)s %(asctime)s %(message)s"),
        datefmt=settings.get("LOG_DATEFMT", "%Y-%m-%dT%H:%M:%S"),
    )


def _file_handler(settings: SettingsLoader, level: int) -> RotatingFileHandler:
    """pipeline.log в LOG_DIR (ORCA_PLL_LOG_DIR перекрывает config.json)."""
    log_dir = str(settings.get("LOG_DIR", "logs"))
    os.makedirs(log_dir, exist_ok=True)
    fh = RotatingFileHandler(
        os.path.join(log_dir, str(settings.get("LOG_FILE", "pipeline.log"))),
        maxBytes=_MAX_BYTES,
        backupCount=_BACKUPS,
        encoding="utf-8",
    )
    fh.setLevel(level)
    return fh


def get_logger() -> logging.Logger:
    """
    Логгер пайплайна. Настраивается один раз на процесс:
    файл с ротацией и (LOG_TO_STDERR) дубль в stderr.
    """
    global _configured
    logger = logging.getLogger(_LOGGER_NAME)
    if _configured:
        return logger

    settings = SettingsLoader()
    level = _level(settings)
    formatter = _formatter(settings)
    logger.setLevel(level)
    logger.propagate = False

    handlers: list[logging.Handler] = [_file_handler(settings, level)]
    if _truthy(settings.get("LOG_TO_STDERR", False)):
        sh = logging.StreamHandler(sys.stderr)
        sh.setLevel(level)
        handlers.append(sh)
    for h in handlers:
        h.setFormatter(formatter)
        logger.addHandler(h)

    _configured = True
    return logger


def reset_logging() -> None:
    """Снять обработчики; следующий get_logger() перечитает настройки."""
    global _configured
    logger = logging.getLogger(_LOGGER_NAME)
    for h in list(logger.handlers):
        logger.removeHandler(h)
        h.close()
    _configured = False
