import sys
from functools import lru_cache
from pathlib import Path

from loguru import logger
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class NSESettings(BaseSettings):
    """
    Process-wide settings read from the environment (prefix NSE_) and an
    optional .env file in the working directory.
    """
    model_config = SettingsConfigDict(env_prefix="NSE_", env_file=".env", extra="ignore")

    workers: int = Field(default=1, ge=1)
    log_level: str = "INFO"
    cache_dir: Path = Path(".nse_cache")
    null_reps: int = Field(default=2000, ge=2000)


@lru_cache(maxsize=1)
def get_settings() -> NSESettings:
    return NSESettings()


_LOG_FORMAT = "<green>{time:HH:mm:ss}</green> | <level>{level: <7}</level> | {message}"


def configure_logging(level: str | None = None) -> None:
    """Replaces loguru's default sink with a single stderr sink at `level`."""
    level = (level or get_settings().log_level).upper()
    logger.remove()
    logger.add(sys.stderr, level=level, format=_LOG_FORMAT)
