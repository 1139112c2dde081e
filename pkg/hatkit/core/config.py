import os
from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_TO_FILE: bool = True

    # Parallelism (--jobs default)
    JOBS: int = max(1, os.cpu_count() or 1)

    # Output tables
    FLOAT_FORMAT: str = "%.10g"

    model_config = SettingsConfigDict(
        env_prefix="HATKIT_",
        env_file=".env",
        case_sensitive=True,
        extra="allow",
    )


@lru_cache()
def get_settings() -> Settings:
    return Settings()
