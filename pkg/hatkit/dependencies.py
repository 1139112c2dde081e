"""Shared plumbing for the CLI routers: run directories, config resolution, console."""

import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, TypeVar

import typer
from rich.console import Console
from rich.table import Table

from hatkit.core.config import get_settings
from hatkit.core.logger import configure_logging
from hatkit.schemas.config import RunConfig
from hatkit.storage.config_file import load_run_config, write_resolved_config
from hatkit.storage.dataset import MANIFEST_FILE

logger = logging.getLogger(__name__)

console = Console()

T = TypeVar("T")

LOG_FILE = "run.log"


def get_jobs(jobs: Optional[int]) -> int:
    """``--jobs`` or the ``HATKIT_JOBS`` setting."""
    return jobs if jobs is not None else get_settings().JOBS


def start_run(out_dir: Path, config_path: Optional[Path], overrides: Dict[str, Any]) -> RunConfig:
    """Resolve the run config, install logging into ``out_dir`` and echo the config there."""
    out_dir.mkdir(parents=True, exist_ok=True)
    settings = get_settings()
    configure_logging(settings.LOG_LEVEL, out_dir / LOG_FILE if settings.LOG_TO_FILE else None)
    config = load_run_config(config_path, overrides)
    write_resolved_config(out_dir, config)
    logger.info(f"Run directory {out_dir} (config: {config_path or 'defaults'})")
    return config


def parse_list(text: Optional[str], convert: Callable[[str], T], option: str) -> Optional[List[T]]:
    """Comma-separated option values, e.g. ``--beams 1,2,4,8``."""
    if text is None:
        return None
    try:
        values = [convert(item.strip()) for item in text.split(",") if item.strip()]
    except ValueError:
        raise typer.BadParameter(f"cannot parse '{text}'", param_hint=option)
    if not values:
        raise typer.BadParameter("expected at least one value", param_hint=option)
    return values


def parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "on", "yes"):
        return True
    if lowered in ("0", "false", "off", "no"):
        return False
    raise ValueError(text)


def split_dir(data: Path, split: str) -> Path:
    """``data`` itself when it is a dataset directory, otherwise ``data/<split>``."""
    if (data / MANIFEST_FILE).exists():
        return data
    return data / split


def print_table(title: str, columns: List[str], rows: List[List[Any]]) -> None:
    table = Table(title=title)
    for column in columns:
        table.add_column(column)
    for row in rows:
        table.add_row(*[str(value) for value in row])
    console.print(table)
