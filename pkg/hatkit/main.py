"""hatkit command-line entry point."""

import logging
import sys
from typing import List, Optional

import typer

from hatkit import __version__
from hatkit.core.config import get_settings
from hatkit.core.errors import EXIT_OK, handle_error
from hatkit.routers.data import router as data_router
from hatkit.routers.decode import router as decode_router
from hatkit.routers.selfcheck import router as selfcheck_router
from hatkit.routers.sweep import router as sweep_router
from hatkit.routers.train import router as train_router
from hatkit.routers.trends import router as trends_router

logger = logging.getLogger(__name__)

app = typer.Typer(
    name="hatkit",
    help="RNN-T / HAT transducer losses, MWER training and fusion decoding on synthetic data.",
    add_completion=False,
    no_args_is_help=True,
    pretty_exceptions_enable=False,
)


def include_router(router: typer.Typer) -> None:
    """Register a router's commands at the top level of the app."""
    app.registered_commands.extend(router.registered_commands)


for router in (data_router, train_router, decode_router, sweep_router, selfcheck_router, trends_router):
    include_router(router)


def _version(value: bool) -> None:
    if value:
        typer.echo(f"hatkit {__version__}")
        raise typer.Exit()


@app.callback()
def root(
    log_level: Optional[str] = typer.Option(None, "--log-level", help="Console log level (default from HATKIT_LOG_LEVEL)"),
    version: bool = typer.Option(False, "--version", callback=_version, is_eager=True),
):
    if log_level is not None:
        get_settings().LOG_LEVEL = log_level.upper()


def run(args: Optional[List[str]] = None) -> int:
    """Invoke the CLI and map any exception to an exit code."""
    try:
        code = app(args=args, prog_name="hatkit", standalone_mode=False)
    except SystemExit as e:
        return int(e.code or 0)
    except Exception as e:
        logger.debug("Command failed", exc_info=True)
        return handle_error(e)
    return code if isinstance(code, int) else EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
