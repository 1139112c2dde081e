import logging
from pathlib import Path
from typing import List, Optional

import pandas as pd
import typer

from hatkit.core.config import get_settings
from hatkit.core.errors import SelfcheckFailed
from hatkit.core.logger import configure_logging
from hatkit.dependencies import console, print_table
from hatkit.services.selfcheck import run_selfcheck
from hatkit.storage.tables import write_csv

logger = logging.getLogger(__name__)

router = typer.Typer()

REPORT_FILE = "selfcheck.csv"


@router.command("selfcheck")
def selfcheck(
    check: Optional[List[str]] = typer.Option(None, "--check", help="Run only these checks (repeatable)"),
    inject_fault: Optional[str] = typer.Option(None, "--inject-fault", help="Corrupt one check's oracle input"),
    seed: int = typer.Option(0, "--seed"),
    out_dir: Optional[Path] = typer.Option(None, "--out-dir", help="Also write selfcheck.csv here"),
):
    """Run the numerical oracle suite; exits 3 when any check fails."""
    settings = get_settings()
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    configure_logging(settings.LOG_LEVEL, out_dir / "run.log" if out_dir is not None and settings.LOG_TO_FILE else None)

    results = run_selfcheck(check or None, inject_fault, seed)
    print_table(
        "hatkit selfcheck",
        ["check", "result", "detail"],
        [[r.name, "PASS" if r.passed else "FAIL", r.detail or r.error or ""] for r in results],
    )
    if out_dir is not None:
        write_csv(pd.DataFrame([r.model_dump() for r in results], columns=["name", "passed", "detail", "error"]),
                  out_dir / REPORT_FILE)

    failed = [r.name for r in results if not r.passed]
    if failed:
        raise SelfcheckFailed(failed)
    console.print(f"all {len(results)} checks passed")
