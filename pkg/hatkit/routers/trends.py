import logging
from pathlib import Path
from typing import Optional

import typer

from hatkit.dependencies import get_jobs, parse_list, print_table, start_run
from hatkit.services.trends import run_trends, summarize_trends
from hatkit.storage.tables import write_csv

logger = logging.getLogger(__name__)

router = typer.Typer()

TRENDS_FILE = "trends.csv"
SUMMARY_FILE = "trends_summary.csv"


@router.command("trends")
def trends(
    out_dir: Path = typer.Option(..., "--out-dir"),
    config: Optional[Path] = typer.Option(None, "--config", help="YAML run config"),
    seeds: Optional[str] = typer.Option(None, "--seeds", help="e.g. 0,1,2"),
    nll_epochs: Optional[int] = typer.Option(None, "--nll-epochs"),
    mwer_epochs: Optional[int] = typer.Option(None, "--mwer-epochs"),
    jobs: Optional[int] = typer.Option(None, "--jobs"),
):
    """Directional checks: MWER vs NLL seed models, beam robustness and fusion ordering."""
    overrides = {
        "trends": {
            "seeds": parse_list(seeds, int, "--seeds"),
            "nll_epochs": nll_epochs,
            "mwer_epochs": mwer_epochs,
        }
    }
    run_config = start_run(out_dir, config, overrides)
    table = run_trends(run_config, get_jobs(jobs))
    summary = summarize_trends(table)
    write_csv(table, out_dir / TRENDS_FILE)
    write_csv(summary, out_dir / SUMMARY_FILE)

    for row in summary.itertuples(index=False):
        if not row.holds:
            logger.warning(f"Trend '{row.check}' does not hold: {row.passed}/{row.seeds} seeds passed")
    print_table(
        "Trend checks",
        ["check", "seeds", "passed", "strict", "holds"],
        [list(row) for row in summary.itertuples(index=False)],
    )
