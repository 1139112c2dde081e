import logging
from pathlib import Path
from typing import Optional

import typer

from hatkit.dependencies import get_jobs, parse_bool, parse_list, print_table, split_dir, start_run
from hatkit.routers.decode import checkpoint_dir
from hatkit.schemas.config import Head
from hatkit.services.evalkit import pick_lambda, run_sweep
from hatkit.services.plots import plot_beam_curves
from hatkit.services.toy_model import ToyScorer
from hatkit.storage.checkpoint import load_checkpoint
from hatkit.storage.dataset import MANIFEST_FILE, read_dataset, write_json
from hatkit.storage.lm_file import read_lm
from hatkit.storage.tables import write_csv

logger = logging.getLogger(__name__)

router = typer.Typer()

SWEEP_FILE = "sweep.csv"
DEV_SWEEP_FILE = "dev_sweep.csv"
PICKED_FILE = "picked_lambda.json"
PLOT_FILE = "wer_vs_beam.svg"


@router.command("sweep")
def sweep(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Checkpoint or training run directory"),
    data: Path = typer.Option(..., "--data", help="Corpus or dataset directory"),
    out_dir: Path = typer.Option(..., "--out-dir"),
    split: str = typer.Option("eval", "--split"),
    config: Optional[Path] = typer.Option(None, "--config", help="YAML run config"),
    beams: Optional[str] = typer.Option(None, "--beams", help="e.g. 1,2,4,8"),
    temperatures: Optional[str] = typer.Option(None, "--temperatures"),
    length_norm: Optional[str] = typer.Option(None, "--length-norm", help="e.g. on,off"),
    lambda1s: Optional[str] = typer.Option(None, "--lambda1s"),
    lambda2s: Optional[str] = typer.Option(None, "--lambda2s"),
    reference_beam: Optional[int] = typer.Option(None, "--reference-beam"),
    head: Optional[Head] = typer.Option(None, "--head", help="Defaults to the checkpoint's head"),
    lm: Optional[Path] = typer.Option(None, "--lm", help="External n-gram LM listing"),
    jobs: Optional[int] = typer.Option(None, "--jobs"),
):
    """Decode over a grid of beams, temperatures, length norm and fusion weights."""
    overrides = {
        "decode": {"head": head},
        "sweep": {
            "beams": parse_list(beams, int, "--beams"),
            "temperatures": parse_list(temperatures, float, "--temperatures"),
            "length_norm": parse_list(length_norm, parse_bool, "--length-norm"),
            "lambda1s": parse_list(lambda1s, float, "--lambda1s"),
            "lambda2s": parse_list(lambda2s, float, "--lambda2s"),
            "reference_beam": reference_beam,
        },
    }
    run_config = start_run(out_dir, config, overrides)
    grid = run_config.sweep
    ckpt = load_checkpoint(checkpoint_dir(checkpoint))
    base = run_config.decode if head is not None else run_config.decode.model_copy(update={"head": ckpt.head})
    scorer = ToyScorer(ckpt.params)
    external_lm = read_lm(lm) if lm is not None else None
    jobs = get_jobs(jobs)

    dataset = read_dataset(split_dir(data, split))
    table = run_sweep(scorer, dataset, grid, base, external_lm, jobs)
    write_csv(table, out_dir / SWEEP_FILE)
    plot_beam_curves(table, out_dir / PLOT_FILE, title=f"WER vs beam ({dataset.name})")

    fusion_axes = len(grid.lambda1s) > 1 or len(grid.lambda2s) > 1
    dev_dir = data / "dev"
    if fusion_axes and (dev_dir / MANIFEST_FILE).exists() and split_dir(data, split) != data:
        dev_grid = grid.model_copy(update={"beams": [grid.reference_beam]})
        dev_table = run_sweep(scorer, read_dataset(dev_dir), dev_grid, base, external_lm, jobs)
        write_csv(dev_table, out_dir / DEV_SWEEP_FILE)
        weights = pick_lambda(dev_table, grid.reference_beam)
        write_json(out_dir / PICKED_FILE, weights.model_dump())

    print_table(
        f"Sweep over {grid.size} grid points ({dataset.name})",
        ["beam", "Z", "norm", "λ1", "λ2", "WER"],
        [[r.beam, r.temperature, r.length_norm, r.lambda1, r.lambda2, f"{r.wer:.4f}"]
         for r in table.itertuples(index=False)],
    )
