import logging
from pathlib import Path
from typing import Optional

import pandas as pd
import typer

from hatkit.core.errors import UsageError
from hatkit.dependencies import get_jobs, print_table, split_dir, start_run
from hatkit.schemas.config import Head, LossKind, Optimizer
from hatkit.services.toy_model import init_params
from hatkit.services.training import train as run_training
from hatkit.storage.checkpoint import load_checkpoint, save_checkpoint
from hatkit.storage.dataset import MANIFEST_FILE, read_dataset, read_manifest
from hatkit.storage.tables import METRICS_COLUMNS, metrics_table, read_csv, write_csv

logger = logging.getLogger(__name__)

router = typer.Typer()

CHECKPOINT_DIR = "checkpoint"
METRICS_FILE = "metrics.csv"


@router.command("train")
def train(
    data: Path = typer.Option(..., "--data", help="Corpus directory written by gen-data"),
    out_dir: Path = typer.Option(..., "--out-dir"),
    config: Optional[Path] = typer.Option(None, "--config", help="YAML run config"),
    loss: Optional[LossKind] = typer.Option(None, "--loss"),
    head: Optional[Head] = typer.Option(None, "--head"),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    learning_rate: Optional[float] = typer.Option(None, "--lr"),
    optimizer: Optional[Optimizer] = typer.Option(None, "--optimizer"),
    batch_size: Optional[int] = typer.Option(None, "--batch-size"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    mwer_beam: Optional[int] = typer.Option(None, "--mwer-beam"),
    temperature: Optional[float] = typer.Option(None, "--temperature"),
    include_reference: Optional[bool] = typer.Option(
        None, "--include-reference/--no-include-reference", "--include-ref/--no-include-ref"
    ),
    nll_weight: Optional[float] = typer.Option(None, "--nll-weight"),
    word_boundary: Optional[int] = typer.Option(None, "--word-boundary",
                                                help="Token id that separates words in the MWER risk"),
    seed_checkpoint: Optional[Path] = typer.Option(None, "--seed-checkpoint",
                                                   help="Checkpoint to start from (required for MWER)"),
    resume: Optional[Path] = typer.Option(None, "--resume", help="Run directory to continue"),
    jobs: Optional[int] = typer.Option(None, "--jobs"),
):
    """Train the toy transducer with NLL or fine-tune it with MWER."""
    overrides = {
        "train": {
            "loss": loss,
            "head": head,
            "epochs": epochs,
            "learning_rate": learning_rate,
            "optimizer": optimizer,
            "batch_size": batch_size,
            "seed": seed,
            "mwer_beam": mwer_beam,
            "temperature": temperature,
            "include_reference": include_reference,
            "nll_weight": nll_weight,
            "word_boundary": word_boundary,
        }
    }
    run_config = start_run(out_dir, config, overrides)
    train_config = run_config.train
    if train_config.loss == LossKind.MWER and seed_checkpoint is None and resume is None:
        raise UsageError("MWER requires a seed model (--seed-checkpoint)")

    train_dir = split_dir(data, "train")
    dataset = read_dataset(train_dir)
    dev = read_dataset(data / "dev") if (data / "dev" / MANIFEST_FILE).exists() and train_dir != data else None
    feature_dim = read_manifest(train_dir).feature_dim

    previous_metrics = None
    start_epoch = 0
    optimizer_state = None
    if resume is not None:
        checkpoint = load_checkpoint(resume / CHECKPOINT_DIR)
        params = checkpoint.params
        start_epoch = checkpoint.epoch
        optimizer_state = checkpoint.restore_optimizer(train_config)
        if head is None:
            train_config = train_config.model_copy(update={"head": checkpoint.head})
        if (resume / METRICS_FILE).exists():
            previous = read_csv(resume / METRICS_FILE)
            previous_metrics = previous[previous["epoch"] <= start_epoch]
        logger.info(f"Resuming from {resume} after epoch {start_epoch}")
    elif seed_checkpoint is not None:
        checkpoint = load_checkpoint(seed_checkpoint if (seed_checkpoint / MANIFEST_FILE).exists()
                                     else seed_checkpoint / CHECKPOINT_DIR)
        params = checkpoint.params
        if head is None:
            train_config = train_config.model_copy(update={"head": checkpoint.head})
        logger.info(f"Starting from seed model {seed_checkpoint} (epoch {checkpoint.epoch})")
    else:
        dims = run_config.model.model_copy(update={"vocab_size": dataset.vocab_size, "d_in": feature_dim})
        params = init_params(dims, train_config.seed)

    if params.vocab_size != dataset.vocab_size:
        raise UsageError(f"model vocabulary {params.vocab_size} does not match dataset vocabulary {dataset.vocab_size}")
    if train_config.word_boundary is not None and train_config.word_boundary > dataset.vocab_size:
        raise UsageError(f"word boundary {train_config.word_boundary} is outside vocabulary 1..{dataset.vocab_size}")

    result = run_training(
        params,
        dataset,
        train_config,
        dev=dev,
        optimizer=optimizer_state,
        start_epoch=start_epoch,
        jobs=get_jobs(jobs if jobs is not None else train_config.jobs),
    )

    table = metrics_table(result.metrics)
    if previous_metrics is not None and not previous_metrics.empty:
        table = pd.concat([previous_metrics[METRICS_COLUMNS], table], ignore_index=True)
    write_csv(table, out_dir / METRICS_FILE)
    save_checkpoint(out_dir / CHECKPOINT_DIR, result.params, train_config.head, train_config.seed,
                    max(result.last_epoch, start_epoch), result.optimizer)

    print_table(
        f"Training ({train_config.loss.value}, head {train_config.head.value})",
        METRICS_COLUMNS,
        [[f"{v:.6g}" if isinstance(v, float) else v for v in row] for row in table.itertuples(index=False)],
    )
