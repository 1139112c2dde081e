import logging
from pathlib import Path
from typing import Optional

import typer

from hatkit.dependencies import get_jobs, print_table, split_dir, start_run
from hatkit.schemas.config import Head
from hatkit.schemas.records import HypothesisRecord, NBestRecord
from hatkit.services.evalkit import decode_and_score
from hatkit.services.toy_model import ToyScorer
from hatkit.storage.checkpoint import load_checkpoint
from hatkit.storage.dataset import MANIFEST_FILE, read_dataset, write_json
from hatkit.storage.lm_file import read_lm
from hatkit.storage.nbest_file import write_nbest
from hatkit.storage.tables import decode_table, write_csv

logger = logging.getLogger(__name__)

router = typer.Typer()

DECODE_FILE = "decode.csv"
NBEST_FILE = "nbest.jsonl"
WER_FILE = "wer.json"


def checkpoint_dir(path: Path) -> Path:
    """Accept either a checkpoint directory or a training run directory."""
    return path if (path / MANIFEST_FILE).exists() else path / "checkpoint"


@router.command("decode")
def decode(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Checkpoint or training run directory"),
    data: Path = typer.Option(..., "--data", help="Corpus or dataset directory"),
    out_dir: Path = typer.Option(..., "--out-dir"),
    split: str = typer.Option("eval", "--split"),
    config: Optional[Path] = typer.Option(None, "--config", help="YAML run config"),
    beam: Optional[int] = typer.Option(None, "--beam"),
    temperature: Optional[float] = typer.Option(None, "--temperature"),
    length_norm: Optional[bool] = typer.Option(None, "--length-norm/--no-length-norm"),
    lambda1: Optional[float] = typer.Option(None, "--lambda1", help="Internal-LM weight"),
    lambda2: Optional[float] = typer.Option(None, "--lambda2", help="External-LM weight"),
    max_symbols: Optional[int] = typer.Option(None, "--max-symbols-per-step"),
    head: Optional[Head] = typer.Option(None, "--head", help="Defaults to the checkpoint's head"),
    lm: Optional[Path] = typer.Option(None, "--lm", help="External n-gram LM listing"),
    jobs: Optional[int] = typer.Option(None, "--jobs"),
):
    """Beam-search decode a dataset, writing N-best lists, a per-utterance CSV and WER."""
    overrides = {
        "decode": {
            "beam_size": beam,
            "temperature": temperature,
            "length_norm": length_norm,
            "fusion": {"lambda1": lambda1, "lambda2": lambda2},
            "max_symbols_per_step": max_symbols,
            "head": head,
        }
    }
    run_config = start_run(out_dir, config, overrides)
    ckpt = load_checkpoint(checkpoint_dir(checkpoint))
    decode_config = run_config.decode
    if head is None:
        decode_config = decode_config.model_copy(update={"head": ckpt.head})
    external_lm = read_lm(lm) if lm is not None else None
    dataset = read_dataset(split_dir(data, split))

    logger.info(
        f"Decoding {len(dataset)} utterances: beam {decode_config.beam_size}, Z={decode_config.temperature}, "
        f"length_norm={decode_config.length_norm}, lambda1={decode_config.fusion.lambda1}, "
        f"lambda2={decode_config.fusion.lambda2}, head={decode_config.head.value}"
    )
    report, results = decode_and_score(ToyScorer(ckpt.params), dataset, decode_config, external_lm, get_jobs(jobs))

    write_nbest(out_dir / NBEST_FILE, [
        NBestRecord(
            utt_id=utt.utt_id,
            reference=list(utt.labels),
            hypotheses=[HypothesisRecord(tokens=list(h.tokens), log_prob=h.log_prob) for h in result.hypotheses],
        )
        for utt, result in zip(dataset, results)
    ])
    write_csv(decode_table(dataset, results, decode_config), out_dir / DECODE_FILE)
    write_json(out_dir / WER_FILE, {**report.model_dump(), "wer": report.wer})

    print_table(
        f"Decode {dataset.name}",
        ["utterances", "S", "I", "D", "ref words", "WER"],
        [[len(dataset), report.substitutions, report.insertions, report.deletions, report.reference_words,
          f"{report.wer:.4f}"]],
    )
