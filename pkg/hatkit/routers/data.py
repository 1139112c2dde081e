import logging
from pathlib import Path
from typing import Optional

import typer

from hatkit.dependencies import print_table, start_run
from hatkit.schemas.records import DatasetManifest
from hatkit.services.synth import generate_corpus
from hatkit.storage.config_file import write_resolved_config
from hatkit.storage.dataset import write_dataset
from hatkit.storage.lm_file import write_lm

logger = logging.getLogger(__name__)

router = typer.Typer()

LM_FILE = "lm.txt"


@router.command("gen-data")
def gen_data(
    out_dir: Path = typer.Option(..., "--out-dir", help="Directory receiving train/, dev/ and eval/"),
    config: Optional[Path] = typer.Option(None, "--config", help="YAML run config"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    vocab_size: Optional[int] = typer.Option(None, "--vocab-size"),
    num_train: Optional[int] = typer.Option(None, "--num-train"),
    num_dev: Optional[int] = typer.Option(None, "--num-dev"),
    num_eval: Optional[int] = typer.Option(None, "--num-eval"),
    t_min: Optional[int] = typer.Option(None, "--t-min"),
    t_max: Optional[int] = typer.Option(None, "--t-max"),
    u_min: Optional[int] = typer.Option(None, "--u-min"),
    u_max: Optional[int] = typer.Option(None, "--u-max"),
    noise_level: Optional[float] = typer.Option(None, "--noise"),
    domain_lm: Optional[bool] = typer.Option(None, "--domain-lm/--no-domain-lm",
                                             help="Draw references from a domain LM and write an n-gram LM listing"),
):
    """Generate a synthetic train/dev/eval corpus."""
    overrides = {
        "data": {
            "seed": seed,
            "vocab_size": vocab_size,
            "num_train": num_train,
            "num_dev": num_dev,
            "num_eval": num_eval,
            "noise_level": noise_level,
            "domain_lm": domain_lm,
        }
    }
    run_config = start_run(out_dir, config, overrides)
    data = run_config.data
    if any(v is not None for v in (t_min, t_max, u_min, u_max)):
        data = data.model_validate({
            **data.model_dump(),
            "T_range": (t_min if t_min is not None else data.T_range[0], t_max if t_max is not None else data.T_range[1]),
            "U_range": (u_min if u_min is not None else data.U_range[0], u_max if u_max is not None else data.U_range[1]),
        })
        run_config = run_config.model_copy(update={"data": data})
        write_resolved_config(out_dir, run_config)

    corpus = generate_corpus(data)
    rows = []
    for split, dataset in corpus.splits.items():
        manifest = DatasetManifest(
            name=dataset.name,
            split=split,
            seed=data.seed,
            num_utts=len(dataset),
            vocab_size=data.vocab_size,
            feature_dim=dataset.feature_dim,
            T_range=data.T_range,
            U_range=data.U_range,
            noise_level=data.noise_level,
            domain_lm=data.domain_lm,
        )
        write_dataset(out_dir / split, dataset, manifest)
        rows.append([split, len(dataset), sum(len(u.labels) for u in dataset)])
    if corpus.external_lm is not None:
        write_lm(out_dir / LM_FILE, corpus.external_lm)
        logger.info(f"Wrote external LM listing to {out_dir / LM_FILE}")

    print_table(f"Synthetic corpus (seed {data.seed})", ["split", "utterances", "labels"], rows)
