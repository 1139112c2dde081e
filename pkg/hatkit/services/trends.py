"""Directional trend checks on synthetic data.

For every seed: generate a corpus whose references follow a domain LM, train an NLL
seed model, fine-tune it with MWER, then compare the two models on

* ``mwer_reduces_wer_norm_on`` / ``mwer_reduces_wer_norm_off``: held-out WER drops;
* ``mwer_narrows_norm_gap``: the relative WER gap between length norm off and on shrinks;
* ``beam_robustness``: the WER increase from the largest beam to beam 1 is smaller for MWER;
* ``fusion_ordering_nll`` / ``fusion_ordering_mwer``: tuned HAT fusion ≤ shallow fusion ≤ no LM.

A check holds overall when a majority of seeds pass it.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import pandas as pd

from hatkit.schemas.config import DecodeConfig, FusionWeights, LossKind, RunConfig, SweepGrid
from hatkit.services.evalkit import decode_and_score, pick_lambda, run_sweep
from hatkit.services.lm import ExternalLm
from hatkit.services.synth import SyntheticCorpus, generate_corpus
from hatkit.services.toy_model import ToyModelParams, ToyScorer, init_params
from hatkit.services.training import train

logger = logging.getLogger(__name__)

TREND_COLUMNS = ["seed", "check", "detail", "passed", "strict"]


@dataclass
class TrendModels:
    corpus: SyntheticCorpus
    nll: ToyModelParams
    mwer: ToyModelParams


def _relative_gap(wer_on: float, wer_off: float) -> float:
    return abs(wer_off - wer_on) / max(wer_on, 1e-12)


def train_trend_models(config: RunConfig, seed: int, jobs: int = 1) -> TrendModels:
    data = config.data.model_copy(update={"seed": seed, "domain_lm": True})
    corpus = generate_corpus(data)
    dims = config.model.model_copy(update={"vocab_size": data.vocab_size})
    nll_config = config.train.model_copy(
        update={"seed": seed, "loss": LossKind.NLL, "epochs": config.trends.nll_epochs}
    )
    nll = train(init_params(dims, seed), corpus.splits["train"], nll_config, dev=corpus.splits["dev"], jobs=jobs)
    mwer_config = config.train.model_copy(
        update={
            "seed": seed,
            "loss": LossKind.MWER,
            "epochs": config.trends.mwer_epochs,
            "learning_rate": config.trends.mwer_learning_rate,
        }
    )
    mwer = train(nll.params, corpus.splits["train"], mwer_config, dev=corpus.splits["dev"], jobs=jobs)
    return TrendModels(corpus=corpus, nll=nll.params, mwer=mwer.params)


def _wer(params: ToyModelParams, corpus: SyntheticCorpus, config: DecodeConfig,
         lm: Optional[ExternalLm] = None, jobs: int = 1) -> float:
    report, _ = decode_and_score(ToyScorer(params), corpus.splits["eval"], config, lm, jobs)
    return report.wer


def _fusion_wers(params: ToyModelParams, corpus: SyntheticCorpus, config: RunConfig,
                 base: DecodeConfig, jobs: int) -> Dict[str, float]:
    """Eval WER with no LM, tuned shallow fusion (λ₁ = 0) and tuned HAT fusion."""
    scorer = ToyScorer(params)
    beam = config.sweep.reference_beam
    lm = corpus.external_lm
    common = {"beams": [beam], "temperatures": [base.temperature], "length_norm": [base.length_norm]}
    hat_grid = SweepGrid(lambda1s=config.trends.lambda1s, lambda2s=config.trends.lambda2s, **common)
    shallow_grid = SweepGrid(lambda1s=[0.0], lambda2s=config.trends.lambda2s, **common)
    dev = corpus.splits["dev"]
    hat_weights = pick_lambda(run_sweep(scorer, dev, hat_grid, base, lm, jobs), beam)
    shallow_weights = pick_lambda(run_sweep(scorer, dev, shallow_grid, base, lm, jobs), beam)

    at_beam = base.model_copy(update={"beam_size": beam})
    return {
        "none": _wer(params, corpus, at_beam, None, jobs),
        "shallow": _wer(params, corpus, at_beam.model_copy(update={"fusion": shallow_weights}), lm, jobs),
        "hat": _wer(params, corpus, at_beam.model_copy(update={"fusion": hat_weights}), lm, jobs),
    }


def seed_checks(config: RunConfig, seed: int, jobs: int = 1) -> List[dict]:
    models = train_trend_models(config, seed, jobs)
    corpus = models.corpus
    base = config.decode.model_copy(update={"head": config.train.head, "fusion": FusionWeights()})
    rows = []

    wers = {}
    for name, params in (("nll", models.nll), ("mwer", models.mwer)):
        for norm in (True, False):
            wers[name, norm] = _wer(params, corpus, base.model_copy(update={"length_norm": norm}), None, jobs)
    for norm, tag in ((True, "on"), (False, "off")):
        rows.append({
            "check": f"mwer_reduces_wer_norm_{tag}",
            "detail": f"nll={wers['nll', norm]:.4f} mwer={wers['mwer', norm]:.4f}",
            "passed": wers["mwer", norm] < wers["nll", norm],
            "strict": wers["mwer", norm] < wers["nll", norm],
        })
    gap_nll = _relative_gap(wers["nll", True], wers["nll", False])
    gap_mwer = _relative_gap(wers["mwer", True], wers["mwer", False])
    rows.append({
        "check": "mwer_narrows_norm_gap",
        "detail": f"nll_gap={gap_nll:.4f} mwer_gap={gap_mwer:.4f}",
        "passed": gap_mwer < gap_nll,
        "strict": gap_mwer < gap_nll,
    })

    small, large = min(config.trends.beams), max(config.trends.beams)
    increase = {}
    for name, params in (("nll", models.nll), ("mwer", models.mwer)):
        wer_small = _wer(params, corpus, base.model_copy(update={"beam_size": small}), None, jobs)
        wer_large = _wer(params, corpus, base.model_copy(update={"beam_size": large}), None, jobs)
        increase[name] = wer_small - wer_large
    rows.append({
        "check": "beam_robustness",
        "detail": f"nll_increase={increase['nll']:.4f} mwer_increase={increase['mwer']:.4f}",
        "passed": increase["mwer"] < increase["nll"],
        "strict": increase["mwer"] < increase["nll"],
    })

    for name, params in (("nll", models.nll), ("mwer", models.mwer)):
        fusion = _fusion_wers(params, corpus, config, base, jobs)
        rows.append({
            "check": f"fusion_ordering_{name}",
            "detail": f"hat={fusion['hat']:.4f} shallow={fusion['shallow']:.4f} none={fusion['none']:.4f}",
            "passed": fusion["hat"] <= fusion["shallow"] <= fusion["none"],
            "strict": fusion["hat"] < fusion["shallow"] < fusion["none"],
        })

    for row in rows:
        row["seed"] = seed
        logger.info(f"seed {seed} {row['check']}: {'PASS' if row['passed'] else 'FAIL'} ({row['detail']})")
    return rows


def run_trends(config: RunConfig, jobs: int = 1) -> pd.DataFrame:
    rows = []
    for seed in config.trends.seeds:
        rows.extend(seed_checks(config, seed, jobs))
    return pd.DataFrame(rows, columns=TREND_COLUMNS)


def summarize_trends(table: pd.DataFrame) -> pd.DataFrame:
    """Per check: seeds passed, seeds strict, and whether a majority of seeds passed.

    Fusion orderings additionally need a strict ordering in a majority of seeds.
    """
    summary = []
    for check, group in table.groupby("check", sort=False):
        n = len(group)
        passed = int(group["passed"].sum())
        strict = int(group["strict"].sum())
        holds = passed * 2 > n
        if check.startswith("fusion_ordering"):
            holds = passed == n and strict * 2 > n
        summary.append({"check": check, "seeds": n, "passed": passed, "strict": strict, "holds": holds})
    return pd.DataFrame(summary, columns=["check", "seeds", "passed", "strict", "holds"])
