"""Corpus WER scoring, decoding-hyperparameter sweeps and fusion-weight selection."""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from hatkit.core.errors import EvalError, HatkitError
from hatkit.schemas.config import DecodeConfig, FusionWeights, SweepGrid
from hatkit.schemas.reports import WerReport
from hatkit.services.decoder import DecodeResult, TransducerScorer, decode_many
from hatkit.services.lm import ExternalLm
from hatkit.services.synth import Dataset

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = [
    "beam", "temperature", "length_norm", "lambda1", "lambda2", "S", "I", "D", "ref_words", "wer",
]


def align_counts(hyp: Sequence[Any], ref: Sequence[Any]) -> Tuple[int, int, int]:
    """(substitutions, insertions, deletions) of one minimum-cost alignment of hyp to ref."""
    n_hyp, n_ref = len(hyp), len(ref)
    trellis = np.zeros((n_hyp + 1, n_ref + 1), dtype=np.int64)
    trellis[:, 0] = np.arange(n_hyp + 1)
    trellis[0, :] = np.arange(n_ref + 1)
    for i in range(1, n_hyp + 1):
        for j in range(1, n_ref + 1):
            diagonal = trellis[i - 1, j - 1] + (0 if hyp[i - 1] == ref[j - 1] else 1)
            trellis[i, j] = min(diagonal, trellis[i - 1, j] + 1, trellis[i, j - 1] + 1)

    subs = ins = dels = 0
    i, j = n_hyp, n_ref
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            cost = 0 if hyp[i - 1] == ref[j - 1] else 1
            if trellis[i, j] == trellis[i - 1, j - 1] + cost:
                subs += cost
                i, j = i - 1, j - 1
                continue
        if i > 0 and trellis[i, j] == trellis[i - 1, j] + 1:
            ins += 1
            i -= 1
        else:
            dels += 1
            j -= 1
    return subs, ins, dels


def score_wer(hyps: Sequence[Sequence[Any]], refs: Sequence[Sequence[Any]]) -> WerReport:
    """Pooled corpus WER: total edits over total reference words."""
    if len(hyps) != len(refs):
        raise EvalError("paired list mismatch")
    report = WerReport()
    for hyp, ref in zip(hyps, refs):
        subs, ins, dels = align_counts(list(hyp), list(ref))
        report = report + WerReport(substitutions=subs, insertions=ins, deletions=dels, reference_words=len(ref))
    return report


def decode_and_score(
    scorer: TransducerScorer,
    dataset: Dataset,
    config: DecodeConfig,
    external_lm: Optional[ExternalLm] = None,
    jobs: int = 1,
) -> Tuple[WerReport, List[DecodeResult]]:
    results = decode_many(scorer, [u.features for u in dataset], config, external_lm, jobs)
    report = score_wer([r.top.tokens for r in results], [u.labels for u in dataset])
    return report, results


def grid_points(grid: SweepGrid) -> List[Dict[str, Any]]:
    """Cartesian product of the grid axes in a fixed order (beam varies slowest)."""
    return [
        {"beam": beam, "temperature": z, "length_norm": norm, "lambda1": l1, "lambda2": l2}
        for beam, z, norm, l1, l2 in itertools.product(
            grid.beams, grid.temperatures, grid.length_norm, grid.lambda1s, grid.lambda2s
        )
    ]


def run_sweep(
    scorer: TransducerScorer,
    dataset: Dataset,
    grid: SweepGrid,
    base_config: Optional[DecodeConfig] = None,
    external_lm: Optional[ExternalLm] = None,
    jobs: int = 1,
) -> pd.DataFrame:
    """Decode ``dataset`` at every grid point.

    A failing point is logged and kept as a row with empty counts; the sweep goes on.
    """
    base_config = base_config or DecodeConfig()
    points = grid_points(grid)
    logger.info(f"Running sweep over {len(points)} grid points on '{dataset.name}' ({len(dataset)} utterances)")

    def run_point(point: Dict[str, Any]) -> Dict[str, Any]:
        config = base_config.model_copy(
            update={
                "beam_size": point["beam"],
                "temperature": point["temperature"],
                "length_norm": point["length_norm"],
                "fusion": FusionWeights(lambda1=point["lambda1"], lambda2=point["lambda2"]),
            }
        )
        try:
            report, _ = decode_and_score(scorer, dataset, config, external_lm)
        except HatkitError as e:
            logger.error(f"Sweep point {point} failed: {e}")
            return {**point, "S": pd.NA, "I": pd.NA, "D": pd.NA, "ref_words": pd.NA, "wer": np.nan}
        logger.debug(f"Sweep point {point}: WER {report.wer:.4f}")
        return {
            **point,
            "S": report.substitutions,
            "I": report.insertions,
            "D": report.deletions,
            "ref_words": report.reference_words,
            "wer": report.wer,
        }

    if jobs > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_point, points))
    else:
        rows = [run_point(point) for point in points]

    table = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    for column in ("S", "I", "D", "ref_words"):
        table[column] = table[column].astype("Int64")
    return table


def pick_lambda(dev_table: pd.DataFrame, reference_beam: Optional[int] = None) -> FusionWeights:
    """argmin-WER (λ₁, λ₂) at the reference beam; ties go to smaller λ₁, then smaller λ₂.

    When ``reference_beam`` is absent from the table the largest beam in it is used.
    """
    if dev_table.empty:
        raise EvalError("empty sweep table")
    table = dev_table.dropna(subset=["wer"])
    if table.empty:
        raise EvalError("no successful sweep rows")
    beams = set(table["beam"])
    beam = reference_beam if reference_beam in beams else max(beams)
    candidates = table[table["beam"] == beam].sort_values(
        ["wer", "lambda1", "lambda2"], kind="mergesort"
    )
    best = candidates.iloc[0]
    weights = FusionWeights(lambda1=float(best["lambda1"]), lambda2=float(best["lambda2"]))
    logger.info(f"Picked lambda1={weights.lambda1}, lambda2={weights.lambda2} at beam {beam} (WER {best['wer']:.4f})")
    return weights
