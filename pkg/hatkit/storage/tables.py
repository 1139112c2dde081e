"""CSV tables written with pandas (float format from settings)."""

from pathlib import Path
from typing import List, Sequence, Union

import pandas as pd

from hatkit.core.config import get_settings
from hatkit.schemas.config import DecodeConfig
from hatkit.schemas.reports import EpochMetrics
from hatkit.services.decoder import DecodeResult
from hatkit.services.evalkit import align_counts
from hatkit.services.synth import Dataset

METRICS_COLUMNS = ["epoch", "loss", "token_error", "expected_risk", "dev_nll"]
DECODE_COLUMNS = [
    "utt_id", "beam", "temperature", "length_norm", "lambda1", "lambda2",
    "wer_numerator", "wer_denominator", "top1_tokens",
]


def write_csv(table: pd.DataFrame, path: Union[str, Path]) -> None:
    table.to_csv(path, index=False, float_format=get_settings().FLOAT_FORMAT, lineterminator="\n")


def read_csv(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path)


def metrics_table(metrics: Sequence[EpochMetrics]) -> pd.DataFrame:
    return pd.DataFrame([m.model_dump() for m in metrics], columns=METRICS_COLUMNS)


def decode_table(dataset: Dataset, results: List[DecodeResult], config: DecodeConfig) -> pd.DataFrame:
    rows = []
    for utt, result in zip(dataset, results):
        subs, ins, dels = align_counts(list(result.top.tokens), list(utt.labels))
        rows.append({
            "utt_id": utt.utt_id,
            "beam": config.beam_size,
            "temperature": config.temperature,
            "length_norm": config.length_norm,
            "lambda1": config.fusion.lambda1,
            "lambda2": config.fusion.lambda2,
            "wer_numerator": subs + ins + dels,
            "wer_denominator": len(utt.labels),
            "top1_tokens": " ".join(str(k) for k in result.top.tokens),
        })
    return pd.DataFrame(rows, columns=DECODE_COLUMNS)

