"""n-gram LM listings.

The first line is a JSON header ``{"order", "alpha", "vocab_size"}``. Every other line is
``context<TAB>token<TAB>log10 prob``: context tokens are space separated (empty for the
unigram table), ``<s>`` is the sentence start and ``</s>`` the end-of-sentence event.
"""

import math
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np
import orjson
from pydantic import ValidationError

from hatkit.core.errors import StorageError
from hatkit.schemas.records import LmHeader
from hatkit.services.lm import SENTENCE_END, SENTENCE_START, NgramLm

BOS = "<s>"
EOS = "</s>"
LN10 = math.log(10.0)


def _context_text(context: Tuple[int, ...]) -> str:
    return " ".join(BOS if k == SENTENCE_START else str(k) for k in context)


def _parse_context(text: str) -> Tuple[int, ...]:
    return tuple(SENTENCE_START if tok == BOS else int(tok) for tok in text.split())


def write_lm(path: Union[str, Path], lm: NgramLm) -> None:
    header = LmHeader(order=lm.order, alpha=lm.alpha, vocab_size=lm.vocab_size)
    lines = [orjson.dumps(header.model_dump(mode="json"), option=orjson.OPT_SORT_KEYS).decode()]
    for context in sorted(lm.tables, key=lambda c: (len(c), c)):
        row = lm.tables[context]
        for outcome, log_prob in enumerate(row):
            token = EOS if outcome == SENTENCE_END else str(outcome)
            lines.append(f"{_context_text(context)}\t{token}\t{float(log_prob) / LN10!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_lm(path: Union[str, Path]) -> NgramLm:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise StorageError(f"{path}: empty LM file")
    try:
        header = LmHeader.model_validate(orjson.loads(lines[0]))
    except (orjson.JSONDecodeError, ValidationError) as e:
        raise StorageError(f"{path}: bad LM header ({e})")

    tables: Dict[Tuple[int, ...], np.ndarray] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise StorageError(f"{path}:{line_no}: expected 3 tab-separated fields")
        context_text, token_text, value_text = parts
        try:
            context = _parse_context(context_text)
            outcome = SENTENCE_END if token_text == EOS else int(token_text)
            log_prob = float(value_text) * LN10
        except ValueError as e:
            raise StorageError(f"{path}:{line_no}: {e}")
        if not 0 <= outcome <= header.vocab_size:
            raise StorageError(f"{path}:{line_no}: token {token_text} outside the vocabulary")
        row = tables.setdefault(context, np.full(header.vocab_size + 1, np.nan))
        row[outcome] = log_prob

    for context, row in tables.items():
        if np.any(np.isnan(row)):
            raise StorageError(f"{path}: context '{_context_text(context)}' is missing outcomes")
    return NgramLm(order=header.order, vocab_size=header.vocab_size, alpha=header.alpha, tables=tables)
