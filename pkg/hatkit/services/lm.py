"""External language models for fusion decoding.

Two concrete models share the ``ExternalLm`` interface:

* ``NgramLm`` - count-based n-gram with add-α smoothing, backing off to a lower order when
  a context was never seen. It models the end-of-sentence event.
* ``TableLm`` - a fixed bigram lookup table over V (no end event), used for deterministic
  tests and as the "domain" source of synthetic fusion data.

States are plain tuples/ints, so a model is immutable once built and can be shared by
concurrent decodes.
"""

import logging
from abc import ABC, abstractmethod
from collections import defaultdict
from typing import Dict, Hashable, Iterable, Optional, Sequence, Tuple

import numpy as np

from hatkit.core.errors import LabelError, LmError
from hatkit.core.numerics import LOG_ZERO, log_softmax
from hatkit.schemas.vocab import LabelSequence

logger = logging.getLogger(__name__)

LmState = Hashable

# Context slot 0 is <s>; outcome slot 0 is </s>.
SENTENCE_START = 0
SENTENCE_END = 0


class ExternalLm(ABC):
    """P_LM(k | context) over the label vocabulary 1..|V|."""

    vocab_size: int
    models_end: bool = False

    @abstractmethod
    def start_state(self) -> LmState:
        ...

    @abstractmethod
    def label_log_probs(self, state: LmState) -> np.ndarray:
        """log P(k | state) for k = 1..|V|, at index k - 1."""

    @abstractmethod
    def next_state(self, state: LmState, token: int) -> LmState:
        ...

    def end_log_prob(self, state: LmState) -> float:
        """log P(</s> | state); 0.0 for models without an end event."""
        return 0.0

    def _check_token(self, token: int) -> None:
        if not 1 <= token <= self.vocab_size:
            raise LabelError("invalid label")

    def score_token(self, state: LmState, token: int) -> Tuple[float, LmState]:
        self._check_token(token)
        return float(self.label_log_probs(state)[token - 1]), self.next_state(state, token)

    def score_sequence(self, tokens: Sequence[int], state: Optional[LmState] = None) -> float:
        """Sum of per-token scores, starting from ``state`` (default: the start state)."""
        state = self.start_state() if state is None else state
        total = 0.0
        for token in tokens:
            log_prob, state = self.score_token(state, int(token))
            total += log_prob
        return total

    def score_end(self, state: LmState) -> float:
        return self.end_log_prob(state)

    def state_after(self, tokens: Sequence[int]) -> LmState:
        state = self.start_state()
        for token in tokens:
            self._check_token(int(token))
            state = self.next_state(state, int(token))
        return state


class NgramLm(ExternalLm):
    """Backoff n-gram over V plus </s>.

    ``tables`` maps a context tuple (length 0..order-1, ``<s>`` encoded as 0) to a log-prob
    vector of length |V| + 1 whose slot 0 is </s>. Lookups use the longest stored suffix
    of the state.
    """

    models_end = True

    def __init__(self, order: int, vocab_size: int, alpha: float, tables: Dict[Tuple[int, ...], np.ndarray]):
        if order < 1:
            raise LmError(f"n-gram order must be >= 1, got {order}")
        if () not in tables:
            raise LmError("n-gram model has no unigram table")
        for context, row in tables.items():
            if len(context) >= order or np.shape(row) != (vocab_size + 1,):
                raise LmError(f"bad n-gram table for context {context}")
        self.order = order
        self.vocab_size = vocab_size
        self.alpha = alpha
        self.tables = {context: np.asarray(row, dtype=np.float64) for context, row in tables.items()}

    def start_state(self) -> Tuple[int, ...]:
        return (SENTENCE_START,) * (self.order - 1)

    def _distribution(self, state: Tuple[int, ...]) -> np.ndarray:
        context = tuple(state)
        while context not in self.tables:
            context = context[1:]
        return self.tables[context]

    def label_log_probs(self, state: Tuple[int, ...]) -> np.ndarray:
        return self._distribution(state)[1:]

    def end_log_prob(self, state: Tuple[int, ...]) -> float:
        return float(self._distribution(state)[SENTENCE_END])

    def next_state(self, state: Tuple[int, ...], token: int) -> Tuple[int, ...]:
        if self.order == 1:
            return ()
        return (tuple(state) + (token,))[-(self.order - 1):]


class TableLm(ExternalLm):
    """Bigram lookup table: row 0 is the start context, row k the context after label k."""

    def __init__(self, log_probs: np.ndarray):
        table = np.asarray(log_probs, dtype=np.float64)
        if table.ndim != 2 or table.shape[0] != table.shape[1] + 1:
            raise LmError(f"table LM needs shape (|V|+1, |V|), got {table.shape}")
        self.vocab_size = table.shape[1]
        self.table = table

    def start_state(self) -> int:
        return SENTENCE_START

    def label_log_probs(self, state: int) -> np.ndarray:
        return self.table[state]

    def next_state(self, state: int, token: int) -> int:
        return token


def uniform_lm(vocab_size: int) -> TableLm:
    return TableLm(np.full((vocab_size + 1, vocab_size), -np.log(vocab_size)))


def unigram_lm(probs: Sequence[float]) -> TableLm:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or np.any(p <= 0) or not np.isclose(p.sum(), 1.0):
        raise LmError("unigram probabilities must be positive and sum to 1")
    return TableLm(np.tile(np.log(p), (p.shape[0] + 1, 1)))


def random_table_lm(vocab_size: int, seed: int, sharpness: float = 3.0) -> TableLm:
    """A peaked bigram table; larger ``sharpness`` makes each row closer to one-hot."""
    rng = np.random.default_rng(seed)
    logits = sharpness * rng.standard_normal((vocab_size + 1, vocab_size))
    return TableLm(log_softmax(logits, axis=-1))


def train_ngram(
    corpus: Iterable[Sequence[int]], vocab_size: int, order: int = 2, alpha: float = 0.1
) -> NgramLm:
    """Count-and-normalize with add-α smoothing over |V| + 1 outcomes.

    Every context seen at least once in the corpus gets its own table; at scoring time an
    unseen context backs off to its longest seen suffix (the unigram table always exists).
    """
    if order < 1:
        raise LmError(f"n-gram order must be >= 1, got {order}")
    if alpha <= 0:
        raise LmError(f"smoothing alpha must be > 0, got {alpha}")

    counts: Dict[Tuple[int, ...], np.ndarray] = defaultdict(lambda: np.zeros(vocab_size + 1))
    counts[()] = np.zeros(vocab_size + 1)
    num_sentences = 0
    for sentence in corpus:
        num_sentences += 1
        tokens = [int(k) for k in sentence]
        for k in tokens:
            if not 1 <= k <= vocab_size:
                raise LabelError("invalid label")
        history = [SENTENCE_START] * (order - 1)
        for outcome in tokens + [SENTENCE_END]:
            for n in range(order):
                context = tuple(history[len(history) - n:]) if n else ()
                counts[context][outcome] += 1
            if order > 1:
                history = (history + [outcome])[-(order - 1):]

    outcomes = vocab_size + 1
    tables = {
        context: np.log((row + alpha) / (row.sum() + alpha * outcomes))
        for context, row in counts.items()
    }
    logger.info(
        f"Trained {order}-gram LM on {num_sentences} sentences "
        f"({len(tables)} contexts, |V|={vocab_size}, alpha={alpha})"
    )
    return NgramLm(order=order, vocab_size=vocab_size, alpha=alpha, tables=tables)


def sample_sequence(
    lm: ExternalLm,
    rng: np.random.Generator,
    max_len: int,
    length: Optional[int] = None,
) -> LabelSequence:
    """Draw a label sequence from ``lm``.

    With ``length`` the draw has exactly that many labels (the label distribution is
    renormalized without the end event). Otherwise sampling stops at </s> or ``max_len``,
    which requires an LM that models the end event.
    """
    if length is None and not lm.models_end:
        raise LmError("sampling without a fixed length needs an LM with an end event")
    state = lm.start_state()
    tokens = []
    target = max_len if length is None else length
    while len(tokens) < target:
        label_lp = lm.label_log_probs(state)
        if length is None:
            log_probs = np.concatenate(([lm.end_log_prob(state)], label_lp))
        else:
            log_probs = np.concatenate(([LOG_ZERO], label_lp))
        probs = np.exp(log_probs - np.max(log_probs))
        choice = int(rng.choice(len(probs), p=probs / probs.sum()))
        if choice == SENTENCE_END:
            break
        tokens.append(choice)
        state = lm.next_state(state, choice)
    return tuple(tokens)
