"""Minimum word error rate training over an N-best list.

loss   R̄ = Σ_i P̂(y_i|x) · R(y_i, y_ref)
grad   ∂R̄/∂log P(y_i|x) = P̂(y_i|x) · (R(y_i, y_ref) − R̄)

and onward to the joint logits through each hypothesis's full forward-backward gradient.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import editdistance
import numpy as np

from hatkit.core.errors import MwerError
from hatkit.core.numerics import log_sum_exp
from hatkit.schemas.config import Head
from hatkit.schemas.vocab import LabelSequence
from hatkit.services.lattice import JointLattice, log_likelihood_grad

logger = logging.getLogger(__name__)

Word = Union[int, Tuple[int, ...]]
Segmenter = Callable[[Sequence[int]], List[Word]]


def identity_segmenter(tokens: Sequence[int]) -> List[Word]:
    """One token is one word."""
    return [int(k) for k in tokens]


def make_boundary_segmenter(boundary_id: int) -> Segmenter:
    """Split a token sequence into words at ``boundary_id``; empty words are dropped."""

    def segment(tokens: Sequence[int]) -> List[Word]:
        words: List[Word] = []
        current: List[int] = []
        for k in tokens:
            if int(k) == boundary_id:
                if current:
                    words.append(tuple(current))
                current = []
            else:
                current.append(int(k))
        if current:
            words.append(tuple(current))
        return words

    return segment


def word_edit_distance(hyp: Sequence[Word], ref: Sequence[Word]) -> int:
    """Levenshtein distance with unit costs over word sequences."""
    return int(editdistance.eval(list(hyp), list(ref)))


def nbest_posterior(log_probs: Sequence[float]) -> np.ndarray:
    """P̂_i = exp(log P_i − log Σ_j P_j)."""
    scores = np.asarray(log_probs, dtype=np.float64)
    if scores.size == 0:
        raise MwerError("empty N-best")
    if not np.all(np.isfinite(scores)):
        raise MwerError("N-best log-probabilities must be finite")
    return np.exp(scores - log_sum_exp(scores))


@dataclass(frozen=True)
class Hypothesis:
    tokens: LabelSequence
    log_prob: float
    word_count: int = 0


@dataclass
class NBestList:
    hypotheses: List[Hypothesis]
    reference: LabelSequence
    posteriors: np.ndarray
    risks: np.ndarray
    expected_risk: float
    # ∂(posterior score)/∂log P per hypothesis: 1, or 1/|y| with length normalization.
    score_scales: np.ndarray = field(default_factory=lambda: np.ones(0))

    def __len__(self) -> int:
        return len(self.hypotheses)

    @property
    def log_probs(self) -> np.ndarray:
        return np.array([h.log_prob for h in self.hypotheses], dtype=np.float64)


def _merge_duplicates(hypotheses: Iterable[Tuple[Sequence[int], float]]) -> List[Tuple[LabelSequence, float]]:
    merged = {}
    for tokens, log_prob in hypotheses:
        key = tuple(int(k) for k in tokens)
        merged.setdefault(key, []).append(float(log_prob))
    return [(tokens, log_sum_exp(scores)) for tokens, scores in merged.items()]


def build_nbest(
    hypotheses: Iterable[Union[Hypothesis, Tuple[Sequence[int], float]]],
    reference: Sequence[int],
    segmenter: Optional[Segmenter] = None,
    length_normalize: bool = False,
) -> NBestList:
    """Merge, rank and score an N-best list against ``reference``.

    Duplicate token sequences are merged by log-sum-exp. Hypotheses with log P = -inf are
    dropped. Order is descending log P, then shorter, then lexicographic.
    """
    segment = segmenter or identity_segmenter
    pairs = [(h.tokens, h.log_prob) if isinstance(h, Hypothesis) else (h[0], h[1]) for h in hypotheses]
    merged = _merge_duplicates(pairs)
    dropped = [tokens for tokens, log_prob in merged if not np.isfinite(log_prob)]
    if dropped:
        logger.debug(f"Dropping {len(dropped)} zero-probability hypotheses from N-best")
    merged = [(tokens, log_prob) for tokens, log_prob in merged if np.isfinite(log_prob)]
    if not merged:
        raise MwerError("empty N-best")
    merged.sort(key=lambda item: (-item[1], len(item[0]), item[0]))

    ref_words = segment(reference)
    entries = []
    risks = []
    for tokens, log_prob in merged:
        words = segment(tokens)
        entries.append(Hypothesis(tokens=tokens, log_prob=log_prob, word_count=len(words)))
        risks.append(word_edit_distance(words, ref_words))

    if length_normalize:
        scales = np.array([1.0 / max(len(h.tokens), 1) for h in entries])
    else:
        scales = np.ones(len(entries))
    posteriors = nbest_posterior(np.array([h.log_prob for h in entries]) * scales)
    risk_vec = np.asarray(risks, dtype=np.float64)
    return NBestList(
        hypotheses=entries,
        reference=tuple(int(k) for k in reference),
        posteriors=posteriors,
        risks=risk_vec,
        expected_risk=float(np.dot(posteriors, risk_vec)),
        score_scales=scales,
    )


def mwer_loss(nbest: NBestList) -> Tuple[float, np.ndarray]:
    """(R̄, ∂R̄/∂log P(y_i|x)) for every hypothesis."""
    if len(nbest) == 0:
        raise MwerError("empty N-best")
    expected = float(np.dot(nbest.posteriors, nbest.risks))
    scales = nbest.score_scales if nbest.score_scales.size == len(nbest) else np.ones(len(nbest))
    grad = nbest.posteriors * (nbest.risks - expected) * scales
    return expected, grad


def mwer_backprop_to_lattice(
    nbest: NBestList,
    lattices: Sequence[JointLattice],
    head: Head = Head.RNNT,
    temperature: float = 1.0,
    blank_temperature: bool = True,
) -> List[np.ndarray]:
    """Per-hypothesis ∂R̄/∂z: dloss_dlogp[i] times the full-marginal lattice gradient."""
    if len(lattices) != len(nbest):
        raise MwerError("mismatch")
    for hyp, lattice in zip(nbest.hypotheses, lattices):
        if lattice.labels != hyp.tokens:
            raise MwerError("mismatch")

    _, dloss_dlogp = mwer_loss(nbest)
    grads = []
    for weight, lattice in zip(dloss_dlogp, lattices):
        if weight == 0.0:
            grads.append(np.zeros_like(lattice.logits))
            continue
        _, grad, _ = log_likelihood_grad(lattice, head, temperature, blank_temperature)
        grads.append(weight * grad)
    return grads
