"""Time-synchronous prefix beam search for RNN-T and HAT heads with LM fusion.

Within frame t every kept prefix may emit up to ``max_symbols_per_step`` labels before
the blank that moves it to frame t+1. Prefixes reached by different alignments are merged
by log-sum-exp, so with a beam large enough to never prune, the kept log P(y|x) is the
exact marginal over every alignment that respects the per-frame cap.

Pruning ranks prefixes by the unnormalized fused score

    log P(y|x) − λ₁·log P_ILM(y) + λ₂·log P_LM(y)

and length normalization is applied once, to the finished hypotheses.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from hatkit.core.errors import DecodeError
from hatkit.core.numerics import log_add, log_softmax
from hatkit.schemas.config import DecodeConfig, FusionWeights, Head
from hatkit.schemas.vocab import BLANK_ID, LabelSequence
from hatkit.services.hat_head import hat_log_probs, internal_lm_token_log_prob
from hatkit.services.lattice import JointLattice, forward, step_log_probs
from hatkit.services.lm import ExternalLm
from hatkit.services.mwer import Hypothesis, NBestList, Segmenter, build_nbest

logger = logging.getLogger(__name__)


class TransducerScorer(Protocol):
    extended_size: int

    def encode(self, features: Any) -> Sequence[Any]:
        ...

    def initial_state(self) -> Any:
        ...

    def advance(self, state: Any, token: int) -> Any:
        ...

    def joint_logits(self, enc_t: Any, state: Any) -> np.ndarray:
        ...

    def ilm_logits(self, state: Any) -> np.ndarray:
        ...

    def lattice(self, features: Any, labels: LabelSequence) -> JointLattice:
        ...


class LatticeScorer:
    """Scorer over a fixed logit tensor indexed by (t, number of emitted labels).

    Label counts beyond the last row reuse the last row, so any prefix length is scorable.
    """

    def __init__(self, logits: np.ndarray, ilm_logits: Optional[np.ndarray] = None):
        self.logits = np.asarray(logits, dtype=np.float64)
        if self.logits.ndim != 3:
            raise DecodeError(f"lattice scorer needs (T, U+1, K) logits, got {self.logits.shape}")
        self.extended_size = self.logits.shape[2]
        if ilm_logits is None:
            ilm_logits = np.zeros(self.logits.shape[1:])
        self.ilm = np.asarray(ilm_logits, dtype=np.float64)

    def _row(self, u: int) -> int:
        return min(u, self.logits.shape[1] - 1)

    def encode(self, features: Any = None) -> Sequence[int]:
        return range(self.logits.shape[0])

    def initial_state(self) -> int:
        return 0

    def advance(self, state: int, token: int) -> int:
        return state + 1

    def joint_logits(self, enc_t: int, state: int) -> np.ndarray:
        return self.logits[enc_t, self._row(state)]

    def ilm_logits(self, state: int) -> np.ndarray:
        return self.ilm[min(state, self.ilm.shape[0] - 1)]

    def lattice(self, features: Any, labels: LabelSequence) -> JointLattice:
        rows = [self._row(u) for u in range(len(labels) + 1)]
        return JointLattice(logits=self.logits[:, rows, :], labels=tuple(labels))


@dataclass
class BeamEntry:
    tokens: LabelSequence
    log_prob: float
    state: Any
    ilm_log_prob: float = 0.0
    lm_log_prob: float = 0.0
    lm_state: Any = None
    fused: float = 0.0


@dataclass(frozen=True)
class ScoredHypothesis:
    tokens: LabelSequence
    log_prob: float
    ilm_log_prob: float = 0.0
    lm_log_prob: float = 0.0
    # Unnormalized fused total, and the value actually used for ranking.
    total: float = 0.0
    score: float = 0.0


@dataclass
class DecodeResult:
    hypotheses: List[ScoredHypothesis] = field(default_factory=list)

    @property
    def top(self) -> ScoredHypothesis:
        return self.hypotheses[0]

    def to_nbest(
        self,
        reference: Sequence[int],
        segmenter: Optional[Segmenter] = None,
        length_normalize: bool = False,
    ) -> NBestList:
        """N-best for MWER, carrying the unnormalized log P(y|x) of every hypothesis."""
        return build_nbest(
            [Hypothesis(tokens=h.tokens, log_prob=h.log_prob) for h in self.hypotheses],
            reference,
            segmenter=segmenter,
            length_normalize=length_normalize,
        )


def fusion_score(
    log_p: float,
    ilm: float,
    lm: float,
    y_len: int,
    weights: FusionWeights,
    length_norm: bool,
) -> float:
    """(log P − λ₁·ILM + λ₂·LM), divided by ``y_len`` when length-normalizing."""
    if weights.is_zero:
        total = log_p
    else:
        total = log_p - weights.lambda1 * ilm + weights.lambda2 * lm
    if length_norm:
        if y_len < 1:
            raise DecodeError(f"invalid hypothesis length {y_len} for length normalization")
        return total / y_len
    return total


def _rank_key(h: ScoredHypothesis) -> Tuple[float, int, LabelSequence]:
    return (-h.score, len(h.tokens), h.tokens)


def length_norm_rerank(hyps: Sequence[ScoredHypothesis], enabled: bool) -> List[ScoredHypothesis]:
    """Re-rank by total/|y| (empty hypothesis: |y| = 1) or by the unnormalized total."""
    rescored = [
        replace(h, score=h.total / max(len(h.tokens), 1) if enabled else h.total) for h in hyps
    ]
    return sorted(rescored, key=_rank_key)


class BeamSearch:
    """Beam search over one scorer; safe to call from several threads at once."""

    def __init__(
        self,
        scorer: TransducerScorer,
        config: DecodeConfig,
        external_lm: Optional[ExternalLm] = None,
    ):
        self.scorer = scorer
        self.config = config
        self.external_lm = external_lm
        self.weights = config.fusion
        self.use_ilm = self.weights.lambda1 > 0.0
        self.use_lm = self.weights.lambda2 > 0.0 and external_lm is not None
        if self.weights.lambda2 > 0.0 and external_lm is None:
            logger.warning("lambda2 > 0 but no external LM was given; external-LM term is skipped")

    def _log_probs(self, logits: np.ndarray) -> np.ndarray:
        if Head(self.config.head) == Head.HAT:
            return hat_log_probs(logits, self.config.temperature, self.config.blank_temperature)
        return log_softmax(logits, self.config.temperature)

    def _fused(self, entry: BeamEntry) -> float:
        if not (self.use_ilm or self.use_lm):
            return entry.log_prob
        return entry.log_prob - self.weights.lambda1 * entry.ilm_log_prob + self.weights.lambda2 * entry.lm_log_prob

    def _extend(self, entry: BeamEntry, token: int, log_prob: float) -> BeamEntry:
        ilm = entry.ilm_log_prob
        if self.use_ilm:
            ilm += internal_lm_token_log_prob(
                self.scorer.ilm_logits(entry.state), token, self.config.temperature
            )
        lm, lm_state = entry.lm_log_prob, entry.lm_state
        if self.use_lm:
            token_lp, lm_state = self.external_lm.score_token(lm_state, token)
            lm += token_lp
        return BeamEntry(
            tokens=entry.tokens + (token,),
            log_prob=log_prob,
            state=self.scorer.advance(entry.state, token),
            ilm_log_prob=ilm,
            lm_log_prob=lm,
            lm_state=lm_state,
        )

    def _prune(self, entries: Dict[LabelSequence, BeamEntry]) -> Dict[LabelSequence, BeamEntry]:
        for entry in entries.values():
            entry.fused = self._fused(entry)
        ranked = sorted(entries.values(), key=lambda e: (-e.fused, len(e.tokens), e.tokens))
        return {e.tokens: e for e in ranked[: self.config.beam_size]}

    @staticmethod
    def _merge(pool: Dict[LabelSequence, BeamEntry], entry: BeamEntry, log_prob: float) -> None:
        existing = pool.get(entry.tokens)
        if existing is None:
            pool[entry.tokens] = replace(entry, log_prob=log_prob)
        else:
            existing.log_prob = log_add(existing.log_prob, log_prob)

    def _step_frame(self, enc_t: Any, beam: Dict[LabelSequence, BeamEntry]) -> Dict[LabelSequence, BeamEntry]:
        """Advance every prefix through one frame; returns prefixes after the frame's blank."""
        next_frame: Dict[LabelSequence, BeamEntry] = {}
        layer = beam
        for emitted in range(self.config.max_symbols_per_step + 1):
            expanded: Dict[LabelSequence, BeamEntry] = {}
            for entry in layer.values():
                log_probs = self._log_probs(self.scorer.joint_logits(enc_t, entry.state))
                self._merge(next_frame, entry, entry.log_prob + log_probs[BLANK_ID])
                if emitted == self.config.max_symbols_per_step:
                    continue
                for token in range(1, len(log_probs)):
                    score = entry.log_prob + log_probs[token]
                    key = entry.tokens + (token,)
                    if key in expanded:
                        expanded[key].log_prob = log_add(expanded[key].log_prob, score)
                    else:
                        expanded[key] = self._extend(entry, token, score)
            if not expanded:
                break
            layer = self._prune(expanded)
        return self._prune(next_frame)

    def _finish(self, entry: BeamEntry) -> ScoredHypothesis:
        lm = entry.lm_log_prob
        if self.use_lm:
            lm += self.external_lm.score_end(entry.lm_state)
        total = fusion_score(entry.log_prob, entry.ilm_log_prob, lm, max(len(entry.tokens), 1), self.weights, False)
        return ScoredHypothesis(
            tokens=entry.tokens,
            log_prob=entry.log_prob,
            ilm_log_prob=entry.ilm_log_prob,
            lm_log_prob=lm,
            total=total,
            score=total,
        )

    def __call__(self, features: Any) -> DecodeResult:
        if features is not None and len(features) == 0:
            raise DecodeError("empty input")
        encoded = self.scorer.encode(features)
        if len(encoded) == 0:
            raise DecodeError("empty input")

        start = BeamEntry(
            tokens=(),
            log_prob=0.0,
            state=self.scorer.initial_state(),
            lm_state=self.external_lm.start_state() if self.use_lm else None,
        )
        beam = {(): start}
        for enc_t in encoded:
            beam = self._step_frame(enc_t, beam)
            if not beam:
                raise DecodeError("search failure")

        finished = [self._finish(entry) for entry in beam.values()]
        ranked = length_norm_rerank(finished, self.config.length_norm)
        return DecodeResult(hypotheses=ranked[: self.config.beam_size])


def beam_search(
    scorer: TransducerScorer,
    features: Any,
    config: DecodeConfig,
    external_lm: Optional[ExternalLm] = None,
) -> DecodeResult:
    return BeamSearch(scorer, config, external_lm)(features)


def greedy_search(scorer: TransducerScorer, features: Any, config: Optional[DecodeConfig] = None) -> DecodeResult:
    config = config or DecodeConfig()
    return beam_search(scorer, features, config.model_copy(update={"beam_size": 1}))


def decode_many(
    scorer: TransducerScorer,
    features: Sequence[Any],
    config: DecodeConfig,
    external_lm: Optional[ExternalLm] = None,
    jobs: int = 1,
) -> List[DecodeResult]:
    """Decode several utterances; results come back in input order."""
    search = BeamSearch(scorer, config, external_lm)
    if jobs <= 1 or len(features) <= 1:
        return [search(x) for x in features]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(search, features))


def rescore_nbest(
    scorer: TransducerScorer,
    features: Any,
    hypotheses: Sequence[LabelSequence],
    head: Head = Head.HAT,
    temperature: float = 1.0,
    blank_temperature: bool = True,
) -> List[Hypothesis]:
    """Exact alignment-marginal log P(y|x) for every hypothesis."""
    rescored = []
    for tokens in hypotheses:
        lattice = scorer.lattice(features, tuple(tokens))
        log_probs = step_log_probs(lattice, head, temperature, blank_temperature)
        rescored.append(Hypothesis(tokens=tuple(tokens), log_prob=forward(log_probs, lattice.labels).log_likelihood))
    return rescored
