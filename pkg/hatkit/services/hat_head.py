"""HAT output head: Bernoulli blank plus a label softmax over V, and internal-LM scoring.

The blank logit is the blank slot of the shared joint logit vector, so the RNN-T and HAT
heads read the same JointLattice and differ only in how a cell becomes a distribution.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from hatkit.core.errors import LabelError, LatticeError
from hatkit.core.numerics import log_sigmoid, log_softmax, sigmoid
from hatkit.schemas.vocab import BLANK_ID, LabelSequence, Vocab


@dataclass(frozen=True)
class HatStepDistribution:
    log_blank: float
    log_labels: np.ndarray  # over V, index k-1 holds label k
    log_not_blank: float  # ln(1 − b)

    @property
    def blank_prob(self) -> float:
        return float(np.exp(self.log_blank))

    @property
    def log_probs(self) -> np.ndarray:
        """Combined distribution over V̄: P(∅) = b, P(k) = (1 − b)·P̃(k)."""
        return np.concatenate(([self.log_blank], self.log_not_blank + self.log_labels))


@dataclass(frozen=True)
class InternalLmScore:
    per_token: List[float] = field(default_factory=list)

    @property
    def log_prob(self) -> float:
        return float(sum(self.per_token))


def _blank_argument(z_blank, temperature: float, blank_temperature: bool):
    return z_blank / temperature if blank_temperature else z_blank


def hat_step_distribution(
    cell_logits: Sequence[float],
    temperature: float = 1.0,
    vocab: Optional[Vocab] = None,
    blank_temperature: bool = True,
) -> HatStepDistribution:
    """b = sigmoid(z_∅ / Z); P̃ = softmax(z_V / Z)."""
    z = np.asarray(cell_logits, dtype=np.float64)
    if vocab is not None and z.shape != (vocab.extended_size,):
        raise LatticeError("vocab mismatch")
    if z.ndim != 1 or z.shape[0] < 2:
        raise LatticeError("vocab mismatch")
    log_labels = log_softmax(z[1:], temperature)
    a = _blank_argument(z[BLANK_ID], temperature, blank_temperature)
    return HatStepDistribution(
        log_blank=float(log_sigmoid(a)), log_labels=log_labels, log_not_blank=float(log_sigmoid(-a))
    )


def hat_log_probs(
    logits: np.ndarray, temperature: float = 1.0, blank_temperature: bool = True
) -> np.ndarray:
    """Vectorized HAT distribution over V̄ for every cell of a (..., |V̄|) logit array."""
    z = np.asarray(logits, dtype=np.float64)
    a = _blank_argument(z[..., BLANK_ID], temperature, blank_temperature)
    # ln(1 − sigmoid(a)) = ln sigmoid(−a)
    log_blank = log_sigmoid(a)
    log_not_blank = log_sigmoid(-a)
    out = np.empty_like(z)
    out[..., BLANK_ID] = log_blank
    out[..., 1:] = log_softmax(z[..., 1:], temperature, axis=-1) + np.expand_dims(log_not_blank, -1)
    return out


def hat_logit_grad(
    logits: np.ndarray,
    grad_log_probs: np.ndarray,
    temperature: float = 1.0,
    blank_temperature: bool = True,
) -> np.ndarray:
    """Chain ∂·/∂log P(k) through the HAT head to ∂·/∂z.

    blank slot: ((1 − b)·G∅ − b·Σ_k G_k) / Z_blank
    label k:    (G_k − P̃(k)·Σ_j G_j) / Z
    """
    z = np.asarray(logits, dtype=np.float64)
    g = np.asarray(grad_log_probs, dtype=np.float64)
    b = sigmoid(_blank_argument(z[..., BLANK_ID], temperature, blank_temperature))
    g_blank = g[..., BLANK_ID]
    g_labels = g[..., 1:]
    g_label_sum = g_labels.sum(axis=-1)
    label_probs = np.exp(log_softmax(z[..., 1:], temperature, axis=-1))

    blank_scale = 1.0 / temperature if blank_temperature else 1.0
    out = np.empty_like(z)
    out[..., BLANK_ID] = ((1.0 - b) * g_blank - b * g_label_sum) * blank_scale
    out[..., 1:] = (g_labels - label_probs * np.expand_dims(g_label_sum, -1)) / temperature
    return out


def internal_lm_score(
    predictor_logits: np.ndarray,
    labels: LabelSequence,
    temperature: float = 1.0,
) -> InternalLmScore:
    """Score ``labels`` under the internal LM.

    Row u of ``predictor_logits`` is J(g_u) over V̄ computed with the acoustic input
    omitted (f = 0), i.e. the joiner fed the prediction-network state after y_1..y_u.
    The blank slot is ignored; the label slots are renormalized over V.
    """
    z = np.asarray(predictor_logits, dtype=np.float64)
    if len(labels) == 0:
        return InternalLmScore(per_token=[])
    if z.ndim != 2 or z.shape[0] < len(labels):
        raise LatticeError("vocab mismatch")
    vocab_size = z.shape[1] - 1
    per_token = []
    for u, k in enumerate(labels):
        if not 1 <= k <= vocab_size:
            raise LabelError("invalid label")
        per_token.append(float(log_softmax(z[u, 1:], temperature)[k - 1]))
    return InternalLmScore(per_token=per_token)


def internal_lm_token_log_prob(ilm_logits: np.ndarray, token: int, temperature: float = 1.0) -> float:
    """One incremental internal-LM step, as used by the decoder."""
    z = np.asarray(ilm_logits, dtype=np.float64)
    if not 1 <= token <= z.shape[-1] - 1:
        raise LabelError("invalid label")
    return float(log_softmax(z[1:], temperature)[token - 1])
