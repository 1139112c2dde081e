"""RNN-T joint lattice: per-cell distributions, forward-backward, NLL and its gradient.

Axis convention is [t][u][k]: t indexes encoder frames (0..T-1), u indexes prediction
network states y_[1:0]..y_[1:U] (0..U), k indexes V̄ with the blank at 0.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from hatkit.core.errors import LabelError, LatticeError, OracleLimitError
from hatkit.core.numerics import LOG_ZERO, log_add, log_softmax, log_sum_exp, log_sum_exp_axis
from hatkit.schemas.config import Head
from hatkit.schemas.vocab import BLANK_ID, LabelSequence, Vocab
from hatkit.services.hat_head import hat_log_probs, hat_logit_grad

logger = logging.getLogger(__name__)

ORACLE_MAX_T_PLUS_U = 20


@dataclass(frozen=True)
class JointLattice:
    """z_{t,u,k} = J(f_t + g_u)[k] for one utterance and one label sequence."""

    logits: np.ndarray
    labels: LabelSequence

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "labels", tuple(int(k) for k in self.labels))
        if logits.ndim != 3 or logits.shape[0] < 1 or logits.shape[1] != len(self.labels) + 1:
            raise LatticeError("lattice/label mismatch")

    @property
    def T(self) -> int:
        return self.logits.shape[0]

    @property
    def U(self) -> int:
        return len(self.labels)

    @property
    def K(self) -> int:
        return self.logits.shape[2]

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.logits)):
            raise LatticeError("invalid lattice")


@dataclass(frozen=True)
class StepDistribution:
    log_probs: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)


@dataclass
class AlphaBetaTableau:
    log_alpha: np.ndarray
    log_likelihood: float
    log_beta: Optional[np.ndarray] = None


def rnnt_step_distribution(
    lattice_cell: Sequence[float], temperature: float = 1.0, vocab: Optional[Vocab] = None
) -> StepDistribution:
    """Softmax over V̄ at temperature Z for one (t, u) cell."""
    z = np.asarray(lattice_cell, dtype=np.float64)
    if z.ndim != 1 or (vocab is not None and z.shape[0] != vocab.extended_size):
        raise LatticeError("vocab mismatch")
    return StepDistribution(log_probs=log_softmax(z, temperature))


def step_log_probs(
    lattice: JointLattice,
    head: Head = Head.RNNT,
    temperature: float = 1.0,
    blank_temperature: bool = True,
) -> np.ndarray:
    """Log-probability grid (T, U+1, |V̄|) for the chosen head."""
    lattice.check_finite()
    if Head(head) == Head.HAT:
        return hat_log_probs(lattice.logits, temperature, blank_temperature)
    return log_softmax(lattice.logits, temperature, axis=-1)


def _split_grid(log_probs: np.ndarray, labels: LabelSequence) -> Tuple[np.ndarray, np.ndarray]:
    """Blank and next-label log-probabilities per cell: (T, U+1) and (T, U)."""
    lp = np.asarray(log_probs, dtype=np.float64)
    if lp.ndim != 3 or lp.shape[0] < 1 or lp.shape[1] != len(labels) + 1:
        raise LatticeError("lattice/label mismatch")
    if any(not 1 <= k < lp.shape[2] for k in labels):
        raise LabelError("invalid label")
    U = len(labels)
    blank = lp[:, :, BLANK_ID]
    emit = lp[:, np.arange(U), np.asarray(labels, dtype=np.int64)] if U else np.zeros((lp.shape[0], 0))
    return blank, emit


def forward(log_probs: np.ndarray, labels: LabelSequence) -> AlphaBetaTableau:
    """α(t,u) = α(t−1,u)·P(∅|t−1,u) + α(t,u−1)·P(y_u|t,u−1), in log space."""
    blank, emit = _split_grid(log_probs, labels)
    T, U1 = blank.shape
    U = U1 - 1
    alpha = np.full((T, U1), LOG_ZERO)
    alpha[0, 0] = 0.0
    for t in range(T):
        for u in range(U1):
            if t == 0 and u == 0:
                continue
            from_blank = alpha[t - 1, u] + blank[t - 1, u] if t > 0 else LOG_ZERO
            from_label = alpha[t, u - 1] + emit[t, u - 1] if u > 0 else LOG_ZERO
            alpha[t, u] = log_add(from_blank, from_label)
    log_likelihood = float(alpha[T - 1, U] + blank[T - 1, U])
    return AlphaBetaTableau(log_alpha=alpha, log_likelihood=log_likelihood)


def backward(log_probs: np.ndarray, labels: LabelSequence) -> AlphaBetaTableau:
    """β(t,u): log-probability of finishing from (t,u), final blank included."""
    blank, emit = _split_grid(log_probs, labels)
    T, U1 = blank.shape
    U = U1 - 1
    beta = np.full((T, U1), LOG_ZERO)
    beta[T - 1, U] = blank[T - 1, U]
    for t in range(T - 1, -1, -1):
        for u in range(U, -1, -1):
            if t == T - 1 and u == U:
                continue
            via_blank = beta[t + 1, u] + blank[t, u] if t < T - 1 else LOG_ZERO
            via_label = beta[t, u + 1] + emit[t, u] if u < U else LOG_ZERO
            beta[t, u] = log_add(via_blank, via_label)
    return AlphaBetaTableau(log_alpha=np.empty((0, 0)), log_likelihood=float(beta[0, 0]), log_beta=beta)


def forward_backward(log_probs: np.ndarray, labels: LabelSequence) -> AlphaBetaTableau:
    fwd = forward(log_probs, labels)
    fwd.log_beta = backward(log_probs, labels).log_beta
    return fwd


def transition_occupancy(
    log_probs: np.ndarray, labels: LabelSequence, tableau: AlphaBetaTableau
) -> np.ndarray:
    """∂ log P(y|x) / ∂ log P(k|t,u): posterior probability of taking each transition."""
    lp = np.asarray(log_probs, dtype=np.float64)
    blank, emit = _split_grid(lp, labels)
    alpha, beta, ll = tableau.log_alpha, tableau.log_beta, tableau.log_likelihood
    T, U1 = blank.shape
    U = U1 - 1
    occupancy = np.zeros_like(lp)

    blank_occ = np.full((T, U1), LOG_ZERO)
    if T > 1:
        blank_occ[:-1, :] = alpha[:-1, :] + blank[:-1, :] + beta[1:, :] - ll
    blank_occ[T - 1, U] = alpha[T - 1, U] + blank[T - 1, U] - ll
    occupancy[:, :, BLANK_ID] = np.exp(blank_occ)

    if U:
        label_occ = np.exp(alpha[:, :U] + emit + beta[:, 1:] - ll)
        rows = np.arange(T)[:, None]
        cols = np.arange(U)[None, :]
        occupancy[rows, cols, np.asarray(labels, dtype=np.int64)[None, :]] += label_occ
    return occupancy


def _head_logit_grad(
    lattice: JointLattice,
    log_probs: np.ndarray,
    grad_log_probs: np.ndarray,
    head: Head,
    temperature: float,
    blank_temperature: bool,
) -> np.ndarray:
    if Head(head) == Head.HAT:
        return hat_logit_grad(lattice.logits, grad_log_probs, temperature, blank_temperature)
    # softmax Jacobian: ∂log p_j/∂z_k = (δ_jk − p_k) / Z
    probs = np.exp(log_probs)
    return (grad_log_probs - probs * grad_log_probs.sum(axis=-1, keepdims=True)) / temperature


def log_likelihood_grad(
    lattice: JointLattice,
    head: Head = Head.RNNT,
    temperature: float = 1.0,
    blank_temperature: bool = True,
) -> Tuple[float, np.ndarray, AlphaBetaTableau]:
    """log P(y|x) and its gradient with respect to the joint logits z."""
    log_probs = step_log_probs(lattice, head, temperature, blank_temperature)
    tableau = forward_backward(log_probs, lattice.labels)
    if not np.isfinite(tableau.log_likelihood):
        raise LatticeError("invalid lattice")
    occupancy = transition_occupancy(log_probs, lattice.labels, tableau)
    grad = _head_logit_grad(lattice, log_probs, occupancy, head, temperature, blank_temperature)
    return tableau.log_likelihood, grad, tableau


def nll_loss(
    lattice: JointLattice,
    labels: Optional[LabelSequence] = None,
    head: Head = Head.RNNT,
    temperature: float = 1.0,
    blank_temperature: bool = True,
) -> Tuple[float, np.ndarray]:
    """−log P(y|x) and ∂L/∂z (same shape as the lattice logits)."""
    if labels is not None and tuple(labels) != lattice.labels:
        raise LatticeError("lattice/label mismatch")
    log_likelihood, grad, _ = log_likelihood_grad(lattice, head, temperature, blank_temperature)
    return -log_likelihood, -grad


def anti_diagonal_log_sums(tableau: AlphaBetaTableau) -> np.ndarray:
    """log Σ_{t+u=n} α·β for every n; each entry equals log P(y|x)."""
    alpha, beta = tableau.log_alpha, tableau.log_beta
    T, U1 = alpha.shape
    total = alpha + beta
    return np.array(
        [
            log_sum_exp([total[t, n - t] for t in range(max(0, n - U1 + 1), min(T, n + 1))])
            for n in range(T + U1 - 1)
        ]
    )


def frame_crossing_log_sums(log_probs: np.ndarray, labels: LabelSequence, tableau: AlphaBetaTableau) -> np.ndarray:
    """log Σ_u α(t,u)·P(∅|t,u)·β(t+1,u) for every t (β(T,U) := 1 at the final blank)."""
    blank, _ = _split_grid(log_probs, labels)
    alpha, beta = tableau.log_alpha, tableau.log_beta
    T, U1 = blank.shape
    beta_next = np.full((T, U1), LOG_ZERO)
    beta_next[:-1, :] = beta[1:, :]
    beta_next[T - 1, U1 - 1] = 0.0
    return log_sum_exp_axis(alpha + blank + beta_next, axis=1)


def count_alignments(T: int, U: int) -> int:
    return math.comb(T - 1 + U, U)


def enumerate_alignments(
    T: int, U: int, max_symbols_per_step: Optional[int] = None
) -> Iterator[Tuple[bool, ...]]:
    """Every monotone path as a tuple of is-label flags, final blank excluded.

    A path has T − 1 inner blanks and U labels in some order, followed by the final blank
    at (T−1, U).
    """
    length = T - 1 + U
    for label_positions in itertools.combinations(range(length), U):
        chosen = set(label_positions)
        path = tuple(i in chosen for i in range(length))
        if max_symbols_per_step is not None and _max_run(path) > max_symbols_per_step:
            continue
        yield path


def _max_run(path: Tuple[bool, ...]) -> int:
    longest = current = 0
    for is_label in path:
        current = current + 1 if is_label else 0
        longest = max(longest, current)
    return longest


def alignment_oracle(
    log_probs: np.ndarray,
    labels: LabelSequence,
    max_symbols_per_step: Optional[int] = None,
) -> float:
    """log P(y|x) by explicit enumeration of every alignment (test oracle)."""
    blank, emit = _split_grid(log_probs, labels)
    T, U1 = blank.shape
    U = U1 - 1
    if T + U > ORACLE_MAX_T_PLUS_U:
        raise OracleLimitError("oracle limit exceeded")
    path_scores = []
    for path in enumerate_alignments(T, U, max_symbols_per_step):
        t = u = 0
        terms = []
        for is_label in path:
            if is_label:
                terms.append(emit[t, u])
                u += 1
            else:
                terms.append(blank[t, u])
                t += 1
        terms.append(blank[T - 1, U])
        path_scores.append(math.fsum(terms))
    if not path_scores:
        return LOG_ZERO
    return log_sum_exp(path_scores)
