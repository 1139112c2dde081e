"""NLL pretraining and MWER fine-tuning of the toy transducer."""

import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from hatkit.core.errors import ModelError, TrainingDivergedError
from hatkit.schemas.config import DecodeConfig, LossKind, Optimizer, TrainConfig
from hatkit.schemas.reports import EpochMetrics, EvalReport
from hatkit.services.decoder import BeamSearch, rescore_nbest
from hatkit.services.evalkit import score_wer
from hatkit.services.lattice import forward, nll_loss, step_log_probs
from hatkit.services.mwer import Hypothesis, build_nbest, make_boundary_segmenter, mwer_backprop_to_lattice, mwer_loss
from hatkit.services.synth import Dataset, Utterance
from hatkit.services.toy_model import PARAM_NAMES, ToyModelParams, ToyScorer, model_backward, model_forward

logger = logging.getLogger(__name__)

Grads = Dict[str, np.ndarray]


class SgdOptimizer:
    kind = Optimizer.SGD

    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate
        self.step_count = 0

    def step(self, params: ToyModelParams, grads: Grads) -> None:
        self.step_count += 1
        for name in PARAM_NAMES:
            params.tensors[name] = params.tensors[name] - self.learning_rate * grads[name]

    def state_scalars(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "learning_rate": self.learning_rate, "step": self.step_count}

    def state_tensors(self) -> Dict[str, np.ndarray]:
        return {}

    def load_state(self, scalars: Dict[str, Any], tensors: Dict[str, np.ndarray]) -> None:
        self.step_count = int(scalars.get("step", 0))


class AdamOptimizer:
    kind = Optimizer.ADAM

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: Grads = {}
        self.v: Grads = {}

    def step(self, params: ToyModelParams, grads: Grads) -> None:
        self.step_count += 1
        t = self.step_count
        for name in PARAM_NAMES:
            g = grads[name]
            m = self.beta1 * self.m.get(name, np.zeros_like(g)) + (1.0 - self.beta1) * g
            v = self.beta2 * self.v.get(name, np.zeros_like(g)) + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            params.tensors[name] = params.tensors[name] - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_scalars(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "step": self.step_count,
        }

    def state_tensors(self) -> Dict[str, np.ndarray]:
        tensors = {}
        for name in PARAM_NAMES:
            if name in self.m:
                tensors[f"opt/m/{name}"] = self.m[name]
                tensors[f"opt/v/{name}"] = self.v[name]
        return tensors

    def load_state(self, scalars: Dict[str, Any], tensors: Dict[str, np.ndarray]) -> None:
        self.step_count = int(scalars.get("step", 0))
        self.m = {key[len("opt/m/"):]: t.copy() for key, t in tensors.items() if key.startswith("opt/m/")}
        self.v = {key[len("opt/v/"):]: t.copy() for key, t in tensors.items() if key.startswith("opt/v/")}


def make_optimizer(config: TrainConfig):
    if config.optimizer == Optimizer.SGD:
        return SgdOptimizer(config.learning_rate)
    return AdamOptimizer(config.learning_rate)


@dataclass
class UtteranceStep:
    utt_id: str
    loss: float
    grads: Grads
    expected_risk: float = 0.0


def _check_finite(value: float, epoch: int, utt_id: str) -> None:
    if not np.isfinite(value):
        raise TrainingDivergedError(f"loss diverged ({value}) at epoch {epoch}, utterance {utt_id}", epoch, utt_id)


def _add_into(total: Grads, grads: Grads, scale: float = 1.0) -> None:
    for name in PARAM_NAMES:
        total[name] += scale * grads[name]


def nll_step(params: ToyModelParams, utt: Utterance, config: TrainConfig) -> UtteranceStep:
    lattice = model_forward(params, utt.features, utt.labels)
    loss, dz = nll_loss(lattice, head=config.head, temperature=config.temperature,
                        blank_temperature=config.blank_temperature)
    grads = model_backward(params, utt.features, utt.labels, dz)
    return UtteranceStep(utt_id=utt.utt_id, loss=loss, grads=grads)


def mwer_decode_config(config: TrainConfig) -> DecodeConfig:
    """N-best generation for MWER: unnormalized ranking, no fusion."""
    return DecodeConfig(
        beam_size=config.mwer_beam,
        temperature=config.temperature,
        length_norm=False,
        head=config.head,
        blank_temperature=config.blank_temperature,
        max_symbols_per_step=config.max_symbols_per_step,
    )


def mwer_step(params: ToyModelParams, utt: Utterance, config: TrainConfig) -> UtteranceStep:
    """Expected risk over an on-the-fly N-best, backpropagated through every hypothesis lattice."""
    search = BeamSearch(ToyScorer(params), mwer_decode_config(config))
    candidates = [h.tokens for h in search(utt.features).hypotheses]
    if config.include_reference and utt.labels not in candidates:
        candidates.append(utt.labels)

    lattices = {}
    scored = []
    for tokens in candidates:
        lattice = model_forward(params, utt.features, tokens)
        log_probs = step_log_probs(lattice, config.head, config.temperature, config.blank_temperature)
        lattices[tokens] = lattice
        scored.append(Hypothesis(tokens=tokens, log_prob=forward(log_probs, tokens).log_likelihood))

    segmenter = make_boundary_segmenter(config.word_boundary) if config.word_boundary is not None else None
    nbest = build_nbest(scored, utt.labels, segmenter=segmenter,
                        length_normalize=config.length_normalized_posterior)
    loss, _ = mwer_loss(nbest)
    dz_per_hyp = mwer_backprop_to_lattice(
        nbest,
        [lattices[hyp.tokens] for hyp in nbest.hypotheses],
        config.head,
        config.temperature,
        config.blank_temperature,
    )

    grads = params.zeros_like()
    for hyp, dz in zip(nbest.hypotheses, dz_per_hyp):
        if not dz.any():
            continue
        _add_into(grads, model_backward(params, utt.features, hyp.tokens, dz))

    expected_risk = loss
    if config.nll_weight > 0.0:
        ref_step = nll_step(params, utt, config)
        loss += config.nll_weight * ref_step.loss
        _add_into(grads, ref_step.grads, config.nll_weight)
    return UtteranceStep(utt_id=utt.utt_id, loss=loss, grads=grads, expected_risk=expected_risk)


def utterance_step(params: ToyModelParams, utt: Utterance, config: TrainConfig) -> UtteranceStep:
    if config.loss == LossKind.MWER:
        return mwer_step(params, utt, config)
    return nll_step(params, utt, config)


def batch_gradient(
    params: ToyModelParams,
    batch: List[Utterance],
    config: TrainConfig,
    epoch: int,
    pool: Optional[ThreadPoolExecutor] = None,
) -> Tuple[Grads, List[UtteranceStep]]:
    """Sum of per-utterance gradients, reduced in batch order."""
    if pool is not None and len(batch) > 1:
        steps = list(pool.map(lambda utt: utterance_step(params, utt, config), batch))
    else:
        steps = [utterance_step(params, utt, config) for utt in batch]
    total = params.zeros_like()
    for step in steps:
        _check_finite(step.loss, epoch, step.utt_id)
        _add_into(total, step.grads)
    for name, grad in total.items():
        if not np.all(np.isfinite(grad)):
            raise TrainingDivergedError(f"non-finite gradient for {name} at epoch {epoch}", epoch, batch[0].utt_id)
    return total, steps


def evaluate(
    params: ToyModelParams,
    dataset: Dataset,
    decode_config: DecodeConfig,
    jobs: int = 1,
) -> EvalReport:
    """Mean reference NLL, corpus token error of beam decoding, and mean N-best expected risk."""
    scorer = ToyScorer(params)
    search = BeamSearch(scorer, decode_config)

    def one(utt: Utterance) -> Tuple[float, Tuple[int, ...], float]:
        lattice = model_forward(params, utt.features, utt.labels)
        nll, _ = nll_loss(lattice, head=decode_config.head, temperature=decode_config.temperature,
                          blank_temperature=decode_config.blank_temperature)
        result = search(utt.features)
        hyps = rescore_nbest(
            scorer, utt.features, [h.tokens for h in result.hypotheses],
            decode_config.head, decode_config.temperature, decode_config.blank_temperature,
        )
        risk = build_nbest(hyps, utt.labels).expected_risk
        return nll, result.top.tokens, risk

    if jobs > 1 and len(dataset) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, dataset.utterances))
    else:
        rows = [one(utt) for utt in dataset]

    if not rows:
        raise ModelError("cannot evaluate on an empty dataset")
    wer = score_wer([tokens for _, tokens, _ in rows], [utt.labels for utt in dataset])
    return EvalReport(
        nll=float(np.mean([nll for nll, _, _ in rows])),
        token_error=wer.wer,
        expected_risk=float(np.mean([risk for _, _, risk in rows])),
        wer=wer,
    )


def eval_decode_config(config: TrainConfig) -> DecodeConfig:
    return DecodeConfig(
        beam_size=config.eval_beam,
        temperature=config.temperature,
        length_norm=True,
        head=config.head,
        blank_temperature=config.blank_temperature,
        max_symbols_per_step=config.max_symbols_per_step,
    )


@dataclass
class TrainResult:
    params: ToyModelParams
    optimizer: Any
    metrics: List[EpochMetrics] = field(default_factory=list)
    last_epoch: int = 0


def train(
    params: ToyModelParams,
    dataset: Dataset,
    config: TrainConfig,
    dev: Optional[Dataset] = None,
    optimizer: Any = None,
    start_epoch: int = 0,
    jobs: int = 1,
) -> TrainResult:
    """Run epochs ``start_epoch + 1 .. config.epochs`` and return the trained copy.

    Epoch e shuffles with ``default_rng((seed, e))``, so a run resumed from a checkpoint
    taken after epoch e reproduces the uninterrupted run exactly.
    """
    if len(dataset) == 0:
        raise ModelError("cannot train on an empty dataset")
    params = params.copy()
    optimizer = optimizer or make_optimizer(config)
    eval_set = dev if dev is not None else dataset
    decode_config = eval_decode_config(config)
    metrics: List[EpochMetrics] = []
    show_progress = sys.stderr.isatty()

    logger.info(
        f"Training {config.loss.value} on {len(dataset)} utterances: epochs {start_epoch + 1}..{config.epochs}, "
        f"{config.optimizer.value} lr={config.learning_rate}, batch={config.batch_size}, head={config.head.value}"
    )
    pool = ThreadPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        for epoch in range(start_epoch + 1, config.epochs + 1):
            rng = np.random.default_rng((config.seed, epoch))
            order = rng.permutation(len(dataset))
            batches = [order[i:i + config.batch_size] for i in range(0, len(order), config.batch_size)]
            losses: List[float] = []
            for batch_index, indices in enumerate(
                tqdm(batches, desc=f"epoch {epoch}", disable=not show_progress, leave=False)
            ):
                batch = [dataset[int(i)] for i in indices]
                grads, steps = batch_gradient(params, batch, config, epoch, pool)
                optimizer.step(params, grads)
                losses.extend(step.loss for step in steps)
                if (batch_index + 1) % config.log_every == 0:
                    logger.debug(f"epoch {epoch} batch {batch_index + 1}/{len(batches)}: mean loss {np.mean(losses):.6f}")

            report = evaluate(params, eval_set, decode_config, jobs)
            epoch_metrics = EpochMetrics(
                epoch=epoch,
                loss=float(np.mean(losses)),
                token_error=report.token_error,
                expected_risk=report.expected_risk,
                dev_nll=report.nll,
            )
            metrics.append(epoch_metrics)
            logger.info(
                f"epoch {epoch}: loss {epoch_metrics.loss:.6f}, token_error {report.token_error:.4f}, "
                f"expected_risk {report.expected_risk:.4f}, dev_nll {report.nll:.6f}"
            )
    except TrainingDivergedError as e:
        logger.error(f"Training diverged: {e}")
        raise
    finally:
        if pool is not None:
            pool.shutdown()

    return TrainResult(params=params, optimizer=optimizer, metrics=metrics, last_epoch=config.epochs)
