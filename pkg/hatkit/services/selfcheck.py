"""Oracle suite behind ``hatkit selfcheck``.

Every check draws its own seeded instances and returns (passed, detail). ``inject_fault``
names one check whose oracle input gets corrupted, so the failure path can be exercised
end to end.
"""

import logging
import math
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from hatkit.core.errors import UsageError
from hatkit.schemas.config import DecodeConfig, FusionWeights, Head, ModelDims
from hatkit.schemas.reports import CheckResult
from hatkit.services.decoder import BeamSearch, LatticeScorer
from hatkit.services.hat_head import hat_log_probs, internal_lm_score, internal_lm_token_log_prob
from hatkit.services.lattice import (
    JointLattice,
    alignment_oracle,
    anti_diagonal_log_sums,
    forward,
    forward_backward,
    frame_crossing_log_sums,
    log_likelihood_grad,
    nll_loss,
    step_log_probs,
)
from hatkit.services.lm import random_table_lm
from hatkit.services.mwer import build_nbest, mwer_backprop_to_lattice, mwer_loss
from hatkit.services.toy_model import (
    PARAM_NAMES,
    ToyModelParams,
    ToyScorer,
    encode,
    init_params,
    internal_lm_logits,
    joint,
    model_backward,
    model_forward,
    predict,
)

logger = logging.getLogger(__name__)

FD_EPSILON = 1e-5
GRAD_TOLERANCE = 1e-4
ORACLE_TOLERANCE = 1e-10
ORACLE_INSTANCES = 500
GRAD_INSTANCES = 20
# FD coordinates sampled per instance for parameter-space checks.
PARAM_SAMPLES = 12
CORRUPTION = 1e-2

CheckFn = Callable[[np.random.Generator, bool], Tuple[bool, str]]

TINY_DIMS = ModelDims(vocab_size=3, d_h=4, d_e=3, d_p=4, d_j=5)


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-2) -> float:
    """max |a − n| / max(|a|, |n|, floor), elementwise."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / scale))


def _random_lattice(rng: np.random.Generator, max_t_plus_u: int = 12, max_k: int = 5) -> JointLattice:
    K = int(rng.integers(2, max_k + 1))
    T = int(rng.integers(1, max_t_plus_u))
    U = int(rng.integers(0, max_t_plus_u - T + 1))
    labels = tuple(int(k) for k in rng.integers(1, K, size=U))
    logits = rng.standard_normal((T, U + 1, K)) * 2.0
    return JointLattice(logits=logits, labels=labels)


def _random_features(rng: np.random.Generator, dims: ModelDims, T: int) -> np.ndarray:
    return rng.standard_normal((T, dims.input_dim))


def check_oracle_forward_backward(rng: np.random.Generator, fault: bool) -> Tuple[bool, str]:
    worst = 0.0
    for i in range(ORACLE_INSTANCES):
        lattice = _random_lattice(rng)
        head = Head.HAT if i % 2 else Head.RNNT
        log_probs = step_log_probs(lattice, head)
        fed = log_probs.copy()
        if fault and i == 0:
            fed[0, 0, 0] += CORRUPTION
        ll = forward(fed, lattice.labels).log_likelihood
        oracle = alignment_oracle(log_probs, lattice.labels)
        worst = max(worst, abs(ll - oracle))
    return worst <= ORACLE_TOLERANCE, f"{ORACLE_INSTANCES} instances, max |Δ| = {worst:.3e}"


def check_lattice_identities(rng: np.random.Generator, fault: bool) -> Tuple[bool, str]:
    worst = 0.0
    for i in range(GRAD_INSTANCES):
        lattice = _random_lattice(rng)
        log_probs = step_log_probs(lattice, Head.HAT if i % 2 else Head.RNNT)
        tableau = forward_backward(log_probs, lattice.labels)
        if fault and i == 0:
            tableau.log_beta[0, 0] += CORRUPTION
        ll = tableau.log_likelihood
        worst = max(
            worst,
            float(np.max(np.abs(anti_diagonal_log_sums(tableau) - ll))),
            float(np.max(np.abs(frame_crossing_log_sums(log_probs, lattice.labels, tableau) - ll))),
            abs(tableau.log_beta[0, 0] - ll),
        )
    return worst <= ORACLE_TOLERANCE, f"anti-diagonal and frame-crossing sums, max |Δ| = {worst:.3e}"


def _nll_grad_check(rng: np.random.Generator, fault: bool, head: Head) -> Tuple[bool, str]:
    worst = 0.0
    for i in range(GRAD_INSTANCES):
        lattice = _random_lattice(rng, max_t_plus_u=6, max_k=4)
        temperature = float(rng.uniform(0.5, 2.0))
        _, analytic = nll_loss(lattice, head=head, temperature=temperature)
        if fault and i == 0:
            analytic = analytic + CORRUPTION
        numeric = np.zeros_like(lattice.logits)
        for index in np.ndindex(lattice.logits.shape):
            plus = lattice.logits.copy()
            minus = lattice.logits.copy()
            plus[index] += FD_EPSILON
            minus[index] -= FD_EPSILON
            loss_plus, _ = nll_loss(JointLattice(plus, lattice.labels), head=head, temperature=temperature)
            loss_minus, _ = nll_loss(JointLattice(minus, lattice.labels), head=head, temperature=temperature)
            numeric[index] = (loss_plus - loss_minus) / (2 * FD_EPSILON)
        worst = max(worst, max_relative_error(analytic, numeric))
    return worst <= GRAD_TOLERANCE, f"{GRAD_INSTANCES} lattices, max relative error = {worst:.3e}"


def check_nll_grad_rnnt(rng: np.random.Generator, fault: bool) -> Tuple[bool, str]:
    return _nll_grad_check(rng, fault, Head.RNNT)


def check_nll_grad_hat(rng: np.random.Generator, fault: bool) -> Tuple[bool, str]:
    return _nll_grad_check(rng, fault, Head.HAT)


def _sampled_coordinates(rng: np.random.Generator, params: ToyModelParams, count: int) -> List[Tuple[str, tuple]]:
    coordinates = []
    for _ in range(count):
        name = PARAM_NAMES[int(rng.integers(len(PARAM_NAMES)))]
        shape = params[name].shape
        coordinates.append((name, tuple(int(rng.integers(n)) for n in shape)))
    return coordinates


def _param_fd(params: ToyModelParams, name: str, index: tuple, objective: Callable[[ToyModelParams], float]) -> float:
    plus = params.copy()
    minus = params.copy()
    plus.tensors[name][index] += FD_EPSILON
    minus.tensors[name][index] -= FD_EPSILON
    return (objective(plus) - objective(minus)) / (2 * FD_EPSILON)


def _compare_param_grads(
    rng: np.random.Generator,
    params: ToyModelParams,
    grads: Dict[str, np.ndarray],
    objective: Callable[[ToyModelParams], float],
) -> float:
    coordinates = _sampled_coordinates(rng, params, PARAM_SAMPLES)
    analytic = np.array([grads[name][index] for name, index in coordinates])
    numeric = np.array([_param_fd(params, name, index, objective) for name, index in coordinates])
    return max_relative_error(analytic, numeric)


def _expected_risk(params: ToyModelParams, features: np.ndarray, reference, candidates, head: Head) -> float:
    scored = []
    for tokens in candidates:
        ll, _, _ = log_likelihood_grad(model_forward(params, features, tokens), head)
        scored.append((tokens, ll))
    return build_nbest(scored, reference).expected_risk


def check_mwer_grad_chain(rng: np.random.Generator, fault: bool) -> Tuple[bool, str]:
    """Expected risk of a fixed hypothesis set, differentiated down to the model parameters."""
    worst = 0.0
    for i in range(GRAD_INSTANCES):
        head = Head.HAT if i % 2 else Head.RNNT
        params = init_params(TINY_DIMS, seed=int(rng.integers(1 << 30)))
        T = int(rng.integers(3, 6))
        features = _random_features(rng, TINY_DIMS, T)
        reference = tuple(int(k) for k in rng.integers(1, TINY_DIMS.vocab_size + 1, size=2))
        candidates = {reference}
        while len(candidates) < 4:
            length = int(rng.integers(0, 4))
            candidates.add(tuple(int(k) for k in rng.integers(1, TINY_DIMS.vocab_size + 1, size=length)))
        candidates = sorted(candidates)

        scored = []
        for tokens in candidates:
            ll, _, _ = log_likelihood_grad(model_forward(params, features, tokens), head)
            scored.append((tokens, ll))
        nbest = build_nbest(scored, reference)
        lattices = [model_forward(params, features, h.tokens) for h in nbest.hypotheses]
        grads = params.zeros_like()
        for hyp, dz in zip(nbest.hypotheses, mwer_backprop_to_lattice(nbest, lattices, head)):
            for name, g in model_backward(params, features, hyp.tokens, dz).items():
                grads[name] += g
        if fault and i == 0:
            grads = {name: g + CORRUPTION for name, g in grads.items()}

        worst = max(worst, _compare_param_grads(
            rng, params, grads, lambda p: _expected_risk(p, features, reference, candidates, head)
        ))
    return worst <= GRAD_TOLERANCE, f"{GRAD_INSTANCES} N-best lists, max relative error = {worst:.3e}"


def check_toy_model_grad(rng: np.random.Generator, fault: bool) -> Tuple[bool, str]:
    worst = 0.0
    for i in range(GRAD_INSTANCES):
        head = Head.HAT if i % 2 else Head.RNNT
        params = init_params(TINY_DIMS, seed=int(rng.integers(1 << 30)))
        features = _random_features(rng, TINY_DIMS, int(rng.integers(2, 6)))
        labels = tuple(int(k) for k in rng.integers(1, TINY_DIMS.vocab_size + 1, size=int(rng.integers(0, 3))))
        _, dz = nll_loss(model_forward(params, features, labels), head=head)
        grads = model_backward(params, features, labels, dz)
        if fault and i == 0:
            grads = {name: g + CORRUPTION for name, g in grads.items()}

        def objective(p: ToyModelParams) -> float:
            return nll_loss(model_forward(p, features, labels), head=head)[0]

        worst = max(worst, _compare_param_grads(rng, params, grads, objective))
    return worst <= GRAD_TOLERANCE, f"{GRAD_INSTANCES} utterances, max relative error = {worst:.3e}"


def check_hat_normalization(rng: np.random.Generator, fault: bool) -> Tuple[bool, str]:
    cells = rng.standard_normal((200, 6)) * 5.0
    temperatures = rng.uniform(0.3, 3.0, size=200)
    worst_hat = worst_ilm = 0.0
    for cell, z in zip(cells, temperatures):
        probs = np.exp(hat_log_probs(cell, z))
        total = math.fsum(probs[1:]) if fault else math.fsum(probs)
        worst_hat = max(worst_hat, abs(total - 1.0))
        ilm_probs = [math.exp(internal_lm_token_log_prob(cell, k, z)) for k in range(1, len(cell))]
        worst_ilm = max(worst_ilm, abs(math.fsum(ilm_probs) - 1.0))
    passed = worst_hat <= 1e-12 and worst_ilm <= 1e-10
    return passed, f"HAT max |Σp − 1| = {worst_hat:.3e}, internal LM max |Σp − 1| = {worst_ilm:.3e}"


def check_ilm_acoustic_invariance(rng: np.random.Generator, fault: bool) -> Tuple[bool, str]:
    params = init_params(TINY_DIMS, seed=int(rng.integers(1 << 30)))
    labels = (1, 3, 2, 2)
    features_a = _random_features(rng, TINY_DIMS, 6)
    features_b = _random_features(rng, TINY_DIMS, 6)

    scores = []
    lattices = []
    for features in (features_a, features_b):
        lattices.append(model_forward(params, features, labels).logits)
        pred_g = predict(params, labels).g[:-1]
        if fault and features is features_b:
            pred_g = pred_g + encode(params, features).f[0]
        scores.append(internal_lm_score(joint(params, 0.0, pred_g), labels).per_token)
    direct = internal_lm_score(internal_lm_logits(params, labels), labels).per_token

    distinct_inputs = not np.array_equal(lattices[0], lattices[1])
    identical = scores[0] == scores[1] == direct
    return distinct_inputs and identical, f"per-token ILM scores {'identical' if identical else 'differ'} across inputs"


def check_mwer_zero_sum(rng: np.random.Generator, fault: bool) -> Tuple[bool, str]:
    worst_grad = worst_post = 0.0
    for i in range(GRAD_INSTANCES):
        reference = tuple(int(k) for k in rng.integers(1, 5, size=int(rng.integers(1, 5))))
        hyps = [
            (tuple(int(k) for k in rng.integers(1, 5, size=int(rng.integers(0, 5)))), float(rng.normal(-5.0, 3.0)))
            for _ in range(int(rng.integers(1, 8)))
        ]
        nbest = build_nbest(hyps, reference)
        _, grad = mwer_loss(nbest)
        if fault and i == 0:
            grad = grad.copy()
            grad[0] += CORRUPTION
        worst_grad = max(worst_grad, abs(math.fsum(grad)))
        worst_post = max(worst_post, abs(math.fsum(nbest.posteriors) - 1.0))
    passed = worst_grad <= 1e-10 and worst_post <= 1e-10
    return passed, f"max |Σ∂R̄| = {worst_grad:.3e}, max |Σposterior − 1| = {worst_post:.3e}"


def check_fusion_reduction(rng: np.random.Generator, fault: bool) -> Tuple[bool, str]:
    params = init_params(TINY_DIMS, seed=int(rng.integers(1 << 30)))
    scorer = ToyScorer(params)
    lm = random_table_lm(TINY_DIMS.vocab_size, seed=int(rng.integers(1 << 30)))
    plain = DecodeConfig(beam_size=4)
    fused = plain.model_copy(update={"fusion": FusionWeights(lambda2=1e-3 if fault else 0.0)})
    mismatches = 0
    utterances = 10
    for _ in range(utterances):
        features = _random_features(rng, TINY_DIMS, int(rng.integers(3, 8)))
        if BeamSearch(scorer, plain)(features).hypotheses != BeamSearch(scorer, fused, lm)(features).hypotheses:
            mismatches += 1
    return mismatches == 0, f"{utterances - mismatches}/{utterances} decodes bit-identical with λ₁ = λ₂ = 0"


def check_exhaustive_decode(rng: np.random.Generator, fault: bool) -> Tuple[bool, str]:
    """Saturating-beam search on T=2, |V|=2, two labels per frame against brute-force marginals."""
    T, vocab_size, cap = 2, 2, 2
    max_len = T * cap
    logits = rng.standard_normal((T, max_len + 1, vocab_size + 1))
    scorer = LatticeScorer(logits)
    config = DecodeConfig(beam_size=64, length_norm=False, max_symbols_per_step=cap, head=Head.HAT)
    result = BeamSearch(scorer, config)(None)

    worst = 0.0
    expected_count = sum(vocab_size ** n for n in range(max_len + 1))
    for hyp in result.hypotheses:
        lattice = scorer.lattice(None, hyp.tokens)
        oracle = alignment_oracle(step_log_probs(lattice, Head.HAT), hyp.tokens, None if fault else cap)
        worst = max(worst, abs(hyp.log_prob - oracle))
    count_ok = len(result.hypotheses) == expected_count
    return count_ok and worst <= ORACLE_TOLERANCE, (
        f"{len(result.hypotheses)}/{expected_count} sequences, max |Δ| = {worst:.3e}"
    )


CHECKS: Dict[str, CheckFn] = {
    "oracle_forward_backward": check_oracle_forward_backward,
    "lattice_identities": check_lattice_identities,
    "nll_grad_rnnt": check_nll_grad_rnnt,
    "nll_grad_hat": check_nll_grad_hat,
    "mwer_grad_chain": check_mwer_grad_chain,
    "toy_model_grad": check_toy_model_grad,
    "hat_normalization": check_hat_normalization,
    "ilm_acoustic_invariance": check_ilm_acoustic_invariance,
    "mwer_zero_sum": check_mwer_zero_sum,
    "fusion_reduction": check_fusion_reduction,
    "exhaustive_decode": check_exhaustive_decode,
}


def run_selfcheck(
    names: Optional[List[str]] = None,
    inject_fault: Optional[str] = None,
    seed: int = 0,
) -> List[CheckResult]:
    """Run the named checks (all by default) in registry order."""
    selected = list(CHECKS) if not names else names
    unknown = [name for name in selected + ([inject_fault] if inject_fault else []) if name not in CHECKS]
    if unknown:
        raise UsageError(f"unknown check(s): {', '.join(unknown)}; known: {', '.join(CHECKS)}")

    results = []
    for index, name in enumerate(CHECKS):
        if name not in selected:
            continue
        rng = np.random.default_rng((seed, index))
        fault = name == inject_fault
        if fault:
            logger.warning(f"Injecting a fault into check '{name}'")
        try:
            passed, detail = CHECKS[name](rng, fault)
            result = CheckResult(name=name, passed=bool(passed), detail=detail)
        except Exception as e:
            logger.error(f"Check '{name}' raised: {e}")
            result = CheckResult(name=name, passed=False, error=str(e))
        logger.info(f"selfcheck {name}: {'PASS' if result.passed else 'FAIL'} {result.detail}")
        results.append(result)
    return results
