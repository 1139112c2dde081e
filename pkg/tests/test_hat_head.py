import math

import numpy as np
import pytest

from hatkit.core.errors import LabelError, LatticeError
from hatkit.schemas.vocab import Vocab
from hatkit.services.hat_head import (
    hat_log_probs,
    hat_logit_grad,
    hat_step_distribution,
    internal_lm_score,
    internal_lm_token_log_prob,
)
from hatkit.services.toy_model import ToyScorer, internal_lm_logits
from tests.conftest import central_difference


class TestHatStepDistribution:
    def test_zero_blank_logit_is_even_odds(self):
        dist = hat_step_distribution([0.0, 1.0, -2.0])
        assert dist.blank_prob == 0.5

    def test_equal_label_logits_are_uniform_whatever_the_blank(self):
        for blank in (-3.0, 0.0, 4.0):
            dist = hat_step_distribution([blank, 0.7, 0.7, 0.7, 0.7])
            np.testing.assert_allclose(np.exp(dist.log_labels), [0.25] * 4, atol=1e-15)

    def test_sums_to_one(self, rng):
        for _ in range(20):
            dist = hat_step_distribution(rng.standard_normal(6) * 4, temperature=float(rng.uniform(0.5, 3.0)))
            assert abs(math.fsum(np.exp(dist.log_probs)) - 1.0) <= 1e-12

    def test_vocab_mismatch(self):
        with pytest.raises(LatticeError, match="vocab mismatch"):
            hat_step_distribution(np.zeros(4), vocab=Vocab(size=4))

    def test_blank_temperature_switch(self):
        cell = [1.5, 0.0, 2.0]
        with_z = hat_step_distribution(cell, temperature=3.0)
        without_z = hat_step_distribution(cell, temperature=3.0, blank_temperature=False)
        assert with_z.blank_prob == pytest.approx(1.0 / (1.0 + math.exp(-0.5)))
        assert without_z.blank_prob == pytest.approx(1.0 / (1.0 + math.exp(-1.5)))
        np.testing.assert_array_equal(with_z.log_labels, without_z.log_labels)

    def test_vectorized_matches_per_cell(self, rng):
        logits = rng.standard_normal((3, 2, 5))
        grid = hat_log_probs(logits, 1.3)
        for index in np.ndindex(3, 2):
            np.testing.assert_allclose(grid[index], hat_step_distribution(logits[index], 1.3).log_probs, atol=1e-14)


class TestHatJacobian:
    @pytest.mark.parametrize("blank_temperature", [True, False])
    def test_matches_finite_differences(self, rng, blank_temperature):
        z = rng.standard_normal(5)
        weights = rng.standard_normal(5)

        def objective(logits):
            return float(np.dot(weights, hat_log_probs(logits, 1.7, blank_temperature)))

        analytic = hat_logit_grad(z, weights, 1.7, blank_temperature)
        numeric = np.array([central_difference(objective, z, (k,)) for k in range(5)])
        np.testing.assert_allclose(analytic, numeric, atol=1e-8)


class TestInternalLm:
    def test_uniform_predictor(self):
        score = internal_lm_score(np.zeros((3, 5)), (1, 4, 2))
        assert score.log_prob == pytest.approx(3 * math.log(0.25), abs=1e-14)

    def test_empty_sequence(self):
        assert internal_lm_score(np.zeros((0, 5)), ()).log_prob == 0.0

    def test_invalid_label(self):
        with pytest.raises(LabelError, match="invalid label"):
            internal_lm_score(np.zeros((1, 5)), (5,))
        with pytest.raises(LabelError, match="invalid label"):
            internal_lm_token_log_prob(np.zeros(5), 0)

    def test_blank_slot_is_ignored(self):
        z = np.array([[100.0, 1.0, 2.0, 3.0]])
        shifted = z.copy()
        shifted[0, 0] = -100.0
        assert internal_lm_score(z, (2,)).log_prob == internal_lm_score(shifted, (2,)).log_prob

    def test_step_distribution_is_normalized(self, rng):
        z = rng.standard_normal(6) * 3
        probs = [math.exp(internal_lm_token_log_prob(z, k, 0.8)) for k in range(1, 6)]
        assert abs(math.fsum(probs) - 1.0) <= 1e-10

    def test_matches_manual_evaluation_on_toy_model(self, tiny_params):
        labels = (2, 1, 3)
        scorer = ToyScorer(tiny_params)
        state = scorer.initial_state()
        manual = 0.0
        for k in labels:
            manual += internal_lm_token_log_prob(scorer.ilm_logits(state), k)
            state = scorer.advance(state, k)
        batch = internal_lm_score(internal_lm_logits(tiny_params, labels), labels).log_prob
        assert batch == pytest.approx(manual, abs=1e-12)
