import itertools

import numpy as np
import pytest

from hatkit.core.errors import DecodeError
from hatkit.schemas.config import DecodeConfig, FusionWeights, Head
from hatkit.services.decoder import (
    BeamSearch,
    LatticeScorer,
    ScoredHypothesis,
    beam_search,
    decode_many,
    fusion_score,
    greedy_search,
    length_norm_rerank,
    rescore_nbest,
)
from hatkit.services.hat_head import internal_lm_score
from hatkit.services.lattice import alignment_oracle, forward, step_log_probs
from hatkit.services.lm import random_table_lm, train_ngram
from hatkit.services.toy_model import ToyScorer, internal_lm_logits


@pytest.fixture
def features(rng, tiny_dims):
    return [rng.standard_normal((int(rng.integers(3, 7)), tiny_dims.input_dim)) for _ in range(6)]


class TestFusionScore:
    def test_zero_weights_without_norm_is_identity(self):
        assert fusion_score(-6.0, -2.0, -3.0, 2, FusionWeights(), False) == -6.0

    def test_weighted_and_normalized(self):
        weights = FusionWeights(lambda1=0.5, lambda2=1.0)
        assert fusion_score(-6.0, -2.0, -3.0, 2, weights, True) == pytest.approx(-4.0)

    def test_zero_length_with_norm(self):
        with pytest.raises(DecodeError):
            fusion_score(-1.0, 0.0, 0.0, 0, FusionWeights(), True)


class TestLengthNormRerank:
    def _hyp(self, tokens, total):
        return ScoredHypothesis(tokens=tokens, log_prob=total, total=total, score=total)

    def test_normalization_flips_the_winner(self):
        hyps = [self._hyp((1,), -4.0), self._hyp((1, 2, 3), -6.0)]
        assert length_norm_rerank(hyps, False)[0].tokens == (1,)
        best = length_norm_rerank(hyps, True)[0]
        assert best.tokens == (1, 2, 3)
        assert best.score == pytest.approx(-2.0)

    def test_equal_lengths_keep_the_ranking(self, rng):
        hyps = [self._hyp(tuple(rng.integers(1, 4, size=3)), float(rng.normal(-5, 2))) for _ in range(8)]
        plain = [h.tokens for h in length_norm_rerank(hyps, False)]
        normed = [h.tokens for h in length_norm_rerank(hyps, True)]
        assert plain == normed

    def test_matches_brute_force_sort(self, rng):
        hyps = [self._hyp(tuple(rng.integers(1, 4, size=int(n))), float(rng.normal(-6, 3)))
                for n in rng.integers(0, 6, size=12)]
        expected = sorted(hyps, key=lambda h: (-(h.total / max(len(h.tokens), 1)), len(h.tokens), h.tokens))
        assert [h.tokens for h in length_norm_rerank(hyps, True)] == [h.tokens for h in expected]


class TestBeamSearch:
    def test_forced_blank_lattice_gives_empty_output(self):
        logits = np.zeros((3, 4, 3))
        logits[..., 0] = 1000.0
        result = beam_search(LatticeScorer(logits), None, DecodeConfig(head=Head.RNNT, beam_size=4))
        assert result.top.tokens == ()
        assert result.top.log_prob == 0.0

    @pytest.mark.parametrize("head", [Head.RNNT, Head.HAT])
    def test_saturating_beam_matches_exhaustive_search(self, rng, head):
        T, vocab_size, cap = 2, 2, 2
        logits = rng.standard_normal((T, T * cap + 1, vocab_size + 1))
        scorer = LatticeScorer(logits)
        config = DecodeConfig(beam_size=64, length_norm=False, max_symbols_per_step=cap, head=head)
        result = beam_search(scorer, None, config)

        oracle = {}
        for n in range(T * cap + 1):
            for tokens in itertools.product(range(1, vocab_size + 1), repeat=n):
                lattice = scorer.lattice(None, tokens)
                oracle[tokens] = alignment_oracle(step_log_probs(lattice, head), tokens, cap)
        assert len(result.hypotheses) == len(oracle) == 31
        for hyp in result.hypotheses:
            assert hyp.log_prob == pytest.approx(oracle[hyp.tokens], abs=1e-10)
        assert result.top.tokens == max(oracle, key=oracle.get)

    def test_kept_mass_never_exceeds_the_exact_marginal(self, tiny_params, features):
        scorer = ToyScorer(tiny_params)
        for x in features:
            for beam in (1, 2, 8):
                top = beam_search(scorer, x, DecodeConfig(beam_size=beam, length_norm=False)).top
                exact = forward(step_log_probs(scorer.lattice(x, top.tokens), Head.HAT), top.tokens)
                assert top.log_prob <= exact.log_likelihood + 1e-12

    @pytest.mark.parametrize("head", [Head.RNNT, Head.HAT])
    def test_wider_beams_never_lose_probability(self, tiny_params, features, head):
        scorer = ToyScorer(tiny_params)
        for x in features:
            best = []
            for beam in (1, 2, 4, 8):
                config = DecodeConfig(beam_size=beam, length_norm=False, head=head, max_symbols_per_step=3)
                best.append(max(h.log_prob for h in beam_search(scorer, x, config).hypotheses))
            for narrow, wide in zip(best, best[1:]):
                assert wide >= narrow - 1e-12

    def test_zero_fusion_weights_are_bit_identical_to_plain_decoding(self, tiny_params, features):
        scorer = ToyScorer(tiny_params)
        lm = random_table_lm(3, seed=5)
        plain = decode_many(scorer, features, DecodeConfig(beam_size=4))
        fused = decode_many(scorer, features, DecodeConfig(beam_size=4, fusion=FusionWeights()), lm)
        assert [r.hypotheses for r in plain] == [r.hypotheses for r in fused]

    def test_length_normalized_scores(self, tiny_params, features):
        result = beam_search(ToyScorer(tiny_params), features[0], DecodeConfig(beam_size=4, length_norm=True))
        for hyp in result.hypotheses:
            assert hyp.score == hyp.log_prob / max(len(hyp.tokens), 1)
        scores = [h.score for h in result.hypotheses]
        assert scores == sorted(scores, reverse=True)

    def test_fusion_terms_are_tracked(self, tiny_params, features):
        corpus = [(1, 2), (2, 3, 1), (3,), (1, 1, 2)]
        lm = train_ngram(corpus, 3)
        config = DecodeConfig(beam_size=4, length_norm=False, fusion=FusionWeights(lambda1=0.3, lambda2=0.5))
        result = beam_search(ToyScorer(tiny_params), features[1], config, lm)
        for hyp in result.hypotheses:
            ilm = internal_lm_score(internal_lm_logits(tiny_params, hyp.tokens), hyp.tokens).log_prob
            lm_total = lm.score_sequence(hyp.tokens) + lm.score_end(lm.state_after(hyp.tokens))
            assert hyp.ilm_log_prob == pytest.approx(ilm, abs=1e-10)
            assert hyp.lm_log_prob == pytest.approx(lm_total, abs=1e-10)
            assert hyp.total == pytest.approx(hyp.log_prob - 0.3 * hyp.ilm_log_prob + 0.5 * hyp.lm_log_prob)

    def test_empty_input(self, tiny_params, tiny_dims):
        search = BeamSearch(ToyScorer(tiny_params), DecodeConfig())
        with pytest.raises(DecodeError, match="empty input"):
            search(np.zeros((0, tiny_dims.input_dim)))

    def test_greedy_is_beam_one(self, tiny_params, features):
        scorer = ToyScorer(tiny_params)
        config = DecodeConfig(beam_size=8)
        assert greedy_search(scorer, features[2], config).hypotheses == \
            beam_search(scorer, features[2], config.model_copy(update={"beam_size": 1})).hypotheses

    def test_parallel_decoding_preserves_order(self, tiny_params, features):
        scorer = ToyScorer(tiny_params)
        config = DecodeConfig(beam_size=3)
        sequential = decode_many(scorer, features, config, jobs=1)
        parallel = decode_many(scorer, features, config, jobs=3)
        assert [r.hypotheses for r in sequential] == [r.hypotheses for r in parallel]


class TestRescore:
    def test_exact_marginals(self, tiny_params, features):
        scorer = ToyScorer(tiny_params)
        hyps = [(), (1,), (2, 3)]
        rescored = rescore_nbest(scorer, features[0], hyps, Head.HAT)
        for tokens, hyp in zip(hyps, rescored):
            lattice = scorer.lattice(features[0], tokens)
            assert hyp.log_prob == forward(step_log_probs(lattice, Head.HAT), tokens).log_likelihood

    def test_result_to_nbest(self, tiny_params, features):
        result = beam_search(ToyScorer(tiny_params), features[0], DecodeConfig(beam_size=4))
        nbest = result.to_nbest((1, 2))
        assert {h.tokens for h in nbest.hypotheses} == {h.tokens for h in result.hypotheses}
        assert nbest.posteriors.sum() == pytest.approx(1.0)
