import numpy as np
import pytest

from hatkit.core.errors import MwerError
from hatkit.schemas.config import Head
from hatkit.services.lattice import JointLattice, log_likelihood_grad
from hatkit.services.mwer import (
    Hypothesis,
    NBestList,
    build_nbest,
    make_boundary_segmenter,
    mwer_backprop_to_lattice,
    mwer_loss,
    nbest_posterior,
    word_edit_distance,
)
from hatkit.services.selfcheck import max_relative_error
from tests.conftest import central_difference


class TestWordEditDistance:
    def test_one_substitution(self):
        assert word_edit_distance(["a", "b", "c"], ["a", "x", "c"]) == 1

    def test_two_deletions(self):
        assert word_edit_distance([], ["a", "b"]) == 2

    def test_swap_costs_two(self):
        assert word_edit_distance(["a", "b"], ["b", "a"]) == 2

    def test_boundary_segmenter(self):
        segment = make_boundary_segmenter(4)
        assert segment([4, 1, 2, 4, 3, 4, 4]) == [(1, 2), (3,)]
        assert word_edit_distance(segment([1, 2, 4, 3]), segment([1, 2, 4, 2])) == 1


class TestPosterior:
    def test_equal_scores(self):
        np.testing.assert_allclose(nbest_posterior([-3.0] * 4), [0.25] * 4, atol=1e-15)

    def test_single(self):
        assert nbest_posterior([-7.5]).tolist() == [1.0]

    def test_reference_values(self):
        expected = np.exp([-1.0, -2.0]) / np.exp([-1.0, -2.0]).sum()
        np.testing.assert_allclose(nbest_posterior([-1.0, -2.0]), expected, rtol=1e-15)

    def test_empty(self):
        with pytest.raises(MwerError, match="empty N-best"):
            nbest_posterior([])


class TestBuildNbest:
    def test_duplicates_merge_by_log_sum_exp(self):
        nbest = build_nbest([((1,), -1.0), ((1,), -1.0), ((2,), -3.0)], (1,))
        assert [h.tokens for h in nbest.hypotheses] == [(1,), (2,)]
        assert nbest.hypotheses[0].log_prob == pytest.approx(-1.0 + np.log(2.0))

    def test_order_ties_prefer_shorter_then_lexicographic(self):
        nbest = build_nbest([((2, 1), -1.0), ((3,), -1.0), ((1, 2), -1.0)], (1,))
        assert [h.tokens for h in nbest.hypotheses] == [(3,), (1, 2), (2, 1)]

    def test_zero_probability_hypotheses_are_dropped(self):
        nbest = build_nbest([((1,), -1.0), ((2,), float("-inf"))], (1,))
        assert len(nbest) == 1

    def test_empty(self):
        with pytest.raises(MwerError, match="empty N-best"):
            build_nbest([], (1,))

    def test_posteriors_sum_to_one(self, rng):
        hyps = [(tuple(rng.integers(1, 4, size=n)), float(rng.normal(-4, 2))) for n in range(1, 7)]
        nbest = build_nbest(hyps, (1, 2))
        assert abs(nbest.posteriors.sum() - 1.0) <= 1e-10

    def test_length_normalized_posterior(self):
        nbest = build_nbest([Hypothesis((1,), -4.0), Hypothesis((1, 2, 3), -6.0)], (1,), length_normalize=True)
        np.testing.assert_allclose(nbest.score_scales, [1.0, 1.0 / 3.0])
        assert nbest.posteriors[1] > nbest.posteriors[0]


class TestMwerLoss:
    def test_equal_risks_give_zero_gradient(self):
        nbest = build_nbest([((1,), -1.0), ((2,), -2.0), ((3,), -0.5)], (4,))
        loss, grad = mwer_loss(nbest)
        assert loss == pytest.approx(1.0)
        np.testing.assert_allclose(grad, 0.0, atol=1e-15)

    def test_two_hypotheses(self):
        nbest = build_nbest([((1, 2), -1.0), ((3, 4), -1.0)], (1, 2))
        loss, grad = mwer_loss(nbest)
        assert loss == pytest.approx(1.0)
        np.testing.assert_allclose(grad, [-0.5, 0.5], atol=1e-15)

    def test_gradient_sums_to_zero(self, rng):
        hyps = [(tuple(rng.integers(1, 5, size=n)), float(rng.normal(-5, 2))) for n in range(6)]
        _, grad = mwer_loss(build_nbest(hyps, (1, 2, 3)))
        assert abs(grad.sum()) <= 1e-10

    def test_matches_finite_differences_of_log_probs(self):
        tokens = [(1,), (1, 2), (2, 2, 3), (3,)]
        reference = (1, 2)
        log_probs = np.array([-1.2, -0.7, -2.5, -1.9])

        def expected_risk(lp):
            return build_nbest(list(zip(tokens, lp)), reference).expected_risk

        nbest = build_nbest(list(zip(tokens, log_probs)), reference)
        _, grad = mwer_loss(nbest)
        analytic = {h.tokens: g for h, g in zip(nbest.hypotheses, grad)}
        for i, tok in enumerate(tokens):
            numeric = central_difference(expected_risk, log_probs, (i,))
            assert analytic[tok] == pytest.approx(numeric, rel=1e-6, abs=1e-10)

    def _random_hyps(self, rng, count=7):
        return [(tuple(int(k) for k in rng.integers(1, 5, size=int(rng.integers(0, 5)))), float(rng.normal(-5, 2)))
                for _ in range(count)]

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_better_than_average_hypotheses_get_negative_gradient(self, seed):
        rng = np.random.default_rng(seed)
        nbest = build_nbest(self._random_hyps(rng), (1, 2, 3))
        expected, grad = mwer_loss(nbest)
        for risk, g in zip(nbest.risks, grad):
            assert (g < 0) == (risk < expected)
            assert (g > 0) == (risk > expected)

    @pytest.mark.parametrize("shift", [-50.0, 3.5, 200.0])
    def test_shifting_every_log_prob_changes_nothing(self, rng, shift):
        hyps = self._random_hyps(rng)
        base = build_nbest(hyps, (2, 1))
        shifted = build_nbest([(tokens, lp + shift) for tokens, lp in hyps], (2, 1))
        assert [h.tokens for h in shifted.hypotheses] == [h.tokens for h in base.hypotheses]
        np.testing.assert_allclose(shifted.posteriors, base.posteriors, rtol=0, atol=1e-10)
        base_loss, base_grad = mwer_loss(base)
        loss, grad = mwer_loss(shifted)
        assert loss == pytest.approx(base_loss, abs=1e-10)
        np.testing.assert_allclose(grad, base_grad, rtol=0, atol=1e-10)

    def test_input_order_does_not_matter(self, rng):
        hyps = self._random_hyps(rng)
        base_nbest = build_nbest(hyps, (1, 3))
        base_loss, base_grad = mwer_loss(base_nbest)
        base = dict(zip((h.tokens for h in base_nbest.hypotheses), base_grad))
        for _ in range(3):
            order = rng.permutation(len(hyps))
            nbest = build_nbest([hyps[i] for i in order], (1, 3))
            loss, grad = mwer_loss(nbest)
            assert loss == pytest.approx(base_loss, abs=1e-12)
            by_tokens = dict(zip((h.tokens for h in nbest.hypotheses), grad))
            assert by_tokens.keys() == base.keys()
            for tokens, g in by_tokens.items():
                assert g == pytest.approx(base[tokens], abs=1e-12)

    def test_permuting_the_list_permutes_the_gradient(self, rng):
        nbest = build_nbest(self._random_hyps(rng), (4, 1))
        loss, grad = mwer_loss(nbest)
        order = rng.permutation(len(nbest))
        permuted = NBestList(
            hypotheses=[nbest.hypotheses[i] for i in order],
            reference=nbest.reference,
            posteriors=nbest.posteriors[order],
            risks=nbest.risks[order],
            expected_risk=nbest.expected_risk,
            score_scales=nbest.score_scales[order],
        )
        permuted_loss, permuted_grad = mwer_loss(permuted)
        assert permuted_loss == pytest.approx(loss, abs=1e-12)
        np.testing.assert_allclose(permuted_grad, grad[order], rtol=0, atol=1e-15)


class TestBackpropToLattice:
    def _setup(self, rng, tokens, T=4, K=3):
        lattices = [JointLattice(rng.standard_normal((T, len(t) + 1, K)), t) for t in tokens]
        scored = [(lat.labels, log_likelihood_grad(lat, Head.RNNT)[0]) for lat in lattices]
        return lattices, scored

    def test_single_hypothesis_has_zero_gradient(self, rng):
        lattices, scored = self._setup(rng, [(1, 2)])
        nbest = build_nbest(scored, (2,))
        grads = mwer_backprop_to_lattice(nbest, lattices)
        np.testing.assert_array_equal(grads[0], np.zeros_like(lattices[0].logits))

    def test_mismatch(self, rng):
        lattices, scored = self._setup(rng, [(1,), (2,)])
        nbest = build_nbest(scored, (1,))
        with pytest.raises(MwerError, match="mismatch"):
            mwer_backprop_to_lattice(nbest, lattices[:1])
        with pytest.raises(MwerError, match="mismatch"):
            mwer_backprop_to_lattice(nbest, list(reversed(lattices)) if nbest.hypotheses[0].tokens == (1,) else lattices)

    @pytest.mark.parametrize("head", [Head.RNNT, Head.HAT])
    def test_full_chain_matches_finite_differences(self, rng, head):
        tokens = [(1,), (1, 2), (2, 1, 2)]
        reference = (1, 2)
        logits = [rng.standard_normal((4, len(t) + 1, 3)) for t in tokens]

        def expected_risk(index, perturbed):
            scored = []
            for i, (t, z) in enumerate(zip(tokens, logits)):
                lattice = JointLattice(perturbed if i == index else z, t)
                scored.append((t, log_likelihood_grad(lattice, head)[0]))
            return build_nbest(scored, reference).expected_risk

        lattices = {t: JointLattice(z, t) for t, z in zip(tokens, logits)}
        scored = [(t, log_likelihood_grad(lat, head)[0]) for t, lat in lattices.items()]
        nbest = build_nbest(scored, reference)
        ordered = [lattices[h.tokens] for h in nbest.hypotheses]
        analytic = {h.tokens: g for h, g in zip(nbest.hypotheses, mwer_backprop_to_lattice(nbest, ordered, head))}

        for i, t in enumerate(tokens):
            numeric = np.zeros_like(logits[i])
            for index in np.ndindex(logits[i].shape):
                numeric[index] = central_difference(lambda z: expected_risk(i, z), logits[i], index)
            assert max_relative_error(analytic[t], numeric) < 1e-4
