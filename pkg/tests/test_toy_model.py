import numpy as np
import pytest

from hatkit.core.errors import LabelError, ModelError
from hatkit.services.selfcheck import max_relative_error
from hatkit.services.toy_model import (
    PARAM_NAMES,
    ToyModelParams,
    ToyScorer,
    init_params,
    internal_lm_logits,
    model_backward,
    model_forward,
    param_shapes,
    zero_params,
)
from tests.conftest import central_difference


@pytest.fixture
def features(rng, tiny_dims):
    return rng.standard_normal((5, tiny_dims.input_dim))


class TestParams:
    def test_seeded_init(self, tiny_dims):
        first, second = init_params(tiny_dims, seed=7), init_params(tiny_dims, seed=7)
        assert first.equals(second)
        assert not first.equals(init_params(tiny_dims, seed=8))
        assert np.all(first["enc_b"] == 0.0)
        assert np.all(first["joint_b"] == 0.0)

    def test_copy_is_independent(self, tiny_params):
        clone = tiny_params.copy()
        clone["joint_w"][0, 0] += 1.0
        assert not clone.equals(tiny_params)

    def test_wrong_shape(self, tiny_dims):
        tensors = {name: np.zeros(shape) for name, shape in param_shapes(tiny_dims).items()}
        tensors["embed"] = np.zeros((2, 2))
        with pytest.raises(ModelError, match="config error"):
            ToyModelParams(dims=tiny_dims, tensors=tensors)

    def test_missing_tensor(self, tiny_dims):
        tensors = {name: np.zeros(shape) for name, shape in param_shapes(tiny_dims).items()}
        del tensors["pred_b"]
        with pytest.raises(ModelError):
            ToyModelParams(dims=tiny_dims, tensors=tensors)


class TestForward:
    def test_zero_params_give_flat_logits(self, tiny_dims, features):
        lattice = model_forward(zero_params(tiny_dims), features, (1, 3))
        assert lattice.logits.shape == (5, 3, 4)
        assert np.all(lattice.logits == 0.0)

    def test_empty_label_sequence(self, tiny_params, features):
        assert model_forward(tiny_params, features, ()).logits.shape == (5, 1, 4)

    def test_matches_straight_line_computation(self, tiny_params, features):
        p = tiny_params
        labels = (2, 1)
        h = np.zeros(p.dims.d_h)
        f = []
        for x_t in features:
            h = np.tanh(x_t @ p["enc_wx"] + h @ p["enc_wh"] + p["enc_b"])
            f.append(h @ p["enc_proj"])
        s = np.zeros(p.dims.d_p)
        g = []
        for e in [np.zeros(p.dims.d_e)] + [p["embed"][k - 1] for k in labels]:
            s = np.tanh(e @ p["pred_wx"] + s @ p["pred_wh"] + p["pred_b"])
            g.append(s @ p["pred_proj"] + p["pred_proj_b"])
        logits = model_forward(p, features, labels).logits
        for t in range(len(f)):
            for u in range(len(g)):
                expected = np.maximum(f[t] + g[u], 0.0) @ p["joint_w"] + p["joint_b"]
                np.testing.assert_allclose(logits[t, u], expected, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("labels", [(0,), (4,), (1, -1)])
    def test_invalid_labels(self, tiny_params, features, labels):
        with pytest.raises(LabelError, match="invalid label"):
            model_forward(tiny_params, features, labels)

    def test_wrong_feature_width(self, tiny_params, rng):
        with pytest.raises(ModelError, match="config error"):
            model_forward(tiny_params, rng.standard_normal((3, 7)), (1,))

    def test_internal_lm_logits_drop_the_acoustic_term(self, tiny_params):
        p = tiny_params
        labels = (3, 1, 2)
        s = np.zeros(p.dims.d_p)
        for u, e in enumerate([np.zeros(p.dims.d_e)] + [p["embed"][k - 1] for k in labels[:-1]]):
            s = np.tanh(e @ p["pred_wx"] + s @ p["pred_wh"] + p["pred_b"])
            g = s @ p["pred_proj"] + p["pred_proj_b"]
            np.testing.assert_allclose(
                internal_lm_logits(p, labels)[u], np.maximum(g, 0.0) @ p["joint_w"] + p["joint_b"], atol=1e-12
            )


class TestBackward:
    def test_zero_upstream_gradient(self, tiny_params, features):
        grads = model_backward(tiny_params, features, (1, 2), np.zeros((5, 3, 4)))
        assert set(grads) == set(PARAM_NAMES)
        assert all(np.all(g == 0.0) for g in grads.values())

    def test_shape_mismatch(self, tiny_params, features):
        with pytest.raises(ModelError):
            model_backward(tiny_params, features, (1, 2), np.zeros((5, 2, 4)))

    def test_finite_differences(self, tiny_params, features, rng):
        labels = (2, 3, 1)
        weights = rng.standard_normal((5, 4, 4))
        grads = model_backward(tiny_params, features, labels, weights)

        for name in PARAM_NAMES:
            base = tiny_params[name]
            for _ in range(4):
                index = tuple(int(rng.integers(n)) for n in base.shape)

                def loss(value, name=name):
                    perturbed = tiny_params.copy()
                    perturbed.tensors[name] = value
                    return float(np.sum(weights * model_forward(perturbed, features, labels).logits))

                numeric = central_difference(loss, base, index, eps=1e-6)
                assert max_relative_error(grads[name][index], numeric) < 1e-5, name


class TestScorer:
    def test_incremental_states_match_the_lattice(self, tiny_params, features):
        labels = (3, 3, 1)
        scorer = ToyScorer(tiny_params)
        lattice = scorer.lattice(features, labels)
        encoded = scorer.encode(features)
        state = scorer.initial_state()
        ilm = internal_lm_logits(tiny_params, labels)
        for u in range(len(labels) + 1):
            for t in range(len(encoded)):
                np.testing.assert_allclose(scorer.joint_logits(encoded[t], state), lattice.logits[t, u], atol=1e-12)
            if u < len(labels):
                np.testing.assert_allclose(scorer.ilm_logits(state), ilm[u], atol=1e-12)
                state = scorer.advance(state, labels[u])
        assert scorer.extended_size == 4
