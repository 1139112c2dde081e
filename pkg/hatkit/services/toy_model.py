"""Desk-scale transducer: tanh RNN encoder, tanh RNN prediction network, relu joiner.

    h_t = tanh(x_t·Wx + h_{t-1}·Wh + b)          f_t = h_t·P_enc
    s_u = tanh(e_u·Wx' + s_{u-1}·Wh' + b')        g_u = s_u·P_pred + c
    z_{t,u} = relu(f_t + g_u)·W_joint + b_joint

e_0 is the zero vector (no label yet); e_u is the embedding row of y_u for u ≥ 1.
Backpropagation is written out by hand, full-sequence BPTT for both recurrences.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from hatkit.core.errors import LabelError, ModelError
from hatkit.schemas.config import ModelDims
from hatkit.schemas.vocab import LabelSequence
from hatkit.services.lattice import JointLattice

logger = logging.getLogger(__name__)

# Fixed order: checkpoints, optimizer state and gradient reductions iterate in this order.
PARAM_NAMES = (
    "enc_wx",
    "enc_wh",
    "enc_b",
    "enc_proj",
    "embed",
    "pred_wx",
    "pred_wh",
    "pred_b",
    "pred_proj",
    "pred_proj_b",
    "joint_w",
    "joint_b",
)


def param_shapes(dims: ModelDims) -> Dict[str, Tuple[int, ...]]:
    K = dims.vocab_size + 1
    return {
        "enc_wx": (dims.input_dim, dims.d_h),
        "enc_wh": (dims.d_h, dims.d_h),
        "enc_b": (dims.d_h,),
        "enc_proj": (dims.d_h, dims.d_j),
        "embed": (dims.vocab_size, dims.d_e),
        "pred_wx": (dims.d_e, dims.d_p),
        "pred_wh": (dims.d_p, dims.d_p),
        "pred_b": (dims.d_p,),
        "pred_proj": (dims.d_p, dims.d_j),
        "pred_proj_b": (dims.d_j,),
        "joint_w": (dims.d_j, K),
        "joint_b": (K,),
    }


@dataclass
class ToyModelParams:
    dims: ModelDims
    tensors: Dict[str, np.ndarray]

    def __post_init__(self):
        shapes = param_shapes(self.dims)
        if set(self.tensors) != set(PARAM_NAMES):
            raise ModelError("config error")
        for name in PARAM_NAMES:
            tensor = np.asarray(self.tensors[name], dtype=np.float64)
            if tensor.shape != shapes[name]:
                raise ModelError(f"config error: {name} has shape {tensor.shape}, expected {shapes[name]}")
            self.tensors[name] = tensor

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        for name in PARAM_NAMES:
            yield name, self.tensors[name]

    @property
    def vocab_size(self) -> int:
        return self.dims.vocab_size

    @property
    def extended_size(self) -> int:
        return self.dims.vocab_size + 1

    def copy(self) -> "ToyModelParams":
        return ToyModelParams(dims=self.dims, tensors={name: t.copy() for name, t in self.items()})

    def zeros_like(self) -> Dict[str, np.ndarray]:
        return {name: np.zeros_like(t) for name, t in self.items()}

    def equals(self, other: "ToyModelParams") -> bool:
        return self.dims == other.dims and all(
            np.array_equal(t, other.tensors[name]) for name, t in self.items()
        )


def init_params(dims: ModelDims, seed: int = 0, scale: Optional[float] = None) -> ToyModelParams:
    """Seeded Gaussian weights scaled by 1/sqrt(fan_in); zero biases."""
    scale = dims.init_scale if scale is None else scale
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(dims).items():
        if len(shape) == 1:
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = rng.standard_normal(shape) * (scale / np.sqrt(shape[0]))
    logger.debug(f"Initialized toy model params (seed={seed}, scale={scale}, dims={dims})")
    return ToyModelParams(dims=dims, tensors=tensors)


def zero_params(dims: ModelDims) -> ToyModelParams:
    return ToyModelParams(dims=dims, tensors={n: np.zeros(s) for n, s in param_shapes(dims).items()})


@dataclass
class EncoderCache:
    x: np.ndarray
    h: np.ndarray
    f: np.ndarray


@dataclass
class PredictorCache:
    e: np.ndarray
    s: np.ndarray
    g: np.ndarray


def check_features(params: ToyModelParams, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.dims.input_dim:
        raise ModelError("config error")
    if x.shape[0] < 1:
        raise ModelError("empty feature sequence")
    if not np.all(np.isfinite(x)):
        raise ModelError("features must be finite")
    return x


def check_labels(params: ToyModelParams, labels) -> LabelSequence:
    tokens = tuple(int(k) for k in labels)
    for k in tokens:
        if not 1 <= k <= params.vocab_size:
            raise LabelError("invalid label")
    return tokens


def encode(params: ToyModelParams, features: np.ndarray) -> EncoderCache:
    x = check_features(params, features)
    T = x.shape[0]
    h = np.zeros((T, params.dims.d_h))
    prev = np.zeros(params.dims.d_h)
    for t in range(T):
        prev = np.tanh(x[t] @ params["enc_wx"] + prev @ params["enc_wh"] + params["enc_b"])
        h[t] = prev
    return EncoderCache(x=x, h=h, f=h @ params["enc_proj"])


def predictor_step(params: ToyModelParams, s_prev: np.ndarray, token: Optional[int]) -> Tuple[np.ndarray, np.ndarray]:
    """One prediction-network step; ``token`` None is the start step (zero embedding)."""
    e = np.zeros(params.dims.d_e) if token is None else params["embed"][token - 1]
    s = np.tanh(e @ params["pred_wx"] + s_prev @ params["pred_wh"] + params["pred_b"])
    return s, s @ params["pred_proj"] + params["pred_proj_b"]


def predict(params: ToyModelParams, labels: LabelSequence) -> PredictorCache:
    tokens = check_labels(params, labels)
    U1 = len(tokens) + 1
    e = np.zeros((U1, params.dims.d_e))
    for u, k in enumerate(tokens, start=1):
        e[u] = params["embed"][k - 1]
    s = np.zeros((U1, params.dims.d_p))
    prev = np.zeros(params.dims.d_p)
    for u in range(U1):
        prev = np.tanh(e[u] @ params["pred_wx"] + prev @ params["pred_wh"] + params["pred_b"])
        s[u] = prev
    return PredictorCache(e=e, s=s, g=s @ params["pred_proj"] + params["pred_proj_b"])


def joint(params: ToyModelParams, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """J(f + g) for broadcastable f and g with trailing dimension d_j."""
    return np.maximum(f + g, 0.0) @ params["joint_w"] + params["joint_b"]


def model_forward(params: ToyModelParams, features: np.ndarray, labels: LabelSequence) -> JointLattice:
    """Joint lattice z[t][u][k] for one utterance."""
    enc = encode(params, features)
    pred = predict(params, labels)
    logits = joint(params, enc.f[:, None, :], pred.g[None, :, :])
    return JointLattice(logits=logits, labels=tuple(int(k) for k in labels))


def internal_lm_logits(params: ToyModelParams, labels: LabelSequence) -> np.ndarray:
    """J(g_u) with the acoustic term set to zero, for u = 0..U-1 (shape (U, |V̄|))."""
    pred = predict(params, labels)
    return joint(params, 0.0, pred.g[:-1])


def _rnn_backward(
    inputs: np.ndarray, states: np.ndarray, d_states: np.ndarray, w_h: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """BPTT through s_i = tanh(in_i·Wx + s_{i-1}·Wh + b) with s_{-1} = 0.

    Returns (dWx, dWh, db, d_pre) where d_pre[i] is the gradient at step i's pre-activation.
    """
    n = states.shape[0]
    d_wx = np.zeros((inputs.shape[1], states.shape[1]))
    d_wh = np.zeros_like(w_h)
    d_b = np.zeros(states.shape[1])
    d_pre_all = np.zeros((n, states.shape[1]))
    carry = np.zeros(states.shape[1])
    for i in range(n - 1, -1, -1):
        d_pre = (d_states[i] + carry) * (1.0 - states[i] ** 2)
        prev = states[i - 1] if i > 0 else np.zeros(states.shape[1])
        d_wx += np.outer(inputs[i], d_pre)
        d_wh += np.outer(prev, d_pre)
        d_b += d_pre
        d_pre_all[i] = d_pre
        carry = d_pre @ w_h.T
    return d_wx, d_wh, d_b, d_pre_all


def model_backward(
    params: ToyModelParams,
    features: np.ndarray,
    labels: LabelSequence,
    dloss_dz: np.ndarray,
) -> Dict[str, np.ndarray]:
    """Parameter gradients of a scalar loss given ∂loss/∂z for the utterance's lattice."""
    enc = encode(params, features)
    tokens = check_labels(params, labels)
    pred = predict(params, tokens)
    dz = np.asarray(dloss_dz, dtype=np.float64)
    expected = (enc.f.shape[0], pred.g.shape[0], params.extended_size)
    if dz.shape != expected:
        raise ModelError(f"gradient shape {dz.shape} does not match lattice shape {expected}")

    grads = params.zeros_like()
    pre = enc.f[:, None, :] + pred.g[None, :, :]
    active = np.maximum(pre, 0.0)
    grads["joint_w"] = np.einsum("tuj,tuk->jk", active, dz)
    grads["joint_b"] = dz.sum(axis=(0, 1))
    d_pre = (dz @ params["joint_w"].T) * (pre > 0.0)
    d_f = d_pre.sum(axis=1)
    d_g = d_pre.sum(axis=0)

    grads["enc_proj"] = enc.h.T @ d_f
    d_wx, d_wh, d_b, _ = _rnn_backward(enc.x, enc.h, d_f @ params["enc_proj"].T, params["enc_wh"])
    grads["enc_wx"], grads["enc_wh"], grads["enc_b"] = d_wx, d_wh, d_b

    grads["pred_proj"] = pred.s.T @ d_g
    grads["pred_proj_b"] = d_g.sum(axis=0)
    d_wx, d_wh, d_b, d_pre_s = _rnn_backward(pred.e, pred.s, d_g @ params["pred_proj"].T, params["pred_wh"])
    grads["pred_wx"], grads["pred_wh"], grads["pred_b"] = d_wx, d_wh, d_b
    d_e = d_pre_s @ params["pred_wx"].T
    for u, k in enumerate(tokens, start=1):
        grads["embed"][k - 1] += d_e[u]
    return grads


@dataclass(frozen=True)
class PredictorState:
    s: np.ndarray
    g: np.ndarray


class ToyScorer:
    """Decoder-facing view of a ToyModelParams (see ``decoder.TransducerScorer``)."""

    def __init__(self, params: ToyModelParams):
        self.params = params
        self.extended_size = params.extended_size

    def encode(self, features: np.ndarray) -> np.ndarray:
        return encode(self.params, features).f

    def initial_state(self) -> PredictorState:
        s, g = predictor_step(self.params, np.zeros(self.params.dims.d_p), None)
        return PredictorState(s=s, g=g)

    def advance(self, state: PredictorState, token: int) -> PredictorState:
        s, g = predictor_step(self.params, state.s, token)
        return PredictorState(s=s, g=g)

    def joint_logits(self, enc_t: np.ndarray, state: PredictorState) -> np.ndarray:
        return joint(self.params, enc_t, state.g)

    def ilm_logits(self, state: PredictorState) -> np.ndarray:
        return joint(self.params, 0.0, state.g)

    def lattice(self, features: np.ndarray, labels: LabelSequence) -> JointLattice:
        return model_forward(self.params, features, labels)
