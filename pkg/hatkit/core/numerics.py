"""Log-space arithmetic shared by every lattice, head, loss and decoder.

All values are 64-bit floats. ``-inf`` is the canonical log-zero; every function here
treats ``-inf + finite`` as ``-inf`` and never turns two non-NaN inputs into NaN.
"""

from typing import Iterable, Union

import numpy as np

from hatkit.core.errors import NumericsError

LOG_ZERO = float("-inf")

ArrayLike = Union[np.ndarray, Iterable[float]]


def log_sum_exp(values: ArrayLike) -> float:
    """ln Σ exp(v), computed by shifting with the maximum."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise NumericsError("empty reduction")
    x_max = x.max()
    if x_max == LOG_ZERO:
        return LOG_ZERO
    if np.isposinf(x_max):
        return float(x_max)
    return float(x_max + np.log(np.sum(np.exp(x - x_max))))


def log_sum_exp_axis(x: np.ndarray, axis: int) -> np.ndarray:
    """Array version of :func:`log_sum_exp` along one axis; all--inf slices stay -inf."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[axis] == 0:
        raise NumericsError("empty reduction")
    x_max = np.max(x, axis=axis, keepdims=True)
    safe_max = np.where(np.isfinite(x_max), x_max, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - safe_max), axis=axis, keepdims=True)) + safe_max
    out = np.where(x_max == LOG_ZERO, LOG_ZERO, out)
    return np.squeeze(out, axis=axis)


def log_add(a: float, b: float) -> float:
    """ln(exp(a) + exp(b)) for two scalars."""
    if a == LOG_ZERO:
        return b
    if b == LOG_ZERO:
        return a
    if a > b:
        return a + float(np.log1p(np.exp(b - a)))
    return b + float(np.log1p(np.exp(a - b)))


def _check_temperature(temperature: float) -> None:
    if not temperature > 0:
        raise NumericsError("invalid temperature")


def log_softmax(logits: ArrayLike, temperature: float = 1.0, axis: int = -1) -> np.ndarray:
    """log of softmax(logits / temperature) along ``axis``."""
    _check_temperature(temperature)
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - np.max(z, axis=axis, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def stable_softmax(logits: ArrayLike, temperature: float = 1.0, axis: int = -1) -> np.ndarray:
    """softmax(logits / temperature) with max-shift stabilization."""
    _check_temperature(temperature)
    z = np.asarray(logits, dtype=np.float64) / temperature
    e = np.exp(z - np.max(z, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def sigmoid(x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """1 / (1 + exp(-x)) without overflow on either tail."""
    x_arr = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x_arr))
    out = np.where(x_arr >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return float(out) if out.ndim == 0 else out


def log_sigmoid(x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """ln sigmoid(x) = -ln(1 + exp(-x))."""
    out = -np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))
    return float(out) if out.ndim == 0 else out
