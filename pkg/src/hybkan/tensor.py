"""Dense tensor primitives with paired forward/backward implementations.

Tensors are plain ``numpy.ndarray`` objects.  Every primitive used by the
layers has a forward function and a backward function that maps the output
gradient back to each input slot.  Primitives are pure: they never mutate
their arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

__all__ = [
    "DimensionError",
    "ConfigError",
    "NonFiniteError",
    "DualOp",
    "PRIMITIVES",
    "resolve_dtype",
    "check_finite",
    "matmul",
    "matmul_backward",
    "softmax_rows",
    "softmax_rows_backward",
    "layer_norm",
    "layer_norm_backward",
    "gelu",
    "gelu_grad",
    "gelu_backward",
    "conv1d_same",
    "conv1d_same_backward",
    "toeplitz_same",
]

LAYER_NORM_EPS = 1e-5
_SQRT_HALF = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ConfigError(ValueError):
    """A configuration value is invalid."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf appeared where only finite values are allowed."""


def resolve_dtype(precision) -> np.dtype:
    """Map ``32``/``64`` (or a numpy dtype) to a float dtype."""
    if precision in (32, "32", np.float32):
        return np.dtype(np.float32)
    if precision in (64, "64", np.float64):
        return np.dtype(np.float64)
    try:
        dt = np.dtype(precision)
    except TypeError as exc:
        raise ConfigError(f"unsupported precision {precision!r}") from exc
    if dt not in (np.float32, np.float64):
        raise ConfigError(f"unsupported precision {precision!r}")
    return dt


def check_finite(x: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite values produced by {where}")
    return x


# -- matmul ------------------------------------------------------------------


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim < 1 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return check_finite(a @ b, "matmul")


def matmul_backward(a, b, grad_out):
    """Return ``(grad_a, grad_b)`` for ``out = a @ b`` (``a`` may be batched)."""
    grad_a = grad_out @ b.T
    a2 = a.reshape(-1, a.shape[-1])
    g2 = grad_out.reshape(-1, grad_out.shape[-1])
    return grad_a, a2.T @ g2


# -- softmax -----------------------------------------------------------------


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, stabilised by row-max subtraction."""
    check_finite(x, "softmax_rows input")
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_rows_backward(y: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the softmax input given its output ``y``."""
    dot = (grad_out * y).sum(axis=-1, keepdims=True)
    return y * (grad_out - dot)


# -- layer norm --------------------------------------------------------------


def layer_norm(x, gamma, beta, eps: float = LAYER_NORM_EPS):
    """Normalise the last axis, then apply the affine map.

    Returns ``(out, cache)``; the cache feeds :func:`layer_norm_backward`.
    """
    if x.shape[-1] != gamma.shape[0] or gamma.shape != beta.shape:
        raise DimensionError(f"layer_norm: width {x.shape[-1]} vs gamma {gamma.shape}")
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    out = xhat * gamma + beta
    return check_finite(out, "layer_norm"), (xhat, inv_std)


def layer_norm_backward(cache, gamma, grad_out):
    """Return ``(grad_x, grad_gamma, grad_beta)``."""
    xhat, inv_std = cache
    d = xhat.shape[-1]
    lead = tuple(range(xhat.ndim - 1))
    grad_gamma = (grad_out * xhat).sum(axis=lead)
    grad_beta = grad_out.sum(axis=lead)
    gxhat = grad_out * gamma
    grad_x = inv_std / d * (
        d * gxhat
        - gxhat.sum(axis=-1, keepdims=True)
        - xhat * (gxhat * xhat).sum(axis=-1, keepdims=True)
    )
    return grad_x, grad_gamma, grad_beta


# -- GELU --------------------------------------------------------------------


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GELU, ``x * Phi(x)`` with the Gaussian CDF (no tanh approximation)."""
    return x * (0.5 * (1.0 + erf(x * _SQRT_HALF)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf(x * _SQRT_HALF))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return cdf + x * pdf


def gelu_backward(x, grad_out):
    return grad_out * gelu_grad(x)


# -- conv1d along the feature axis -------------------------------------------


def _check_kernel(kernel: np.ndarray, d: int) -> int:
    w = kernel.shape[0]
    if kernel.ndim != 1 or w % 2 == 0:
        raise ConfigError(f"conv1d kernel width must be odd, got {kernel.shape}")
    if w > 2 * d + 1:
        raise ConfigError(f"conv1d kernel width {w} exceeds 2*{d}+1")
    return w // 2


def toeplitz_same(kernel: np.ndarray, d: int) -> np.ndarray:
    """Banded ``d x d`` matrix ``T`` with ``x @ T == conv1d_same(x, kernel)``."""
    r = _check_kernel(kernel, d)
    idx = np.arange(d)
    offset = idx[:, None] - idx[None, :] + r  # T[a, i] = k[a - i + r]
    inside = (offset >= 0) & (offset < kernel.shape[0])
    T = np.zeros((d, d), dtype=kernel.dtype)
    T[inside] = kernel[offset[inside]]
    return T


def conv1d_same(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Zero-padded correlation along the last axis, output the same length.

    ``out[..., i] = sum_m kernel[m] * x[..., i + m - r]`` with ``r = w // 2``.
    Positions near either edge see zeros beyond the signal, so a normalised
    kernel attenuates a constant signal there.
    """
    d = x.shape[-1]
    T = toeplitz_same(kernel, d)
    return check_finite(x @ T, "conv1d_same")


def conv1d_same_backward(x, kernel, grad_out):
    """Return ``(grad_x, grad_kernel)``."""
    d = x.shape[-1]
    r = _check_kernel(kernel, d)
    T = toeplitz_same(kernel, d)
    grad_x = grad_out @ T.T
    gT = x.reshape(-1, d).T @ grad_out.reshape(-1, d)
    grad_kernel = np.array(
        [np.trace(gT, offset=r - m) for m in range(kernel.shape[0])], dtype=gT.dtype
    )
    return grad_x, grad_kernel


# -- registry ----------------------------------------------------------------


@dataclass(frozen=True)
class DualOp:
    """A primitive paired with its backward.

    ``forward(*inputs) -> out``; ``backward(inputs, out, grad_out)`` returns
    one gradient per input, in order.  ``sample(rng, dtype)`` draws a valid
    random input tuple for gradient checks.
    """

    name: str
    forward: Callable[..., np.ndarray]
    backward: Callable[[Sequence[np.ndarray], np.ndarray, np.ndarray], tuple]
    sample: Callable[[np.random.Generator, np.dtype], tuple]


def _ln_forward(x, g, b):
    return layer_norm(x, g, b)[0]


def _ln_backward(inputs, out, grad_out):
    x, g, b = inputs
    _, cache = layer_norm(x, g, b)
    return layer_norm_backward(cache, g, grad_out)


PRIMITIVES: tuple[DualOp, ...] = (
    DualOp(
        "matmul",
        matmul,
        lambda inp, out, g: matmul_backward(inp[0], inp[1], g),
        lambda rng, dt: (rng.standard_normal((3, 4)).astype(dt), rng.standard_normal((4, 2)).astype(dt)),
    ),
    DualOp(
        "softmax_rows",
        softmax_rows,
        lambda inp, out, g: (softmax_rows_backward(out, g),),
        lambda rng, dt: (rng.standard_normal((3, 5)).astype(dt),),
    ),
    DualOp(
        "layer_norm",
        _ln_forward,
        _ln_backward,
        lambda rng, dt: (
            rng.standard_normal((4, 8)).astype(dt),
            rng.standard_normal(8).astype(dt),
            rng.standard_normal(8).astype(dt),
        ),
    ),
    DualOp(
        "gelu",
        gelu,
        lambda inp, out, g: (gelu_backward(inp[0], g),),
        lambda rng, dt: (rng.standard_normal((3, 4)).astype(dt) * 2,),
    ),
    DualOp(
        "conv1d_same",
        conv1d_same,
        lambda inp, out, g: conv1d_same_backward(inp[0], inp[1], g),
        lambda rng, dt: (rng.standard_normal((3, 7)).astype(dt), rng.standard_normal(5).astype(dt)),
    ),
)
