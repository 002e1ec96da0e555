"""B-spline basis evaluation and the Efficient-KAN layer."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .module import Module
from .tensor import ConfigError, DimensionError, check_finite, gelu, gelu_grad

__all__ = [
    "SplineGrid",
    "bspline_basis",
    "bspline_basis_with_derivative",
    "EffKanLayer",
    "effkan_init",
    "effkan_param_count",
    "kaiming_uniform",
]


@dataclass(frozen=True)
class SplineGrid:
    """Uniform knot grid over ``[range_lo, range_hi]``.

    ``grid_eps`` is carried for configuration fidelity only; nothing reads it
    because grid refitting is not implemented.
    """

    range_lo: float = -1.5
    range_hi: float = 1.5
    grid_size: int = 5
    order: int = 3
    grid_eps: float = 0.02

    def __post_init__(self):
        if self.grid_size < 1:
            raise ConfigError(f"grid_size must be positive, got {self.grid_size}")
        if self.order < 0:
            raise ConfigError(f"order must be non-negative, got {self.order}")
        if not self.range_hi > self.range_lo:
            raise ConfigError("range_hi must exceed range_lo")

    @property
    def step(self) -> float:
        return (self.range_hi - self.range_lo) / self.grid_size

    @property
    def num_basis(self) -> int:
        return self.grid_size + self.order

    @property
    def knots(self) -> np.ndarray:
        i = np.arange(-self.order, self.grid_size + self.order + 1, dtype=np.float64)
        return self.range_lo + i * self.step


def _order_zero(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    xe = x[..., None]
    basis = ((xe >= t[:-1]) & (xe < t[1:])).astype(x.dtype)
    # last span is closed on the right
    basis[..., -1] = np.where(x == t[-1], 1.0, basis[..., -1])
    return basis


def _raise_order(x: np.ndarray, t: np.ndarray, lower: np.ndarray, q: int) -> np.ndarray:
    xe = x[..., None]
    n = lower.shape[-1] - 1
    inv_l = 1.0 / (t[q : q + n] - t[:n])
    inv_r = 1.0 / (t[q + 1 : q + 1 + n] - t[1 : 1 + n])
    out = (xe - t[:n]) * inv_l
    out *= lower[..., :-1]
    right = (t[q + 1 : q + 1 + n] - xe) * inv_r
    right *= lower[..., 1:]
    out += right
    return out


def bspline_basis(x, grid: SplineGrid) -> np.ndarray:
    """Evaluate all ``grid.num_basis`` B-splines at every entry of ``x``.

    Output shape is ``x.shape + (k,)``.  Inputs outside the grid range go
    through the same recursion and fall to zero beyond the outermost knots.
    """
    return bspline_basis_with_derivative(x, grid)[0]


def bspline_basis_with_derivative(x, grid: SplineGrid):
    """Return ``(B, dB/dx)``, both of shape ``x.shape + (k,)``."""
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    t = grid.knots.astype(x.dtype)
    basis = _order_zero(x, t)
    lower = basis
    for q in range(1, grid.order + 1):
        lower = basis
        basis = _raise_order(x, t, lower, q)
    p = grid.order
    if p == 0:
        return basis, np.zeros_like(basis)
    k = basis.shape[-1]
    left = p / (t[p : p + k] - t[:k])
    right = p / (t[p + 1 : p + 1 + k] - t[1 : 1 + k])
    deriv = left * lower[..., :-1] - right * lower[..., 1:]
    return basis, deriv


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, scale: float, dtype) -> np.ndarray:
    """Uniform draw with standard deviation ``scale * sqrt(2 / fan_in)``."""
    bound = scale * math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def effkan_param_count(d_in: int, d_out: int, grid: SplineGrid = SplineGrid()) -> int:
    return (grid.num_basis + 2) * d_in * d_out + d_out


class EffKanLayer(Module):
    """Spline-augmented linear layer.

    ``z = x @ W_base.T + sum_i S[o, i] * sum_r C[o, i, r] * B_r(x_i) + b`` and
    the output is ``GELU(z)`` (or ``z`` when ``activation=False``, as used by
    classification heads).

    The base path consumes raw ``x`` and the single GELU sits after the sum.
    Upstream Efficient-KAN code instead applies SiLU to the base-path input
    and leaves the sum unactivated; this layer does not.
    """

    def __init__(self, d_in: int, d_out: int, grid: SplineGrid = SplineGrid(),
                 activation: bool = True, dtype=np.float64):
        super().__init__()
        if d_in < 1 or d_out < 1:
            raise ConfigError(f"dimensions must be positive, got {d_in}x{d_out}")
        self.d_in, self.d_out, self.grid = d_in, d_out, grid
        self.activation = activation
        k = grid.num_basis
        self.add_param("base_weight", np.zeros((d_out, d_in), dtype=dtype))
        self.add_param("spline_coef", np.zeros((d_out, d_in, k), dtype=dtype))
        self.add_param("spline_scaler", np.zeros((d_out, d_in), dtype=dtype))
        self.add_param("bias", np.zeros(d_out, dtype=dtype), decay=False)
        self._cache = None

    def scaled_spline_weight(self) -> np.ndarray:
        p = self.params
        return p["spline_coef"] * p["spline_scaler"][..., None]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.d_in:
            raise DimensionError(f"EffKanLayer expects width {self.d_in}, got {x.shape[-1]}")
        lead = x.shape[:-1]
        x2 = x.reshape(-1, self.d_in)
        basis, dbasis = bspline_basis_with_derivative(x2, self.grid)
        k = self.grid.num_basis
        basis_flat = basis.reshape(x2.shape[0], self.d_in * k)
        w_spline = self.scaled_spline_weight().reshape(self.d_out, self.d_in * k)
        p = self.params
        z = x2 @ p["base_weight"].T + basis_flat @ w_spline.T + p["bias"]
        check_finite(z, "EffKanLayer")
        out = gelu(z) if self.activation else z
        self._cache = (x2, basis_flat, dbasis, w_spline, z, lead)
        return out.reshape(*lead, self.d_out)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x2, basis_flat, dbasis, w_spline, z, lead = self._cache
        gz = grad_out.reshape(-1, self.d_out)
        if self.activation:
            gz = gz * gelu_grad(z)
        p, g = self.params, self.grads
        k = self.grid.num_basis
        g["base_weight"] += gz.T @ x2
        g["bias"] += gz.sum(axis=0)
        gw = (gz.T @ basis_flat).reshape(self.d_out, self.d_in, k)
        g["spline_coef"] += gw * p["spline_scaler"][..., None]
        g["spline_scaler"] += (gw * p["spline_coef"]).sum(axis=-1)
        gbasis = (gz @ w_spline).reshape(-1, self.d_in, k)
        gx = gz @ p["base_weight"] + (gbasis * dbasis).sum(axis=-1)
        return gx.reshape(*lead, self.d_in)

    def flops_per_token(self) -> int:
        """Multiply-accumulates per input row: base, spline mix, basis recursion."""
        p, k = self.grid.order, self.grid.num_basis
        recursion = sum(self.grid.grid_size + 2 * p - q for q in range(1, p + 1)) * 2
        return self.d_in * self.d_out * (k + 1) + self.d_in * (recursion + k)


def effkan_init(d_in: int, d_out: int, grid: SplineGrid = SplineGrid(), scale_noise: float = 0.1,
                scale_base: float = 1.0, scale_spline: float = 1.0, seed=None,
                activation: bool = True, dtype=np.float64) -> EffKanLayer:
    """Build an :class:`EffKanLayer` with Kaiming-uniform base weights and scalers.

    Spline coefficients are uniform on ``[-a, a]`` with ``a = scale_noise / grid_size``;
    the bias starts at zero.  ``seed`` may be an int or a ``numpy`` Generator.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    layer = EffKanLayer(d_in, d_out, grid, activation=activation, dtype=dtype)
    p = layer.params
    p["base_weight"][...] = kaiming_uniform(rng, (d_out, d_in), d_in, scale_base, dtype)
    p["spline_scaler"][...] = kaiming_uniform(rng, (d_out, d_in), d_in, scale_spline, dtype)
    amp = scale_noise / grid.grid_size
    p["spline_coef"][...] = rng.uniform(-amp, amp, size=p["spline_coef"].shape).astype(dtype)
    return layer
