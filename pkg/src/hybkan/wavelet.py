"""Mother wavelets, the a-trous band decomposition, band pruning and the Wav-KAN layer."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from numpy.polynomial import hermite_e

from .module import Module
from .spline import kaiming_uniform
from .tensor import (
    ConfigError,
    DimensionError,
    check_finite,
    conv1d_same,
    gelu,
    gelu_grad,
    toeplitz_same,
)

__all__ = [
    "WAVELET_KINDS",
    "WaveletParams",
    "wavelet_eval",
    "wavelet_grad",
    "printed_sigma_grad",
    "printed_omega_grad",
    "gradient_audit",
    "write_gradient_audit",
    "sample_kernel",
    "sample_kernel_with_grad",
    "gaussian_kernel",
    "BandStack",
    "fwt",
    "fwt_backward",
    "iwt",
    "band_operators",
    "prune_count",
    "prune_mask",
    "WavKanLayer",
    "wavkan_init",
    "wavkan_param_count",
]

log = logging.getLogger(__name__)
_WARNED: set = set()

WAVELET_KINDS = ("dog", "mexican_hat", "morlet")
SIGMA_FLOOR = 1e-3
_KIND_ALIASES = {
    "dog": "dog",
    "mexicanhat": "mexican_hat",
    "mexican_hat": "mexican_hat",
    "mexhat": "mexican_hat",
    "mh": "mexican_hat",
    "morlet": "morlet",
}


def normalize_kind(kind: str) -> str:
    try:
        return _KIND_ALIASES[kind.lower().replace("-", "_")]
    except KeyError:
        raise ConfigError(f"unknown wavelet kind {kind!r}") from None


@dataclass
class WaveletParams:
    kind: str = "dog"
    sigma: float = 1.0
    tau: float = 0.0
    omega0: float = 5.0
    m: int = 1

    def __post_init__(self):
        self.kind = normalize_kind(self.kind)
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.kind == "morlet" and not self.omega0 > 0:
            raise ConfigError(f"omega0 must be positive, got {self.omega0}")
        if self.kind == "dog" and self.m < 1:
            raise ConfigError(f"DoG derivative order must be >= 1, got {self.m}")

    @property
    def n_trainable(self) -> int:
        return 3 if self.kind == "morlet" else 2


# -- closed-form kernels -----------------------------------------------------


def _hermite(order: int, s):
    coef = np.zeros(order + 1)
    coef[order] = 1.0
    return hermite_e.hermeval(s, coef)


def wavelet_eval(p: WaveletParams, x):
    """Evaluate the continuous mother wavelet at ``x`` (scalar or array).

    DoG of order ``m`` is ``(-1)^m d^m/dx^m exp(-(x-tau)^2 / 2 sigma^2)``,
    which equals ``sigma^-m He_m(s) g`` with ``s = (x-tau)/sigma``.
    """
    x = np.asarray(x, dtype=np.float64)
    u = x - p.tau
    s = u / p.sigma
    g = np.exp(-0.5 * s * s)
    if p.kind == "dog":
        return p.sigma ** (-p.m) * _hermite(p.m, s) * g
    if p.kind == "mexican_hat":
        return (1.0 - s * s) * g / math.sqrt(p.sigma)
    return g * np.cos(p.omega0 * s)


def wavelet_grad(p: WaveletParams, x) -> dict[str, np.ndarray]:
    """Analytic derivatives of :func:`wavelet_eval` w.r.t. its trainable parameters.

    Keys are ``sigma`` and ``tau`` for every kind, plus ``omega0`` for Morlet.
    """
    x = np.asarray(x, dtype=np.float64)
    sig = p.sigma
    u = x - p.tau
    s = u / sig
    g = np.exp(-0.5 * s * s)
    if p.kind == "dog":
        m = p.m
        he_m = _hermite(m, s)
        he_prev = _hermite(m - 1, s)
        d_sigma = sig ** (-m - 1) * g * (-m * he_m - m * he_prev * s + he_m * s * s)
        d_tau = sig ** (-m - 1) * _hermite(m + 1, s) * g
        return {"sigma": d_sigma, "tau": d_tau}
    if p.kind == "mexican_hat":
        psi = (1.0 - s * s) * g / math.sqrt(sig)
        d_sigma = (u * u / sig**3) * psi + sig**-1.5 * g * (2.5 * s * s - 0.5)
        d_tau = sig**-1.5 * g * s * (3.0 - s * s)
        return {"sigma": d_sigma, "tau": d_tau}
    w = p.omega0
    c, sn = np.cos(w * s), np.sin(w * s)
    d_sigma = (u * u / sig**3) * g * c + (w * u / sig**2) * g * sn
    d_tau = g * (s * c + w * sn) / sig
    d_omega = -s * g * sn
    return {"sigma": d_sigma, "tau": d_tau, "omega0": d_omega}


def printed_sigma_grad(p: WaveletParams, x):
    """Scale derivative exactly as printed in the reference formulas (kept for auditing)."""
    x = np.asarray(x, dtype=np.float64)
    sig = p.sigma
    u = x - p.tau
    g = np.exp(-u * u / (2 * sig * sig))
    psi = wavelet_eval(p, x)
    if p.kind == "dog":
        return (u * u / sig**3) * psi - (p.m / sig) * psi - 1.0
    if p.kind == "mexican_hat":
        return (u * u / sig**3) * psi + 3.0 / (2.0 * sig**1.5) * (u * u / sig**2 - 1.0) * g
    return (u * u / sig**3) * psi + (p.omega0 * u / sig**2) * g * np.sin(p.omega0 * u / sig)


def printed_omega_grad(p: WaveletParams, x):
    x = np.asarray(x, dtype=np.float64)
    u = x - p.tau
    g = np.exp(-u * u / (2 * p.sigma**2))
    return (u / p.sigma) * g * np.sin(p.omega0 * u / p.sigma)


def _fd_param(p: WaveletParams, x, name: str) -> float:
    """Richardson-extrapolated central difference, truncation error O(h^4)."""
    theta = getattr(p, name)

    def central(h):
        hi = WaveletParams(**{**p.__dict__, name: theta + h})
        lo = WaveletParams(**{**p.__dict__, name: theta - h})
        return (wavelet_eval(hi, x) - wavelet_eval(lo, x)) / (2 * h)

    h = 1e-3 * max(1.0, abs(theta))
    return (4.0 * central(h / 2) - central(h)) / 3.0


def _rel_err(a, b, floor=1e-3):
    # floor keeps Gaussian-tail values (|grad| ~ 1e-9) from turning round-off into "error"
    return abs(a - b) / max(abs(a), abs(b), floor)


AUDITED_FORMULAS = (
    ("dog-dsigma", "dog", "sigma"),
    ("mexhat-dsigma", "mexican_hat", "sigma"),
    ("morlet-dsigma", "morlet", "sigma"),
    ("morlet-domega0", "morlet", "omega0"),
)


def _random_params(rng, kind):
    return WaveletParams(
        kind=kind,
        sigma=float(rng.uniform(0.3, 3.0)),
        tau=float(rng.uniform(-1.0, 1.0)),
        omega0=float(rng.uniform(1.0, 8.0)),
    )


def gradient_audit(n_samples: int = 1000, seed: int = 0, tol: float = 1e-6) -> list[dict]:
    """Compare the reference derivative formulas and the shipped ones against central differences.

    One row per audited formula.  ``printed_*`` columns measure the reference
    expression; ``shipped_*`` columns measure :func:`wavelet_grad`.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for formula, kind, name in AUDITED_FORMULAS:
        printed_abs = printed_rel = shipped_rel = 0.0
        for _ in range(n_samples):
            p = _random_params(rng, kind)
            x = float(rng.uniform(-4.0, 4.0))
            fd = float(_fd_param(p, x, name))
            printed = printed_sigma_grad(p, x) if name == "sigma" else printed_omega_grad(p, x)
            shipped = wavelet_grad(p, x)[name]
            printed_abs = max(printed_abs, abs(float(printed) - fd))
            printed_rel = max(printed_rel, _rel_err(float(printed), fd))
            shipped_rel = max(shipped_rel, _rel_err(float(shipped), fd))
        rows.append({
            "formula": formula,
            "kind": kind,
            "parameter": name,
            "samples": n_samples,
            "printed_max_abs_dev": printed_abs,
            "printed_max_rel_dev": printed_rel,
            "printed_verdict": "agree" if printed_rel < tol else "disagree",
            "shipped_max_rel_dev": shipped_rel,
            "shipped_verdict": "agree" if shipped_rel < tol else "disagree",
        })
    return rows


def write_gradient_audit(path, rows=None) -> Path:
    rows = gradient_audit() if rows is None else rows
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return path


# -- discretised kernels -----------------------------------------------------


def kernel_radius(sigma: float, radius_mult: float = 4.0, max_radius: int | None = None) -> int:
    r = max(1, math.ceil(radius_mult * sigma))
    if max_radius is not None:
        r = min(r, max_radius)
    return r


def sample_kernel_with_grad(p: WaveletParams, radius_mult: float = 4.0, max_radius: int | None = None):
    """Return ``(taps, grads)`` where ``grads`` maps parameter name to d(taps)/d(param).

    DoG and Mexican-Hat taps are mean-subtracted so they sum to zero.
    """
    r = kernel_radius(p.sigma, radius_mult, max_radius)
    pos = np.arange(-r, r + 1, dtype=np.float64)
    taps = wavelet_eval(p, pos)
    grads = wavelet_grad(p, pos)
    if p.kind in ("dog", "mexican_hat"):
        taps = taps - taps.mean()
        grads = {k: v - v.mean() for k, v in grads.items()}
    return taps, grads


def sample_kernel(p: WaveletParams, radius_mult: float = 4.0, max_radius: int | None = None) -> np.ndarray:
    return sample_kernel_with_grad(p, radius_mult, max_radius)[0]


def gaussian_kernel(std: float, radius_mult: float = 4.0, max_radius: int | None = None) -> np.ndarray:
    r = kernel_radius(std, radius_mult, max_radius)
    pos = np.arange(-r, r + 1, dtype=np.float64)
    taps = np.exp(-0.5 * (pos / std) ** 2)
    return taps / taps.sum()


# -- a-trous decomposition ---------------------------------------------------


@dataclass
class BandStack:
    """Detail bands (finest first) plus the coarsest smooth band."""

    details: list
    approx: np.ndarray
    base_scale: float = 1.0
    levels: int = field(default=-1)

    def __post_init__(self):
        if self.levels < 0:
            self.levels = len(self.details)

    def as_array(self) -> np.ndarray:
        return np.stack([*self.details, self.approx])

    def scale(self, a: float) -> "BandStack":
        return BandStack([a * d for d in self.details], a * self.approx, self.base_scale, self.levels)

    def __add__(self, other: "BandStack") -> "BandStack":
        return BandStack([a + b for a, b in zip(self.details, other.details)],
                         self.approx + other.approx, self.base_scale, self.levels)


def _smoothing_stds(levels: int, base_scale: float):
    return [base_scale * 2.0 ** (j - 1) for j in range(1, levels + 1)]


def _check_levels(levels: int, d: int):
    if levels < 0:
        raise ConfigError(f"decomposition levels must be >= 0, got {levels}")
    if d < 2:
        raise DimensionError(f"feature axis must have at least 2 entries, got {d}")


def fwt(x: np.ndarray, levels: int, base_scale: float = 1.0, radius_mult: float = 4.0) -> BandStack:
    """Undecimated additive pyramid along the last axis.

    ``c_0 = x``, ``c_j = G_j * c_{j-1}`` with ``G_j`` a normalised Gaussian of
    std ``base_scale * 2**(j-1)``; ``details[j-1] = c_{j-1} - c_j`` and
    ``approx = c_L``.
    """
    d = x.shape[-1]
    _check_levels(levels, d)
    details = []
    c = x
    for std in _smoothing_stds(levels, base_scale):
        smooth = conv1d_same(c, gaussian_kernel(std, radius_mult, d).astype(x.dtype))
        details.append(c - smooth)
        c = smooth
    approx = c if levels else x.copy()
    return BandStack(details, approx, base_scale, levels)


def fwt_backward(grad_details, grad_approx, levels: int, base_scale: float = 1.0,
                 radius_mult: float = 4.0) -> np.ndarray:
    """Gradient w.r.t. the input of :func:`fwt` given gradients on every band."""
    d = grad_approx.shape[-1]
    acc = grad_approx
    stds = _smoothing_stds(levels, base_scale)
    for j in range(levels - 1, -1, -1):
        acc = acc - grad_details[j]
        T = toeplitz_same(gaussian_kernel(stds[j], radius_mult, d).astype(acc.dtype), d)
        acc = acc @ T.T + grad_details[j]
    return acc


def iwt(bands: BandStack) -> np.ndarray:
    """Exact synthesis for the additive pyramid: the sum of all bands."""
    out = bands.approx.copy()
    for det in bands.details:
        if det.shape != out.shape:
            raise DimensionError(f"band shape {det.shape} does not match {out.shape}")
        out = out + det
    return out


@lru_cache(maxsize=64)
def _band_operators_cached(d: int, levels: int, base_scale: float, radius_mult: float) -> np.ndarray:
    eye = np.eye(d)
    ops = []
    prev = eye
    for std in _smoothing_stds(levels, base_scale):
        nxt = prev @ toeplitz_same(gaussian_kernel(std, radius_mult, d), d)
        ops.append(prev - nxt)
        prev = nxt
    ops.append(prev)
    out = np.stack(ops)
    out.setflags(write=False)
    return out


def band_operators(d: int, levels: int, base_scale: float = 1.0, radius_mult: float = 4.0) -> np.ndarray:
    """Matrices ``A_j`` (shape ``(L+1, d, d)``) with ``band_j = x @ A_j``."""
    _check_levels(levels, d)
    return _band_operators_cached(d, levels, float(base_scale), float(radius_mult))


# -- pruning -----------------------------------------------------------------


def prune_count(rho: float, levels: int) -> int:
    if not 0.0 <= rho <= 1.0:
        raise ConfigError(f"pruning ratio must lie in [0, 1], got {rho}")
    # tolerate 0.3 * 10 == 2.9999999999999996
    return min(levels, int(math.floor(rho * levels + 1e-9)))


def prune_mask(detail_bands, rho: float) -> np.ndarray:
    """Binary keep-mask over detail bands, shape ``(L, rows)``.

    ``detail_bands`` has shape ``(L, rows, width)``.  For each row the
    ``floor(rho * L)`` detail bands with the smallest L1 norm are zeroed;
    ties prune the lower band index first.  The approximation band is not
    part of the input and is never pruned.
    """
    detail_bands = np.asarray(detail_bands)
    levels = detail_bands.shape[0]
    k = prune_count(rho, levels)
    mask = np.ones(detail_bands.shape[:2], dtype=detail_bands.dtype)
    if k == 0 or levels == 0:
        return mask
    norms = np.abs(detail_bands).sum(axis=-1)
    order = np.argsort(norms, axis=0, kind="stable")
    np.put_along_axis(mask, order[:k], 0.0, axis=0)
    return mask


# -- layer -------------------------------------------------------------------


def wavkan_param_count(d_in: int, d_out: int, levels: int = 4, kind: str = "dog") -> int:
    wp = 3 if normalize_kind(kind) == "morlet" else 2
    bands = levels + 1
    return (levels + 2) * d_in * d_out + bands * d_out + d_out + bands * wp


class WavKanLayer(Module):
    """Wavelet-KAN layer.

    Per band ``j`` of the a-trous decomposition of ``x``: filter with the
    band's sampled wavelet kernel, map to the output width with ``C[j]`` and
    modulate with ``S[j]``.  Detail bands are then pruned by rank, the
    survivors summed (the inverse transform), and ``GELU(x @ W_base.T + phi + b)``
    returned (no GELU when ``activation=False``).

    The forward pass fuses decomposition, filtering and band map into one
    ``d_in x d_out`` matrix per band; :meth:`forward_staged` runs the same
    pipeline stage by stage.  Gradients through the binary mask are
    straight-through.
    """

    def __init__(self, d_in: int, d_out: int, levels: int = 4, kind: str = "dog",
                 prune_ratio: float = 0.4, base_scale: float = 1.0, radius_mult: float = 4.0,
                 dog_order: int = 1, activation: bool = True, threshold_momentum: float = 0.1,
                 dtype=np.float64):
        super().__init__()
        if d_in < 2 or d_out < 1:
            raise ConfigError(f"WavKanLayer needs d_in >= 2 and d_out >= 1, got {d_in}x{d_out}")
        prune_count(prune_ratio, levels)
        self.d_in, self.d_out, self.levels = d_in, d_out, levels
        self.kind = normalize_kind(kind)
        self.prune_ratio, self.base_scale, self.radius_mult = prune_ratio, base_scale, radius_mult
        self.dog_order, self.activation = dog_order, activation
        self.threshold_momentum = threshold_momentum
        nb = levels + 1
        self.add_param("base_weight", np.zeros((d_out, d_in), dtype=dtype))
        self.add_param("band_weight", np.zeros((nb, d_out, d_in), dtype=dtype))
        self.add_param("band_scale", np.ones((nb, d_out), dtype=dtype))
        self.add_param("bias", np.zeros(d_out, dtype=dtype), decay=False)
        self.add_param("wavelet_sigma", np.ones(nb, dtype=dtype), decay=False)
        self.add_param("wavelet_tau", np.zeros(nb, dtype=dtype), decay=False)
        if self.kind == "morlet":
            self.add_param("wavelet_omega0", np.full(nb, 5.0, dtype=dtype), decay=False)
        # running mean of the per-row pruning threshold, used in eval mode
        self.add_buffer("prune_threshold", np.zeros(1, dtype=np.float64))
        self._cache = None

    @property
    def dtype(self):
        return self.params["base_weight"].dtype

    def wavelet(self, j: int) -> WaveletParams:
        p = self.params
        omega = float(p["wavelet_omega0"][j]) if self.kind == "morlet" else 5.0
        return WaveletParams(self.kind, float(p["wavelet_sigma"][j]), float(p["wavelet_tau"][j]),
                             omega, self.dog_order)

    def kernels(self):
        """Sampled taps and their parameter derivatives, one entry per band."""
        return [sample_kernel_with_grad(self.wavelet(j), self.radius_mult, self.d_in)
                for j in range(self.levels + 1)]

    def project(self):
        np.maximum(self.params["wavelet_sigma"], SIGMA_FLOOR, out=self.params["wavelet_sigma"])
        if self.kind == "morlet":
            np.maximum(self.params["wavelet_omega0"], SIGMA_FLOOR, out=self.params["wavelet_omega0"])

    def _mask(self, modulated: np.ndarray) -> np.ndarray:
        """Keep-mask of shape ``(L+1, rows)``; the last row (approximation) is all ones."""
        L = self.levels
        rows = modulated.shape[1]
        mask = np.ones((L + 1, rows), dtype=modulated.dtype)
        k = prune_count(self.prune_ratio, L)
        if L == 0 or k == 0:
            return mask
        details = modulated[:L]
        if self.training:
            mask[:L] = prune_mask(details, self.prune_ratio)
            norms = np.sort(np.abs(details).sum(axis=-1), axis=0)
            tau = float(norms[k - 1].mean())
            running = self.buffers["prune_threshold"]
            running[0] = (1 - self.threshold_momentum) * running[0] + self.threshold_momentum * tau
        else:
            norms = np.abs(details).sum(axis=-1)
            mask[:L] = (norms > self.buffers["prune_threshold"][0]).astype(modulated.dtype)
        return mask

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.d_in:
            raise DimensionError(f"WavKanLayer expects width {self.d_in}, got {x.shape[-1]}")
        lead = x.shape[:-1]
        x2 = x.reshape(-1, self.d_in)
        p = self.params
        dt = self.dtype
        A = band_operators(self.d_in, self.levels, self.base_scale, self.radius_mult)
        kernels = self.kernels()
        # Q_j = A_j K_j : decomposition followed by wavelet filtering
        Q = np.stack([A[j] @ toeplitz_same(kernels[j][0], self.d_in)
                      for j in range(self.levels + 1)]).astype(dt)
        fused = Q @ p["band_weight"].transpose(0, 2, 1)          # (L+1, d_in, d_out)
        mapped = x2 @ fused                                       # (L+1, rows, d_out)
        modulated = mapped * p["band_scale"][:, None, :]
        mask = self._mask(modulated)
        phi = (modulated * mask[..., None]).sum(axis=0)
        z = x2 @ p["base_weight"].T + phi + p["bias"]
        check_finite(z, "WavKanLayer")
        out = gelu(z) if self.activation else z
        self._cache = (x2, A, kernels, Q, fused, mapped, mask, z, lead)
        return out.reshape(*lead, self.d_out)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x2, A, kernels, Q, fused, mapped, mask, z, lead = self._cache
        p, g = self.params, self.grads
        gz = grad_out.reshape(-1, self.d_out)
        if self.activation:
            gz = gz * gelu_grad(z)
        g["base_weight"] += gz.T @ x2
        g["bias"] += gz.sum(axis=0)
        gmod = gz[None] * mask[..., None]                          # straight-through mask
        g["band_scale"] += (gmod * mapped).sum(axis=1)
        gmapped = gmod * p["band_scale"][:, None, :]
        gfused = x2.T @ gmapped                                    # (L+1, d_in, d_out)
        nb, rows = gmapped.shape[:2]
        # sum_b gmapped[b] @ fused[b].T as one GEMM
        gx = gz @ p["base_weight"] + (gmapped.transpose(1, 0, 2).reshape(rows, -1)
                                      @ fused.transpose(0, 2, 1).reshape(-1, self.d_in))
        g["band_weight"] += gfused.transpose(0, 2, 1) @ Q
        gQ = gfused @ p["band_weight"]                              # (L+1, d_in, d_in)
        for j, (taps, dtaps) in enumerate(kernels):
            gK = A[j].T @ gQ[j]
            r = taps.shape[0] // 2
            gtaps = np.array([np.trace(gK, offset=r - m) for m in range(taps.shape[0])])
            g["wavelet_sigma"][j] += gtaps @ dtaps["sigma"]
            g["wavelet_tau"][j] += gtaps @ dtaps["tau"]
            if self.kind == "morlet":
                g["wavelet_omega0"][j] += gtaps @ dtaps["omega0"]
        return gx.reshape(*lead, self.d_in)

    def forward_staged(self, x: np.ndarray) -> np.ndarray:
        """Unfused reference pipeline: fwt, wavelet filtering, band maps, pruning, iwt.

        Does not touch the gradient cache or the running threshold.
        """
        x2 = x.reshape(-1, self.d_in)
        p = self.params
        bands = fwt(x2, self.levels, self.base_scale, self.radius_mult)
        filtered = [conv1d_same(b, k[0].astype(self.dtype))
                    for b, k in zip([*bands.details, bands.approx], self.kernels())]
        modulated = [(f @ p["band_weight"][j].T) * p["band_scale"][j] for j, f in enumerate(filtered)]
        L = self.levels
        if L and self.training:
            keep = prune_mask(np.stack(modulated[:L]), self.prune_ratio)
        elif L:
            keep = (np.abs(np.stack(modulated[:L])).sum(-1) > self.buffers["prune_threshold"][0]).astype(self.dtype)
        pruned = BandStack([modulated[j] * keep[j][:, None] for j in range(L)], modulated[L])
        z = x2 @ p["base_weight"].T + iwt(pruned) + p["bias"]
        out = gelu(z) if self.activation else z
        return out.reshape(*x.shape[:-1], self.d_out)

    def flops_per_token(self) -> int:
        """Multiply-accumulates per input row, itemised by pipeline stage."""
        d_in, d_out, nb = self.d_in, self.d_out, self.levels + 1
        smoothing = sum(d_in * (2 * kernel_radius(s, self.radius_mult, d_in) + 1)
                        for s in _smoothing_stds(self.levels, self.base_scale))
        filtering = sum(d_in * (2 * kernel_radius(float(sig), self.radius_mult, d_in) + 1)
                        for sig in self.params["wavelet_sigma"])
        band_maps = nb * d_in * d_out
        modulation = nb * d_out
        return d_in * d_out + smoothing + filtering + band_maps + modulation


def wavkan_init(d_in: int, d_out: int, levels: int = 4, kind: str = "dog", prune_ratio: float = 0.4,
                base_scale: float = 1.0, central_frequency: float = 5.0, scale_noise: float = 0.1,
                scale_base: float = 1.0, num_scales: int | None = None, seed=None,
                activation: bool = True, dtype=np.float64, **kwargs) -> WavKanLayer:
    """Build a :class:`WavKanLayer`.

    Band ``j`` (``j = 1..L+1``) gets ``sigma = base_scale * 2**(j-1)`` jittered
    multiplicatively by ``scale_noise``, ``tau = 0`` and ``omega0 =
    central_frequency``.  Base and band maps are Kaiming-uniform scaled by
    ``scale_base``; band modulation starts at one.
    """
    if num_scales is not None and num_scales != levels + 1 and (num_scales, levels) not in _WARNED:
        _WARNED.add((num_scales, levels))
        log.info("num_scales=%d disagrees with %d bands from %d levels; using %d",
                 num_scales, levels + 1, levels, levels + 1)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    layer = WavKanLayer(d_in, d_out, levels, kind, prune_ratio, base_scale,
                        activation=activation, dtype=dtype, **kwargs)
    p = layer.params
    nb = levels + 1
    p["base_weight"][...] = kaiming_uniform(rng, (d_out, d_in), d_in, scale_base, dtype)
    p["band_weight"][...] = kaiming_uniform(rng, (nb, d_out, d_in), d_in, scale_base, dtype)
    jitter = 1.0 + scale_noise * rng.uniform(-1.0, 1.0, size=nb)
    p["wavelet_sigma"][...] = base_scale * 2.0 ** np.arange(nb) * jitter
    if layer.kind == "morlet":
        p["wavelet_omega0"][...] = central_frequency
    return layer
