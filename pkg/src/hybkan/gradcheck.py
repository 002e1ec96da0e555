"""Central finite-difference checks for every hand-written backward."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .module import Module
from .tensor import PRIMITIVES, DualOp

REL_TOL = 1e-4
ABS_TOL = 1e-7
SMALL_GRAD = 1e-4


@dataclass
class GradResult:
    name: str
    slot: str
    checked: int
    max_rel_err: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}:{self.slot} n={self.checked} max_rel_err={self.max_rel_err:.2e}"


def fd_step(theta: float) -> float:
    return 1e-5 * max(1.0, abs(theta))


def compare(analytic: float, numeric: float, rel_tol: float = REL_TOL) -> tuple[float, bool]:
    """Relative error and verdict; near-zero gradients fall back to an absolute bound."""
    diff = abs(analytic - numeric)
    scale = max(abs(analytic), abs(numeric))
    rel = diff / scale if scale > 0 else 0.0
    if scale < SMALL_GRAD:
        return rel, diff < ABS_TOL or rel < rel_tol
    return rel, rel < rel_tol


def _pick(size: int, limit: int | None, rng) -> np.ndarray:
    if limit is None or size <= limit:
        return np.arange(size)
    return np.sort(rng.choice(size, size=limit, replace=False))


def check_slot(loss: Callable[[], float], array: np.ndarray, analytic: np.ndarray, name: str,
               slot: str, limit: int | None = None, rng=None, rel_tol: float = REL_TOL) -> GradResult:
    """Perturb entries of ``array`` in place and compare ``d loss`` with ``analytic``."""
    rng = rng or np.random.default_rng(0)
    flat = array.reshape(-1)
    ana = analytic.reshape(-1)
    worst, ok = 0.0, True
    idx = _pick(flat.size, limit, rng)
    for i in idx:
        orig = flat[i]
        h = fd_step(float(orig))
        flat[i] = orig + h
        up = loss()
        flat[i] = orig - h
        down = loss()
        flat[i] = orig
        numeric = (up - down) / (2 * h)
        rel, good = compare(float(ana[i]), numeric, rel_tol)
        if max(abs(float(ana[i])), abs(numeric)) >= SMALL_GRAD or not good:
            worst = max(worst, rel)
        ok &= good
    return GradResult(name, slot, len(idx), worst, bool(ok))


def check_module(module: Module, x: np.ndarray, name: str, limit: int | None = 25, seed: int = 0,
                 check_input: bool = True, forward: Callable | None = None,
                 backward: Callable | None = None) -> list[GradResult]:
    """Check every parameter slot (and the input) of ``module`` on the loss ``sum(R * f(x))``."""
    rng = np.random.default_rng(seed)
    fwd = forward or module.forward
    bwd = backward or module.backward
    out = fwd(x)
    proj = rng.standard_normal(out.shape)

    def loss():
        return float((fwd(x) * proj).sum())

    module.zero_grad()
    fwd(x)
    gx = bwd(proj.astype(out.dtype))
    grads = {k: v.copy() for k, v in module.named_grads()}
    params = dict(module.named_parameters())
    results = [check_slot(loss, params[k], grads[k], name, k, limit, rng) for k in params]
    if check_input and gx is not None:
        results.append(check_slot(loss, x, gx, name, "input", limit, rng))
    return results


def check_dualop(op: DualOp, seed: int = 0, dtype=np.float64) -> list[GradResult]:
    rng = np.random.default_rng(seed)
    inputs = [a.copy() for a in op.sample(rng, np.dtype(dtype))]
    out = op.forward(*inputs)
    proj = rng.standard_normal(out.shape)
    grads = op.backward(inputs, out, proj)

    def loss():
        return float((op.forward(*inputs) * proj).sum())

    return [check_slot(loss, arr, g, op.name, f"arg{i}", None, rng)
            for i, (arr, g) in enumerate(zip(inputs, grads))]


def check_loss(fn, logits: np.ndarray, labels: np.ndarray, name: str, rel_tol: float = 1e-6,
               **kw) -> GradResult:
    _, grad = fn(logits, labels, **kw)

    def loss():
        return float(fn(logits, labels, **kw)[0])

    return check_slot(loss, logits, grad, name, "logits", None, None, rel_tol)


def run_suite(seed: int = 0, limit: int | None = 25, verbose: Callable[[str], None] | None = None
              ) -> list[GradResult]:
    """Full 64-bit gradient suite: primitives, layers, blocks, heads, losses and every model variant."""
    from .spline import effkan_init
    from .train import cross_entropy_smoothed
    from .vit import (
        VARIANTS,
        AttentionBlock,
        EncoderBlock,
        MlpBlock,
        VisionTransformer,
        make_config,
        make_head,
    )
    from .wavelet import WAVELET_KINDS, wavkan_init

    rng = np.random.default_rng(seed)
    results: list[GradResult] = []

    def emit(rs: Iterable[GradResult]):
        for r in rs:
            results.append(r)
            if verbose:
                verbose(r.line())

    for op in PRIMITIVES:
        emit(check_dualop(op, seed))

    emit(check_module(MlpBlock(6, 10, rng), rng.standard_normal((2, 3, 6)), "MlpBlock", limit))
    emit(check_module(effkan_init(6, 5, seed=rng), rng.standard_normal((7, 6)), "EffKanLayer", limit))
    for kind in WAVELET_KINDS:
        layer = wavkan_init(6, 5, levels=2, kind=kind, seed=rng)
        emit(check_module(layer, rng.standard_normal((7, 6)), f"WavKanLayer[{kind}]", limit))
    emit(check_module(AttentionBlock(8, 2, rng), rng.standard_normal((2, 3, 8)), "AttentionBlock", limit))

    toy = dict(image_size=8, patch_size=4, in_channels=1, depth=1, heads=2, dim=8, ffn_width=12,
               num_classes=4, precision=64)
    for variant in VARIANTS:
        cfg = make_config(variant, "toy", **toy)
        emit(check_module(EncoderBlock(cfg, rng), rng.standard_normal((2, 3, 8)),
                          f"EncoderBlock[{variant}]", limit))
        emit(check_module(make_head(cfg, rng), rng.standard_normal((3, 8)), f"Head[{cfg.head_kind}:{variant}]",
                          limit))
        model = VisionTransformer(cfg, seed=seed)
        images = rng.standard_normal((2, 1, 8, 8))
        emit(check_module(model, images, f"Model[{variant}]", limit, check_input=False))

    logits = rng.standard_normal((4, 10))
    labels = rng.integers(0, 10, size=4)
    emit([check_loss(cross_entropy_smoothed, logits, labels, "CrossEntropy[eps=0.1]", smoothing=0.1)])
    emit([check_loss(cross_entropy_smoothed, logits, labels, "CrossEntropy[eps=0]", smoothing=0.0)])
    return results
