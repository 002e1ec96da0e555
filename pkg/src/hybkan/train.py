"""Supervised training loop: smoothed cross-entropy, AdamW, warmup+cosine schedule, EMA."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .module import Module
from .tensor import ConfigError, NonFiniteError, softmax_rows

__all__ = [
    "OptimizerConfig",
    "AdamState",
    "AdamW",
    "TrainingDiverged",
    "cross_entropy_smoothed",
    "lr_at",
    "clip_by_global_norm",
    "optimizer_step",
    "topk_accuracy",
    "evaluate",
    "train",
    "METRICS_HEADER",
    "shuffle_order",
]

log = logging.getLogger(__name__)

METRICS_HEADER = ("epoch", "split", "loss", "top1", "top5", "lr", "seconds")


class TrainingDiverged(RuntimeError):
    """Loss or gradients became non-finite; the last good checkpoint is kept."""


@dataclass
class OptimizerConfig:
    lr_base: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    weight_decay: float = 0.05
    clip_norm: float = 1.0
    warmup_epochs: float = 10.0
    total_epochs: int = 300
    min_lr: float = 1e-5
    label_smoothing: float = 0.1
    ema_decay: float = 0.9998
    batch_size: int = 64

    def __post_init__(self):
        if not 0.0 < self.beta1 < self.beta2 < 1.0:
            raise ConfigError(f"need 0 < beta1 < beta2 < 1, got {self.beta1}, {self.beta2}")
        if not self.clip_norm > 0:
            raise ConfigError(f"clip_norm must be positive, got {self.clip_norm}")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError(f"label_smoothing must lie in [0, 1), got {self.label_smoothing}")
        if self.batch_size < 1 or self.total_epochs < 0:
            raise ConfigError("batch_size must be >= 1 and total_epochs >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


# -- loss --------------------------------------------------------------------


def cross_entropy_smoothed(logits: np.ndarray, labels, smoothing: float = 0.1):
    """Mean cross-entropy against ``(1 - eps) * onehot + eps / K``.

    Returns ``(loss, grad_logits)``.
    """
    if not 0.0 <= smoothing < 1.0:
        raise ConfigError(f"smoothing must lie in [0, 1), got {smoothing}")
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise IndexError(f"label out of range for {k} classes")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    target = np.full_like(logits, smoothing / k)
    target[np.arange(n), labels] += 1.0 - smoothing
    loss = float(-(target * log_p).sum() / n)
    if not math.isfinite(loss):
        raise NonFiniteError("non-finite loss")
    grad = (np.exp(log_p) - target) / n
    return loss, grad.astype(logits.dtype)


# -- schedule ----------------------------------------------------------------


def lr_at(step: int, steps_per_epoch: int, cfg: OptimizerConfig) -> float:
    """Linear warmup ``lr_base * (s+1)/W`` then cosine from ``lr_base`` down to ``min_lr``."""
    warm = int(round(cfg.warmup_epochs * steps_per_epoch))
    total = int(cfg.total_epochs * steps_per_epoch)
    if step < warm:
        return cfg.lr_base * (step + 1) / warm
    span = total - 1 - warm
    if span <= 0:
        return cfg.lr_base
    frac = min(1.0, (step - warm) / span)
    return cfg.min_lr + 0.5 * (cfg.lr_base - cfg.min_lr) * (1.0 + math.cos(math.pi * frac))


# -- optimizer ---------------------------------------------------------------


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    ema: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            0,
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: p.copy() for k, p in params.items()},
        )


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict, float]:
    """Scale all gradients together so their joint L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    if not math.isfinite(total):
        raise NonFiniteError("non-finite gradient norm")
    if total <= max_norm:
        return grads, total
    scale = max_norm / (total + 1e-12)
    return {k: g * scale for k, g in grads.items()}, total


def optimizer_step(params: dict, grads: dict, state: AdamState, cfg: OptimizerConfig, lr: float,
                   decay: dict | None = None) -> float:
    """One AdamW step in place; returns the pre-clip gradient norm.

    Order: global-norm clip, bias-corrected Adam moments, decoupled decay
    ``theta *= 1 - lr * wd`` on decay-eligible tensors, parameter update, EMA.
    A non-finite gradient aborts before anything is modified.
    """
    clipped, norm = clip_by_global_norm(grads, cfg.clip_norm)
    state.step += 1
    t = state.step
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in params.items():
        g = clipped[name]
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if decay is None or decay.get(name, True):
            p *= 1.0 - lr * cfg.weight_decay
        p -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return norm


def ema_update(state: AdamState, params: dict, decay_rate: float):
    for name, p in params.items():
        e = state.ema[name]
        e *= decay_rate
        e += (1.0 - decay_rate) * p


class AdamW:
    """Optimizer bound to a module's parameters.

    Biases, norm affine parameters, wavelet scalars and the [CLS]/positional
    tables are excluded from weight decay.
    """

    def __init__(self, model: Module, cfg: OptimizerConfig):
        self.model = model
        self.cfg = cfg
        self.params = dict(model.named_parameters())
        self.decay = model.decay_mask()
        self.state = AdamState.for_params(self.params)

    def step(self, lr: float) -> float:
        grads = dict(self.model.named_grads())
        norm = optimizer_step(self.params, grads, self.state, self.cfg, lr, self.decay)
        self.model.post_step()
        ema_update(self.state, self.params, self.cfg.ema_decay)
        return norm

    def swap_ema(self):
        """Exchange live parameters with their EMA copies (call twice to restore)."""
        for name, p in self.params.items():
            tmp = p.copy()
            p[...] = self.state.ema[name]
            self.state.ema[name][...] = tmp


# -- evaluation --------------------------------------------------------------


def topk_accuracy(logits: np.ndarray, labels, k: int) -> float:
    """Fraction of rows whose label is among the ``k`` largest scores (1.0 when ``k >= K``)."""
    labels = np.asarray(labels)
    if logits.shape[0] == 0:
        return 0.0
    if k >= logits.shape[1]:
        return 1.0
    true = logits[np.arange(len(labels)), labels][:, None]
    # rank = number of scores strictly greater than the true class score
    rank = (logits > true).sum(axis=1)
    return float((rank < k).mean())


def _batches(n: int, batch_size: int):
    for start in range(0, n, batch_size):
        yield slice(start, min(n, start + batch_size))


def evaluate(model: Module, dataset, batch_size: int = 256, smoothing: float = 0.0) -> dict:
    """Top-1/Top-5 accuracy and mean cross-entropy in eval mode."""
    was_training = model.training
    model.eval()
    try:
        n = len(dataset)
        loss_sum = top1 = top5 = 0.0
        for sl in _batches(n, batch_size):
            logits = model.forward(dataset.images[sl])
            y = dataset.labels[sl]
            m = len(y)
            loss_sum += cross_entropy_smoothed(logits, y, smoothing)[0] * m
            top1 += topk_accuracy(logits, y, 1) * m
            top5 += topk_accuracy(logits, y, 5) * m
    finally:
        model.train(was_training)
    return {"loss": loss_sum / n, "top1": top1 / n, "top5": top5 / n}


# -- training loop -----------------------------------------------------------


def shuffle_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Epoch permutation: numpy PCG64 seeded with ``SeedSequence([seed, epoch])``."""
    return np.random.default_rng([seed, epoch]).permutation(n)


@dataclass
class TrainResult:
    history: list
    initial_loss: float
    optimizer: AdamW
    checkpoint: Path | None = None

    @property
    def train_losses(self) -> list[float]:
        return [r["loss"] for r in self.history if r["split"] == "train" and r["epoch"] > 0]


def _write_metrics(path: Path, rows: list[dict]):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for r in rows:
            w.writerow([r["epoch"], r["split"], repr(r["loss"]), repr(r["top1"]), repr(r["top5"]),
                        repr(r["lr"]), f"{r['seconds']:.3f}"])


def train(model: Module, train_set, cfg: OptimizerConfig, seed: int = 0, eval_set=None,
          out_dir=None, augment_flip: bool = False, log_every: int = 0, manifest_extra=None,
          eval_ema: bool = False) -> TrainResult:
    """Train ``model`` for ``cfg.total_epochs`` epochs.

    History rows (one per epoch per split) carry ``epoch, split, loss, top1,
    top5, lr, seconds``.  Epoch 0 is a pre-training pass over the training
    set.  With ``out_dir`` set, ``metrics.csv`` and ``checkpoint.hkc`` are
    rewritten after every epoch.  ``eval_ema`` scores the eval split with the
    EMA weights instead of the live ones.
    """
    from .checkpoint import save_checkpoint

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    opt = AdamW(model, cfg)
    n = len(train_set)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    t0 = time.perf_counter()
    try:
        start = evaluate(model, train_set, smoothing=cfg.label_smoothing)
    except NonFiniteError as exc:
        raise TrainingDiverged(f"initial pass: {exc}") from exc
    history = [dict(epoch=0, split="train", lr=0.0, seconds=time.perf_counter() - t0, **start)]
    ckpt_path = None
    model.train()
    step = 0
    for epoch in range(1, cfg.total_epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_order(n, seed, epoch)
        flip_rng = np.random.default_rng([seed, epoch, 1])
        loss_sum = top1 = top5 = 0.0
        lr = 0.0
        for sl in _batches(n, cfg.batch_size):
            idx = order[sl]
            x = train_set.images[idx]
            if augment_flip:
                flip = flip_rng.random(len(idx)) < 0.5
                x = np.where(flip[:, None, None, None], x[..., ::-1], x)
            y = train_set.labels[idx]
            lr = lr_at(step, steps_per_epoch, cfg)
            try:
                logits = model.forward(x)
                loss, grad = cross_entropy_smoothed(logits, y, cfg.label_smoothing)
                model.zero_grad()
                model.backward(grad)
                opt.step(lr)
            except NonFiniteError as exc:
                raise TrainingDiverged(f"epoch {epoch} step {step}: {exc}") from exc
            m = len(y)
            loss_sum += loss * m
            top1 += topk_accuracy(logits, y, 1) * m
            top5 += topk_accuracy(logits, y, 5) * m
            step += 1
            if log_every and step % log_every == 0:
                log.info("epoch %d step %d loss %.4f lr %.2e", epoch, step, loss, lr)
        history.append(dict(epoch=epoch, split="train", loss=loss_sum / n, top1=top1 / n, top5=top5 / n,
                            lr=lr, seconds=time.perf_counter() - t0))
        if eval_set is not None:
            t1 = time.perf_counter()
            if eval_ema:
                opt.swap_ema()
            try:
                res = evaluate(model, eval_set)
            except NonFiniteError as exc:
                raise TrainingDiverged(f"epoch {epoch} eval: {exc}") from exc
            finally:
                if eval_ema:
                    opt.swap_ema()
            history.append(dict(epoch=epoch, split="eval", lr=lr, seconds=time.perf_counter() - t1, **res))
        log.info("epoch %d: %s", epoch, history[-1])
        if out is not None:
            # wall-clock seconds stay out so identical runs give identical bytes
            timeless = [{k: v for k, v in r.items() if k != "seconds"} for r in history]
            manifest = {"seed": seed, "step": step, "epoch": epoch, "optimizer": cfg.to_dict(),
                        "history": timeless}
            if manifest_extra:
                manifest.update(manifest_extra)
            ckpt_path = save_checkpoint(out / "checkpoint.hkc", model, opt, manifest)
            _write_metrics(out / "metrics.csv", history)
    return TrainResult(history, start["loss"], opt, ckpt_path)
