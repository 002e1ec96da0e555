"""Vision Transformer assembly with pluggable MLP / Eff-KAN / Wav-KAN sublayers."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .module import Module
from .spline import EffKanLayer, SplineGrid, effkan_init, effkan_param_count
from .tensor import (
    ConfigError,
    DimensionError,
    gelu,
    gelu_grad,
    layer_norm,
    layer_norm_backward,
    resolve_dtype,
    softmax_rows,
    softmax_rows_backward,
)
from .wavelet import WavKanLayer, normalize_kind, wavkan_init, wavkan_param_count

__all__ = [
    "SplineConfig",
    "WaveletConfig",
    "ModelConfig",
    "SIZE_PRESETS",
    "VARIANTS",
    "LayerNorm",
    "Linear",
    "PatchEmbed",
    "AttentionBlock",
    "MlpBlock",
    "KanFFN",
    "EncoderBlock",
    "VisionTransformer",
    "extract_patches",
    "patchify",
    "classify",
    "make_config",
    "build_model",
    "count_params",
    "analytic_param_count",
    "count_flops",
]


@dataclass
class SplineConfig:
    grid_size: int = 5
    spline_order: int = 3
    scale_noise: float = 0.1
    scale_base: float = 1.0
    scale_spline: float = 1.0
    grid_eps: float = 0.02
    grid_range_lo: float = -1.5
    grid_range_hi: float = 1.5

    @property
    def grid(self) -> SplineGrid:
        return SplineGrid(self.grid_range_lo, self.grid_range_hi, self.grid_size,
                          self.spline_order, self.grid_eps)

    @property
    def number_of_grids(self) -> int:
        return self.grid_size + self.spline_order


@dataclass
class WaveletConfig:
    num_scales: int = 6
    initial_scale: float = 1.0
    scale_noise: float = 0.1
    scale_base: float = 1.0
    central_frequency: float = 5.0
    grid_eps: float = 0.02
    pruning_ratio: float = 0.4
    decomposition_levels: int = 4


@dataclass
class ModelConfig:
    image_size: int = 224
    patch_size: int = 16
    in_channels: int = 3
    depth: int = 12
    heads: int = 6
    dim: int = 384
    ffn_width: int = 1536
    num_classes: int = 1000
    ffn_kind: str = "mlp"
    head_kind: str = "linear"
    ffn_wavelet: str = "dog"
    head_wavelet: str = "dog"
    precision: int = 32
    pos_init_std: float = 0.02
    spline: SplineConfig = field(default_factory=SplineConfig)
    wavelet: WaveletConfig = field(default_factory=WaveletConfig)

    def __post_init__(self):
        self.ffn_kind = self.ffn_kind.lower()
        self.head_kind = self.head_kind.lower()
        if self.ffn_kind not in ("mlp", "effkan", "wavkan"):
            raise ConfigError(f"unknown ffn_kind {self.ffn_kind!r}")
        if self.head_kind not in ("linear", "effkan", "wavkan"):
            raise ConfigError(f"unknown head_kind {self.head_kind!r}")
        self.ffn_wavelet = normalize_kind(self.ffn_wavelet)
        self.head_wavelet = normalize_kind(self.head_wavelet)
        if self.dim % self.heads:
            raise ConfigError(f"dim {self.dim} is not divisible by heads {self.heads}")
        if self.image_size % self.patch_size:
            raise ConfigError(f"image_size {self.image_size} is not divisible by patch_size {self.patch_size}")
        resolve_dtype(self.precision)

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def num_tokens(self) -> int:
        return self.num_patches + 1

    @property
    def dtype(self):
        return resolve_dtype(self.precision)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        spline = SplineConfig(**data.pop("spline", {}))
        wavelet = WaveletConfig(**data.pop("wavelet", {}))
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known}, spline=spline, wavelet=wavelet)


# depth, heads, dim, ffn_width, patch_size
SIZE_PRESETS = {
    "tiny": dict(depth=12, heads=3, dim=192, ffn_width=768, patch_size=16),
    "small": dict(depth=12, heads=6, dim=384, ffn_width=1536, patch_size=16),
    "base": dict(depth=12, heads=12, dim=768, ffn_width=3072, patch_size=16),
    "toy": dict(depth=4, heads=4, dim=64, ffn_width=128, patch_size=4),
}

# variant -> (ffn_kind, ffn_wavelet, head_kind, head_wavelet)
VARIANTS = {
    "vit": ("mlp", "dog", "linear", "dog"),
    "effkan": ("effkan", "dog", "effkan", "dog"),
    "wavkan-dog": ("wavkan", "dog", "wavkan", "dog"),
    "wavkan-morlet": ("wavkan", "morlet", "wavkan", "morlet"),
    "wavkan-mexhat": ("wavkan", "mexican_hat", "wavkan", "mexican_hat"),
    "hybrid1": ("wavkan", "dog", "effkan", "dog"),
    "hybrid2": ("effkan", "dog", "wavkan", "dog"),
}
_VARIANT_ALIASES = {"mlp": "vit", "wavkan": "wavkan-dog", "hybrid-1": "hybrid1", "hybrid-2": "hybrid2",
                    "wavkan-mh": "wavkan-mexhat", "eff-kan": "effkan"}


def make_config(variant: str = "vit", size: str = "small", **overrides) -> ModelConfig:
    """Config for a named variant at a named size; ``overrides`` replace any field."""
    key = _VARIANT_ALIASES.get(variant.lower(), variant.lower())
    if key not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}")
    if size.lower() not in SIZE_PRESETS:
        raise ConfigError(f"unknown size {size!r}; choose from {sorted(SIZE_PRESETS)}")
    ffn, ffn_w, head, head_w = VARIANTS[key]
    kw = dict(SIZE_PRESETS[size.lower()], ffn_kind=ffn, ffn_wavelet=ffn_w, head_kind=head, head_wavelet=head_w)
    kw.update(overrides)
    return ModelConfig(**kw)


# -- building blocks ---------------------------------------------------------


def _xavier(rng, out_dim, in_dim, dtype):
    bound = math.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-bound, bound, size=(out_dim, in_dim)).astype(dtype)


class LayerNorm(Module):
    def __init__(self, d: int, dtype=np.float64):
        super().__init__()
        self.add_param("gamma", np.ones(d, dtype=dtype), decay=False)
        self.add_param("beta", np.zeros(d, dtype=dtype), decay=False)

    def forward(self, x):
        out, self._cache = layer_norm(x, self.params["gamma"], self.params["beta"])
        return out

    def backward(self, grad_out):
        gx, gg, gb = layer_norm_backward(self._cache, self.params["gamma"], grad_out)
        self.grads["gamma"] += gg
        self.grads["beta"] += gb
        return gx


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng=None, dtype=np.float64):
        super().__init__()
        self.d_in, self.d_out = d_in, d_out
        w = _xavier(rng, d_out, d_in, dtype) if rng is not None else np.zeros((d_out, d_in), dtype=dtype)
        self.add_param("weight", w)
        self.add_param("bias", np.zeros(d_out, dtype=dtype), decay=False)

    def forward(self, x):
        if x.shape[-1] != self.d_in:
            raise DimensionError(f"Linear expects width {self.d_in}, got {x.shape[-1]}")
        self._x = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, grad_out):
        x2 = self._x.reshape(-1, self.d_in)
        g2 = grad_out.reshape(-1, self.d_out)
        self.grads["weight"] += g2.T @ x2
        self.grads["bias"] += g2.sum(axis=0)
        return grad_out @ self.params["weight"]

    def flops_per_token(self) -> int:
        return self.d_in * self.d_out


def extract_patches(images: np.ndarray, patch_size: int) -> np.ndarray:
    """``(B, C, H, W)`` -> ``(B, num_patches, C * p * p)``, row-major over the patch grid."""
    if images.ndim == 3:
        images = images[None]
    b, c, h, w = images.shape
    p = patch_size
    if h % p or w % p:
        raise ConfigError(f"image {h}x{w} is not divisible by patch size {p}")
    x = images.reshape(b, c, h // p, p, w // p, p)
    return x.transpose(0, 2, 4, 1, 3, 5).reshape(b, (h // p) * (w // p), c * p * p)


class PatchEmbed(Module):
    """Linear patch projection, prepended [CLS] token and learned positional table."""

    def __init__(self, cfg: ModelConfig, rng=None):
        super().__init__()
        dt = cfg.dtype
        self.patch_size = cfg.patch_size
        self.d_in = cfg.in_channels * cfg.patch_size**2
        self.dim = cfg.dim
        self.num_tokens = cfg.num_tokens
        self.add_child("proj", Linear(self.d_in, cfg.dim, rng, dt))
        cls = np.zeros((1, cfg.dim), dtype=dt)
        pos = np.zeros((cfg.num_tokens, cfg.dim), dtype=dt)
        if rng is not None:
            cls[...] = rng.normal(0.0, cfg.pos_init_std, size=cls.shape)
            pos[...] = rng.normal(0.0, cfg.pos_init_std, size=pos.shape)
        self.add_param("cls_token", cls, decay=False)
        self.add_param("pos_embed", pos, decay=False)

    def forward(self, images):
        patches = extract_patches(images, self.patch_size)
        if patches.shape[1] + 1 != self.num_tokens or patches.shape[2] != self.d_in:
            raise ConfigError(f"image of shape {images.shape} does not match the configured patch grid")
        tok = self.children["proj"].forward(patches)
        cls = np.broadcast_to(self.params["cls_token"], (tok.shape[0], 1, self.dim))
        return np.concatenate([cls, tok], axis=1) + self.params["pos_embed"]

    def backward(self, grad_out):
        self.grads["pos_embed"] += grad_out.sum(axis=0)
        self.grads["cls_token"] += grad_out[:, 0].sum(axis=0, keepdims=True)
        self.children["proj"].backward(grad_out[:, 1:])


def patchify(images: np.ndarray, embed: PatchEmbed) -> np.ndarray:
    """Tokens ``(B, n_tokens, dim)`` with [CLS] at index 0."""
    return embed.forward(images)


class AttentionBlock(Module):
    """Pre-norm multi-head self-attention with residual: ``x + MHA(LN(x))``.

    Per-head projections are stored concatenated along the output axis, so
    head ``i`` uses rows ``i*d_h:(i+1)*d_h`` of each of ``q``, ``k``, ``v``.
    """

    def __init__(self, dim: int, heads: int, rng=None, dtype=np.float64):
        super().__init__()
        if dim % heads:
            raise ConfigError(f"dim {dim} is not divisible by heads {heads}")
        self.dim, self.heads, self.head_dim = dim, heads, dim // heads
        self.add_child("norm", LayerNorm(dim, dtype))
        for name in ("q", "k", "v", "out"):
            self.add_child(name, Linear(dim, dim, rng, dtype))
        self.attention = None

    def _split(self, t):
        b, n, _ = t.shape
        return t.reshape(b, n, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    def _merge(self, t):
        b, _, n, _ = t.shape
        return t.transpose(0, 2, 1, 3).reshape(b, n, self.dim)

    def forward(self, x):
        if x.ndim != 3 or x.shape[-1] != self.dim:
            raise DimensionError(f"AttentionBlock expects (batch, tokens, {self.dim}), got {x.shape}")
        c = self.children
        h = c["norm"].forward(x)
        q = self._split(c["q"].forward(h))
        k = self._split(c["k"].forward(h))
        v = self._split(c["v"].forward(h))
        scores = q @ k.transpose(0, 1, 3, 2) / math.sqrt(self.head_dim)
        attn = softmax_rows(scores)
        ctx = self._merge(attn @ v)
        self.attention = attn
        self._cache = (q, k, v, attn)
        return x + c["out"].forward(ctx)

    def backward(self, grad_out):
        c = self.children
        q, k, v, attn = self._cache
        gctx = self._split(c["out"].backward(grad_out))
        gattn = gctx @ v.transpose(0, 1, 3, 2)
        gv = attn.transpose(0, 1, 3, 2) @ gctx
        gscores = softmax_rows_backward(attn, gattn) / math.sqrt(self.head_dim)
        gq = gscores @ k
        gk = gscores.transpose(0, 1, 3, 2) @ q
        gh = (c["q"].backward(self._merge(gq)) + c["k"].backward(self._merge(gk))
              + c["v"].backward(self._merge(gv)))
        return grad_out + c["norm"].backward(gh)

    def flops(self, n: int) -> int:
        d = self.dim
        return 4 * n * d * d + 2 * n * n * d


class MlpBlock(Module):
    """``W2 GELU(W1 x + b1) + b2``."""

    def __init__(self, dim: int, width: int, rng=None, dtype=np.float64):
        super().__init__()
        self.add_child("fc1", Linear(dim, width, rng, dtype))
        self.add_child("fc2", Linear(width, dim, rng, dtype))

    def forward(self, x):
        self._pre = self.children["fc1"].forward(x)
        return self.children["fc2"].forward(gelu(self._pre))

    def backward(self, grad_out):
        gh = self.children["fc2"].backward(grad_out)
        return self.children["fc1"].backward(gh * gelu_grad(self._pre))

    def flops_per_token(self) -> int:
        return self.children["fc1"].flops_per_token() + self.children["fc2"].flops_per_token()


class KanFFN(Module):
    """Two stacked KAN layers ``dim -> width -> dim``, each ending in GELU."""

    def __init__(self, first: Module, second: Module):
        super().__init__()
        self.add_child("layer1", first)
        self.add_child("layer2", second)

    def forward(self, x):
        return self.children["layer2"].forward(self.children["layer1"].forward(x))

    def backward(self, grad_out):
        return self.children["layer1"].backward(self.children["layer2"].backward(grad_out))

    def flops_per_token(self) -> int:
        return sum(c.flops_per_token() for c in self.children.values())


def _kan_layer(kind: str, wavelet: str, d_in: int, d_out: int, cfg: ModelConfig, rng, activation: bool):
    dt = cfg.dtype
    if kind == "effkan":
        s = cfg.spline
        if rng is None:
            return EffKanLayer(d_in, d_out, s.grid, activation=activation, dtype=dt)
        return effkan_init(d_in, d_out, s.grid, s.scale_noise, s.scale_base, s.scale_spline,
                           seed=rng, activation=activation, dtype=dt)
    w = cfg.wavelet
    kw = dict(levels=w.decomposition_levels, kind=wavelet, prune_ratio=w.pruning_ratio,
              base_scale=w.initial_scale, central_frequency=w.central_frequency,
              scale_base=w.scale_base, num_scales=w.num_scales, activation=activation, dtype=dt)
    if rng is None:
        # structural init only: zero maps, dyadic sigma, no random draws
        layer = WavKanLayer(d_in, d_out, w.decomposition_levels, wavelet, w.pruning_ratio, w.initial_scale,
                            activation=activation, dtype=dt)
        layer.params["wavelet_sigma"][...] = w.initial_scale * 2.0 ** np.arange(w.decomposition_levels + 1)
        if "wavelet_omega0" in layer.params:
            layer.params["wavelet_omega0"][...] = w.central_frequency
        return layer
    return wavkan_init(d_in, d_out, scale_noise=w.scale_noise, seed=rng, **kw)


def make_ffn(cfg: ModelConfig, rng=None) -> Module:
    if cfg.ffn_kind == "mlp":
        return MlpBlock(cfg.dim, cfg.ffn_width, rng, cfg.dtype)
    return KanFFN(
        _kan_layer(cfg.ffn_kind, cfg.ffn_wavelet, cfg.dim, cfg.ffn_width, cfg, rng, True),
        _kan_layer(cfg.ffn_kind, cfg.ffn_wavelet, cfg.ffn_width, cfg.dim, cfg, rng, True),
    )


def make_head(cfg: ModelConfig, rng=None) -> Module:
    if cfg.head_kind == "linear":
        return Linear(cfg.dim, cfg.num_classes, rng, cfg.dtype)
    return _kan_layer(cfg.head_kind, cfg.head_wavelet, cfg.dim, cfg.num_classes, cfg, rng, False)


class EncoderBlock(Module):
    """Attention sublayer, then ``x' + FFN(LN(x'))``."""

    def __init__(self, cfg: ModelConfig, rng=None):
        super().__init__()
        self.add_child("attn", AttentionBlock(cfg.dim, cfg.heads, rng, cfg.dtype))
        self.add_child("norm", LayerNorm(cfg.dim, cfg.dtype))
        self.add_child("ffn", make_ffn(cfg, rng))

    def forward(self, x):
        c = self.children
        h = c["attn"].forward(x)
        return h + c["ffn"].forward(c["norm"].forward(h))

    def backward(self, grad_out):
        c = self.children
        gh = grad_out + c["norm"].backward(c["ffn"].backward(grad_out))
        return c["attn"].backward(gh)


def classify(z_cls: np.ndarray, head: Module) -> np.ndarray:
    """Class logits from [CLS] features (``(d,)`` or ``(B, d)``)."""
    return head.forward(z_cls)


class VisionTransformer(Module):
    def __init__(self, cfg: ModelConfig, seed=None, init: bool = True):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed) if init else None
        self.add_child("embed", PatchEmbed(cfg, rng))
        for i in range(cfg.depth):
            self.add_child(f"block{i}", EncoderBlock(cfg, rng))
        self.add_child("norm", LayerNorm(cfg.dim, cfg.dtype))
        self.add_child("head", make_head(cfg, rng))

    @property
    def blocks(self):
        return [self.children[f"block{i}"] for i in range(self.cfg.depth)]

    def features(self, images: np.ndarray) -> np.ndarray:
        """Token features after the encoder stack and final norm, ``(B, n_tokens, dim)``."""
        x = self.children["embed"].forward(np.asarray(images, dtype=self.cfg.dtype))
        for blk in self.blocks:
            x = blk.forward(x)
        return self.children["norm"].forward(x)

    def forward(self, images: np.ndarray) -> np.ndarray:
        feats = self.features(images)
        self._n_tokens = feats.shape[1]
        return classify(feats[:, 0], self.children["head"])

    def backward(self, grad_logits: np.ndarray):
        g_cls = self.children["head"].backward(grad_logits)
        g = np.zeros((g_cls.shape[0], self._n_tokens, self.cfg.dim), dtype=g_cls.dtype)
        g[:, 0] = g_cls
        g = self.children["norm"].backward(g)
        for blk in reversed(self.blocks):
            g = blk.backward(g)
        self.children["embed"].backward(g)

    def predict_proba(self, images: np.ndarray) -> np.ndarray:
        return softmax_rows(self.forward(images))


def build_model(variant: str = "vit", size: str = "small", seed=None, init: bool = True,
                **overrides) -> VisionTransformer:
    """Initialise one of :data:`VARIANTS` at one of :data:`SIZE_PRESETS`.

    ``init=False`` allocates zero parameters without random draws, which is
    enough for counting.
    """
    return VisionTransformer(make_config(variant, size, **overrides), seed=seed, init=init)


# -- accounting --------------------------------------------------------------


def count_params(model: Module) -> int:
    """Number of trainable scalars, by enumeration."""
    return model.num_parameters()


def _kan_count(kind, wavelet, d_in, d_out, cfg):
    if kind == "effkan":
        return effkan_param_count(d_in, d_out, cfg.spline.grid)
    return wavkan_param_count(d_in, d_out, cfg.wavelet.decomposition_levels, wavelet)


def analytic_param_count(cfg: ModelConfig) -> int:
    """Closed-form parameter total from per-layer formulas."""
    d, f = cfg.dim, cfg.ffn_width
    embed = cfg.in_channels * cfg.patch_size**2 * d + d + d + cfg.num_tokens * d
    attn = 4 * (d * d + d) + 2 * d
    if cfg.ffn_kind == "mlp":
        ffn = 2 * d * f + f + d
    else:
        ffn = (_kan_count(cfg.ffn_kind, cfg.ffn_wavelet, d, f, cfg)
               + _kan_count(cfg.ffn_kind, cfg.ffn_wavelet, f, d, cfg))
    block = attn + 2 * d + ffn
    if cfg.head_kind == "linear":
        head = d * cfg.num_classes + cfg.num_classes
    else:
        head = _kan_count(cfg.head_kind, cfg.head_wavelet, d, cfg.num_classes, cfg)
    return embed + cfg.depth * block + 2 * d + head


def count_flops(model: VisionTransformer, image_size: int | None = None, breakdown: bool = False):
    """Forward-pass cost in GFLOPs for one image.

    Counted in multiply-accumulates (one per fused multiply-add), the
    convention behind published ViT GFLOP tables.  Covers the patch
    projection, Q/K/V/output projections, the ``n^2`` score and value
    products, every FFN (spline/wavelet stages itemised by the layers) and
    the head.  Norms, softmax and elementwise activations are omitted.
    """
    cfg = model.cfg
    size = image_size or cfg.image_size
    if size % cfg.patch_size:
        raise ConfigError(f"image_size {size} is not divisible by patch_size {cfg.patch_size}")
    n_patch = (size // cfg.patch_size) ** 2
    n = n_patch + 1
    parts = {"patch_embed": n_patch * model.children["embed"].children["proj"].flops_per_token()}
    parts["attention"] = sum(b.children["attn"].flops(n) for b in model.blocks)
    parts["ffn"] = sum(n * b.children["ffn"].flops_per_token() for b in model.blocks)
    parts["head"] = model.children["head"].flops_per_token()
    total = sum(parts.values()) / 1e9
    if breakdown:
        return total, {k: v / 1e9 for k, v in parts.items()}
    return total


def config_replace(cfg: ModelConfig, **changes) -> ModelConfig:
    return replace(cfg, **changes)
