"""Flat ``key = value`` run configuration.

Keys mirror :class:`ModelConfig` and :class:`OptimizerConfig` field names.
KAN hyperparameters use a ``spline.`` or ``wavelet.`` prefix; the ones whose
name is unambiguous (``grid_size``, ``num_scales``, ...) may be written bare.
Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .tensor import ConfigError
from .train import OptimizerConfig
from .vit import ModelConfig, SplineConfig, WaveletConfig, make_config

__all__ = ["RunSettings", "RunConfig", "parse_config_text", "read_config_file", "build_run_config"]


@dataclass
class RunSettings:
    variant: str = "vit"
    size: str = "toy"
    dataset: str = "synthetic"
    data_path: str | None = None
    n_train: int = 1024
    n_test: int = 512
    seed: int | None = None
    threads: int = 1
    eval_ema: bool = False
    augment_flip: bool = False
    log_every: int = 0


@dataclass
class RunConfig:
    model: ModelConfig
    optimizer: OptimizerConfig
    run: RunSettings = field(default_factory=RunSettings)


_MODEL_KEYS = {f.name for f in fields(ModelConfig)} - {"spline", "wavelet"}
_OPT_KEYS = {f.name for f in fields(OptimizerConfig)}
_RUN_KEYS = {f.name for f in fields(RunSettings)}
_SPLINE_KEYS = {f.name for f in fields(SplineConfig)} | {"grid_range", "number_of_grids"}
_WAVELET_KEYS = {f.name for f in fields(WaveletConfig)}
_ALIASES = {"epochs": "total_epochs", "lr": "lr_base", "learning_rate": "lr_base"}
# bare Table-1 names that belong to exactly one block
_BARE = {k: "spline" for k in _SPLINE_KEYS - _WAVELET_KEYS}
_BARE.update({k: "wavelet" for k in _WAVELET_KEYS - _SPLINE_KEYS})

_INT_FIELDS = {"image_size", "patch_size", "in_channels", "depth", "heads", "dim", "ffn_width", "num_classes",
               "precision", "total_epochs", "batch_size", "grid_size", "spline_order", "num_scales",
               "decomposition_levels", "n_train", "n_test", "seed", "threads", "log_every", "number_of_grids"}
_BOOL_FIELDS = {"eval_ema", "augment_flip"}
_STR_FIELDS = {"ffn_kind", "head_kind", "ffn_wavelet", "head_wavelet", "variant", "size", "dataset", "data_path"}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw ``key -> value`` strings; duplicate keys and lines without ``=`` are errors."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config_file(path) -> dict[str, str]:
    path = Path(path)
    return parse_config_text(path.read_text(), str(path))


def _coerce(key: str, name: str, value):
    if not isinstance(value, str):
        return value
    try:
        if name in _BOOL_FIELDS:
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if name in _STR_FIELDS:
            if not value:
                raise ValueError(value)
            return value
        if name in _INT_FIELDS:
            return int(value)
        if name == "grid_range":
            lo, hi = (float(v) for v in value.replace("[", "").replace("]", "").split(","))
            return lo, hi
        if name == "betas":
            b1, b2 = (float(v) for v in value.replace("(", "").replace(")", "").split(","))
            return b1, b2
        return float(value)
    except ValueError:
        raise ConfigError(f"invalid value for {key!r}: {value!r}") from None


def _route(key: str) -> tuple[str, str]:
    """``(block, field)`` for a config key."""
    if "." in key:
        block, name = key.split(".", 1)
        if block == "spline" and name in _SPLINE_KEYS:
            return "spline", name
        if block == "wavelet" and name in _WAVELET_KEYS:
            return "wavelet", name
        raise ConfigError(f"unknown config key {key!r}")
    name = _ALIASES.get(key, key)
    if name in _RUN_KEYS:
        return "run", name
    if name in _MODEL_KEYS:
        return "model", name
    if name in _OPT_KEYS or name == "betas":
        return "optimizer", name
    if name in _BARE:
        return _BARE[name], name
    if name in _SPLINE_KEYS | _WAVELET_KEYS:
        raise ConfigError(f"ambiguous key {key!r}: write spline.{name} or wavelet.{name}")
    raise ConfigError(f"unknown config key {key!r}")


def build_run_config(raw: dict | None = None, **overrides) -> RunConfig:
    """Merge file values with ``overrides`` (which win) into validated configs.

    ``None`` overrides are ignored so that unset CLI flags fall through.
    """
    merged = dict(raw or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    blocks: dict[str, dict] = {"run": {}, "model": {}, "optimizer": {}, "spline": {}, "wavelet": {}}
    for key, value in merged.items():
        block, name = _route(key)
        blocks[block][name] = (key, _coerce(key, name, value))

    def values(block):
        return {name: v for name, (_, v) in blocks[block].items()}

    spline = values("spline")
    if "grid_range" in spline:
        spline["grid_range_lo"], spline["grid_range_hi"] = spline.pop("grid_range")
    n_grids = spline.pop("number_of_grids", None)
    opt = values("optimizer")
    if "betas" in opt:
        opt["beta1"], opt["beta2"] = opt.pop("betas")

    for name, (key, value) in blocks["model"].items():
        if isinstance(value, int) and value <= 0 and name not in ("precision",):
            raise ConfigError(f"invalid value for {key!r}: must be positive")
    run = RunSettings(**values("run"))
    try:
        spline_cfg = SplineConfig(**spline)
        wavelet_cfg = WaveletConfig(**values("wavelet"))
        if n_grids is not None and n_grids != spline_cfg.number_of_grids:
            raise ConfigError(f"invalid value for 'number_of_grids': {n_grids} != grid_size + spline_order "
                              f"= {spline_cfg.number_of_grids}")
        if not 0.0 <= wavelet_cfg.pruning_ratio <= 1.0:
            raise ConfigError(f"invalid value for 'pruning_ratio': {wavelet_cfg.pruning_ratio} not in [0, 1]")
        if spline_cfg.grid_range_lo >= spline_cfg.grid_range_hi:
            raise ConfigError("invalid value for 'grid_range': lower bound must be below upper bound")
        model = make_config(run.variant, run.size, spline=spline_cfg, wavelet=wavelet_cfg, **values("model"))
        optimizer = OptimizerConfig(**opt)
    except TypeError as exc:  # pragma: no cover - keys are routed above
        raise ConfigError(str(exc)) from None
    return RunConfig(model, optimizer, run)
