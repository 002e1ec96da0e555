"""Throughput and peak-allocation sweeps over input dimension."""

from __future__ import annotations

import csv
import io
import json
import statistics
import time
import tracemalloc
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .tensor import ConfigError, resolve_dtype

__all__ = [
    "BENCH_HEADER",
    "DEFAULT_DIMS",
    "BENCH_VARIANTS",
    "BenchRow",
    "BenchReport",
    "make_bench_block",
    "robust_median",
    "time_repeats",
    "peak_allocation",
    "bench_layer_sweep",
    "run_sweeps",
    "emit_report",
    "read_report",
]

BENCH_HEADER = ("variant", "size", "input_dim", "params", "gflops", "samples_per_s", "peak_mem_bytes",
                "repeats", "warmup")
DEFAULT_DIMS = (64, 128, 256, 512, 1024)
BENCH_VARIANTS = ("mlp", "effkan", "wavkan-dog", "wavkan-morlet", "wavkan-mexhat")


@dataclass
class BenchRow:
    variant: str
    size: str
    input_dim: int
    params: int
    gflops: float
    samples_per_s: float
    peak_mem_bytes: int
    repeats: int
    warmup: int


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def extend(self, other: "BenchReport") -> "BenchReport":
        self.rows.extend(other.rows)
        return self

    def records(self) -> list[dict]:
        return [asdict(r) for r in self.rows]


def make_bench_block(variant: str, dim: int, seed: int = 0, dtype=np.float32):
    """Two-layer ``dim -> dim -> dim`` feed-forward block of the given kind."""
    from .spline import effkan_init
    from .vit import KanFFN, MlpBlock
    from .wavelet import wavkan_init

    rng = np.random.default_rng(seed)
    v = variant.lower()
    if v in ("mlp", "vit"):
        return MlpBlock(dim, dim, rng, dtype)
    if v == "effkan":
        return KanFFN(effkan_init(dim, dim, seed=rng, dtype=dtype), effkan_init(dim, dim, seed=rng, dtype=dtype))
    if v.startswith("wavkan"):
        kind = v.split("-", 1)[1] if "-" in v else "dog"
        return KanFFN(wavkan_init(dim, dim, kind=kind, seed=rng, dtype=dtype),
                      wavkan_init(dim, dim, kind=kind, seed=rng, dtype=dtype))
    raise ConfigError(f"unknown bench variant {variant!r}; choose from {BENCH_VARIANTS}")


def robust_median(samples) -> float:
    return float(statistics.median(samples))


def time_repeats(fn, repeats: int = 3, warmup: int = 5, clock=time.perf_counter) -> list[float]:
    """Wall times of ``repeats`` calls of ``fn`` after ``warmup`` untimed calls."""
    if repeats < 3 or warmup < 5:
        raise ConfigError(f"need repeats >= 3 and warmup >= 5, got {repeats}, {warmup}")
    for _ in range(warmup):
        fn()
    out = []
    for _ in range(repeats):
        t0 = clock()
        fn()
        out.append(clock() - t0)
    return out


def peak_allocation(fn) -> int:
    """Peak bytes allocated (numpy buffers included) while ``fn`` runs, above the starting level."""
    started = tracemalloc.is_tracing()
    if not started:
        tracemalloc.start()
    try:
        base, _ = tracemalloc.get_traced_memory()
        tracemalloc.reset_peak()
        fn()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        if not started:
            tracemalloc.stop()
    return max(0, peak - base)


def bench_layer_sweep(variant: str, input_dims=DEFAULT_DIMS, batch: int = 64, repeats: int = 3,
                      warmup: int = 5, precision: int = 32, seed: int = 0) -> BenchReport:
    """Time the forward pass of one feed-forward block per input dimension.

    Throughput is ``batch / median(repeat time)``; peak memory is measured in
    a separate, untimed forward so tracing overhead never enters the timing.
    """
    dims = [int(d) for d in input_dims]
    if any(d <= 0 for d in dims) or batch <= 0:
        raise ConfigError("input dims and batch must be positive")
    dtype = resolve_dtype(precision)
    report = BenchReport()
    for d in dims:
        block = make_bench_block(variant, d, seed, dtype)
        block.eval()
        x = np.random.default_rng([seed, d]).standard_normal((batch, d)).astype(dtype)
        times = time_repeats(lambda: block.forward(x), repeats, warmup)
        peak = peak_allocation(lambda: block.forward(x))
        med = robust_median(times)
        report.rows.append(BenchRow(
            variant=variant, size=f"batch{batch}", input_dim=d, params=block.num_parameters(),
            gflops=block.flops_per_token() / 1e9, samples_per_s=batch / max(med, 1e-12),
            peak_mem_bytes=int(peak), repeats=repeats, warmup=warmup))
    return report


def _sweep_single_threaded(variant, kwargs):
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1):
        return bench_layer_sweep(variant, **kwargs)


def run_sweeps(variants=BENCH_VARIANTS, workers: int = 1, **kwargs) -> BenchReport:
    """Sweep several variants; ``workers > 1`` spreads whole sweeps over processes.

    Parallelism is across configurations only: each timed region still runs
    single-threaded inside its own process.
    """
    report = BenchReport()
    if workers <= 1 or len(variants) <= 1:
        for v in variants:
            report.extend(bench_layer_sweep(v, **kwargs))
        return report
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_sweep_single_threaded, variants, [kwargs] * len(variants)):
            report.extend(part)
    return report


_INT_COLS = {f.name for f in fields(BenchRow) if f.type in ("int", int)}
_FLOAT_COLS = {f.name for f in fields(BenchRow) if f.type in ("float", float)}


def emit_report(report: BenchReport, fmt: str = "csv", path=None) -> str:
    """Serialise to CSV (exact header, unquoted numbers) or a JSON array; write to ``path`` if given."""
    fmt = fmt.lower()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(BENCH_HEADER)
        for r in report.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(r, k) for k in BENCH_HEADER)])
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps(report.records(), indent=2) + "\n"
    else:
        raise ConfigError(f"unknown report format {fmt!r}; use csv or json")
    if path is not None:
        Path(path).write_text(text)
    return text


def read_report(path_or_text, fmt: str | None = None) -> BenchReport:
    """Parse a CSV or JSON report back into typed rows."""
    p = Path(path_or_text) if not str(path_or_text).lstrip().startswith(("[", "variant")) else None
    text = p.read_text() if p is not None else str(path_or_text)
    fmt = fmt or ("json" if text.lstrip().startswith("[") else "csv")
    if fmt == "json":
        records = json.loads(text)
    else:
        reader = csv.DictReader(text.splitlines())
        if tuple(reader.fieldnames or ()) != BENCH_HEADER:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        records = list(reader)

    def typed(rec):
        out = {}
        for k in BENCH_HEADER:
            v = rec[k]
            out[k] = int(v) if k in _INT_COLS else float(v) if k in _FLOAT_COLS else str(v)
        return BenchRow(**out)

    return BenchReport([typed(r) for r in records])
