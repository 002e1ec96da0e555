"""``hybkan`` command line: train, eval, count, bench, gradcheck."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from threadpoolctl import threadpool_limits

from .tensor import ConfigError

log = logging.getLogger("hybkan")

SEED_ENV = "HYBKAN_SEED"
U64_MAX = 2**64 - 1


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError(f"seed must lie in [0, 2^64), got {value}")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


def _global_flags(parser: argparse.ArgumentParser, suppress: bool):
    # subparsers must not clobber values given before the subcommand
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g = parser.add_argument_group("global options")
    g.add_argument("--config", metavar="PATH", default=d(None), help="flat key = value config file")
    g.add_argument("--seed", type=_u64, default=d(None), help=f"u64 seed (falls back to ${SEED_ENV})")
    g.add_argument("--threads", type=_positive, default=d(None), help="BLAS threads; 1 is deterministic")
    g.add_argument("--precision", type=int, choices=(32, 64), default=d(None))
    g.add_argument("--out", metavar="DIR", default=d(None), help="output directory")
    g.add_argument("-v", "--verbose", action="count", default=d(0))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybkan", description="KAN-augmented Vision Transformer toolkit.")
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", metavar="{train,eval,count,bench,gradcheck}")
    sub.required = True

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        _global_flags(sp, suppress=True)
        return sp

    def model_flags(sp):
        sp.add_argument("--variant", default=None, help="vit, effkan, wavkan-dog, wavkan-morlet, "
                        "wavkan-mexhat, hybrid1, hybrid2")
        sp.add_argument("--size", default=None, help="toy, tiny, small, base")
        sp.add_argument("--image-size", type=_positive, default=None)

    def data_flags(sp):
        sp.add_argument("--dataset", default=None, help="synthetic, mnist or cifar10")
        sp.add_argument("--data-path", default=None)
        sp.add_argument("--n-test", type=_positive, default=None)

    t = add("train", "train a model and write metrics.csv plus checkpoint.hkc")
    model_flags(t)
    data_flags(t)
    t.add_argument("--n-train", type=_positive, default=None)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--batch-size", type=_positive, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--warmup-epochs", type=float, default=None)
    t.add_argument("--label-smoothing", type=float, default=None)
    t.add_argument("--eval-ema", action="store_true", default=None, help="score eval split with EMA weights")
    t.add_argument("--flip", action="store_true", default=None, help="random horizontal flips")

    e = add("eval", "evaluate a checkpoint")
    e.add_argument("--checkpoint", default=None, help="defaults to <out>/checkpoint.hkc")
    e.add_argument("--ema", action="store_true", help="use EMA weights")
    data_flags(e)

    c = add("count", "print parameter count and GFLOPs")
    model_flags(c)
    c.add_argument("--num-classes", type=_positive, default=None)
    c.add_argument("--breakdown", action="store_true")

    b = add("bench", "throughput and peak-allocation sweep over input dimension")
    b.add_argument("--variants", default=None, help="comma-separated; default all block kinds")
    b.add_argument("--dims", type=_int_list, default=None, help="default 64,128,256,512,1024")
    b.add_argument("--batch", type=_positive, default=64)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--warmup", type=int, default=5)
    b.add_argument("--format", choices=("csv", "json"), default="csv")

    g = add("gradcheck", "finite-difference gradient suite plus the wavelet formula audit")
    g.add_argument("--limit", type=int, default=25, help="entries checked per tensor (0 = all)")
    g.add_argument("--audit-samples", type=_positive, default=1000)
    return p


# -- helpers -----------------------------------------------------------------


def resolve_seed(flag, config_seed=None) -> int:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return _u64(env)
        except argparse.ArgumentTypeError as exc:
            raise ConfigError(f"${SEED_ENV}: {exc}") from None
    return int(config_seed) if config_seed is not None else 0


# desk-scale schedule used when neither the config file nor a flag sets it
DESK_DEFAULTS = {"total_epochs": "3", "warmup_epochs": "0.5", "lr_base": "1e-3", "batch_size": "32"}


def _run_config(args, defaults=None, **overrides):
    from .config import build_run_config, read_config_file

    raw = {**(defaults or {}), **(read_config_file(args.config) if args.config else {})}
    if args.precision is not None:
        overrides["precision"] = args.precision
    return build_run_config(raw, **overrides)


def _fit_to_data(cfg, dataset, explicit: set):
    c, h, w = dataset.image_shape
    if h != w:
        raise ConfigError(f"images must be square, got {h}x{w}")
    want = {"image_size": h, "in_channels": c, "num_classes": dataset.num_classes}
    for key, value in want.items():
        if key in explicit and getattr(cfg, key) != value:
            raise ConfigError(f"invalid value for {key!r}: {getattr(cfg, key)} does not match the dataset ({value})")
    return replace(cfg, **want)


def _load_data(run, image_size, dtype):
    from .data import DatasetSource, load_dataset

    src = DatasetSource(kind=run.dataset, path=run.data_path, seed=run.seed or 0, n_train=run.n_train,
                        n_test=run.n_test, image_size=image_size)
    return load_dataset(src, dtype)


def _explicit_keys(args, raw_keys) -> set:
    keys = set(raw_keys)
    if getattr(args, "image_size", None) is not None:
        keys.add("image_size")
    return keys


# -- subcommands -------------------------------------------------------------


def cmd_train(args) -> int:
    from .config import read_config_file
    from .train import train
    from .vit import VisionTransformer, count_params

    rc = _run_config(args, DESK_DEFAULTS, variant=args.variant, size=args.size, image_size=args.image_size,
                     dataset=args.dataset, data_path=args.data_path, n_train=args.n_train, n_test=args.n_test,
                     total_epochs=args.epochs, batch_size=args.batch_size, lr_base=args.lr,
                     warmup_epochs=args.warmup_epochs, label_smoothing=args.label_smoothing,
                     eval_ema=args.eval_ema, augment_flip=args.flip)
    raw_keys = read_config_file(args.config).keys() if args.config else ()
    seed = resolve_seed(args.seed, rc.run.seed)
    rc.run.seed = seed
    explicit = _explicit_keys(args, raw_keys)
    size = rc.model.image_size if "image_size" in explicit else 16
    train_set, test_set = _load_data(rc.run, size, rc.model.dtype)
    cfg = _fit_to_data(rc.model, train_set, explicit)
    out = Path(args.out or f"runs/{rc.run.variant}")
    model = VisionTransformer(cfg, seed=seed)
    print(f"variant={rc.run.variant} size={rc.run.size} params={count_params(model)} "
          f"train={len(train_set)} test={len(test_set)} seed={seed} out={out}")
    manifest = {"variant": rc.run.variant, "size": rc.run.size, "dataset": rc.run.dataset,
                "data_path": rc.run.data_path, "n_train": rc.run.n_train, "n_test": rc.run.n_test,
                "data_seed": seed}
    result = train(model, train_set, rc.optimizer, seed=seed, eval_set=test_set, out_dir=out,
                   augment_flip=rc.run.augment_flip, log_every=rc.run.log_every, manifest_extra=manifest,
                   eval_ema=rc.run.eval_ema)
    for row in result.history:
        print(f"epoch {row['epoch']:>3} {row['split']:<5} loss {row['loss']:.4f} top1 {row['top1']:.4f} "
              f"top5 {row['top5']:.4f} lr {row['lr']:.2e} {row['seconds']:.1f}s")
    print(f"wrote {out / 'metrics.csv'} and {out / 'checkpoint.hkc'}")
    return 0


def cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint, restore_model
    from .config import RunSettings
    from .train import evaluate
    from .vit import ModelConfig, VisionTransformer

    path = Path(args.checkpoint or Path(args.out or ".") / "checkpoint.hkc")
    ckpt = load_checkpoint(path)
    man = ckpt.manifest
    if "config" not in man:
        raise ConfigError(f"{path}: manifest carries no model config")
    cfg = ModelConfig.from_dict(man["config"])
    if args.precision is not None:
        cfg = replace(cfg, precision=args.precision)
    model = VisionTransformer(cfg, init=False)
    restore_model(model, ckpt, use_ema=args.ema)
    run = RunSettings(dataset=args.dataset or man.get("dataset", "synthetic"),
                      data_path=args.data_path or man.get("data_path"),
                      n_train=1, n_test=args.n_test or man.get("n_test", 512),
                      seed=man.get("data_seed", 0))
    _, test_set = _load_data(run, cfg.image_size, cfg.dtype)
    res = evaluate(model, test_set)
    res.update(checkpoint=str(path), samples=len(test_set), weights="ema" if args.ema else "raw")
    print(json.dumps(res, sort_keys=True))
    return 0


def cmd_count(args) -> int:
    from .vit import VisionTransformer, analytic_param_count, count_flops, count_params

    rc = _run_config(args, variant=args.variant, size=args.size, image_size=args.image_size,
                     num_classes=args.num_classes)
    model = VisionTransformer(rc.model, init=False)
    params = count_params(model)
    analytic = analytic_param_count(rc.model)
    gflops, parts = count_flops(model, breakdown=True)
    print(f"variant: {rc.run.variant}")
    print(f"size: {rc.run.size}")
    print(f"image_size: {rc.model.image_size}")
    print(f"params: {params}")
    print(f"params_analytic: {analytic}")
    print(f"gflops: {gflops:.4f}")
    if args.breakdown:
        for k, v in parts.items():
            print(f"gflops.{k}: {v:.4f}")
    return 0 if params == analytic else 1


def cmd_bench(args) -> int:
    from .bench import BENCH_VARIANTS, DEFAULT_DIMS, emit_report, run_sweeps

    variants = tuple(v.strip() for v in args.variants.split(",") if v.strip()) if args.variants else BENCH_VARIANTS
    report = run_sweeps(variants, workers=args.threads or 1, input_dims=args.dims or DEFAULT_DIMS,
                        batch=args.batch, repeats=args.repeats, warmup=args.warmup,
                        precision=args.precision or 32, seed=resolve_seed(args.seed))
    path = None
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        path = Path(args.out) / f"bench.{args.format}"
    sys.stdout.write(emit_report(report, args.format, path))
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite
    from .wavelet import gradient_audit, write_gradient_audit

    if args.precision not in (None, 64):
        raise ConfigError("invalid value for 'precision': gradient checks run at 64 bits only")
    t0 = time.perf_counter()
    results = run_suite(seed=resolve_seed(args.seed), limit=args.limit or None, verbose=print)
    rows = gradient_audit(n_samples=args.audit_samples, seed=resolve_seed(args.seed))
    for r in rows:
        print(f"audit {r['formula']:<15} {r['kind']:<12} d/d{r['parameter']:<6} printed={r['printed_verdict']:<8} "
              f"max_rel_dev={r['printed_max_rel_dev']:.3e} shipped={r['shipped_verdict']}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        path = write_gradient_audit(Path(args.out) / "gradient_audit.csv", rows)
        print(f"wrote {path}")
    failed = [r for r in results if not r.passed]
    shipped_bad = [r for r in rows if r["shipped_verdict"] != "agree"]
    print(f"{len(results) - len(failed)}/{len(results)} gradient slots passed, "
          f"{len(rows) - len(shipped_bad)}/{len(rows)} shipped wavelet gradients match "
          f"({time.perf_counter() - t0:.1f}s)")
    return 0 if not failed and not shipped_bad else 1


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "count": cmd_count, "bench": cmd_bench,
            "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    from .checkpoint import CheckpointError
    from .data import FormatError, LengthError
    from .train import TrainingDiverged

    try:
        if args.command == "bench":
            # --threads parallelises across sweeps; every timed region stays single-threaded
            with threadpool_limits(limits=1):
                return COMMANDS["bench"](args)
        with threadpool_limits(limits=args.threads or 1):
            return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"hybkan {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"hybkan {args.command}: training diverged: {exc}", file=sys.stderr)
        return 3
    except (CheckpointError, FormatError, LengthError, FileNotFoundError) as exc:
        print(f"hybkan {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
