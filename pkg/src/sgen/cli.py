"""Command-line entry point.

Subcommands: train, restore, evaluate, degrade, gradcheck.  Settings come
from a key=value config file (--config); --seed overrides the config
seed.  SGEN_THREADS caps the worker pool used for per-image work.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint
from .checks import run_gradient_battery
from .config import ConfigError, RunConfig, load_config
from .data import bilinear_resize, degrade, degraded_dataset, denormalize, normalize
from .metrics import evaluate
from .model import generator_forward, generator_param_names
from .ppm import PpmError, load_image, save_image
from .train import load_corpus, run_training

__all__ = ["main"]


def worker_count() -> int:
    """Worker cap from SGEN_THREADS; defaults to the CPU count, at most 8."""
    raw = os.environ.get("SGEN_THREADS", "")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"SGEN_THREADS must be an integer, got {raw!r}") from None
        if n < 1:
            raise ConfigError(f"SGEN_THREADS must be >= 1, got {n}")
        return n
    return min(os.cpu_count() or 1, 8)


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    if cfg.log_out:
        with open(cfg.log_out, "w", encoding="utf-8") as fh:
            result = run_training(cfg, log_stream=fh)
    else:
        result = run_training(cfg, log_stream=sys.stdout)
    print(f"trained {result.steps} steps, checkpoint -> {result.checkpoint_path}", file=sys.stderr)
    return 0


def _require_matching_architecture(params, model_cfg, checkpoint) -> None:
    expected = generator_param_names(model_cfg)
    have = set(params.names())
    missing = [n for n in expected if n not in have]
    extra = sorted(have - set(expected))
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"missing {missing[0]!r}")
        if extra:
            parts.append(f"unexpected {extra[0]!r}")
        raise CheckpointError(
            f"checkpoint {checkpoint} does not fit the configured architecture"
            f" ({', '.join(parts)}); pass the --config the model was trained with"
        )


def cmd_restore(args) -> int:
    cfg = _resolve_config(args)
    params = load_checkpoint(args.checkpoint)
    model_cfg = cfg.sgen_config()
    _require_matching_architecture(params, model_cfg, args.checkpoint)
    image = load_image(args.in_path)
    _, _, h, w = image.shape
    d = model_cfg.divisor
    if h % d or w % d:
        lo_h, hi_h = (h // d) * d, ((h + d - 1) // d) * d
        lo_w, hi_w = (w // d) * d, ((w + d - 1) // d) * d
        raise ValueError(
            f"restore: image is {h}x{w} but dims must be divisible by {d};"
            f" nearest valid heights {lo_h}/{hi_h}, widths {lo_w}/{hi_w}"
        )
    out = denormalize(generator_forward(normalize(image), params, model_cfg))
    save_image(out, args.out_path)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _resolve_config(args)
    params = load_checkpoint(args.checkpoint)
    _require_matching_architecture(params, cfg.sgen_config(), args.checkpoint)
    images = load_corpus(cfg, split="test")
    spec = cfg.degrade_spec()
    # no scale filtering here: evaluate() reports incompatible scales as
    # warning rows instead of dropping them
    pairs = degraded_dataset(images, spec)
    report = evaluate(
        params,
        cfg.sgen_config(),
        pairs,
        model_id=str(args.checkpoint),
        degradation=f"down{spec.down_factor} sigma{spec.noise_sigma:g} {spec.up_method}",
    )
    text_path = Path(cfg.report_out + ".txt")
    csv_path = Path(cfg.report_out + ".csv")
    text_path.write_text(report.to_text(), encoding="utf-8")
    csv_path.write_text(report.to_csv(), encoding="utf-8")
    sys.stdout.write(report.to_text())
    print(f"report -> {text_path} {csv_path}", file=sys.stderr)
    return 0


def _degrade_one(task):
    image, stem, h, w, spec, seed_parts, out_dir = task
    clean = bilinear_resize(image, h, w)
    rng = np.random.default_rng(seed_parts)
    pair = degrade(clean, spec, rng)
    save_image(pair.clean, out_dir / f"{stem}_scale{h}x{w}_clean.ppm")
    save_image(pair.corrupted, out_dir / f"{stem}_scale{h}x{w}_noisy.ppm")
    return stem


def cmd_degrade(args) -> int:
    cfg = _resolve_config(args)
    spec = cfg.degrade_spec()
    in_dir = Path(args.in_path)
    out_dir = Path(args.out_path)
    paths = sorted(in_dir.glob("*.ppm"))
    if not paths:
        raise ConfigError(f"no .ppm files under {str(in_dir)!r}")
    out_dir.mkdir(parents=True, exist_ok=True)
    # per-task seeds depend only on (seed, image, scale), not worker order
    tasks = []
    for i, path in enumerate(paths):
        image = load_image(path)
        for j, (h, w) in enumerate(spec.scales):
            tasks.append((image, path.stem, h, w, spec, (spec.seed, i, j), out_dir))
    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_degrade_one, tasks))
    else:
        for task in tasks:
            _degrade_one(task)
    print(f"wrote {2 * len(tasks)} images to {out_dir}", file=sys.stderr)
    return 0


def cmd_gradcheck(_args) -> int:
    start = time.perf_counter()
    results = run_gradient_battery(
        on_result=lambda r: print(
            f"{'PASS' if r.ok else 'FAIL'}  {r.name:<44s} err={r.error:.3e}  tol={r.tolerance:.0e}"
        )
    )
    elapsed = time.perf_counter() - start
    failed = [r for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} gradient checks passed in {elapsed:.1f}s")
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sgen", description="Multi-scale image restoration with gated ensembles"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False, in_out=False):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="checkpoint path")
        if in_out:
            p.add_argument("--in", dest="in_path", required=True, help="input path")
            p.add_argument("--out", dest="out_path", required=True, help="output path")

    common(sub.add_parser("train", help="train a model"))
    common(sub.add_parser("restore", help="restore one image"), checkpoint=True, in_out=True)
    common(sub.add_parser("evaluate", help="evaluate a checkpoint"), checkpoint=True)
    common(sub.add_parser("degrade", help="write clean/noisy pairs"), in_out=True)
    sub.add_parser("gradcheck", help="run the gradient-check battery")

    args = parser.parse_args(argv)
    handlers = {
        "train": cmd_train,
        "restore": cmd_restore,
        "evaluate": cmd_evaluate,
        "degrade": cmd_degrade,
        "gradcheck": cmd_gradcheck,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, CheckpointError, PpmError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
