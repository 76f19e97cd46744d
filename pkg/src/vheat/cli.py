"""``vheat`` command-line entry point."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("vheat")


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _source(text: str) -> tuple[int, int]:
    parts = _ints(text)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected X,Y got {text!r}")
    return parts[0], parts[1]


# --- verify -------------------------------------------------------------------

def cmd_verify(args) -> int:
    from . import verify

    ok = verify.run(args.suite, seed=args.seed)
    return 0 if ok else 1


# --- train / eval -----------------------------------------------------------

def _load_config(path):
    from .backbone import ModelConfig, micro_config

    if path is None:
        return micro_config(), {}
    with open(path) as fh:
        raw = json.load(fh)
    optim = raw.pop("optim", {}) or {}
    return ModelConfig.from_dict(raw), optim


def _synthetic_spec(args, cfg) -> dict:
    return {"classes": cfg.num_classes, "train": args.synth_train, "test": args.synth_test,
            "extent": cfg.input_extent, "noise": args.noise, "seed": args.seed}


def _synthetic_split(spec: dict, split: str):
    from .data import synth_dataset

    # the test split uses a disjoint seed stream
    seed = [spec["seed"], 0 if split == "train" else 1]
    n = spec["train"] if split == "train" else spec["test"]
    return synth_dataset(spec["classes"], n, spec["extent"], np.random.default_rng(seed).integers(2 ** 31),
                         spec["noise"], split)


def cmd_train(args) -> int:
    from .backbone import build_model
    from .checkpoint import save_checkpoint
    from .data import Normalizer, load_idx_dir
    from .train import OptimConfig, evaluate, prepare, train

    cfg, optim = _load_config(args.config)
    if args.synthetic:
        spec = _synthetic_spec(args, cfg)
        train_raw, test_raw = _synthetic_split(spec, "train"), _synthetic_split(spec, "test")
        source = {"synthetic": spec}
    else:
        if args.data is None:
            raise SystemExit("train: --data DIR is required unless --synthetic is given")
        train_raw = load_idx_dir(args.data, "train", cfg.num_classes)
        test_raw = load_idx_dir(args.data, "test", cfg.num_classes)
        source = {"idx_dir": str(args.data)}
        if args.limit:
            train_raw = train_raw.subset(slice(0, args.limit))
    norm = Normalizer.fit(train_raw)
    dtype = np.dtype(cfg.dtype)
    train_ds = prepare(train_raw, cfg.input_extent, norm, dtype)
    test_ds = prepare(test_raw, cfg.input_extent, norm, dtype)

    fields = {f.name for f in dataclasses.fields(OptimConfig)}
    unknown = set(optim) - fields
    if unknown:
        raise SystemExit(f"train: unknown optim fields in config: {sorted(unknown)}")
    ocfg = OptimConfig(**optim)
    for name in ("lr", "weight_decay", "batch_size", "warmup_epochs", "label_smoothing", "workers"):
        val = getattr(args, name)
        if val is not None:
            ocfg = dataclasses.replace(ocfg, **{name: val})
    ocfg = dataclasses.replace(ocfg, deterministic=args.deterministic)

    model = build_model(cfg, seed=args.seed)
    metrics_path = args.metrics or f"{args.out}.metrics.csv"
    res = train(model, train_ds, ocfg, epochs=args.epochs, seed=args.seed, eval_ds=test_ds,
                metrics_path=metrics_path, max_steps=args.max_steps, dump_path=f"{args.out}.diverged")
    acc, loss = evaluate(model, test_ds)
    extra = {"normalizer": norm.to_dict(), "data": source, "epochs": args.epochs,
             "optim": {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(ocfg).items()},
             "final_train_loss": res.final_loss, "test_top1": acc, "test_loss": loss}
    nbytes = save_checkpoint(model, args.out, res.optimizer, extra)
    print(f"steps={res.steps} final_train_loss={res.final_loss!r} test_top1={acc:.4f} test_loss={loss:.4f}")
    print(f"checkpoint {args.out} ({nbytes} bytes); metrics {metrics_path}")
    return 0


def cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .data import Normalizer, load_idx_dir
    from .train import evaluate, prepare

    model = load_checkpoint(args.ckpt)
    extra = model.checkpoint_extra
    cfg = model.cfg
    if "normalizer" not in extra:
        raise SystemExit(f"eval: {args.ckpt} carries no normalisation statistics")
    norm = Normalizer.from_dict(extra["normalizer"])
    synth = extra.get("data", {}).get("synthetic")
    if args.synthetic and synth is None:
        raise SystemExit(f"eval: {args.ckpt} was not trained on synthetic data")
    if args.data is not None and not args.synthetic:
        raw = load_idx_dir(args.data, args.split, cfg.num_classes)
    elif synth is not None:
        raw = _synthetic_split(extra["data"]["synthetic"], args.split)
    else:
        raise SystemExit("eval: --data DIR is required for checkpoints not trained on synthetic data")
    ds = prepare(raw, cfg.input_extent, norm, np.dtype(cfg.dtype))
    acc, loss = evaluate(model, ds)
    print(f"split={args.split} n={len(ds)} top1={acc:.4f} loss={loss:.4f}")
    return 0


# --- bench ----------------------------------------------------------------------

def cmd_bench(args) -> int:
    from .bench import bench, write_csv

    records, slope = bench(args.op, args.resolutions, channels=args.channels, repeats=args.repeats,
                           batch=args.batch, threads=args.threads, seed=args.seed,
                           measure_memory=not args.no_memory)
    for r in records:
        flag = "  UNRELIABLE (cv %.2f)" % r.cv if r.unreliable else ""
        print(f"{r.op:>9s} R={r.resolution:<4d} N={r.tokens:<6d} median={r.median_s:.4e}s "
              f"peak={r.peak_bytes}B{flag}")
    print(f"slope {args.op} = {slope:.3f} (log time vs log tokens, resolutions >= 32)")
    if args.csv:
        write_csv(args.csv, records, slope, append=args.append)
    return 0


# --- visualize ------------------------------------------------------------------

def cmd_visualize(args) -> int:
    from .visualize import model_diffusivity, visualize_conduction

    if args.ckpt is not None:
        from .checkpoint import load_checkpoint

        k = model_diffusivity(load_checkpoint(args.ckpt), args.stage, args.layer)
    else:
        k = args.k
    frames = visualize_conduction(args.source, args.times, args.out, k=k, extent=(args.extent, args.extent),
                                  png=args.png)
    for f in frames:
        print(f"t={f.t:g} max={f.field.max():.6g} -> {f.path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vheat", description="Heat conduction operator toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("verify", help="run invariant suites")
    s.add_argument("--suite", default="all", choices=("dct", "hco", "oracle", "grad", "all"))
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("train", help="train a model")
    s.add_argument("--config", type=Path, help="JSON mirroring ModelConfig fields (default: micro preset)")
    s.add_argument("--data", type=Path, help="directory holding IDX train/t10k files")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--synthetic", action="store_true", help="use the frequency-class generator")
    s.add_argument("--epochs", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--deterministic", action="store_true")
    s.add_argument("--lr", type=float)
    s.add_argument("--weight-decay", dest="weight_decay", type=float)
    s.add_argument("--batch-size", dest="batch_size", type=int)
    s.add_argument("--warmup-epochs", dest="warmup_epochs", type=float)
    s.add_argument("--label-smoothing", dest="label_smoothing", type=float)
    s.add_argument("--workers", type=int)
    s.add_argument("--max-steps", dest="max_steps", type=int)
    s.add_argument("--limit", type=int, help="use only the first N training images")
    s.add_argument("--metrics", type=Path)
    s.add_argument("--synth-train", dest="synth_train", type=int, default=2048)
    s.add_argument("--synth-test", dest="synth_test", type=int, default=512)
    s.add_argument("--noise", type=float, default=0.3)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint")
    s.add_argument("--ckpt", required=True, type=Path)
    s.add_argument("--data", type=Path)
    s.add_argument("--synthetic", action="store_true", help="regenerate the synthetic split recorded in the checkpoint")
    s.add_argument("--split", default="test", choices=("train", "test"))
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bench", help="complexity benchmark")
    s.add_argument("--op", required=True, choices=("hco", "attention", "dct"))
    s.add_argument("--resolutions", type=_ints, default=[32, 64, 128, 256])
    s.add_argument("--channels", type=int, default=64)
    s.add_argument("--repeats", type=int, default=9)
    s.add_argument("--batch", type=int, default=1)
    s.add_argument("--threads", type=int, help="BLAS threads (default VHEAT_THREADS or 1)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--csv", type=Path)
    s.add_argument("--append", action="store_true")
    s.add_argument("--no-memory", dest="no_memory", action="store_true", help="skip the tracemalloc pass")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("visualize", help="heat-source conduction images")
    s.add_argument("--source", required=True, type=_source, help="X,Y")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--k", type=float, help="uniform diffusivity")
    g.add_argument("--ckpt", type=Path, help="use a trained layer's predicted diffusivity")
    s.add_argument("--stage", type=int, default=0)
    s.add_argument("--layer", type=int, default=0)
    s.add_argument("--times", type=_floats, default=[1, 5, 25, 100])
    s.add_argument("--extent", type=int, default=64, help="field size for uniform k")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--png", action="store_true")
    s.set_defaults(func=cmd_visualize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"vheat {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
