"""Desk-scale supervised training and evaluation."""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from .autograd import NonFiniteError, Tape, ops
from .backbone import VHeat
from .data import Dataset, Normalizer, fit_extent

log = logging.getLogger(__name__)

METRICS_HEADER = ("epoch", "split", "loss", "top1")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class OptimConfig:
    lr: float = 1e-3
    weight_decay: float = 0.05
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    warmup_epochs: float = 1.0
    min_lr: float = 0.0
    batch_size: int = 64
    label_smoothing: float = 0.1
    workers: int = 1
    deterministic: bool = False


class AdamW:
    """Adam with decoupled weight decay: ``p -= lr*wd*p`` then the Adam step."""

    def __init__(self, params, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0,
                 decay_mask=None):
        self.params = list(params)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.decay = list(decay_mask) if decay_mask is not None else [True] * len(self.params)
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.step_count = 0

    def step(self, grads, lr: float) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for i, p in enumerate(self.params):
            g = grads[i]
            if g is None:
                g = np.zeros_like(p.data)
            if self.weight_decay and self.decay[i]:
                p.data -= lr * self.weight_decay * p.data
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            mhat = self.m[i] / bc1
            vhat = self.v[i] / bc2
            p.data -= (lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype)

    def load_state(self, step: int, m: list, v: list) -> None:
        self.step_count = step
        self.m = [np.asarray(a, dtype=p.dtype).copy() for a, p in zip(m, self.params)]
        self.v = [np.asarray(a, dtype=p.dtype).copy() for a, p in zip(v, self.params)]


def decay_mask(model: VHeat) -> list[bool]:
    # no decay on norms, biases and frequency embeddings
    return [p.ndim >= 2 and not name.endswith(".fve") for name, p in model.named_parameters()]


def lr_at(step: int, total_steps: int, warmup_steps: int, base_lr: float, min_lr: float = 0.0) -> float:
    """Linear warmup to ``base_lr`` then cosine decay to ``min_lr``."""
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * (step + 1) / warmup_steps
    span = max(1, total_steps - warmup_steps)
    progress = min(1.0, (step - warmup_steps) / span)
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * progress))


def resolve_workers(requested: int, deterministic: bool) -> int:
    if deterministic:
        return 1
    env = os.environ.get("VHEAT_THREADS")
    if env:
        return max(1, int(env))
    return max(1, requested)


def prepare(ds: Dataset, extent: int, normalizer: Normalizer, dtype=np.float32) -> Dataset:
    """Fit to the model extent and normalise with training-split statistics."""
    return Dataset(normalizer(fit_extent(ds.images, extent), dtype), ds.labels, ds.split, ds.num_classes)


def _batch_grads(model: VHeat, params, x, y, smoothing, rng):
    with Tape() as tape:
        logits = model(x, training=True, rng=rng)
        loss = ops.cross_entropy(logits, y, smoothing)
    grads = tape.backward(loss)
    return loss.item(), logits.data, [grads.get(p) for p in params]


@dataclass
class TrainResult:
    model: VHeat
    optimizer: AdamW
    metrics: list = field(default_factory=list)
    final_loss: float = float("nan")
    steps: int = 0


def train(model: VHeat, train_ds: Dataset, cfg: Optional[OptimConfig] = None, epochs: int = 5, seed: int = 0,
          eval_ds: Optional[Dataset] = None, metrics_path=None, max_steps: Optional[int] = None,
          dump_path=None) -> TrainResult:
    """Train on already-prepared (normalised, model-extent) data.

    Deterministic mode forces one worker and a single BLAS thread, so two
    runs with the same seed give bitwise-identical losses.
    """
    cfg = cfg or OptimConfig()
    params = model.parameters()
    opt = AdamW(params, cfg.betas, cfg.eps, cfg.weight_decay, decay_mask(model))
    workers = resolve_workers(cfg.workers, cfg.deterministic)
    n = len(train_ds)
    steps_per_epoch = max(1, math.ceil(n / cfg.batch_size))
    total_steps = steps_per_epoch * epochs if max_steps is None else min(max_steps, steps_per_epoch * epochs)
    warmup = int(round(cfg.warmup_epochs * steps_per_epoch))
    result = TrainResult(model, opt)
    limits = threadpool_limits(1) if cfg.deterministic else None
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    step = 0
    try:
        for epoch in range(epochs):
            order = np.random.default_rng([seed, epoch]).permutation(n)
            tot_loss = tot_correct = seen = 0.0
            for start in range(0, n, cfg.batch_size):
                if step >= total_steps:
                    break
                idx = order[start:start + cfg.batch_size]
                x = train_ds.images[idx]
                y = train_ds.labels[idx]
                loss, logits, grads = _step_grads(model, params, x, y, cfg, seed, step, workers, pool)
                if not math.isfinite(loss):
                    _diverged(model, opt, dump_path, step, loss)
                opt.step(grads, lr_at(step, total_steps, warmup, cfg.lr, cfg.min_lr))
                tot_loss += loss * len(idx)
                tot_correct += float((np.argmax(logits, axis=1) == y).sum())
                seen += len(idx)
                result.final_loss = loss
                step += 1
            if seen:
                result.metrics.append({"epoch": epoch, "split": "train", "loss": tot_loss / seen,
                                       "top1": tot_correct / seen})
                log.info("epoch %d train loss %.4f top1 %.4f", epoch, tot_loss / seen, tot_correct / seen)
            if eval_ds is not None:
                acc, eloss = evaluate(model, eval_ds)
                result.metrics.append({"epoch": epoch, "split": eval_ds.split, "loss": eloss, "top1": acc})
                log.info("epoch %d %s loss %.4f top1 %.4f", epoch, eval_ds.split, eloss, acc)
            if step >= total_steps:
                break
    finally:
        if pool is not None:
            pool.shutdown()
        if limits is not None:
            limits.restore_original_limits()
    result.steps = step
    if metrics_path is not None:
        write_metrics(metrics_path, result.metrics)
    return result


def _step_grads(model, params, x, y, cfg, seed, step, workers, pool):
    try:
        if pool is None or len(y) < 2 * workers:
            rng = np.random.default_rng([seed, step, 0])
            return _batch_grads(model, params, x, y, cfg.label_smoothing, rng)
        shards = np.array_split(np.arange(len(y)), workers)
        futures = [pool.submit(_batch_grads, model, params, x[s], y[s], cfg.label_smoothing,
                               np.random.default_rng([seed, step, i]))
                   for i, s in enumerate(shards)]
        outs = [f.result() for f in futures]
    except NonFiniteError:
        return float("nan"), None, None
    # barrier: average shard gradients weighted by shard size
    B = len(y)
    loss = sum(o[0] * len(s) for o, s in zip(outs, shards)) / B
    logits = np.concatenate([o[1] for o in outs])
    grads = []
    for i in range(len(params)):
        acc = None
        for o, s in zip(outs, shards):
            g = o[2][i]
            if g is not None:
                g = g * (len(s) / B)
                acc = g if acc is None else acc + g
        grads.append(acc)
    return loss, logits, grads


def _diverged(model, opt, dump_path, step, loss):
    where = ""
    if dump_path is not None:
        from .checkpoint import save_checkpoint

        save_checkpoint(model, dump_path, opt, extra={"diverged_at_step": step})
        where = f"; state dumped to {dump_path}"
    raise TrainingDiverged(f"loss became {loss} at step {step}{where}")


def evaluate(model: VHeat, ds: Dataset, batch_size: int = 256) -> tuple[float, float]:
    """Top-1 accuracy (ties go to the lowest class index) and mean cross-entropy."""
    correct = 0
    total_loss = 0.0
    for start in range(0, len(ds), batch_size):
        x = ds.images[start:start + batch_size]
        y = ds.labels[start:start + batch_size]
        logits = model(x, training=False)
        correct += int((np.argmax(logits.data, axis=1) == y).sum())
        total_loss += ops.cross_entropy(logits, y).item() * len(y)
    n = max(1, len(ds))
    return correct / n, total_loss / n


def write_metrics(path, metrics) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for row in metrics:
            w.writerow([row["epoch"], row["split"], f"{row['loss']:.6f}", f"{row['top1']:.6f}"])
