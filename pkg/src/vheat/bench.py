"""Complexity benchmark: HCO and DCT against a quadratic attention baseline."""

from __future__ import annotations

import csv
import math
import os
import statistics
import time
import tracemalloc
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .dct import build_plan, dct2d_array, idct2d_array
from .hco import hco_array

CSV_HEADER = ("op", "resolution", "tokens", "channels", "repeats", "median_s", "peak_bytes", "slope")
OPS = ("hco", "attention", "dct")
MIN_FIT_RESOLUTION = 32


@dataclass
class BenchRecord:
    op: str
    resolution: int
    tokens: int
    channels: int
    repeats: int
    median_s: float
    peak_bytes: int
    unreliable: bool = False
    cv: float = 0.0


def attention_weights(C: int, seed: int = 0, dtype=np.float32) -> np.ndarray:
    """Fixed random [3, C, C] query/key/value projections."""
    rng = np.random.default_rng(seed)
    return (rng.standard_normal((3, C, C)) / math.sqrt(C)).astype(dtype)


def attention_baseline(x: np.ndarray, weights: Optional[np.ndarray] = None, chunk_elems: int = 1 << 24) -> np.ndarray:
    """Single-head softmax self-attention over the H*W tokens of [B, C, H, W].

    Query rows are processed in chunks so the score matrix never exceeds
    ``chunk_elems`` entries; the arithmetic stays quadratic in tokens.
    """
    B, C, H, W = x.shape
    if weights is None:
        weights = attention_weights(C, dtype=x.dtype)
    N = H * W
    scale = 1.0 / math.sqrt(C)
    out = np.empty((B, N, C), dtype=x.dtype)
    rows = max(1, chunk_elems // N)
    for b in range(B):
        tok = x[b].reshape(C, N).T
        q = tok @ weights[0]
        k = tok @ weights[1]
        v = tok @ weights[2]
        for s in range(0, N, rows):
            sc = q[s:s + rows] @ k.T
            sc *= scale
            sc -= sc.max(axis=1, keepdims=True)
            np.exp(sc, out=sc)
            sc /= sc.sum(axis=1, keepdims=True)
            out[b, s:s + rows] = sc @ v
    return out.transpose(0, 2, 1).reshape(B, C, H, W)


def _make_op(op: str, R: int, C: int, B: int, rng, dtype) -> Callable[[], np.ndarray]:
    x = rng.standard_normal((B, C, R, R)).astype(dtype)
    if op == "hco":
        plan = build_plan(R, R, dtype)
        coeff = np.exp(-rng.uniform(0, 1, (C, R, R))).astype(dtype)
        return lambda: hco_array(plan, coeff, x)
    if op == "dct":
        plan = build_plan(R, R, dtype)
        return lambda: dct2d_array(plan, x)
    if op == "idct":
        plan = build_plan(R, R, dtype)
        return lambda: idct2d_array(plan, x)
    if op == "attention":
        w = attention_weights(C, dtype=dtype)
        return lambda: attention_baseline(x, w)
    raise ValueError(f"unknown bench op {op!r}; choose from {OPS}")


def _peak_bytes(fn) -> int:
    tracemalloc.start()
    try:
        fn()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return int(peak)


def time_op(fn, repeats: int, warmup: int = 2) -> list[float]:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return times


def fit_slope(tokens: Sequence[int], times: Sequence[float], min_tokens: int = MIN_FIT_RESOLUTION ** 2) -> float:
    """Least-squares slope of log(time) against log(tokens)."""
    pts = [(n, t) for n, t in zip(tokens, times) if n >= min_tokens]
    if len(pts) < 2:
        return float("nan")
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    return float(np.polyfit(lx, ly, 1)[0])


def bench(op: str, resolutions: Sequence[int], channels: int = 64, repeats: int = 9, batch: int = 1,
          warmup: int = 2, threads: Optional[int] = None, seed: int = 0, dtype=np.float32,
          measure_memory: bool = True) -> tuple[list[BenchRecord], float]:
    """Median forward wall time per resolution and the fitted log-log slope."""
    if repeats < 5:
        raise ValueError("repeats must be at least 5")
    if warmup < 2:
        raise ValueError("at least 2 warmup iterations are required")
    if any(b <= a for a, b in zip(resolutions, resolutions[1:])):
        raise ValueError(f"resolutions must be strictly increasing, got {list(resolutions)}")
    threads = threads or int(os.environ.get("VHEAT_THREADS", "1"))
    rng = np.random.default_rng(seed)
    records = []
    with threadpool_limits(threads):
        for R in resolutions:
            fn = _make_op(op, R, channels, batch, rng, dtype)
            times = time_op(fn, repeats, warmup)
            med = statistics.median(times)
            cv = statistics.pstdev(times) / statistics.fmean(times)
            peak = _peak_bytes(fn) if measure_memory else 0
            records.append(BenchRecord(op, R, R * R, channels, repeats, med, peak, cv > 0.30, cv))
    slope = fit_slope([r.tokens for r in records], [r.median_s for r in records])
    return records, slope


def write_csv(path, records: Sequence[BenchRecord], slope: float, append: bool = False) -> None:
    exists = append and os.path.exists(path) and os.path.getsize(path) > 0
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if not exists:
            w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([r.op, r.resolution, r.tokens, r.channels, r.repeats, f"{r.median_s:.6e}",
                        r.peak_bytes, f"{slope:.4f}"])


def compare_kernel_backends(sizes=(16, 32, 64, 128), channels: int = 32, batch: int = 8,
                            repeats: int = 7) -> list[dict]:
    """Median times of the compiled and numpy stencil kernels on the same inputs."""
    from . import kernels

    rng = np.random.default_rng(0)
    rows = []
    for R in sizes:
        x = rng.standard_normal((batch, channels, R, R)).astype(np.float32)
        w = rng.standard_normal((channels, 3, 3)).astype(np.float32)
        g = rng.standard_normal(x.shape).astype(np.float32)
        u = rng.standard_normal((R * 4, R * 4))
        cases = {
            "dwconv3x3": lambda b: kernels.dwconv3x3(x, w, backend=b),
            "dwconv3x3_backward": lambda b: kernels.dwconv3x3_backward(g, x, w, backend=b),
            "ftcs_step": lambda b: kernels.ftcs_step(u, 0.1, backend=b),
        }
        for name, fn in cases.items():
            row = {"kernel": name, "size": R}
            for b in kernels.available_backends():
                row[b] = statistics.median(time_op(lambda: fn(b), repeats))
            rows.append(row)
    return rows
