"""Invariant suites behind ``vheat verify``.

Each check reports the measured error next to its tolerance. A suite is a
list of such checks; ``run`` prints them and returns whether all passed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .autograd import Tensor, grad_check, ops
from .dct import DctPlan, build_plan, dct2d_array, dct2d_naive, idct2d_array
from .hco import FveTable, decay_coefficients, frequency_grid, hco_array, hco_forward, predict_k, uniform_coefficients
from .physics import band_limited_field, compare_hco_ftcs, ftcs_solve

SUITES = ("dct", "hco", "oracle", "grad")


@dataclass
class Check:
    name: str
    measured: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.measured)) and self.measured < self.tolerance

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name:<42s} measured={self.measured:.3e}  tol={self.tolerance:.1e}"


def _rel(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64) - b) / max(np.linalg.norm(b), 1e-300))


# --- spectral --------------------------------------------------------------

def dct_checks(seed: int = 0, plan_builder: Callable[..., DctPlan] = build_plan) -> list[Check]:
    rng = np.random.default_rng(seed)
    ortho = 0.0
    for n in range(1, 65):
        C = plan_builder(n, n, np.float64).C
        ortho = max(ortho, float(np.abs(C @ C.T - np.eye(n)).max()))
    naive = 0.0
    for M in range(1, 17):
        N = int(rng.integers(1, 17))
        A = rng.standard_normal((M, N))
        naive = max(naive, float(np.abs(dct2d_array(plan_builder(M, N, np.float64), A) - dct2d_naive(A)).max()))
    p32 = plan_builder(32, 32, np.float32)
    A = rng.standard_normal((2, 3, 32, 32)).astype(np.float32)
    B = dct2d_array(p32, A)
    rt = _rel(idct2d_array(p32, B), A)
    pars = abs(float(np.linalg.norm(B.astype(np.float64))) - float(np.linalg.norm(A.astype(np.float64)))) \
        / float(np.linalg.norm(A.astype(np.float64)))
    p = plan_builder(12, 20, np.float64)
    X, Y = rng.standard_normal((2, 12, 20))
    a, b = rng.standard_normal(2)
    lin = float(np.abs(dct2d_array(p, a * X + b * Y) - (a * dct2d_array(p, X) + b * dct2d_array(p, Y))).max())
    return [
        Check("dct.orthonormality (1..64, f64)", ortho, 1e-12),
        Check("dct.matrix_vs_naive (<=16, f64)", naive, 1e-12),
        Check("dct.round_trip (32x32, f32)", rt, 1e-6),
        Check("dct.parseval (32x32, f32)", pars, 1e-6),
        Check("dct.linearity (12x20, f64)", lin, 1e-12),
    ]


# --- heat conduction operator -------------------------------------------------

def hco_checks(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    B, C, M, N = 2, 4, 16, 12
    p32 = build_plan(M, N, np.float32)
    U = rng.standard_normal((B, C, M, N)).astype(np.float32)
    ident = float(np.abs(hco_forward(p32, np.ones((M, N, C), np.float32), U).data - U).max() / np.abs(U).max())

    k = rng.uniform(-0.5, 2.0, size=(M, N, C))
    coeff = np.exp(-k * frequency_grid(M, N).omega2[:, :, None]).astype(np.float32)
    out = hco_forward(p32, coeff, U).data
    mean_err = float(np.abs(out.astype(np.float64).mean(axis=(2, 3)) - U.astype(np.float64).mean(axis=(2, 3))).max())

    p64 = build_plan(M, N)
    eig = 0.0
    for p_idx in (0, 1, 3, M - 1):
        m = np.arange(M)
        mode = np.cos(np.pi * p_idx * (2 * m + 1) / (2 * M))[:, None] * np.ones((1, N))
        kk, tt = 0.7, 2.5
        got = hco_array(p64, uniform_coefficients(kk, M, N, tt), mode)
        want = np.exp(-kk * (np.pi * p_idx / M) ** 2 * tt) * mode
        eig = max(eig, float(np.abs(got - want).max()))

    U64 = rng.standard_normal((B, C, M, N))
    t1, t2, kk = 0.6, 1.7, 0.9
    two = hco_array(p64, uniform_coefficients(kk, M, N, t2), hco_array(p64, uniform_coefficients(kk, M, N, t1), U64))
    one = hco_array(p64, uniform_coefficients(kk, M, N, t1 + t2), U64)
    semi = _rel(two, one)
    return [
        Check("hco.identity_k0 (f32)", ident, 1e-6),
        Check("hco.mean_preservation (random k, f32)", mean_err, 1e-6),
        Check("hco.eigenfunction_decay (f64)", eig, 1e-12),
        Check("hco.semigroup (f64)", semi, 1e-10),
    ]


# --- physics oracle --------------------------------------------------------

def oracle_checks(seed: int = 0, seeds: int = 10) -> list[Check]:
    worst = 0.0
    for s in range(seeds):
        u0 = band_limited_field(32, 32, 8, np.random.default_rng(seed + s))
        worst = max(worst, compare_hco_ftcs(u0, 1.0, 4.0))
    rng = np.random.default_rng(seed)
    u0 = rng.uniform(0, 1, (16, 16))
    u = ftcs_solve(u0, 1.0, 2.0, 0.05)
    cons = abs(u.sum() - u0.sum()) / abs(u0.sum())
    M = 32
    x = np.arange(M)
    mode = np.cos(np.pi * (x + 0.5) / M)[:, None] * np.ones((1, M))
    u = ftcs_solve(mode, 1.0, 4.0, 0.01)
    ratio = float((u * mode).sum() / (mode * mode).sum())
    decay = abs(ratio / np.exp(-(np.pi / M) ** 2 * 4.0) - 1.0)
    return [
        Check("oracle.hco_vs_ftcs (32x32 band<=8, 10 seeds)", worst, 2e-2),
        Check("oracle.heat_conservation", cons, 1e-9),
        Check("oracle.cosine_mode_decay", decay, 2e-2),
    ]


def oracle_diagnostics(seed: int = 0) -> list[str]:
    """Report-only: spectral vs finite-difference gap as the band widens."""
    lines = []
    for t in (1.0, 4.0):
        errs = [compare_hco_ftcs(band_limited_field(32, 32, c, np.random.default_rng(seed)), 1.0, t)
                for c in (4, 8, 16)]
        lines.append(f"[INFO] oracle.cutoff_sweep t={t:g} p_max=4,8,16: " + ", ".join(f"{e:.2e}" for e in errs))
    return lines


# --- gradients ----------------------------------------------------------------

def _weighted(out: Tensor, w: np.ndarray) -> Tensor:
    return ops.sum(ops.mul(out, w))


def primitive_cases(rng: np.random.Generator) -> dict[str, tuple[Callable, list[Tensor]]]:
    """Scalar-valued f64 probes, one per differentiable primitive."""

    def leaf(*shape, scale=1.0):
        return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)

    w4 = rng.standard_normal((2, 3, 5, 4))
    wmm = rng.standard_normal((2, 3, 5))
    wlab = rng.integers(0, 5, size=4)
    wcv = rng.standard_normal((2, 4, 3, 3))
    cases = {
        "add": (lambda a, b: _weighted(ops.add(a, b), w4), [leaf(2, 3, 5, 4), leaf(3, 1, 4)]),
        "sub": (lambda a, b: _weighted(ops.sub(a, b), w4), [leaf(2, 3, 5, 4), leaf(5, 1)]),
        "mul": (lambda a, b: _weighted(ops.mul(a, b), w4), [leaf(2, 3, 5, 4), leaf(1, 3, 1, 4)]),
        "exp": (lambda a: _weighted(ops.exp(a), w4), [leaf(2, 3, 5, 4, scale=0.5)]),
        "matmul": (lambda a, b: _weighted(ops.matmul(a, b), wmm), [leaf(3, 4), leaf(2, 4, 5)]),
        "batched_matmul": (lambda a, b: _weighted(ops.matmul(a, b), wmm), [leaf(2, 3, 4), leaf(2, 4, 5)]),
        "reshape": (lambda a: _weighted(ops.reshape(a, (2, 3, 5, 4)), w4), [leaf(6, 20)]),
        "permute": (lambda a: _weighted(ops.permute(a, (0, 2, 3, 1)), w4.transpose(0, 2, 3, 1)),
                    [leaf(2, 3, 5, 4)]),
        "broadcast": (lambda a: _weighted(ops.broadcast_to(a, (2, 3, 5, 4)), w4), [leaf(3, 1, 4)]),
        "dwconv3x3": (lambda x, k: _weighted(ops.dwconv3x3(x, k), w4), [leaf(2, 3, 5, 4), leaf(3, 3, 3)]),
        "conv3x3_s2": (lambda x, k: _weighted(ops.conv3x3(x, k, 2), wcv),
                       [leaf(2, 3, 6, 5), leaf(4, 3, 3, 3)]),
        "layer_norm": (lambda x, g, b: _weighted(ops.layer_norm(x, g, b, axis=1), w4),
                       [leaf(2, 3, 5, 4), leaf(3), leaf(3)]),
        "gelu": (lambda a: _weighted(ops.gelu(a), w4), [leaf(2, 3, 5, 4, scale=2.0)]),
        "silu": (lambda a: _weighted(ops.silu(a), w4), [leaf(2, 3, 5, 4, scale=2.0)]),
        "softmax": (lambda a: _weighted(ops.softmax(a, axis=-1), w4), [leaf(2, 3, 5, 4)]),
        "avg_pool_spatial": (lambda a: _weighted(ops.avg_pool_spatial(a), w4[:, :, 0, 0]), [leaf(2, 3, 5, 4)]),
        "cross_entropy_ls": (lambda z: ops.cross_entropy(z, wlab, 0.1), [leaf(4, 5)]),
        "sum": (lambda a: ops.sum(ops.mul(ops.sum(a, axis=(1, 3)), w4[:, 0, :, 0])), [leaf(2, 3, 5, 4)]),
        "mean": (lambda a: ops.sum(ops.mul(ops.mean(a, axis=2, keepdims=True), w4[:, :, :1, :])),
                 [leaf(2, 3, 5, 4)]),
    }
    return cases


def randomize_parameters(model, rng: np.random.Generator, scale: float = 0.2) -> None:
    """Fill zero-initialised weights with noise so every path carries gradient."""
    for _, p in model.named_parameters():
        if not np.any(p.data):
            p.data[...] = rng.standard_normal(p.shape) * scale


def heat_layer_case(seed: int = 0):
    from .layers import HeatLayer

    rng = np.random.default_rng(seed)
    layer = HeatLayer(8, rng, dtype=np.float64)
    randomize_parameters(layer, rng)
    fve = FveTable(Tensor(rng.standard_normal((8, 8, 8)) * 0.5, requires_grad=True))
    x = Tensor(rng.standard_normal((1, 8, 8, 8)), requires_grad=True)
    w = rng.standard_normal((1, 8, 8, 8))
    params = layer.parameters()

    def fn(x_, fve_emb, *ps):
        return _weighted(layer(x_, fve, training=False), w)

    return fn, [x, fve.embeddings] + params


def k_sum_case(seed: int = 0):
    rng = np.random.default_rng(seed)
    fve = FveTable(Tensor(rng.standard_normal((6, 5, 4))))
    W = Tensor(rng.standard_normal((4, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal(4))

    def fn(W_):
        return ops.sum(predict_k(fve, W_, b).k)

    return fn, [W]


def hco_case(seed: int = 0):
    """HCO scalar loss on a 1x4x8x8 input through the full fve -> k -> coeff path.

    k is kept moderate: strongly negative k amplifies high frequencies by
    exp(|k| w^2) and the loss magnitude then swamps the finite differences.
    """
    rng = np.random.default_rng(seed)
    plan = build_plan(8, 8)
    fve = FveTable(Tensor(rng.standard_normal((8, 8, 3)) * 0.3, requires_grad=True))
    W = Tensor(rng.standard_normal((3, 4)) * 0.1, requires_grad=True)
    b = Tensor(rng.uniform(0.1, 0.5, 4), requires_grad=True)
    U = Tensor(rng.standard_normal((1, 4, 8, 8)), requires_grad=True)
    w = rng.standard_normal((1, 4, 8, 8))

    def fn(U_, emb, W_, b_):
        return _weighted(hco_forward(plan, predict_k(fve, W_, b_).coeff, U_), w)

    return fn, [U, fve.embeddings, W, b]


def hco_direct_case(seed: int = 0):
    """Gradient w.r.t. U0 and an explicit [M, N, C] diffusivity."""
    rng = np.random.default_rng(seed)
    plan = build_plan(8, 8)
    grid = frequency_grid(8, 8)
    k = Tensor(rng.uniform(-0.1, 0.6, (8, 8, 4)), requires_grad=True)
    U = Tensor(rng.standard_normal((1, 4, 8, 8)), requires_grad=True)
    w = rng.standard_normal((1, 4, 8, 8))

    def fn(U_, k_):
        return _weighted(hco_forward(plan, decay_coefficients(k_, grid), U_), w)

    return fn, [U, k]


def micro_backbone_case(seed: int = 0):
    from .backbone import build_model, micro_config

    rng = np.random.default_rng(seed)
    model = build_model(micro_config(dtype="float64"), seed=seed)
    randomize_parameters(model, rng)
    x = rng.standard_normal((1, 3, 32, 32))
    y = np.array([3])
    params = model.parameters()

    def fn(*ps):
        return ops.cross_entropy(model(x), y, 0.1)

    return fn, params


def grad_checks(seed: int = 0, backbone_samples: int = 64) -> list[Check]:
    rng = np.random.default_rng(seed)
    checks = []
    for name, (fn, inputs) in primitive_cases(rng).items():
        checks.append(Check(f"grad.{name}", grad_check(fn, inputs), 1e-5))
    x = Tensor(rng.standard_normal((4, 8)), requires_grad=True)
    g = Tensor(rng.standard_normal(8), requires_grad=True)
    bt = Tensor(rng.standard_normal(8), requires_grad=True)
    wl = rng.standard_normal((4, 8))
    checks.append(Check("grad.layer_norm_composite (4x8)",
                        grad_check(lambda a, b, c: _weighted(ops.layer_norm(a, b, c, axis=-1), wl), [x, g, bt]),
                        1e-6))
    fn, inputs = k_sum_case(seed)
    checks.append(Check("grad.sum_k (W)", grad_check(fn, inputs), 1e-6))
    fn, inputs = hco_direct_case(seed)
    checks.append(Check("grad.hco (U0, k)", grad_check(fn, inputs), 1e-6))
    fn, inputs = hco_case(seed)
    checks.append(Check("grad.hco (U0, fve, W, b)", grad_check(fn, inputs), 1e-6))
    fn, inputs = heat_layer_case(seed)
    checks.append(Check("grad.heat_layer (1x8x8x8)", grad_check(fn, inputs), 1e-5))
    fn, inputs = micro_backbone_case(seed)
    checks.append(Check(f"grad.micro_backbone ({backbone_samples} params)",
                        grad_check(fn, inputs, max_elements=backbone_samples, seed=seed), 1e-4))
    return checks


SUITE_FUNCS = {"dct": dct_checks, "hco": hco_checks, "oracle": oracle_checks, "grad": grad_checks}


def run(suite: str = "all", seed: int = 0, out=print, plan_builder: Optional[Callable] = None) -> bool:
    names = SUITES if suite == "all" else (suite,)
    if any(n not in SUITE_FUNCS for n in names):
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES + ('all',)}")
    ok = True
    for name in names:
        t0 = time.perf_counter()
        if name == "dct" and plan_builder is not None:
            checks = dct_checks(seed, plan_builder)
        else:
            checks = SUITE_FUNCS[name](seed)
        for c in checks:
            out(c.line())
        if name == "oracle":
            for line in oracle_diagnostics(seed):
                out(line)
        passed = all(c.passed for c in checks)
        ok &= passed
        out(f"-- {name}: {sum(c.passed for c in checks)}/{len(checks)} passed in {time.perf_counter() - t0:.1f}s")
    out("ALL PASSED" if ok else "FAILURES PRESENT")
    return ok
