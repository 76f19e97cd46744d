"""Central-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tape, Tensor


class NondeterministicError(RuntimeError):
    pass


def analytic_grads(fn: Callable[..., Tensor], inputs: Sequence[Tensor]) -> list[np.ndarray]:
    with Tape() as tape:
        loss = fn(*inputs)
    grads = tape.backward(loss)
    return [grads.get(t, np.zeros_like(t.data)) for t in inputs]


def _value(fn, inputs) -> float:
    return float(fn(*inputs).data)


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[Tensor], h: float = 1e-5,
               max_elements: Optional[int] = None, seed: int = 0) -> float:
    """Max over checked elements of |analytic - fd| / max(1, |fd|).

    ``fn`` maps the inputs to a scalar Tensor. Inputs must be f64 leaves with
    ``requires_grad`` set. When ``max_elements`` is given, that many elements
    are drawn at random (across all inputs) instead of checking every one.
    """
    for t in inputs:
        if t.dtype != np.float64:
            raise TypeError(f"grad_check needs f64 inputs, got {t.dtype}")
        if not t.requires_grad:
            raise ValueError("grad_check inputs must require grad")

    v0 = _value(fn, inputs)
    if _value(fn, inputs) != v0:
        raise NondeterministicError("two forward passes on identical inputs disagree")

    analytic = analytic_grads(fn, inputs)

    sites = [(i, j) for i, t in enumerate(inputs) for j in range(t.size)]
    if max_elements is not None and max_elements < len(sites):
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(sites), size=max_elements, replace=False)
        sites = [sites[k] for k in sorted(pick)]

    worst = 0.0
    for i, j in sites:
        flat = inputs[i].data.reshape(-1)
        orig = flat[j]
        # difference by the steps actually representable around orig
        up, down = orig + h, orig - h
        flat[j] = up
        fp = _value(fn, inputs)
        flat[j] = down
        fm = _value(fn, inputs)
        flat[j] = orig
        fd = (fp - fm) / (up - down)
        err = abs(analytic[i].reshape(-1)[j] - fd) / max(1.0, abs(fd))
        worst = max(worst, err)
    return worst
