"""Dense tensor and the reverse-mode tape."""

from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence

import numpy as np

FLOAT_DTYPES = (np.float32, np.float64)


class NonFiniteError(FloatingPointError):
    """Raised when a forward pass produces NaN or Inf."""


class Tensor:
    """A dense array that can take part in a recorded computation.

    Leaves created with ``requires_grad=True`` receive gradients from
    :meth:`Tape.backward`. Tensors are treated as immutable once built.
    """

    __slots__ = ("data", "requires_grad", "node", "name", "__weakref__")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.requires_grad = requires_grad
        self.node: Optional[Node] = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got dims {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # operator sugar; the primitives live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if dtype is None and isinstance(x, (int, float)):
        dtype = np.float64
    return Tensor(x, dtype=dtype)


class Node:
    """One recorded primitive application.

    ``vjp`` maps the output cotangent to one cotangent (or None) per input;
    it closes over whatever forward values the rule needs.
    """

    __slots__ = ("op", "inputs", "vjp", "shape", "dtype")

    def __init__(self, op: str, inputs: Sequence[Tensor], vjp: Callable, shape, dtype):
        self.op = op
        self.inputs = tuple(inputs)
        self.vjp = vjp
        self.shape = shape
        self.dtype = dtype


_local = threading.local()


def _stack() -> list:
    st = getattr(_local, "stack", None)
    if st is None:
        st = _local.stack = []
    return st


def active_tape() -> Optional["Tape"]:
    st = _stack()
    return st[-1] if st else None


class Tape:
    """Records primitive applications made while it is the active tape.

    Usage::

        with Tape() as tape:
            loss = f(x)
        grads = tape.backward(loss)   # {leaf: ndarray}

    A tape belongs to the thread that entered it. ``backward`` may run only
    once; the recorded graph is released afterwards.
    """

    def __init__(self):
        self.nodes: Optional[list[Node]] = []
        self.leaves: dict[Tensor, None] = {}
        self._consumed = False

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        st = _stack()
        if st and st[-1] is self:
            st.pop()
        return False

    def record(self, node: Node) -> None:
        if self._consumed:
            raise RuntimeError("cannot record on a tape whose backward pass already ran")
        self.nodes.append(node)
        for t in node.inputs:
            if t.requires_grad and t.node is None:
                self.leaves.setdefault(t, None)

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Return d(loss)/d(leaf) for every leaf that requires grad on this tape."""
        if self._consumed:
            raise RuntimeError("backward already ran on this tape; record the computation again")
        if loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got dims {loss.shape}")
        if loss.node is None or not self.nodes or loss.node not in self._node_set():
            raise ValueError("loss was not produced on this tape")
        self._consumed = True

        grads: dict[Tensor, np.ndarray] = {t: np.zeros_like(t.data) for t in self.leaves}
        pending: dict[Node, np.ndarray] = {loss.node: np.ones(loss.shape, dtype=loss.dtype)}
        nodes, self.nodes = self.nodes, None
        for node in reversed(nodes):
            g = pending.pop(node, None)
            if g is None:
                continue
            in_grads = node.vjp(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                if t.node is None:
                    grads[t] += gi
                elif t.node in pending:
                    pending[t.node] = pending[t.node] + gi
                else:
                    pending[t.node] = gi
        return grads

    def _node_set(self):
        return set(self.nodes)


def make_result(op: str, data: np.ndarray, inputs: Sequence[Tensor], vjp: Callable) -> Tensor:
    """Wrap a primitive's output, recording it when a tape is active."""
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        node = Node(op, inputs, vjp, data.shape, data.dtype)
        out.node = node
        tape.record(node)
    return out


def check_finite(data: np.ndarray, op: str) -> None:
    # a single reduction is cheap; only confirm elementwise when it trips
    if not np.isfinite(np.sum(data, dtype=np.float64)) and not np.isfinite(data).all():
        raise NonFiniteError(f"{op}: produced non-finite values")
