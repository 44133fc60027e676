"""Tensor type and reverse-mode graph replay.

Every primitive application creates a new Tensor with a fresh node id drawn
from a process-wide counter, so ids increase along any data dependency. The
graph of a loss is the set of nodes reachable from it; sorting that set by
node id gives a topological order without extra bookkeeping.
"""

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ValidationError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_node_ids = itertools.count()
_state = threading.local()


def default_dtype() -> np.dtype:
    return getattr(_state, "dtype", np.dtype(np.float32))


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def precision(dtype):
    """Switch the dtype new tensors are created with (float32 or float64)."""
    previous = default_dtype()
    _state.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = previous


@contextmanager
def no_grad():
    """Record nothing inside the block; results are constant leaves."""
    previous = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Tensor:
    """Dense array participating in a differentiable computation."""

    __slots__ = ("data", "requires_grad", "grad", "node_id", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        array = np.asarray(data)
        if array.dtype.kind in "fiub":
            array = array.astype(default_dtype(), copy=False)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node_id = next(_node_ids)
        self.op = "leaf"
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, wrt: Optional[Iterable["Tensor"]] = None) -> None:
        backward(self, wrt)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # Operator sugar; the primitives live in ops.py.
    def __add__(self, other):
        from . import ops
        return ops.add(self, _lift(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, _lift(other, self))

    def __rsub__(self, other):
        from . import ops
        return ops.sub(_lift(other, self), self)

    def __mul__(self, other):
        from . import ops
        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


def _lift(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.full(like.shape, value, dtype=like.data.dtype))


def record(data: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn, op: str) -> Tensor:
    """Wrap a primitive's forward result and register how to differentiate it.

    ``backward_fn`` receives the upstream gradient and returns one gradient
    (or None) per parent, in parent order.
    """
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.op = op
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass
class Graph:
    """Nodes reachable from a loss, ordered so inputs precede consumers."""

    nodes: List[Tensor] = field(default_factory=list)

    @classmethod
    def trace(cls, root: Tensor) -> "Graph":
        seen: Dict[int, Tensor] = {}
        stack = [root]
        while stack:
            node = stack.pop()
            if node.node_id in seen or not node.requires_grad:
                continue
            seen[node.node_id] = node
            stack.extend(node._parents)
        return cls(nodes=[seen[k] for k in sorted(seen)])


def backward(loss: Tensor, wrt: Optional[Iterable[Tensor]] = None) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``.

    Leaves listed in ``wrt`` that the loss does not reach get a zero gradient.
    """
    if loss.size != 1:
        raise ValidationError(f"backward needs a scalar loss, got shape {loss.shape}")

    graph = Graph.trace(loss)
    pending: Dict[int, np.ndarray] = {}
    if loss.requires_grad:
        pending[loss.node_id] = np.ones_like(loss.data)

    for node in reversed(graph.nodes):
        upstream = pending.pop(node.node_id, None)
        if upstream is None:
            continue
        if node.is_leaf:
            node.grad = upstream.copy() if node.grad is None else node.grad + upstream
            continue
        for parent, grad in zip(node._parents, node._backward(upstream)):
            if grad is None or not parent.requires_grad:
                continue
            if grad.shape != parent.shape:
                grad = grad.reshape(parent.shape)
            if parent.node_id in pending:
                pending[parent.node_id] = pending[parent.node_id] + grad
            else:
                pending[parent.node_id] = grad

    for leaf in wrt or ():
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
