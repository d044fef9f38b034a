"""Dense tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a contiguous numpy float buffer together with a
gradient slot and, when produced by an operation, a backward closure over the
saved activations that operation needs.  Calling :meth:`Tensor.backward` on a
scalar walks the tape once in reverse topological order and accumulates
gradients into every reachable tensor with ``requires_grad``.

Run precision is selected globally: float32 for training, float64 for
gradient and equivariance verification.
"""
from __future__ import annotations

import contextlib

import numpy as np

from ..errors import ConfigError

__all__ = [
    "Tensor",
    "Parameter",
    "set_default_dtype",
    "default_dtype",
    "precision",
    "set_debug_nan",
    "debug_nan_enabled",
]

_DTYPES = {"f32": np.float32, "f64": np.float64}
_default_dtype = np.float32
_debug_nan = False


def set_default_dtype(name: str) -> None:
    """Select run precision: "f32" or "f64"."""
    global _default_dtype
    if name not in _DTYPES:
        raise ConfigError(f"precision must be one of {sorted(_DTYPES)}, got {name!r}")
    _default_dtype = _DTYPES[name]


def default_dtype() -> np.dtype:
    return np.dtype(_default_dtype)


@contextlib.contextmanager
def precision(name: str):
    """Temporarily switch the default float precision."""
    global _default_dtype
    saved = _default_dtype
    set_default_dtype(name)
    try:
        yield
    finally:
        _default_dtype = saved


def set_debug_nan(enabled: bool) -> None:
    """When enabled, every op output is checked for non-finite entries."""
    global _debug_nan
    _debug_nan = bool(enabled)


def debug_nan_enabled() -> bool:
    return _debug_nan


class Tensor:
    """A node of the compute graph."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, *, op: str = "leaf"):
        # Explicitly typed float arrays are kept; everything else adopts the
        # run precision.
        if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            arr = data
        else:
            arr = np.asarray(data, dtype=default_dtype())
        self.data = np.ascontiguousarray(arr)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- construction used by ops ------------------------------------------

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: tuple["Tensor", ...], op: str) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        t.requires_grad = any(p.requires_grad for p in parents)
        t.op = op
        t._parents = parents if t.requires_grad else ()
        t._backward = None
        if _debug_nan and not np.all(np.isfinite(data)):
            raise FloatingPointError(f"non-finite values produced by op {op!r}")
        return t

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return self.data.item()

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, op="detach")

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, grad={'set' if self.grad is not None else 'none'})"

    # -- autodiff -------------------------------------------------------------

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Backpropagate from this node.

        Without an explicit seed gradient the node must be scalar. The tape is
        visited exactly once per node, in reverse topological order.
        """
        if grad is None:
            if self.data.size != 1:
                raise ConfigError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        self._accumulate(grad)

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def zero_grad(self) -> None:
        self.grad = None


class Parameter(Tensor):
    """A trainable leaf tensor with a name and a regularization group."""

    __slots__ = ("name", "penalty")

    def __init__(self, data, name: str, penalty: str | None = None):
        super().__init__(np.asarray(data, dtype=default_dtype()), requires_grad=True, op="param")
        self.name = name
        self.penalty = penalty  # "conv", "fc" or None (no elastic-net term)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"
