import logging
import os
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import ContractError, NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[Any]]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_DEBUG = os.environ.get("TGFUSE_DEBUG", "") == "1"
_local = threading.local()


def set_debug(flag: bool) -> None:
    """Turn finite-value checks after every op on or off."""
    global _DEBUG
    _DEBUG = flag


def debug_enabled() -> bool:
    return _DEBUG


def _tape_stack() -> List[Optional["Tape"]]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def current_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


@contextmanager
def no_grad() -> Iterator[None]:
    """Run the enclosed forward pass without recording anything."""
    stack = _tape_stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


class Tensor:
    """
    Dense float64 array with optional gradient tracking.

    A tensor only records operations while a `Tape` is active. Parameters are
    created with `requires_grad=True`; every op whose inputs include a tracked
    tensor produces a tracked output and a tape entry.
    """

    __array_priority__ = 100
    __array_ufunc__ = None

    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None):
        self.data: np.ndarray = np.array(data, dtype=np.float64, copy=True) if not isinstance(data, np.ndarray) \
            else data.astype(np.float64, copy=False)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node_id: Optional[int] = None
        self.name = name
        self._tape: Optional["Tape"] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # arithmetic
    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return div(other, self)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, idx: Any) -> "Tensor":
        return getitem(self, idx)

    # structure
    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def swapaxes(self, a: int, b: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))

    @property
    def T(self) -> "Tensor":
        return self.swapaxes(-1, -2)

    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        return tensor_mean(self, axis=axis, keepdims=keepdims)


class Parameter(Tensor):
    """A trainable leaf tensor."""

    def __init__(self, data: Any, name: Optional[str] = None):
        super().__init__(data, requires_grad=True, name=name)
        self.data = np.ascontiguousarray(self.data)


@dataclass
class _Record:
    op: str
    input_ids: Tuple[Optional[int], ...]
    output_id: int
    backward: BackwardFn


class Tape:
    """
    Ordered record of the ops executed while it is active.

    Records are appended in execution order, so inputs always precede the ops
    that consume them; `backward` walks the list once in reverse.
    """

    def __init__(self) -> None:
        self.records: List[_Record] = []
        self.leaves: Dict[int, Tensor] = {}
        self.consumed = False
        self._next_id = 0

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc: Any) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.records)

    def _new_id(self) -> int:
        node_id = self._next_id
        self._next_id += 1
        return node_id

    def node_for(self, t: Tensor) -> Optional[int]:
        if not t.requires_grad:
            return None
        if t._tape is not self or t.node_id is None:
            t._tape = self
            t.node_id = self._new_id()
            self.leaves[t.node_id] = t
        return t.node_id

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward: BackwardFn) -> None:
        if self.consumed:
            raise ContractError("tape already consumed by backward()")
        input_ids = tuple(self.node_for(t) for t in inputs)
        output._tape = self
        output.node_id = self._new_id()
        self.records.append(_Record(op, input_ids, output.node_id, backward))

    def backward(self, loss: Tensor) -> Dict[Tensor, np.ndarray]:
        """
        Propagate dLoss/dx to every tracked leaf.

        Leaves that the loss does not depend on receive zeros. The tape is
        consumed afterwards.
        """
        if self.consumed:
            raise ContractError("tape already consumed by backward()")
        if loss.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self or loss.node_id is None:
            raise ContractError("loss was not recorded on this tape")
        if not self.records and loss.node_id not in self.leaves:
            raise ContractError("tape is empty")

        grads: Dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
        for rec in reversed(self.records):
            g = grads.pop(rec.output_id, None)
            if g is None:
                continue
            for input_id, input_grad in zip(rec.input_ids, rec.backward(g)):
                if input_id is None or input_grad is None:
                    continue
                if input_id in grads:
                    grads[input_id] = grads[input_id] + input_grad
                else:
                    grads[input_id] = input_grad

        result: Dict[Tensor, np.ndarray] = {}
        for node_id, leaf in self.leaves.items():
            g = grads.get(node_id)
            leaf.grad = np.zeros_like(leaf.data) if g is None else np.asarray(g, dtype=np.float64).reshape(leaf.shape)
            result[leaf] = leaf.grad
        self.records = []
        self.consumed = True
        return result


def backward(loss: Tensor) -> Dict[Tensor, np.ndarray]:
    """Run backward on the tape that recorded `loss`."""
    tape = loss._tape
    if tape is None:
        raise ContractError("loss is not tracked; run the forward pass inside a Tape")
    return tape.backward(loss)


def as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(op: str, inputs: Sequence[Tensor], data: np.ndarray, backward_fn: BackwardFn) -> Tensor:
    """Wrap `data` as the output of `op`, recording it when any input is tracked."""
    if _DEBUG and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"op {op} produced non-finite values")
    tape = current_tape()
    tracked = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=tracked)
    if tracked:
        assert tape is not None
        tape.record(op, inputs, out, backward_fn)
    return out


def unbroadcast(grad: np.ndarray, to_shape: Tuple[int, ...]) -> np.ndarray:
    """Sum out broadcast dimensions so `grad` matches `to_shape`."""
    if grad.shape == to_shape:
        return grad
    while grad.ndim > len(to_shape):
        grad = grad.sum(axis=0)
    for dim, size in enumerate(to_shape):
        if size == 1 and grad.shape[dim] != 1:
            grad = grad.sum(axis=dim, keepdims=True)
    return grad


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return make_result("add", (a, b), a.data + b.data,
                       lambda g: (unbroadcast(g, sa), unbroadcast(g, sb)))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return make_result("sub", (a, b), a.data - b.data,
                       lambda g: (unbroadcast(g, sa), unbroadcast(-g, sb)))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return make_result("mul", (a, b), ad * bd,
                       lambda g: (unbroadcast(g * bd, ad.shape), unbroadcast(g * ad, bd.shape)))


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return make_result("div", (a, b), ad / bd,
                       lambda g: (unbroadcast(g / bd, ad.shape), unbroadcast(-g * ad / (bd * bd), bd.shape)))


def neg(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return make_result("neg", (a,), -a.data, lambda g: (-g,))


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def _backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return unbroadcast(ga, ad.shape), unbroadcast(gb, bd.shape)

    return make_result("matmul", (a, b), ad @ bd, _backward)


def reshape(a: ArrayLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    original = a.shape
    try:
        data = a.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {original} into {tuple(shape)}") from exc
    return make_result("reshape", (a,), data, lambda g: (g.reshape(original),))


def transpose(a: ArrayLike, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = as_tensor(a)
    perm = tuple(range(a.ndim))[::-1] if axes is None else tuple(ax % a.ndim for ax in axes)
    inverse = tuple(np.argsort(perm))
    return make_result("transpose", (a,), np.transpose(a.data, perm),
                       lambda g: (np.transpose(g, inverse),))


def getitem(a: ArrayLike, idx: Any) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    if isinstance(idx, Tensor):
        idx = idx.data.astype(np.int64)

    def _backward(g: np.ndarray) -> Tuple[np.ndarray]:
        full = np.zeros(shape, dtype=np.float64)
        np.add.at(full, idx, g)
        return (full,)

    return make_result("getitem", (a,), np.array(a.data[idx], dtype=np.float64), _backward)


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in parts]
    splits = np.cumsum(sizes)[:-1]
    return make_result("concat", parts, np.concatenate([t.data for t in parts], axis=axis),
                       lambda g: tuple(np.split(g, splits, axis=axis)))


def _normalize_axes(axis: Optional[Union[int, Tuple[int, ...]]], ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(ax % ndim for ax in axis))


def tensor_sum(a: ArrayLike, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    axes = _normalize_axes(axis, a.ndim)

    def _backward(g: np.ndarray) -> Tuple[np.ndarray]:
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return make_result("sum", (a,), np.sum(a.data, axis=axes, keepdims=keepdims), _backward)


def tensor_mean(a: ArrayLike, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return tensor_sum(a, axis=axes, keepdims=keepdims) / float(count)
