"""Rank-4 float tensors and the reverse-mode gradient tape.

Every tensor in the package is a dense (batch, channel, height, width) array,
float32 for training and inference, float64 only for gradient verification.
Operations defined in :mod:`lumidec.autodiff.ops` record themselves onto the
currently active :class:`Tape`; ``Tape.backward`` then replays the recording
in reverse to accumulate gradients for every watched leaf.
"""

from __future__ import annotations

import itertools
import warnings

import numpy as np

from ..errors import ContractError, DimensionError

_uid_counter = itertools.count(1)

# Single-owner active tape. Ops record here; nesting is forbidden.
_ACTIVE_TAPE = None


def _as_4d(data, dtype):
    arr = np.asarray(data, dtype=dtype)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1, 1, 1)
    if arr.ndim != 4:
        raise DimensionError(f"tensors are rank-4 (B,C,H,W); got rank {arr.ndim}")
    return np.ascontiguousarray(arr)


class Tensor:
    """Immutable rank-4 array with an identity used for gradient bookkeeping."""

    __slots__ = ("data", "requires_grad", "uid")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32):
        if isinstance(data, Tensor):
            data = data.data
        self.data = _as_4d(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.uid = next(_uid_counter)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar tensor, shape is {self.shape}")
        return float(self.data.reshape(-1)[0])

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad, dtype=dtype)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    @staticmethod
    def scalar(value: float, requires_grad: bool = False, dtype=np.float32) -> "Tensor":
        return Tensor(np.full((1, 1, 1, 1), value, dtype=dtype), requires_grad=requires_grad, dtype=dtype)

    @staticmethod
    def zeros(shape, requires_grad: bool = False, dtype=np.float32) -> "Tensor":
        return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad, dtype=dtype)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; implementations live in ops to keep recording in one place.
    def __add__(self, other):
        from . import ops

        return ops.add(self, other) if isinstance(other, Tensor) else ops.add_scalar(self, float(other))

    def __radd__(self, other):
        from . import ops

        return ops.add_scalar(self, float(other))

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other) if isinstance(other, Tensor) else ops.add_scalar(self, -float(other))

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other) if isinstance(other, Tensor) else ops.scale(self, float(other))

    def __rmul__(self, other):
        from . import ops

        return ops.scale(self, float(other))

    def __truediv__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.div(self, other)
        return ops.scale(self, 1.0 / float(other))


class _Node:
    """One recorded operation: output id, input tensors, gradient callback."""

    __slots__ = ("op", "out_uid", "inputs", "grad_fn")

    def __init__(self, op, out_uid, inputs, grad_fn):
        self.op = op
        self.out_uid = out_uid
        self.inputs = inputs
        self.grad_fn = grad_fn


class Tape:
    """Append-only recording of operations, replayed in reverse for gradients.

    A tape has a single owner; entering one while another is active raises.
    Leaves must be watched (explicitly or implicitly, by participating with
    ``requires_grad`` set) to appear in the gradient map.
    """

    def __init__(self):
        self._nodes: list[_Node] = []
        self._tracked: set[int] = set()
        self._watched: dict[int, Tensor] = {}

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise ContractError("a Tape is already active; tapes cannot be nested or shared")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def watch(self, *tensors: Tensor) -> None:
        for t in tensors:
            self._watched[t.uid] = t
            self._tracked.add(t.uid)

    def tracks(self, t: Tensor) -> bool:
        return t.uid in self._tracked

    def record(self, op: str, out: Tensor, inputs: tuple[Tensor, ...], grad_fn) -> None:
        for t in inputs:
            if t.requires_grad and t.uid not in self._tracked:
                self.watch(t)
        self._nodes.append(_Node(op, out.uid, inputs, grad_fn))
        self._tracked.add(out.uid)

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: Tensor) -> dict[Tensor, Tensor]:
        """Accumulate d(loss)/d(leaf) for every watched leaf.

        Returns a map keyed by the watched Tensor objects. Watched leaves the
        loss does not depend on get zero gradients. A loss that never touched
        this tape yields all-zero gradients with a warning.
        """
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {}
        if loss.uid in self._tracked:
            grads[loss.uid] = np.ones_like(loss.data)
        else:
            warnings.warn("loss is not connected to this tape; all gradients are zero", stacklevel=2)
        # Reverse insertion order is a valid reverse-topological order because
        # inputs are always recorded before the nodes that consume them.
        for node in reversed(self._nodes):
            g_out = grads.pop(node.out_uid, None)
            if g_out is None:
                continue
            for t, g in zip(node.inputs, node.grad_fn(g_out)):
                if g is None:
                    continue
                acc = grads.get(t.uid)
                grads[t.uid] = g if acc is None else acc + g
        return {
            leaf: Tensor(grads.get(uid, np.zeros_like(leaf.data)), dtype=leaf.data.dtype)
            for uid, leaf in self._watched.items()
        }


def active_tape() -> Tape | None:
    return _ACTIVE_TAPE


def record_op(op: str, out: Tensor, inputs: tuple[Tensor, ...], grad_fn) -> Tensor:
    """Record onto the active tape if any input participates in gradients."""
    tape = _ACTIVE_TAPE
    if tape is not None and any(t.requires_grad or tape.tracks(t) for t in inputs):
        tape.record(op, out, inputs, grad_fn)
    return out
