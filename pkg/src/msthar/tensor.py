"""Dense float64 tensors with reverse-mode gradients on an explicit tape.

Everything is deliberately small and concrete: a value is a C-contiguous
float64 ndarray, every differentiable operation appends one record to a
Tape, and ``Tape.backward`` replays those records in exact reverse
execution order, accumulating gradients additively wherever a tensor
fans out into several consumers.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "Tape",
    "ShapeError",
    "FiniteError",
    "TapeError",
    "check_finite",
]


class ShapeError(ValueError):
    """An operation received tensors with incompatible shapes."""


class FiniteError(ArithmeticError):
    """A NaN or Inf was detected at a checkpoint."""


class TapeError(RuntimeError):
    """Invalid tape usage: backward without forward, non-scalar loss."""


class Tensor:
    """A dense float64 array plus an optional gradient of the same shape."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


class Parameter(Tensor):
    """A tensor that an optimizer may update.

    The gradient buffer always exists (zeros until a backward pass writes
    into it).  When ``trainable`` is False the optimizer must leave the
    value bit-identical; gradients are still accumulated so that frozen
    parts of a network stay differentiable-through.
    """

    __slots__ = ("trainable",)

    def __init__(self, data, trainable: bool = True):
        super().__init__(data)
        self.grad = np.zeros_like(self.data)
        self.trainable = trainable

    def __repr__(self):
        return f"Parameter(shape={self.data.shape}, trainable={self.trainable})"


class Tape:
    """Ordered record of executed ops, replayed in reverse by backward.

    Each record is ``(output, inputs, backward_fn)`` where ``backward_fn``
    maps the output gradient to one gradient per input (``None`` for
    inputs that need no gradient).  Backward functions must return arrays
    they own; the tape accumulates them with ``+=``.
    """

    def __init__(self):
        self._records = []

    def __len__(self):
        return len(self._records)

    def record(self, output: Tensor, inputs: tuple, backward_fn):
        self._records.append((output, inputs, backward_fn))

    def backward(self, loss: Tensor):
        """Populate ``grad`` on every tensor reachable from ``loss``."""
        if not self._records:
            raise TapeError("backward called on an empty tape (no forward ops recorded)")
        if loss.data.size != 1:
            raise TapeError(f"loss must be scalar, got shape {loss.data.shape}")
        loss.grad = np.ones_like(loss.data)
        for output, inputs, backward_fn in reversed(self._records):
            if output.grad is None:
                continue
            grads = backward_fn(output.grad)
            for tensor, grad in zip(inputs, grads):
                if grad is None:
                    continue
                if tensor.grad is None:
                    # backward functions return freshly owned arrays, so
                    # the first contribution can be adopted directly
                    tensor.grad = grad
                else:
                    tensor.grad += grad


def check_finite(*tensors, context: str = ""):
    """Raise FiniteError if any tensor holds a NaN or Inf.

    Called at stage boundaries rather than per op, so a diverged run
    fails fast without per-operation overhead.
    """
    for t in tensors:
        data = t.data if isinstance(t, Tensor) else np.asarray(t)
        if not np.all(np.isfinite(data)):
            where = f" in {context}" if context else ""
            raise FiniteError(f"non-finite values detected{where}")
