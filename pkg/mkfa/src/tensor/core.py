"""
Tensor storage, parameters and the reverse-mode tape

Every differentiable op computes its forward value with numpy and, when a tape
is active and one of its inputs requires a gradient, records a node holding the
saved state for its vector-Jacobian product. `Tape.backward` replays the nodes
in strict reverse order of recording and accumulates into leaf tensors.
"""
import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..utils.errors import NonFiniteError, TapeError

log = logging.getLogger(__name__)

_dtype = np.float32
_tapes: List[Optional["Tape"]] = []


def set_float64(enabled: bool) -> None:
    """Switch the global storage dtype (64-bit is meant for gradient checks)"""
    global _dtype
    _dtype = np.float64 if enabled else np.float32


def is_float64() -> bool:
    return _dtype is np.float64


@contextmanager
def float64_mode() -> Iterator[None]:
    previous = _dtype
    set_float64(True)
    try:
        yield
    finally:
        set_float64(previous is np.float64)


class Tensor:
    """Dense array in N×C×H×W layout (rank 2 for logits, rank 0 for losses)"""

    __slots__ = ('data', 'requires_grad', 'grad', '_node')

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=_dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[Node] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """Named learnable tensor with a gradient buffer of identical shape"""

    __slots__ = ('name', 'trainable')

    def __init__(self, name: str, data, trainable: bool = True):
        super().__init__(data, requires_grad=trainable)
        self.name = name
        self.trainable = trainable
        self.grad = np.zeros_like(self.data)

    @property
    def value(self) -> Tensor:
        return self

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape}, trainable={self.trainable})"


@dataclass(eq=False)
class Node:
    """One recorded op application"""
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    vjp: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    """Ordered record of op applications between `with Tape()` enter and exit"""

    def __init__(self):
        self.nodes: List[Node] = []
        self.output: Optional[Tensor] = None
        self._grads: Dict[int, np.ndarray] = {}

    def __enter__(self) -> "Tape":
        _tapes.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tapes.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def backward(self, output: Optional[Tensor] = None) -> None:
        """Accumulate d(output)/d(leaf) into every reachable leaf that requires grad"""
        output = output if output is not None else self.output
        if output is None or not self.nodes:
            raise TapeError("backward called before any forward op was recorded")
        if output.data.size != 1:
            raise TapeError(f"backward needs a scalar output, got shape {output.shape}")
        if not any(node.output is output for node in self.nodes):
            raise TapeError("backward output was not produced on this tape")

        self.output = output
        grads: Dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
        reached: Dict[int, Tensor] = {}

        for node in reversed(self.nodes):
            upstream = grads.get(id(node.output))
            if upstream is None:
                continue
            input_grads = node.vjp(upstream)
            for tensor, grad in zip(node.inputs, input_grads):
                if grad is None or tensor is None or not tensor.requires_grad:
                    continue
                if grad.shape != tensor.shape:
                    raise TapeError(
                        f"{node.op}: gradient shape {grad.shape} does not match input shape {tensor.shape}"
                    )
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + grad
                else:
                    grads[key] = np.asarray(grad)
                    reached[key] = tensor

        self._grads = grads
        for key, tensor in reached.items():
            if not tensor.is_leaf:
                continue
            grad = grads[key].astype(tensor.data.dtype, copy=False)
            if tensor.grad is None:
                tensor.grad = grad.copy()
            else:
                tensor.grad = tensor.grad + grad

    def grad(self, tensor: Tensor) -> Optional[np.ndarray]:
        """Gradient of the last backward output w.r.t. a recorded tensor (None if unreached)"""
        return self._grads.get(id(tensor))


def current_tape() -> Optional[Tape]:
    return _tapes[-1] if _tapes else None


@contextmanager
def no_tape() -> Iterator[None]:
    """Evaluate ops without recording, even inside an active tape"""
    _tapes.append(None)
    try:
        yield
    finally:
        _tapes.pop()


def wrap(op: str, array: np.ndarray) -> Tensor:
    """Wrap an op result, rejecting NaN/Inf"""
    array = np.ascontiguousarray(array, dtype=_dtype)
    if not np.isfinite(array).all():
        raise NonFiniteError(f"{op} produced non-finite values")
    tensor = Tensor.__new__(Tensor)
    tensor.data = array
    tensor.requires_grad = False
    tensor.grad = None
    tensor._node = None
    return tensor


def record_op(
    op: str,
    inputs: Sequence[Optional[Tensor]],
    out: np.ndarray,
    vjp: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
) -> Tensor:
    """Wrap `out` and, if a tape is listening, record how to differentiate it"""
    result = wrap(op, out)
    tape = current_tape()
    if tape is not None and any(t is not None and t.requires_grad for t in inputs):
        node = Node(op, tuple(inputs), result, vjp)
        result.requires_grad = True
        result._node = node
        tape.record(node)
    return result


def backward(tape: Tape, output: Optional[Tensor] = None) -> None:
    tape.backward(output)
