"""
Minimal reverse-mode automatic differentiation over dense float64 arrays.

Every learned parameter of the prompt language model and the denoiser is a leaf GradNode.
Primitives record their parents and a closure mapping the output gradient to one gradient per parent.
Broadcasting is limited to scalar-with-tensor and row-vector bias addition so that each gradient
rule stays small enough to audit.
"""
from collections.abc import Callable, Iterator, Mapping, Sequence
from contextlib import contextmanager
from contextvars import ContextVar
from enum import Enum
from typing import Any

import numpy as np
import numpy.typing as npt

from src.model.core.errors import DomainError, NumericError, ShapeError

Array = npt.NDArray[np.float64]
BackwardFn = Callable[[Array], tuple[Array | None, ...]]

NORM_EPS: float = 1e-12

_grad_enabled: ContextVar[bool] = ContextVar("grad_enabled", default=True)


class Tensor:
    """
    Immutable dense array of 64-bit floats.

    :param shape: Dimension sizes
    :param data: Row-major flat view of the entries
    """

    __slots__ = ("_array",)

    def __init__(self, data: npt.ArrayLike, shape: Sequence[int] | None = None) -> None:
        """
        Copy data into a read-only float64 array.

        :param data: Anything numpy can turn into a float array
        :param shape: Optional target shape; product must equal the number of entries
        :raises ShapeError: Shape doesn't match the number of entries
        :raises NumericError: Any entry is NaN or infinite
        """
        array = np.array(data, dtype=np.float64)
        if shape is not None:
            dims = tuple(int(dim) for dim in shape)
            if int(np.prod(dims, dtype=np.int64)) != array.size:
                raise ShapeError(f"shape {dims} can't hold {array.size} entries")
            array = array.reshape(dims)
        if not np.isfinite(array).all():
            raise NumericError("tensor entries must be finite")
        array.setflags(write=False)
        self._array: Array = array

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> "Tensor":
        """
        Build an all-zero tensor.

        :param shape: Dimension sizes
        :return: Zero tensor
        """
        return cls(np.zeros(tuple(shape)))

    @property
    def shape(self) -> tuple[int, ...]:
        """
        Get the dimension sizes.

        :return: Shape tuple
        """
        return tuple(self._array.shape)

    @property
    def data(self) -> Array:
        """
        Get the entries as a flat row-major read-only array.

        :return: Flat view of the entries
        """
        return self._array.reshape(-1)

    @property
    def array(self) -> Array:
        """
        Get the entries as a read-only array of the tensor's shape.

        :return: Shaped view of the entries
        """
        return self._array

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, data={self._array.tolist()})"


class Op(Enum):
    """Provenance tag of a node: a leaf or one of the supported primitives."""

    LEAF = "leaf"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    MATMUL = "matmul"
    SUM = "sum"
    MEAN = "mean"
    SCALE = "scale"
    TANH = "tanh"
    SILU = "silu"
    EXP = "exp"
    LOG = "log"
    SOFTMAX = "softmax"
    LOG_SOFTMAX = "log_softmax"
    GATHER = "gather"
    CONCAT = "concat"
    L2_NORMALIZE = "l2_normalize"
    NORM = "norm"
    COSINE = "cosine"
    SQUARE = "square"
    TRANSPOSE = "transpose"
    SLICE = "slice"


class GradNode:
    """
    Node of a reverse-mode computation graph.

    :param value: Tensor computed in the forward pass
    :param grad: Accumulated gradient of the last backward roots, zero until materialized
    :param op: Primitive that produced the node, or LEAF
    :param parents: Input nodes, in argument order
    :param name: Parameter name for leaves reported by backward
    """

    def __init__(
        self,
        value: Tensor | npt.ArrayLike,
        op: Op = Op.LEAF,
        parents: tuple["GradNode", ...] = (),
        backward_fn: BackwardFn | None = None,
        name: str | None = None,
        requires_grad: bool = True,
    ) -> None:
        """
        Wrap a value as a graph node.

        :param value: Node value (copied into a Tensor if not one already)
        :param op: Provenance tag
        :param parents: Input nodes of the primitive
        :param backward_fn: Map from output gradient to one gradient per parent
        :param name: Optional parameter name
        :param requires_grad: Whether gradients should reach this node
        """
        self._value: Tensor = value if isinstance(value, Tensor) else Tensor(value)
        self._grad: Array | None = None
        self.op: Op = op
        self.parents: tuple[GradNode, ...] = parents
        self._backward_fn: BackwardFn | None = backward_fn
        self.name: str | None = name
        self.requires_grad: bool = requires_grad

    @property
    def value(self) -> Tensor:
        """
        Get the forward value.

        :return: Node value
        """
        return self._value

    @property
    def array(self) -> Array:
        """
        Get the forward value as a read-only array.

        :return: Node value array
        """
        return self._value.array

    @property
    def shape(self) -> tuple[int, ...]:
        """
        Get the shape of the forward value.

        :return: Shape tuple
        """
        return self._value.shape

    @property
    def grad(self) -> Tensor:
        """
        Get the accumulated gradient, zero if none has been materialized yet.

        :return: Gradient tensor with the value's shape
        """
        if self._grad is None:
            return Tensor.zeros(self.shape)
        return Tensor(self._grad)

    @property
    def grad_array(self) -> Array | None:
        """
        Get the raw accumulated gradient without finiteness checks.

        :return: Gradient array, or None if never materialized
        """
        return self._grad

    @property
    def is_leaf(self) -> bool:
        """
        Check whether the node was created directly rather than by a primitive.

        :return: True for leaves
        """
        return self.op is Op.LEAF

    def item(self) -> float:
        """
        Get the value of a single-entry node as a float.

        :raises ShapeError: Node holds more than one entry
        :return: The single entry
        """
        if self._value.array.size != 1:
            raise ShapeError(f"item() of a node with shape {self.shape}")
        return float(self._value.array.reshape(-1)[0])

    def zero_grad(self) -> None:
        """Forget the accumulated gradient."""
        self._grad = None

    def assign(self, array: npt.ArrayLike) -> None:
        """
        Replace the value of a leaf in place (used by optimizers and checkpoint loading).

        :param array: New value; must keep the node's shape
        :raises ShapeError: Shape changes or node isn't a leaf
        """
        new_value = Tensor(array)
        if not self.is_leaf:
            raise ShapeError("only leaves can be assigned")
        if new_value.shape != self.shape:
            raise ShapeError(f"can't assign shape {new_value.shape} to {self.shape}")
        self._value = new_value

    def accumulate(self, grad: Array) -> None:
        """
        Add a gradient contribution.

        :param grad: Gradient with the node's shape
        """
        if self._grad is None:
            self._grad = np.array(grad, dtype=np.float64)
        else:
            self._grad = self._grad + grad

    def backward_fn(self) -> BackwardFn | None:
        """
        Get the gradient rule recorded by the primitive.

        :return: Gradient rule, None for leaves and constant subgraphs
        """
        return self._backward_fn

    def __add__(self, other: "GradNode") -> "GradNode":
        return forward_op(Op.ADD, [self, other])

    def __sub__(self, other: "GradNode") -> "GradNode":
        return forward_op(Op.SUB, [self, other])

    def __mul__(self, other: "GradNode") -> "GradNode":
        return forward_op(Op.MUL, [self, other])

    def __matmul__(self, other: "GradNode") -> "GradNode":
        return forward_op(Op.MATMUL, [self, other])

    def __neg__(self) -> "GradNode":
        return forward_op(Op.SCALE, [self], factor=-1.0)

    def __repr__(self) -> str:
        label = self.name if self.name else self.op.value
        return f"GradNode({label}, shape={self.shape})"


def parameter(data: npt.ArrayLike, name: str) -> GradNode:
    """
    Create a named trainable leaf.

    :param data: Initial value
    :param name: Parameter name reported by backward
    :return: Leaf node that accumulates gradients
    """
    return GradNode(Tensor(data), name=name, requires_grad=True)


def constant(data: npt.ArrayLike) -> GradNode:
    """
    Create a leaf gradients never reach.

    :param data: Value
    :return: Constant leaf node
    """
    return GradNode(Tensor(data), requires_grad=False)


def detach(node: GradNode) -> GradNode:
    """
    Sever a node from its graph, keeping its value.

    :param node: Node to cut off
    :return: Constant leaf holding the same value
    """
    return GradNode(node.value, requires_grad=False)


@contextmanager
def no_grad() -> Iterator[None]:
    """Build no graph edges inside the block; every result is a constant."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def grad_enabled() -> bool:
    """
    Check whether primitives currently record graph edges.

    :return: False inside a no_grad block
    """
    return _grad_enabled.get()


def _is_scalar(shape: tuple[int, ...]) -> bool:
    return len(shape) <= 1 and int(np.prod(shape, dtype=np.int64)) == 1


def _check_broadcast(op: Op, a: tuple[int, ...], b: tuple[int, ...]) -> None:
    if a == b or _is_scalar(a) or _is_scalar(b):
        return
    if op in (Op.ADD, Op.SUB) and len(a) == 2 and len(b) == 1 and a[1] == b[0]:
        return
    raise ShapeError(f"{op.value}: shapes {a} and {b} don't broadcast")


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    if grad.shape == shape:
        return grad
    if _is_scalar(shape):
        return np.asarray(grad.sum()).reshape(shape)
    # Row-vector bias
    return np.asarray(grad.sum(axis=0)).reshape(shape)


def _add(a: Array, b: Array) -> tuple[Array, BackwardFn]:
    return a + b, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))


def _sub(a: Array, b: Array) -> tuple[Array, BackwardFn]:
    return a - b, lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape))


def _mul(a: Array, b: Array) -> tuple[Array, BackwardFn]:
    return a * b, lambda g: (
        _unbroadcast(g * b, a.shape),
        _unbroadcast(g * a, b.shape),
    )


def _matmul(a: Array, b: Array) -> tuple[Array, BackwardFn]:
    if a.ndim == 2 and b.ndim == 2 and a.shape[1] == b.shape[0]:
        return a @ b, lambda g: (g @ b.T, a.T @ g)
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return a @ b, lambda g: (np.outer(g, b), a.T @ g)
    if a.ndim == 1 and b.ndim == 2 and a.shape[0] == b.shape[0]:
        return a @ b, lambda g: (b @ g, np.outer(a, g))
    raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} don't conform")


def _check_axis(axis: int | None) -> None:
    if axis not in (None, -1):
        raise ShapeError(f"reductions support axis None or -1, got {axis}")


def _sum(a: Array, axis: int | None = None) -> tuple[Array, BackwardFn]:
    _check_axis(axis)
    if axis is None:
        return np.asarray(a.sum()), lambda g: (np.broadcast_to(g, a.shape).copy(),)
    return a.sum(axis=-1), lambda g: (
        np.broadcast_to(g[..., None], a.shape).copy(),
    )


def _mean(a: Array, axis: int | None = None) -> tuple[Array, BackwardFn]:
    _check_axis(axis)
    if a.size == 0:
        raise ShapeError("mean of an empty tensor")
    if axis is None:
        count = float(a.size)
        return np.asarray(a.sum() / count), lambda g: (
            np.broadcast_to(g / count, a.shape).copy(),
        )
    width = float(a.shape[-1])
    return a.sum(axis=-1) / width, lambda g: (
        np.broadcast_to(g[..., None] / width, a.shape).copy(),
    )


def _scale(a: Array, factor: float) -> tuple[Array, BackwardFn]:
    return a * factor, lambda g: (g * factor,)


def _tanh(a: Array) -> tuple[Array, BackwardFn]:
    out = np.tanh(a)
    return out, lambda g: (g * (1.0 - out * out),)


def _silu(a: Array) -> tuple[Array, BackwardFn]:
    sigmoid = 0.5 * (1.0 + np.tanh(0.5 * a))
    return a * sigmoid, lambda g: (g * sigmoid * (1.0 + a * (1.0 - sigmoid)),)


def _exp(a: Array) -> tuple[Array, BackwardFn]:
    with np.errstate(over="ignore"):
        out = np.exp(a)
    return out, lambda g: (g * out,)


def _log(a: Array) -> tuple[Array, BackwardFn]:
    if (a <= 0.0).any():
        raise DomainError("log of a non-positive entry")
    return np.log(a), lambda g: (g / a,)


def _square(a: Array) -> tuple[Array, BackwardFn]:
    return a * a, lambda g: (2.0 * a * g,)


def _check_last_axis(a: Array, op: Op) -> None:
    if a.ndim == 0 or a.shape[-1] == 0:
        raise ShapeError(f"{op.value} needs a non-empty last axis, got shape {a.shape}")


def _softmax(a: Array) -> tuple[Array, BackwardFn]:
    _check_last_axis(a, Op.SOFTMAX)
    shifted = np.exp(a - a.max(axis=-1, keepdims=True))
    out = shifted / shifted.sum(axis=-1, keepdims=True)
    return out, lambda g: (out * (g - (g * out).sum(axis=-1, keepdims=True)),)


def _log_softmax(a: Array) -> tuple[Array, BackwardFn]:
    _check_last_axis(a, Op.LOG_SOFTMAX)
    shifted = a - a.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    probs = np.exp(out)
    return out, lambda g: (g - probs * g.sum(axis=-1, keepdims=True),)


def _gather(table: Array, ids: Sequence[int]) -> tuple[Array, BackwardFn]:
    if table.ndim != 2:
        raise ShapeError(f"gather needs a 2-D table, got shape {table.shape}")
    index = np.asarray(ids, dtype=np.int64).reshape(-1)
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise ShapeError(f"gather ids outside [0, {table.shape[0]})")

    def backward(g: Array) -> tuple[Array | None, ...]:
        table_grad = np.zeros_like(table)
        np.add.at(table_grad, index, g)
        return (table_grad,)

    return table[index], backward


def _concat(*parts: Array) -> tuple[Array, BackwardFn]:
    if not parts:
        raise ShapeError("concat of nothing")
    lead = parts[0].shape[:-1]
    if any(part.ndim == 0 or part.shape[:-1] != lead for part in parts):
        raise ShapeError(f"concat: shapes {[p.shape for p in parts]} differ off the last axis")
    bounds = np.cumsum([part.shape[-1] for part in parts])[:-1]

    def backward(g: Array) -> tuple[Array | None, ...]:
        return tuple(np.split(g, bounds, axis=-1))

    return np.concatenate(parts, axis=-1), backward


def _l2_normalize(a: Array) -> tuple[Array, BackwardFn]:
    _check_last_axis(a, Op.L2_NORMALIZE)
    norms = np.sqrt((a * a).sum(axis=-1, keepdims=True))
    if (norms < NORM_EPS).any():
        raise DomainError("l2-normalize of a zero-norm vector")
    out = a / norms
    return out, lambda g: ((g - out * (g * out).sum(axis=-1, keepdims=True)) / norms,)


def _norm(a: Array) -> tuple[Array, BackwardFn]:
    _check_last_axis(a, Op.NORM)
    norms = np.sqrt((a * a).sum(axis=-1))

    def backward(g: Array) -> tuple[Array | None, ...]:
        # Subgradient 0 at the origin
        safe = np.where(norms > 0.0, norms, 1.0)
        direction = np.where((norms > 0.0)[..., None], a / safe[..., None], 0.0)
        return (g[..., None] * direction,)

    return norms, backward


def _cosine(a: Array, b: Array) -> tuple[Array, BackwardFn]:
    if a.shape != b.shape:
        raise ShapeError(f"cosine: shapes {a.shape} and {b.shape} differ")
    _check_last_axis(a, Op.COSINE)
    norm_a = np.sqrt((a * a).sum(axis=-1))
    norm_b = np.sqrt((b * b).sum(axis=-1))
    if (norm_a < NORM_EPS).any() or (norm_b < NORM_EPS).any():
        raise DomainError("cosine with a zero-norm vector")
    out = (a * b).sum(axis=-1) / (norm_a * norm_b)

    def backward(g: Array) -> tuple[Array | None, ...]:
        na = norm_a[..., None]
        nb = norm_b[..., None]
        cos = out[..., None]
        grad_a = b / (na * nb) - cos * a / (na * na)
        grad_b = a / (na * nb) - cos * b / (nb * nb)
        return g[..., None] * grad_a, g[..., None] * grad_b

    return out, backward


def _transpose(a: Array) -> tuple[Array, BackwardFn]:
    if a.ndim != 2:
        raise ShapeError(f"transpose needs a 2-D tensor, got shape {a.shape}")
    return a.T.copy(), lambda g: (g.T.copy(),)


def _slice(a: Array, start: int, stop: int) -> tuple[Array, BackwardFn]:
    if a.ndim == 0 or not 0 <= start < stop <= a.shape[-1]:
        raise ShapeError(f"slice [{start}, {stop}) outside last axis of shape {a.shape}")

    def backward(g: Array) -> tuple[Array | None, ...]:
        full = np.zeros_like(a)
        full[..., start:stop] = g
        return (full,)

    return a[..., start:stop].copy(), backward


_BINARY = {Op.ADD: _add, Op.SUB: _sub, Op.MUL: _mul}
_UNARY = {
    Op.TANH: _tanh,
    Op.SILU: _silu,
    Op.EXP: _exp,
    Op.LOG: _log,
    Op.SQUARE: _square,
    Op.SOFTMAX: _softmax,
    Op.LOG_SOFTMAX: _log_softmax,
    Op.L2_NORMALIZE: _l2_normalize,
    Op.NORM: _norm,
    Op.TRANSPOSE: _transpose,
}


def forward_op(op: Op | str, inputs: Sequence[GradNode], **params: Any) -> GradNode:
    """
    Apply a primitive to input nodes and record the graph edge.

    :param op: Primitive (Op member or its name)
    :param inputs: Input nodes, in argument order
    :param params: Primitive parameters (axis for sum/mean, factor for scale, ids for gather,
        start/stop for slice)
    :raises ShapeError: Inputs don't conform to the primitive's shape rule
    :raises DomainError: Log or normalization outside its domain
    :raises NumericError: Result isn't finite
    :return: Output node
    """
    primitive = Op(op)
    arrays = [node.array for node in inputs]
    if primitive in _BINARY or primitive in (Op.MATMUL, Op.COSINE):
        if len(arrays) != 2:
            raise ShapeError(f"{primitive.value} takes 2 inputs, got {len(arrays)}")
    elif primitive is not Op.CONCAT and len(arrays) != 1:
        raise ShapeError(f"{primitive.value} takes 1 input, got {len(arrays)}")

    value: Array
    backward_fn: BackwardFn
    match primitive:
        case Op.ADD | Op.SUB | Op.MUL:
            _check_broadcast(primitive, arrays[0].shape, arrays[1].shape)
            value, backward_fn = _BINARY[primitive](arrays[0], arrays[1])
        case Op.MATMUL:
            value, backward_fn = _matmul(arrays[0], arrays[1])
        case Op.COSINE:
            value, backward_fn = _cosine(arrays[0], arrays[1])
        case Op.SUM:
            value, backward_fn = _sum(arrays[0], params.get("axis"))
        case Op.MEAN:
            value, backward_fn = _mean(arrays[0], params.get("axis"))
        case Op.SCALE:
            value, backward_fn = _scale(arrays[0], float(params["factor"]))
        case Op.GATHER:
            value, backward_fn = _gather(arrays[0], params["ids"])
        case Op.CONCAT:
            value, backward_fn = _concat(*arrays)
        case Op.SLICE:
            value, backward_fn = _slice(arrays[0], int(params["start"]), int(params["stop"]))
        case Op.LEAF:
            raise ShapeError("leaf is not a primitive")
        case _:
            value, backward_fn = _UNARY[primitive](arrays[0])

    try:
        tensor = Tensor(value)
    except NumericError as err:
        raise NumericError(f"{primitive.value} produced a non-finite value") from err
    if not grad_enabled():
        return GradNode(tensor, op=primitive, requires_grad=False)
    requires_grad = any(node.requires_grad for node in inputs)
    return GradNode(
        tensor,
        op=primitive,
        parents=tuple(inputs),
        backward_fn=backward_fn if requires_grad else None,
        requires_grad=requires_grad,
    )


def _topological_order(root: GradNode) -> list[GradNode]:
    order: list[GradNode] = []
    visited: set[int] = set()
    stack: list[tuple[GradNode, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node.parents):
            if id(parent) not in visited and parent.requires_grad:
                stack.append((parent, False))
    return order


def backward(root: GradNode) -> dict[str, Tensor]:
    """
    Accumulate d(root)/d(leaf) into every reachable leaf.

    Repeated calls without zeroing accumulate.

    :param root: Scalar node (shape [] or [1])
    :raises ShapeError: Root isn't scalar
    :return: Gradient of every named leaf reached, by name
    """
    if root.array.ndim > 1 or root.array.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
    pending: dict[int, Array] = {id(root): np.ones(root.shape)}
    reached: dict[str, GradNode] = {}
    for node in reversed(_topological_order(root)):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node.is_leaf:
            node.accumulate(grad)
            if node.name is not None:
                reached[node.name] = node
            continue
        rule = node.backward_fn()
        if rule is None:
            continue
        for parent, parent_grad in zip(node.parents, rule(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pending[key] + parent_grad if key in pending else parent_grad
    return {name: node.grad for name, node in reached.items()}


def zero_grads(params: Mapping[str, GradNode]) -> None:
    """
    Forget accumulated gradients of every parameter.

    :param params: Parameters by name
    """
    for node in params.values():
        node.zero_grad()


def add(a: GradNode, b: GradNode) -> GradNode:
    """Elementwise sum (scalar and row-vector bias broadcasting only)."""
    return forward_op(Op.ADD, [a, b])


def sub(a: GradNode, b: GradNode) -> GradNode:
    """Elementwise difference."""
    return forward_op(Op.SUB, [a, b])


def mul(a: GradNode, b: GradNode) -> GradNode:
    """Elementwise product."""
    return forward_op(Op.MUL, [a, b])


def matmul(a: GradNode, b: GradNode) -> GradNode:
    """Matrix product of 2-D operands, or matrix-vector."""
    return forward_op(Op.MATMUL, [a, b])


def reduce_sum(a: GradNode, axis: int | None = None) -> GradNode:
    """Sum of all entries, or along the last axis."""
    return forward_op(Op.SUM, [a], axis=axis)


def reduce_mean(a: GradNode, axis: int | None = None) -> GradNode:
    """Mean of all entries, or along the last axis."""
    return forward_op(Op.MEAN, [a], axis=axis)


def scale(a: GradNode, factor: float) -> GradNode:
    """Multiply by a constant."""
    return forward_op(Op.SCALE, [a], factor=factor)


def tanh(a: GradNode) -> GradNode:
    """Elementwise hyperbolic tangent."""
    return forward_op(Op.TANH, [a])


def silu(a: GradNode) -> GradNode:
    """Elementwise x * sigmoid(x)."""
    return forward_op(Op.SILU, [a])


def exp(a: GradNode) -> GradNode:
    """Elementwise exponential."""
    return forward_op(Op.EXP, [a])


def log(a: GradNode) -> GradNode:
    """Elementwise natural log; callers keep the input positive."""
    return forward_op(Op.LOG, [a])


def square(a: GradNode) -> GradNode:
    """Elementwise square."""
    return forward_op(Op.SQUARE, [a])


def softmax(a: GradNode) -> GradNode:
    """Softmax over the last axis, computed with max-subtraction."""
    return forward_op(Op.SOFTMAX, [a])


def log_softmax(a: GradNode) -> GradNode:
    """Log-softmax over the last axis."""
    return forward_op(Op.LOG_SOFTMAX, [a])


def gather(table: GradNode, ids: Sequence[int]) -> GradNode:
    """Rows of a 2-D table, in id order."""
    return forward_op(Op.GATHER, [table], ids=list(ids))


def concat(parts: Sequence[GradNode]) -> GradNode:
    """Concatenate along the last axis."""
    return forward_op(Op.CONCAT, parts)


def l2_normalize(a: GradNode) -> GradNode:
    """Scale each last-axis vector to unit norm."""
    return forward_op(Op.L2_NORMALIZE, [a])


def norm(a: GradNode) -> GradNode:
    """L2 norm of each last-axis vector."""
    return forward_op(Op.NORM, [a])


def cosine(a: GradNode, b: GradNode) -> GradNode:
    """Cosine similarity of matching last-axis vectors."""
    return forward_op(Op.COSINE, [a, b])


def transpose(a: GradNode) -> GradNode:
    """Swap the last two axes."""
    return forward_op(Op.TRANSPOSE, [a])


def slice_last(a: GradNode, start: int, stop: int) -> GradNode:
    """Columns [start, stop) of the last axis."""
    return forward_op(Op.SLICE, [a], start=start, stop=stop)
