"""Dense tensors with reverse-mode automatic differentiation.

Everything else in the package is built on the primitives here: a Tensor
wraps a float64 numpy array, ops record themselves on a Tape in execution
order (which is automatically a topological order), and ``backward`` sweeps
the tape once in reverse to produce a GradientMap.

Ops involving only constants (no tape) are evaluated eagerly without
recording, which gives inference a graph-free fast path.

Broadcasting is deliberately restricted to scalar-with-tensor and
equal-shape operands; the bias add of a dense layer is its own primitive
(`add_bias`) so the backward pass never has to guess a reduction axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NonFiniteError, ShapeError, UsageError

DTYPE = np.float64


def _as_array(value) -> np.ndarray:
    return np.asarray(value, dtype=DTYPE)


def _require_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values in output of {op}")


class Tape:
    """Append-only record of nodes in creation order.

    Creation order is topological by construction: an op's inputs always
    exist before the op runs, so a single reverse sweep visits every node
    after all of its consumers.
    """

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes: list[Tensor] = []

    def _record(self, node: "Tensor") -> None:
        node._idx = len(self.nodes)
        self.nodes.append(node)

    def __len__(self) -> int:
        return len(self.nodes)


class Tensor:
    """Immutable dense value, optionally recorded on a tape.

    Do not mutate ``.data`` — ops assume operands never change after
    creation.
    """

    __slots__ = ("data", "tape", "requires_grad", "_parents", "_backward", "_idx")

    def __init__(self, data, tape=None, requires_grad=False, parents=(), backward=None, op="tensor"):
        self.data = _as_array(data)
        _require_finite(self.data, op)
        self.tape = tape
        self.requires_grad = bool(requires_grad)
        self._parents = parents
        self._backward = backward
        self._idx = -1
        if tape is not None:
            tape._record(self)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(constant(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(value) -> Tensor:
    """A tape-less value; gradients never flow into it."""
    return Tensor(value, tape=None, requires_grad=False, op="constant")


def leaf(value, tape: Tape, requires_grad: bool = True) -> Tensor:
    """A differentiable input recorded on ``tape`` (parameter or attacked input)."""
    return Tensor(value, tape=tape, requires_grad=requires_grad, op="leaf")


class GradientMap:
    """Gradients keyed by the tensor they differentiate.

    Unvisited nodes read as zero, so a constant root yields all-zero
    gradients without special casing.
    """

    def __init__(self):
        self._grads: dict[int, np.ndarray] = {}

    def _accumulate(self, node: Tensor, g: np.ndarray) -> None:
        key = id(node)
        if key in self._grads:
            self._grads[key] = self._grads[key] + g
        else:
            self._grads[key] = g

    def get(self, node: Tensor) -> np.ndarray:
        found = self._grads.get(id(node))
        if found is None:
            return np.zeros_like(node.data)
        return np.broadcast_to(found, node.data.shape).astype(DTYPE, copy=False)

    def __getitem__(self, node: Tensor) -> np.ndarray:
        return self.get(node)

    def __contains__(self, node: Tensor) -> bool:
        return id(node) in self._grads


def backward(tape: Tape, root: Tensor) -> GradientMap:
    """Reverse-mode sweep of ``tape`` from scalar ``root``.

    Returns gradients of ``root`` with respect to every node that requires
    grad (parameters and inputs alike). Each node is visited exactly once.
    """
    if root.data.size != 1:
        raise UsageError(f"backward root must be scalar, got shape {root.data.shape}")
    if root.tape is not None and root.tape is not tape:
        raise UsageError("root was recorded on a different tape")

    grads = GradientMap()
    grads._accumulate(root, np.ones_like(root.data))
    stop = root._idx if root._idx >= 0 else len(tape.nodes) - 1
    for node in reversed(tape.nodes[: stop + 1]):
        if node._backward is None or not node.requires_grad:
            continue
        g = grads._grads.get(id(node))
        if g is None:
            continue
        node._backward(np.broadcast_to(g, node.data.shape), grads)
    return grads


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------

def _coerce(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return constant(value)


def _join_tape(*tensors: Tensor) -> Tape | None:
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is not None and tape is not t.tape:
                raise UsageError("operands recorded on different tapes")
            tape = t.tape
    return tape


def _is_scalar(t: Tensor) -> bool:
    return t.data.size == 1


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape == b.data.shape or _is_scalar(a) or _is_scalar(b):
        return
    raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} are neither equal nor scalar-with-tensor")


def _reduce_to(g: np.ndarray, target: Tensor) -> np.ndarray:
    if g.shape == target.data.shape:
        return g
    # scalar operand broadcast against a tensor: fold everything back down
    return np.sum(g).reshape(target.data.shape) if target.data.ndim else _as_array(np.sum(g))


def _make(data, parents, backward_fn, op) -> Tensor:
    tape = _join_tape(*parents)
    requires = any(p.requires_grad for p in parents)
    return Tensor(
        data,
        tape=tape,
        requires_grad=requires,
        parents=parents,
        backward=backward_fn if requires else None,
        op=op,
    )


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_broadcast(a, b, "add")

    def _bw(g, grads):
        if a.requires_grad:
            grads._accumulate(a, _reduce_to(g, a))
        if b.requires_grad:
            grads._accumulate(b, _reduce_to(g, b))

    return _make(a.data + b.data, (a, b), _bw, "add")


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_broadcast(a, b, "sub")

    def _bw(g, grads):
        if a.requires_grad:
            grads._accumulate(a, _reduce_to(g, a))
        if b.requires_grad:
            grads._accumulate(b, _reduce_to(-g, b))

    return _make(a.data - b.data, (a, b), _bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_broadcast(a, b, "mul")
    a_data, b_data = a.data, b.data

    def _bw(g, grads):
        if a.requires_grad:
            grads._accumulate(a, _reduce_to(g * b_data, a))
        if b.requires_grad:
            grads._accumulate(b, _reduce_to(g * a_data, b))

    return _make(a_data * b_data, (a, b), _bw, "mul")


def scale(a, c: float) -> Tensor:
    a = _coerce(a)
    c = float(c)

    def _bw(g, grads):
        grads._accumulate(a, g * c)

    return _make(a.data * c, (a,), _bw, "scale")


def matmul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.data.shape} @ {b.data.shape}")
    a_data, b_data = a.data, b.data

    def _bw(g, grads):
        if a.requires_grad:
            grads._accumulate(a, g @ b_data.T)
        if b.requires_grad:
            grads._accumulate(b, a_data.T @ g)

    return _make(a_data @ b_data, (a, b), _bw, "matmul")


def add_bias(x, b) -> Tensor:
    """Row-wise bias add: (n, w) + (w,). Backward sums the rows."""
    x, b = _coerce(x), _coerce(b)
    if x.data.ndim != 2 or b.data.ndim != 1 or x.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"add_bias expects (n, w) and (w,), got {x.data.shape} and {b.data.shape}")

    def _bw(g, grads):
        if x.requires_grad:
            grads._accumulate(x, g)
        if b.requires_grad:
            grads._accumulate(b, g.sum(axis=0))

    return _make(x.data + b.data[None, :], (x, b), _bw, "add_bias")


def relu(x) -> Tensor:
    x = _coerce(x)
    mask = x.data > 0  # subgradient at 0 is 0

    def _bw(g, grads):
        grads._accumulate(x, g * mask)

    return _make(np.where(mask, x.data, 0.0), (x,), _bw, "relu")


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = _coerce(x)
    slope = float(slope)
    mask = x.data > 0

    def _bw(g, grads):
        grads._accumulate(x, np.where(mask, g, slope * g))

    return _make(np.where(mask, x.data, slope * x.data), (x,), _bw, "leaky_relu")


def tanh(x) -> Tensor:
    x = _coerce(x)
    out_data = np.tanh(x.data)

    def _bw(g, grads):
        grads._accumulate(x, g * (1.0 - out_data * out_data))

    return _make(out_data, (x,), _bw, "tanh")


def sum_all(x) -> Tensor:
    x = _coerce(x)

    def _bw(g, grads):
        grads._accumulate(x, np.full_like(x.data, float(g)))

    return _make(np.sum(x.data), (x,), _bw, "sum_all")


def mean_all(x) -> Tensor:
    x = _coerce(x)
    n = x.data.size

    def _bw(g, grads):
        grads._accumulate(x, np.full_like(x.data, float(g) / n))

    return _make(np.mean(x.data), (x,), _bw, "mean_all")


def row_sum(x) -> Tensor:
    """Sum over axis 1 with keepdims: (n, m) -> (n, 1)."""
    x = _coerce(x)
    if x.data.ndim != 2:
        raise ShapeError(f"row_sum expects a 2-d tensor, got {x.data.shape}")

    def _bw(g, grads):
        grads._accumulate(x, np.broadcast_to(g, x.data.shape).copy())

    return _make(x.data.sum(axis=1, keepdims=True), (x,), _bw, "row_sum")


def row_max(x) -> Tensor:
    """Max over axis 1 with keepdims; gradient routes to the first argmax."""
    x = _coerce(x)
    if x.data.ndim != 2:
        raise ShapeError(f"row_max expects a 2-d tensor, got {x.data.shape}")
    arg = np.argmax(x.data, axis=1)
    rows = np.arange(x.data.shape[0])

    def _bw(g, grads):
        gx = np.zeros_like(x.data)
        gx[rows, arg] = g[:, 0]
        grads._accumulate(x, gx)

    return _make(x.data[rows, arg][:, None], (x,), _bw, "row_max")


def take_per_row(x, indices) -> Tensor:
    """Gather one column per row: (n, m), (n,) -> (n, 1)."""
    x = _coerce(x)
    idx = np.asarray(indices, dtype=np.int64)
    if x.data.ndim != 2 or idx.ndim != 1 or idx.shape[0] != x.data.shape[0]:
        raise ShapeError(f"take_per_row expects (n, m) and (n,), got {x.data.shape} and {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.data.shape[1]):
        raise UsageError("take_per_row index out of range")
    rows = np.arange(x.data.shape[0])

    def _bw(g, grads):
        gx = np.zeros_like(x.data)
        gx[rows, idx] = g[:, 0]
        grads._accumulate(x, gx)

    return _make(x.data[rows, idx][:, None], (x,), _bw, "take_per_row")


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label], max-stabilized."""
    logits = _coerce(logits)
    y = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy expects (n, m) logits, got {logits.data.shape}")
    n, m = logits.data.shape
    if y.shape != (n,):
        raise ShapeError(f"labels shape {y.shape} does not match batch size {n}")
    if y.size and (y.min() < 0 or y.max() >= m):
        raise InputError(f"labels must lie in [0, {m}), got range [{y.min()}, {y.max()}]")
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(shifted - lse)
    rows = np.arange(n)
    losses = (lse[:, 0] + zmax[:, 0]) - z[rows, y]
    value = losses.mean()

    def _bw(g, grads):
        gz = probs.copy()
        gz[rows, y] -= 1.0
        grads._accumulate(logits, gz * (float(g) / n))

    return _make(value, (logits,), _bw, "softmax_cross_entropy")


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Plain-array softmax used outside the tape."""
    z = _as_array(logits)
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Adam and weight clipping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdamParams:
    """Adam hyperparameters. beta1=0.5 keeps critic-style updates stable."""

    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    """First/second moments and step count for one parameter group."""

    hyper: AdamParams
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray], hyper: AdamParams = AdamParams()) -> "AdamState":
        return cls(hyper=hyper, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray], direction: str = "descend") -> list[np.ndarray]:
    """One Adam update with bias correction; returns new parameter arrays.

    ``direction="ascend"`` negates the gradients before the update. The
    state is mutated in place (moments and step counter).
    """
    if direction not in ("descend", "ascend"):
        raise UsageError(f"unknown direction {direction!r}")
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ShapeError("parameter/gradient/state group sizes differ")
    h = state.hyper
    state.t += 1
    t = state.t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter shape {p.shape}")
        if direction == "ascend":
            g = -g
        state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g
        state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * (g * g)
        m_hat = state.m[i] / (1.0 - h.beta1 ** t)
        v_hat = state.v[i] / (1.0 - h.beta2 ** t)
        out.append(p - h.lr * m_hat / (np.sqrt(v_hat) + h.eps))
    return out


def clip_weights(params: list[np.ndarray], c: float) -> list[np.ndarray]:
    """Clamp every entry to [-c, c]."""
    if not c > 0:
        raise UsageError(f"clip constant must be positive, got {c}")
    return [np.clip(p, -c, c) for p in params]
