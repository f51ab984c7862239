"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation returns a new immutable :class:`Tensor` that remembers its
parents and a closure mapping the output adjoint to input adjoints. The graph
is rebuilt for every forward pass; :func:`backward` walks it once in reverse
topological order.

Broadcasting is limited to what the model needs: numpy-style broadcasting in
``add``/``mul`` and a shared right operand in ``matmul`` (``(..., n, k) @ (k, m)``).
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, InvariantError

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]

# Largest float64 strictly below 1 and smallest positive normal; sigmoid output
# is kept inside this open interval.
_ONE_MINUS = np.nextafter(1.0, 0.0)
_TINY = np.finfo(np.float64).tiny


class Tensor:
    """Node of the computation graph.

    ``data`` is a read-only float64 array; ``shape`` mirrors it. Leaves created
    with ``requires_grad=True`` are trainable parameters.
    """

    __slots__ = ("data", "requires_grad", "op", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        *,
        op: str = "leaf",
        parents: tuple["Tensor", ...] = (),
        backward_fn: BackwardFn | None = None,
    ):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim > 0 and 0 in arr.shape:
            raise DimensionError(f"tensor shapes must be positive, got {arr.shape}")
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = requires_grad
        self.op = op
        self._parents = parents
        self._backward = backward_fn

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op})"

    # operator sugar
    def __add__(self, other):
        return add(self, as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other), scale(self, -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_op(op: str, out: np.ndarray, parents: tuple[Tensor, ...], backward_fn: BackwardFn) -> Tensor:
    """Register a new node. Public so tests can build custom (even wrong) ops."""
    if not np.all(np.isfinite(out)):
        raise InvariantError(f"non-finite output from {op}")
    out = np.asarray(out, dtype=np.float64)
    if out.base is not None or not out.flags.owndata:
        out = out.copy()
    out.flags.writeable = False
    node = Tensor.__new__(Tensor)
    node.data = out
    node.requires_grad = False
    node.op = op
    node._parents = parents
    node._backward = backward_fn
    return node


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return make_op(
        "add",
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data
    return make_op(
        "mul",
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return make_op("scale", a.data * s, (a,), lambda g: (g * s,))


def sum_along_axis(a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    shape = a.shape
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return make_op("sum", out, (a,), backward)


def mean_along_axis(a: Tensor, axis: int) -> Tensor:
    return scale(sum_along_axis(a, axis), 1.0 / a.shape[axis])


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function, kept strictly inside (0, 1) even where float64 would round."""
    xd = x.data
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    out[~pos] = ex / (1.0 + ex)
    out = np.clip(out, _TINY, _ONE_MINUS)
    return make_op("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def log(x: Tensor) -> Tensor:
    xd = x.data
    if np.any(xd <= 0):
        raise ContractError("log of non-positive value; clamp first")
    return make_op("log", np.log(xd), (x,), lambda g: (g / xd,))


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    xd = x.data
    inside = (xd >= lo) & (xd <= hi)
    return make_op("clamp", np.clip(xd, lo, hi), (x,), lambda g: (g * inside,))


# ---------------------------------------------------------------------------
# linear algebra and normalization
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    ``b`` is either a plain matrix shared by every leading index of ``a`` or
    has the same leading axes as ``a``.
    """
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if ad.shape[-1] != bd.shape[-2]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    if bd.ndim > 2 and bd.shape[:-2] != ad.shape[:-2]:
        raise DimensionError(f"matmul batch dimensions disagree: {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        if bd.ndim == 2 and gb.ndim > 2:
            gb = gb.reshape(-1, *gb.shape[-2:]).sum(axis=0)
        return ga, gb

    return make_op("matmul", ad @ bd, (a, b), backward)


def softmax(x: Tensor, axis: int) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax axis {axis} out of range for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_op("softmax", out, (x,), backward)


# ---------------------------------------------------------------------------
# shape plumbing
# ---------------------------------------------------------------------------

def transpose_last(x: Tensor) -> Tensor:
    return make_op("transpose", np.swapaxes(x.data, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = x.shape
    return make_op("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def stack(tensors: Sequence[Tensor], axis: int) -> Tensor:
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(f"stack needs equal shapes, got {sorted(shapes)}")
    out = np.stack([t.data for t in tensors], axis=axis)
    n = len(tensors)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(n))

    return make_op("stack", out, tuple(tensors), backward)


def take(x: Tensor, index: int, axis: int) -> Tensor:
    """Select one slice along ``axis`` (the axis is dropped)."""
    shape = x.shape
    ax = axis % x.ndim

    def backward(g):
        full = np.zeros(shape)
        sl = [slice(None)] * len(shape)
        sl[ax] = index
        full[tuple(sl)] = g
        return (full,)

    return make_op("take", np.take(x.data, index, axis=ax), (x,), backward)


# ---------------------------------------------------------------------------
# reverse mode
# ---------------------------------------------------------------------------

def graph_nodes(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` in topological order (inputs first)."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor]) -> list[np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to each of ``params``.

    Parameters that do not influence the loss get zero arrays.
    """
    if loss.data.size != 1 or loss.ndim > 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    params = list(params)
    adj: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph_nodes(loss)):
        g = adj.get(id(node))
        if g is None or node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None:
                continue
            key = id(parent)
            if key in adj:
                adj[key] = adj[key] + pg
            else:
                adj[key] = pg
    return [
        np.array(adj[id(p)], dtype=np.float64) if id(p) in adj else np.zeros(p.shape)
        for p in params
    ]


def gradcheck(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    n_coords: int = 20,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between autodiff and central differences.

    ``f`` rebuilds the graph from the current ``params`` data each call.
    Coordinates are sampled without replacement across all parameters.
    """
    if eps <= 0:
        raise ContractError("eps must be positive")
    rng = np.random.default_rng(0) if rng is None else rng
    params = list(params)
    analytic = backward(f(), params)
    sizes = [p.data.size for p in params]
    total = sum(sizes)
    picks = rng.choice(total, size=min(n_coords, total), replace=False)
    offsets = np.cumsum([0] + sizes)
    worst = 0.0
    for flat in picks:
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        i = int(flat - offsets[k])
        p = params[k]
        base = p.data
        vals = []
        for sign in (1.0, -1.0):
            bumped = base.copy().reshape(-1)
            bumped[i] += sign * eps
            bumped = bumped.reshape(base.shape)
            bumped.flags.writeable = False
            p.data = bumped
            vals.append(f().item())
        p.data = base
        g_fd = (vals[0] - vals[1]) / (2 * eps)
        g_ad = analytic[k].reshape(-1)[i]
        err = abs(g_ad - g_fd) / max(1e-8, abs(g_ad) + abs(g_fd))
        worst = max(worst, err)
    return worst
