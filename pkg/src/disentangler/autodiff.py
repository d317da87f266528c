"""Computation graphs over dense float64 arrays with reverse-mode gradients.

A graph is built symbolically from :func:`placeholder`, :func:`parameter` and
:func:`const` leaves combined through the operation builders below, then
wrapped in a :class:`Graph` that evaluates outputs for a set of bindings and
accumulates gradients in reverse topological order.  Graphs are immutable
after construction and may be shared between threads for reading; ``forward``
and ``backward`` keep per-instance caches and must not run concurrently on
the same instance.

The supported operation set is the minimal closure over the losses of this
package: matmul, transpose, elementwise add/sub/mul with numpy broadcasting,
relu, sigmoid, tanh, softmax, log, sqrt, square, clip, mean/sum reductions,
feature-axis concatenation, a pairwise Euclidean distance kernel, and seeded
dropout.
"""

from __future__ import annotations

import itertools

import numpy as np


class GraphError(Exception):
    """Structural misuse: unbound inputs, backward before forward, bad wiring."""


class ShapeError(GraphError):
    """An operation received inputs of incompatible shapes."""


class NonFiniteError(GraphError):
    """A forward value or bound input stopped being finite."""


def as_array(value) -> np.ndarray:
    """Coerce to a contiguous float64 array (the only dtype the graphs use).

    ascontiguousarray would promote 0-d inputs to 1-d, so scalars skip it.
    """
    arr = np.asarray(value, dtype=np.float64)
    return arr if arr.flags["C_CONTIGUOUS"] else np.ascontiguousarray(arr)


_node_ids = itertools.count()

_LEAF_OPS = frozenset({"placeholder", "parameter", "const"})


class Node:
    """One record in a computation graph: an operation, its inputs, and
    op-specific attributes.  Nodes are immutable after creation."""

    __slots__ = ("op", "inputs", "name", "attrs", "nid")

    def __init__(self, op, inputs=(), name=None, **attrs):
        self.op = op
        self.inputs = tuple(inputs)
        self.name = name
        self.attrs = attrs
        self.nid = next(_node_ids)

    @property
    def is_leaf(self):
        return self.op in _LEAF_OPS

    @property
    def label(self):
        return self.name if self.name is not None else f"{self.op}#{self.nid}"

    def __repr__(self):
        return f"Node({self.label})"

    # Operator sugar; scalars and arrays are wrapped as constants.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __neg__(self):
        return mul(self, const(-1.0))


def _wrap(value) -> Node:
    return value if isinstance(value, Node) else const(value)


def placeholder(name: str) -> Node:
    """Free input bound by name at forward time."""
    return Node("placeholder", name=name)


def parameter(name: str) -> Node:
    """Trainable leaf; backward reports a gradient for every parameter."""
    return Node("parameter", name=name)


def const(value) -> Node:
    return Node("const", value=as_array(value))


def add(a: Node, b: Node) -> Node:
    return Node("add", (a, _wrap(b)))


def sub(a: Node, b: Node) -> Node:
    return Node("sub", (a, _wrap(b)))


def mul(a: Node, b: Node) -> Node:
    return Node("mul", (a, _wrap(b)))


def matmul(a: Node, b: Node) -> Node:
    return Node("matmul", (a, b))


def transpose(a: Node) -> Node:
    return Node("transpose", (a,))


def relu(a: Node) -> Node:
    return Node("relu", (a,))


def sigmoid(a: Node) -> Node:
    return Node("sigmoid", (a,))


def tanh(a: Node) -> Node:
    return Node("tanh", (a,))


def softmax(a: Node) -> Node:
    """Row-wise softmax (normalizes along the last axis)."""
    return Node("softmax", (a,))


def log(a: Node) -> Node:
    return Node("log", (a,))


def sqrt(a: Node) -> Node:
    return Node("sqrt", (a,))


def square(a: Node) -> Node:
    return Node("square", (a,))


def clip(a: Node, lo: float, hi: float) -> Node:
    """Clamp values to [lo, hi]; gradient is zero where the clamp is active."""
    return Node("clip", (a,), lo=float(lo), hi=float(hi))


def mean(a: Node, axis: int | None = None, keepdims: bool = False) -> Node:
    return Node("mean", (a,), axis=axis, keepdims=keepdims)


def sum_(a: Node, axis: int | None = None, keepdims: bool = False) -> Node:
    return Node("sum", (a,), axis=axis, keepdims=keepdims)


def concat(parts, axis: int = 1) -> Node:
    """Concatenate along the feature axis (axis 1 by default)."""
    return Node("concat", tuple(parts), axis=axis)


def pairwise_distances(s: Node) -> Node:
    """N x N Euclidean distances between the rows of an N x d input.

    Tied rows produce zero distances; the gradient there is the subgradient 0,
    which keeps training defined on degenerate batches.
    """
    return Node("pdist", (s,))


def dropout(a: Node, rate: float) -> Node:
    """Seeded masking with inverted scaling in train mode, identity in eval.

    The mask is drawn from an RNG keyed by the forward seed and the node's
    position in the graph, so identical seeds give identical masks.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    return Node("dropout", (a,), rate=float(rate))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over the axes that numpy broadcasting expanded."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, extent in enumerate(shape):
        if extent == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _reduction_grad(node, grad, x):
    axis = node.attrs["axis"]
    keepdims = node.attrs["keepdims"]
    if axis is None:
        g = np.broadcast_to(grad, x.shape)
    else:
        g = grad if keepdims else np.expand_dims(grad, axis)
        g = np.broadcast_to(g, x.shape)
    return g


# Each forward rule maps (node, input arrays, ctx) -> output array.  ctx is
# the per-run state: train flag, dropout seed, and a stash for values the
# backward rule reuses (dropout masks, pairwise difference tensors).

def _fw_elementwise(op):
    def fw(node, xs, ctx):
        a, b = xs
        try:
            np.broadcast_shapes(a.shape, b.shape)
        except ValueError:
            raise ShapeError(
                f"{node.label}: cannot broadcast {a.shape} with {b.shape}")
        return op(a, b)
    return fw


def _fw_matmul(node, xs, ctx):
    a, b = xs
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"{node.label}: matmul of {a.shape} with {b.shape}")
    return a @ b


def _fw_transpose(node, xs, ctx):
    (a,) = xs
    if a.ndim != 2:
        raise ShapeError(f"{node.label}: transpose expects 2-D, got {a.shape}")
    return a.T.copy()


def _fw_softmax(node, xs, ctx):
    (a,) = xs
    shifted = a - a.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _fw_concat(node, xs, ctx):
    axis = node.attrs["axis"]
    ndims = {x.ndim for x in xs}
    if len(ndims) != 1 or axis >= ndims.pop():
        raise ShapeError(f"{node.label}: concat of ranks/axis mismatch")
    try:
        return np.concatenate(xs, axis=axis)
    except ValueError as exc:
        raise ShapeError(f"{node.label}: {exc}")


def _fw_pdist(node, xs, ctx):
    (s,) = xs
    if s.ndim != 2:
        raise ShapeError(f"{node.label}: pairwise distances expect N x d, "
                         f"got {s.shape}")
    diff = s[:, None, :] - s[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    ctx.stash[node.nid] = (diff, dist)
    return dist


def _fw_dropout(node, xs, ctx):
    (a,) = xs
    rate = node.attrs["rate"]
    if not ctx.train or rate == 0.0:
        return a
    slot = ctx.dropout_slots[node.nid]
    rng = np.random.default_rng(np.random.SeedSequence((ctx.seed, slot)))
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    ctx.stash[node.nid] = mask
    return a * mask


_FORWARD = {
    "add": _fw_elementwise(np.add),
    "sub": _fw_elementwise(np.subtract),
    "mul": _fw_elementwise(np.multiply),
    "matmul": _fw_matmul,
    "transpose": _fw_transpose,
    "relu": lambda n, xs, c: np.maximum(xs[0], 0.0),
    "sigmoid": lambda n, xs, c: 1.0 / (1.0 + np.exp(-xs[0])),
    "tanh": lambda n, xs, c: np.tanh(xs[0]),
    "softmax": _fw_softmax,
    "log": lambda n, xs, c: np.log(xs[0]),
    "sqrt": lambda n, xs, c: np.sqrt(xs[0]),
    "square": lambda n, xs, c: np.square(xs[0]),
    "clip": lambda n, xs, c: np.clip(xs[0], n.attrs["lo"], n.attrs["hi"]),
    "mean": lambda n, xs, c: np.mean(xs[0], axis=n.attrs["axis"],
                                     keepdims=n.attrs["keepdims"]),
    "sum": lambda n, xs, c: np.sum(xs[0], axis=n.attrs["axis"],
                                   keepdims=n.attrs["keepdims"]),
    "concat": _fw_concat,
    "pdist": _fw_pdist,
    "dropout": _fw_dropout,
}


def _bw_add(node, grad, xs, out, ctx):
    a, b = xs
    return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)


def _bw_sub(node, grad, xs, out, ctx):
    a, b = xs
    return _unbroadcast(grad, a.shape), -_unbroadcast(grad, b.shape)


def _bw_mul(node, grad, xs, out, ctx):
    a, b = xs
    return _unbroadcast(grad * b, a.shape), _unbroadcast(grad * a, b.shape)


def _bw_matmul(node, grad, xs, out, ctx):
    a, b = xs
    return grad @ b.T, a.T @ grad


def _bw_softmax(node, grad, xs, out, ctx):
    dot = np.sum(grad * out, axis=-1, keepdims=True)
    return ((grad - dot) * out,)


def _bw_mean(node, grad, xs, out, ctx):
    (x,) = xs
    axis = node.attrs["axis"]
    n = x.size if axis is None else x.shape[axis]
    return (_reduction_grad(node, grad, x) / n,)


def _bw_concat(node, grad, xs, out, ctx):
    axis = node.attrs["axis"]
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]
    return tuple(np.ascontiguousarray(g)
                 for g in np.split(grad, splits, axis=axis))


def _bw_pdist(node, grad, xs, out, ctx):
    diff, dist = ctx.stash[node.nid]
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(dist > 0.0, (grad + grad.T) / dist, 0.0)
    return (np.einsum("ij,ijd->id", w, diff),)


def _bw_dropout(node, grad, xs, out, ctx):
    mask = ctx.stash.get(node.nid)
    return (grad,) if mask is None else (grad * mask,)


def _bw_clip(node, grad, xs, out, ctx):
    (x,) = xs
    inside = (x > node.attrs["lo"]) & (x < node.attrs["hi"])
    return (grad * inside,)


_BACKWARD = {
    "add": _bw_add,
    "sub": _bw_sub,
    "mul": _bw_mul,
    "matmul": _bw_matmul,
    "transpose": lambda n, g, xs, out, c: (g.T.copy(),),
    "relu": lambda n, g, xs, out, c: (g * (xs[0] > 0.0),),
    "sigmoid": lambda n, g, xs, out, c: (g * out * (1.0 - out),),
    "tanh": lambda n, g, xs, out, c: (g * (1.0 - out * out),),
    "softmax": _bw_softmax,
    "log": lambda n, g, xs, out, c: (g / xs[0],),
    "sqrt": lambda n, g, xs, out, c: (g * 0.5 / out,),
    "square": lambda n, g, xs, out, c: (g * 2.0 * xs[0],),
    "clip": _bw_clip,
    "mean": _bw_mean,
    "sum": lambda n, g, xs, out, c: (_reduction_grad(n, g, xs[0]),),
    "concat": _bw_concat,
    "pdist": _bw_pdist,
    "dropout": _bw_dropout,
}


class _RunContext:
    __slots__ = ("train", "seed", "stash", "dropout_slots")

    def __init__(self, train, seed, dropout_slots):
        self.train = train
        self.seed = seed
        self.stash = {}
        self.dropout_slots = dropout_slots


class Graph:
    """An executable set of named output nodes.

    Construction topologically orders the transitive closure of the outputs
    and indexes named leaves; ``forward`` evaluates and caches every node,
    ``backward`` differentiates a cached output with respect to the leaves.
    """

    def __init__(self, outputs: dict[str, Node]):
        if not outputs:
            raise GraphError("graph needs at least one output")
        self.outputs = dict(outputs)
        self.nodes = self._toposort(self.outputs.values())
        self.placeholders: dict[str, Node] = {}
        self.parameters: dict[str, Node] = {}
        self._dropout_slots: dict[int, int] = {}
        slot = 0
        for node in self.nodes:
            if node.op in ("placeholder", "parameter"):
                # Toposort visits each node once, so a repeated name means
                # two distinct leaves collide.
                if node.name in self.placeholders or node.name in self.parameters:
                    raise GraphError(f"duplicate leaf name {node.name!r}")
                registry = (self.placeholders if node.op == "placeholder"
                            else self.parameters)
                registry[node.name] = node
            elif node.op == "dropout":
                self._dropout_slots[node.nid] = slot
                slot += 1
        self._values: dict[int, np.ndarray] | None = None
        self._ctx: _RunContext | None = None

    @staticmethod
    def _toposort(outputs) -> list[Node]:
        order: list[Node] = []
        seen: set[int] = set()
        stack = [(node, False) for node in outputs]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if node.nid in seen:
                continue
            seen.add(node.nid)
            stack.append((node, True))
            for inp in node.inputs:
                if inp.nid not in seen:
                    stack.append((inp, False))
        return order

    def named_leaves(self) -> dict[str, Node]:
        return {**self.placeholders, **self.parameters}

    def forward(self, bindings: dict[str, np.ndarray] | None = None, *,
                train: bool = False, seed: int = 0) -> dict[str, np.ndarray]:
        """Evaluate all outputs for the given leaf bindings.

        Deterministic: identical bindings and seed give bit-identical values.
        Raises :class:`GraphError` for unbound leaves, :class:`ShapeError`
        for inconsistent shapes and :class:`NonFiniteError` naming the first
        node whose value stops being finite.
        """
        bindings = bindings or {}
        missing = [name for name in self.named_leaves() if name not in bindings]
        if missing:
            raise GraphError(f"unbound inputs: {sorted(missing)}")
        ctx = _RunContext(train, seed, self._dropout_slots)
        values: dict[int, np.ndarray] = {}
        for node in self.nodes:
            if node.op == "const":
                val = node.attrs["value"]
            elif node.is_leaf:
                val = as_array(bindings[node.name])
                if not np.isfinite(val).all():
                    raise NonFiniteError(f"non-finite binding for {node.label}")
            else:
                xs = [values[inp.nid] for inp in node.inputs]
                # Finiteness is checked explicitly below, so numpy's own
                # warnings on the same conditions are suppressed.
                with np.errstate(all="ignore"):
                    val = _FORWARD[node.op](node, xs, ctx)
                if not np.isfinite(val).all():
                    raise NonFiniteError(f"non-finite values at {node.label}")
            values[node.nid] = np.asarray(val, dtype=np.float64)
        self._values = values
        self._ctx = ctx
        return {name: values[node.nid] for name, node in self.outputs.items()}

    def value_of(self, node: Node) -> np.ndarray:
        if self._values is None:
            raise GraphError("value_of before forward")
        return self._values[node.nid]

    def backward(self, output: str, seed_grad=None,
                 wrt: list[str] | None = None) -> dict[str, np.ndarray]:
        """Gradients of one cached output with respect to named leaves.

        With ``wrt`` unset, returns a gradient for every parameter node;
        leaves the output does not depend on get zero tensors.  ``seed_grad``
        is required for non-scalar outputs.
        """
        if self._values is None:
            raise GraphError("backward before forward")
        if output not in self.outputs:
            raise GraphError(f"unknown output {output!r}")
        out_node = self.outputs[output]
        out_val = self._values[out_node.nid]
        if seed_grad is None:
            if out_val.size != 1:
                raise GraphError(
                    f"output {output!r} is not scalar; pass seed_grad")
            seed = np.ones_like(out_val)
        else:
            seed = as_array(seed_grad)
            if seed.shape != out_val.shape:
                raise ShapeError(
                    f"seed_grad shape {seed.shape} != output {out_val.shape}")

        leaves = self.named_leaves()
        if wrt is None:
            targets = dict(self.parameters)
        else:
            unknown = [name for name in wrt if name not in leaves]
            if unknown:
                raise GraphError(f"unknown leaves in wrt: {unknown}")
            targets = {name: leaves[name] for name in wrt}

        # A node is useful when a target sits in its input closure; adjoints
        # are only propagated through useful nodes.
        target_ids = {node.nid for node in targets.values()}
        useful: set[int] = set()
        for node in self.nodes:
            if node.nid in target_ids or any(i.nid in useful
                                             for i in node.inputs):
                useful.add(node.nid)

        adjoint: dict[int, np.ndarray] = {}
        if out_node.nid in useful:
            adjoint[out_node.nid] = seed
        for node in reversed(self.nodes):
            grad = adjoint.get(node.nid)
            if grad is None or node.is_leaf:
                continue
            rule = _BACKWARD.get(node.op)
            if rule is None:
                raise GraphError(f"non-differentiable op in path: {node.op}")
            xs = [self._values[inp.nid] for inp in node.inputs]
            input_grads = rule(node, grad, xs, self._values[node.nid], self._ctx)
            for inp, g in zip(node.inputs, input_grads):
                if g is None or inp.nid not in useful:
                    continue
                if inp.nid in adjoint:
                    adjoint[inp.nid] = adjoint[inp.nid] + g
                else:
                    adjoint[inp.nid] = g

        grads = {}
        for name, node in targets.items():
            g = adjoint.get(node.nid)
            grads[name] = np.zeros_like(self._values[node.nid]) if g is None \
                else np.asarray(g, dtype=np.float64)
        return grads


def grad_check(graph: Graph, output: str, point: dict[str, np.ndarray],
               step: float = 1e-5, *, wrt: list[str] | None = None,
               train: bool = False, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    The error per coordinate is ``|analytic - cd| / max(1, |cd|)``; the
    maximum over all coordinates of all checked leaves is returned.  Raises
    when the point puts a pairwise-distance op at a tie (zero off-diagonal
    distance), where the objective is not differentiable; perturb the inputs
    instead.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    point = {name: as_array(v) for name, v in point.items()}
    graph.forward(point, train=train, seed=seed)
    for node in graph.nodes:
        if node.op == "pdist":
            dist = graph.value_of(node)
            off = dist[~np.eye(dist.shape[0], dtype=bool)]
            if off.size and np.any(off == 0.0):
                raise GraphError(
                    f"{node.label}: tied samples make the distance kernel "
                    "non-smooth here; perturb the inputs before grad_check")
    out_val = graph.value_of(graph.outputs[output])
    if out_val.size != 1:
        raise GraphError("grad_check needs a scalar output")

    names = list(point) if wrt is None else list(wrt)
    analytic = graph.backward(output, wrt=names)

    def eval_at(bound):
        return float(graph.forward(bound, train=train, seed=seed)[output])

    worst = 0.0
    for name in names:
        base = point[name]
        flat = base.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = eval_at(point)
            flat[i] = orig - step
            f_minus = eval_at(point)
            flat[i] = orig
            cd = (f_plus - f_minus) / (2.0 * step)
            an = analytic[name].ravel()[i]
            worst = max(worst, abs(an - cd) / max(1.0, abs(cd)))
    graph.forward(point, train=train, seed=seed)
    return worst
