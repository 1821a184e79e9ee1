"""Dense differentiable matrices with reverse-mode gradients

Every value taking part in training is a :class:`TensorNode`: a 2D float64 matrix which
remembers the operation that produced it. Calling :func:`backward` on a 1x1 loss walks
those records in reverse topological order and fills in `grad` for every node that
requires it. Each primitive carries its own exact gradient rule, so correctness can be
checked one operation at a time with :func:`gradient_check`.

Binary operations broadcast like NumPy (e.g. an `n x 1` column plus a `1 x n` row gives
an `n x n` matrix) and gradients are summed back over the broadcast axes.
"""
import numpy as np

__all__ = ['ContractError', 'DimensionError', 'LEAKY_SLOPE', 'TensorNode', 'absolute', 'add',
           'backward', 'concat_cols', 'constant', 'div', 'exp', 'gradient_check', 'leaky_relu',
           'log', 'matmul', 'max_rows', 'mean_rows', 'min_rows', 'mul', 'neg',
           'row_softmax_over_neighbors', 'sqrt', 'square', 'sub', 'sum_all', 'take_cols', 'tanh',
           'transpose']

LEAKY_SLOPE = 0.01


class DimensionError(RuntimeError):
    """Operand shapes are incompatible"""


class ContractError(RuntimeError):
    """The computation engine was used outside of its contract"""


class OpRecord:
    """Provenance of a computed node

    Attributes
    ----------
    name : str
        Name of the producing operation.
    parents : tuple of TensorNode
        Operation inputs.
    backward : callable
        Takes the gradient of the output and returns one gradient per parent
        (`None` for parents which don't need one).
    """
    __slots__ = ('name', 'parents', 'backward')

    def __init__(self, name, parents, backward):
        self.name = name
        self.parents = parents
        self.backward = backward


class TensorNode:
    """A dense real matrix participating in reverse-mode gradient computation

    Parameters
    ----------
    values : array_like
        Scalars become 1x1 and 1D arrays become a single row.
    requires_grad : bool
        Leaf nodes with `requires_grad=True` accumulate gradient on :func:`backward`.
    name : str
        Optional label used in error messages (parameter name for model weights).
    """
    __array_ufunc__ = None  # make `ndarray + TensorNode` dispatch to TensorNode

    def __init__(self, values, requires_grad=False, name="", op=None):
        self._values = self._freeze(values)
        self.grad = np.zeros_like(self._values)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.op = op

    @staticmethod
    def _freeze(values):
        array = np.array(values, dtype=np.float64)
        if array.ndim > 2:
            raise DimensionError("TensorNode must be 2D, got shape {}".format(array.shape))
        array = np.atleast_2d(array)
        array.flags.writeable = False
        return array

    @property
    def values(self) -> np.ndarray:
        """Read-only value matrix"""
        return self._values

    @values.setter
    def values(self, new_values):
        new_values = self._freeze(new_values)
        if new_values.shape != self._values.shape:
            raise DimensionError("Can't assign values of shape {} to a node of shape {}".format(
                new_values.shape, self._values.shape))
        self._values = new_values

    @property
    def shape(self):
        return self._values.shape

    @property
    def rows(self) -> int:
        return self._values.shape[0]

    @property
    def cols(self) -> int:
        return self._values.shape[1]

    @property
    def is_leaf(self) -> bool:
        return self.op is None

    @property
    def T(self) -> "TensorNode":
        return transpose(self)

    def item(self) -> float:
        """Return the value of a 1x1 node as a Python float"""
        if self.shape != (1, 1):
            raise ContractError("item() requires a 1x1 node, got shape {}".format(self.shape))
        return float(self._values[0, 0])

    def zero_grad(self):
        self.grad = np.zeros_like(self._values)

    def detach(self) -> "TensorNode":
        """Return a constant node sharing the same values"""
        return TensorNode(self._values)

    def backward(self):
        """Shortcut for :func:`backward(self) <backward>`"""
        backward(self)

    def __repr__(self):
        label = " '{}'".format(self.name) if self.name else ""
        producer = self.op.name if self.op else "leaf"
        return "TensorNode{} {} ({}, requires_grad={})".format(
            label, self.shape, producer, self.requires_grad)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __neg__(self):
        return neg(self)


def constant(values) -> TensorNode:
    """Wrap data as a node which never receives gradient"""
    if isinstance(values, TensorNode):
        return values
    return TensorNode(values, requires_grad=False)


def _make(values, name, parents, rule):
    requires_grad = any(p.requires_grad for p in parents)
    op = OpRecord(name, parents, rule) if requires_grad else None
    node = TensorNode(values, op=op)
    node.requires_grad = requires_grad
    return node


def _broadcast_shape(a, b, name):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError("{}: incompatible shapes {} and {}".format(name, a.shape, b.shape))


def _unbroadcast(grad, shape):
    """Sum `grad` over the axes which were broadcast to produce it"""
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b) -> TensorNode:
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "add")
    return _make(a.values + b.values, "add", (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> TensorNode:
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "sub")
    return _make(a.values - b.values, "sub", (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> TensorNode:
    """Elementwise (Hadamard) product"""
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "mul")
    av, bv = a.values, b.values
    return _make(av * bv, "mul", (a, b),
                 lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)))


def div(a, b) -> TensorNode:
    """Elementwise quotient"""
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "div")
    av, bv = a.values, b.values
    return _make(av / bv, "div", (a, b),
                 lambda g: (_unbroadcast(g / bv, a.shape),
                            _unbroadcast(-g * av / bv**2, b.shape)))


def neg(a) -> TensorNode:
    a = constant(a)
    return _make(-a.values, "neg", (a,), lambda g: (-g,))


def matmul(a, b) -> TensorNode:
    """Matrix product

    Examples
    --------
    >>> matmul(TensorNode([[1, 2], [3, 4]]), TensorNode([[0], [1]])).values.tolist()
    [[2.0], [4.0]]
    """
    a, b = constant(a), constant(b)
    if a.cols != b.rows:
        raise DimensionError("matmul: can't multiply shape {} by shape {}".format(a.shape, b.shape))
    av, bv = a.values, b.values
    return _make(av @ bv, "matmul", (a, b), lambda g: (g @ bv.T, av.T @ g))


def transpose(a) -> TensorNode:
    a = constant(a)
    return _make(a.values.T, "transpose", (a,), lambda g: (g.T,))


def tanh(a) -> TensorNode:
    a = constant(a)
    y = np.tanh(a.values)
    return _make(y, "tanh", (a,), lambda g: (g * (1 - y**2),))


def leaky_relu(a, slope=LEAKY_SLOPE) -> TensorNode:
    """LeakyReLU with a configurable negative slope

    >>> leaky_relu(TensorNode(-1.0)).item()
    -0.01
    """
    a = constant(a)
    factor = np.where(a.values > 0, 1.0, slope)
    return _make(a.values * factor, "leaky_relu", (a,), lambda g: (g * factor,))


def exp(a) -> TensorNode:
    a = constant(a)
    y = np.exp(a.values)
    return _make(y, "exp", (a,), lambda g: (g * y,))


def log(a) -> TensorNode:
    """Natural logarithm"""
    a = constant(a)
    av = a.values
    return _make(np.log(av), "log", (a,), lambda g: (g / av,))


def sqrt(a) -> TensorNode:
    """Square root; the gradient at exactly zero is taken as zero"""
    a = constant(a)
    y = np.sqrt(a.values)
    safe = np.where(y > 0, y, 1.0)
    return _make(y, "sqrt", (a,), lambda g: (np.where(y > 0, g / (2 * safe), 0.0),))


def absolute(a) -> TensorNode:
    a = constant(a)
    sign = np.sign(a.values)
    return _make(np.abs(a.values), "abs", (a,), lambda g: (g * sign,))


def square(a) -> TensorNode:
    a = constant(a)
    av = a.values
    return _make(av**2, "square", (a,), lambda g: (2 * av * g,))


def concat_cols(*nodes) -> TensorNode:
    """Concatenate matrices side by side: `[a || b || ...]`"""
    nodes = tuple(constant(n) for n in nodes)
    rows = {n.rows for n in nodes}
    if len(rows) != 1:
        raise DimensionError("concat_cols: row counts differ: {}".format(
            [n.shape for n in nodes]))

    bounds = np.cumsum([0] + [n.cols for n in nodes])

    def rule(g):
        return tuple(g[:, start:stop] for start, stop in zip(bounds[:-1], bounds[1:]))

    return _make(np.hstack([n.values for n in nodes]), "concat_cols", nodes, rule)


def take_cols(a, start, stop) -> TensorNode:
    """Column slice `a[:, start:stop]`"""
    a = constant(a)
    if not 0 <= start < stop <= a.cols:
        raise DimensionError("take_cols: invalid range [{}, {}) for shape {}".format(
            start, stop, a.shape))

    def rule(g):
        full = np.zeros(a.shape)
        full[:, start:stop] = g
        return full,

    return _make(a.values[:, start:stop], "take_cols", (a,), rule)


def mean_rows(a) -> TensorNode:
    """Column-wise mean over all rows, returns a `1 x cols` row"""
    a = constant(a)
    return _make(a.values.mean(axis=0, keepdims=True), "mean_rows", (a,),
                 lambda g: (np.broadcast_to(g / a.rows, a.shape),))


def _extreme_rows(a, name, pick):
    a = constant(a)
    idx = pick(a.values, axis=0)
    cols = np.arange(a.cols)

    def rule(g):
        full = np.zeros(a.shape)
        full[idx, cols] = g[0]
        return full,

    return _make(a.values[idx, cols][np.newaxis, :], name, (a,), rule)


def max_rows(a) -> TensorNode:
    """Column-wise maximum, gradient routed to the first maximal row"""
    return _extreme_rows(a, "max_rows", np.argmax)


def min_rows(a) -> TensorNode:
    """Column-wise minimum, gradient routed to the first minimal row"""
    return _extreme_rows(a, "min_rows", np.argmin)


def sum_all(a) -> TensorNode:
    """Sum of all entries as a 1x1 node"""
    a = constant(a)
    return _make(a.values.sum(), "sum_all", (a,), lambda g: (np.full(a.shape, g[0, 0]),))


def row_softmax_over_neighbors(scores, mask) -> TensorNode:
    """Softmax of each row restricted to the entries where `mask` is true

    Masked-out entries are exactly zero in the output and receive no gradient.

    Parameters
    ----------
    scores : TensorNode
        Square `n x n` matrix of unnormalized scores.
    mask : array_like of bool
        Same shape as `scores`. Every row needs at least one true entry.
    """
    scores = constant(scores)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != scores.shape:
        raise DimensionError("row_softmax_over_neighbors: mask shape {} doesn't match {}".format(
            mask.shape, scores.shape))
    empty_rows = np.flatnonzero(~mask.any(axis=1))
    if empty_rows.size:
        raise ContractError("row_softmax_over_neighbors: rows {} have no neighbors".format(
            empty_rows.tolist()))

    masked = np.where(mask, scores.values, -np.inf)
    shifted = np.exp(masked - masked.max(axis=1, keepdims=True))
    alpha = shifted / shifted.sum(axis=1, keepdims=True)

    def rule(g):
        return alpha * (g - np.sum(g * alpha, axis=1, keepdims=True)),

    return _make(alpha, "row_softmax", (scores,), rule)


def _topological_order(root):
    """Return the nodes reachable from `root` with every node after all of its parents"""
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node.op is not None:
            stack.extend((p, False) for p in node.op.parents
                         if p.requires_grad and id(p) not in visited)
    return order


def backward(loss: TensorNode):
    """Populate `grad` of every `requires_grad` ancestor of a scalar `loss`

    Intermediate gradients are recomputed from scratch on each call. Leaf gradients
    accumulate, so call `zero_grad()` on the leaves between passes.

    Examples
    --------
    >>> w = TensorNode([[1.0, 2.0]], requires_grad=True)
    >>> x = TensorNode([[3.0], [4.0]])
    >>> backward(sum_all(w @ x))
    >>> w.grad.tolist(), x.grad.tolist()
    ([[3.0, 4.0]], [[0.0], [0.0]])
    """
    if loss.shape != (1, 1):
        raise ContractError("backward() requires a scalar (1x1) loss, got shape {}".format(
            loss.shape))
    if not loss.requires_grad:
        return

    order = _topological_order(loss)
    for node in order:
        if not node.is_leaf:
            node.grad = np.zeros(node.shape)
    loss.grad = loss.grad + 1.0

    for node in reversed(order):
        if node.is_leaf:
            continue
        grads = node.op.backward(node.grad)
        for parent, grad in zip(node.op.parents, grads):
            if grad is not None and parent.requires_grad:
                parent.grad = parent.grad + grad


def gradient_check(fn, tensors, h=1e-5, floor=1e-8):
    """Compare analytic gradients against central finite differences

    Parameters
    ----------
    fn : Callable[[], TensorNode]
        Rebuilds the scalar loss from the current values of `tensors`.
    tensors : list of TensorNode
        Leaf nodes to differentiate with respect to.
    h : float
        Finite difference step.
    floor : float
        Lower bound of the relative error denominator so that entries with a
        vanishing gradient are compared in absolute terms.

    Returns
    -------
    float
        Largest elementwise `|analytic - numeric| / max(|numeric|, floor)`.

    Examples
    --------
    >>> x = TensorNode([[0.3, -1.2]], requires_grad=True)
    >>> bool(gradient_check(lambda: sum_all(tanh(x) * x), [x]) < 1e-6)
    True
    """
    for t in tensors:
        t.zero_grad()
    backward(fn())
    analytic = [t.grad.copy() for t in tensors]

    worst = 0.0
    for t, grad in zip(tensors, analytic):
        original = t.values.copy()
        for idx in np.ndindex(*t.shape):
            shifted = original.copy()
            shifted[idx] = original[idx] + h
            t.values = shifted
            plus = fn().item()
            shifted[idx] = original[idx] - h
            t.values = shifted
            minus = fn().item()
            numeric = (plus - minus) / (2 * h)
            error = abs(grad[idx] - numeric) / max(abs(numeric), floor)
            worst = max(worst, error)
        t.values = original
    return worst
