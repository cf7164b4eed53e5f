"""Minimal float64 reverse-mode autodiff on numpy arrays.

Design notes
------------
* Define-by-run: every operation on a ``Tensor`` whose inputs require
  gradients records its parents and a VJP closure on the result.
* VJP closures are themselves written in terms of ``Tensor`` operations, so
  running a backward pass with ``create_graph=True`` records the gradient
  computation and makes it differentiable again.  This is what the
  gradient-penalty term needs: it differentiates a squared gradient norm
  with respect to the discriminator weights.
* Everything is float64.  Any operation that produces a NaN or Inf raises
  :class:`NonFiniteError` immediately rather than letting the poison spread.
* Randomness (dropout masks) is supplied by the caller as explicit mask
  arrays, keeping the engine free of hidden state.
"""

from __future__ import annotations

import contextlib

import numpy as np

from . import kernels

__all__ = [
    "Tensor", "NonFiniteError", "no_grad", "grad", "grad_check",
    "concat", "stack", "softmax", "layer_norm", "group_norm",
    "attention", "dropout_apply",
]


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or Inf."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Context manager that disables graph recording."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Tensor:
    """Dense float64 array, optionally attached to a computation graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "_op")

    # make ndarray <op> Tensor dispatch to the reflected Tensor operator
    # instead of numpy's elementwise object broadcasting
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._vjp = None
        self._op = "leaf"

    # -- construction -------------------------------------------------------

    @staticmethod
    def _result(data, parents, vjp, op):
        data = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(data)):
            raise NonFiniteError(f"non-finite values produced by op '{op}'")
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._vjp = vjp
        else:
            out.requires_grad = False
            out._parents = ()
            out._vjp = None
        out._op = op
        return out

    @staticmethod
    def zeros(shape, requires_grad=False):
        return Tensor(np.zeros(shape), requires_grad=requires_grad)

    @staticmethod
    def ones(shape, requires_grad=False):
        return Tensor(np.ones(shape), requires_grad=requires_grad)

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op}, requires_grad={self.requires_grad})"

    def detach(self):
        return Tensor(self.data)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        a, b = self, _as_tensor(other)
        return Tensor._result(
            a.data + b.data, (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
            "add")

    __radd__ = __add__

    def __sub__(self, other):
        a, b = self, _as_tensor(other)
        return Tensor._result(
            a.data - b.data, (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
            "sub")

    def __rsub__(self, other):
        return _as_tensor(other).__sub__(self)

    def __mul__(self, other):
        a, b = self, _as_tensor(other)
        return Tensor._result(
            a.data * b.data, (a, b),
            lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
            "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        # VJPs reference only the parents (not the result) so graphs are
        # freed by reference counting alone; a closure capturing its own
        # output tensor would form a cycle and pile up across iterations
        # until the cyclic collector runs.
        a, b = self, _as_tensor(other)
        with np.errstate(all="ignore"):  # NonFiniteError supersedes warnings
            data = a.data / b.data
        return Tensor._result(
            data, (a, b),
            lambda g: (_unbroadcast(g / b, a.shape),
                       _unbroadcast(-(g * a) / (b * b), b.shape)),
            "div")

    def __rtruediv__(self, other):
        return _as_tensor(other).__truediv__(self)

    def __neg__(self):
        return Tensor._result(-self.data, (self,), lambda g: (-g,), "neg")

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("only constant scalar exponents are supported")
        x, p = self, float(p)
        with np.errstate(all="ignore"):
            data = x.data ** p
        return Tensor._result(
            data, (x,),
            lambda g: (g * (p * x ** (p - 1.0)),),
            "pow")

    def __matmul__(self, other):
        a, b = self, _as_tensor(other)
        if a.ndim < 2 or b.ndim < 2:
            raise ValueError("matmul requires at least 2-D operands")
        with np.errstate(all="ignore"):  # NonFiniteError supersedes warnings
            data = a.data @ b.data
        return Tensor._result(
            data, (a, b),
            lambda g: (_unbroadcast(g @ b.swapaxes(-1, -2), a.shape),
                       _unbroadcast(a.swapaxes(-1, -2) @ g, b.shape)),
            "matmul")

    def square(self):
        return self * self

    # -- elementwise functions ---------------------------------------------

    def exp(self):
        x = self
        return Tensor._result(np.exp(self.data), (x,),
                              lambda g: (g * x.exp(),), "exp")

    def log(self):
        x = self
        with np.errstate(all="ignore"):
            data = np.log(self.data)
        return Tensor._result(data, (x,), lambda g: (g / x,), "log")

    def sqrt(self):
        x = self
        with np.errstate(all="ignore"):
            data = np.sqrt(self.data)
        return Tensor._result(data, (x,),
                              lambda g: ((g * 0.5) / x.sqrt(),), "sqrt")

    def sigmoid(self):
        x = self

        def vjp(g):
            s = x.sigmoid()
            return (g * s * (1.0 - s),)

        return Tensor._result(kernels.sigmoid(self.data), (x,), vjp, "sigmoid")

    def softplus(self):
        x = self
        return Tensor._result(kernels.softplus(self.data), (x,),
                              lambda g: (g * x.sigmoid(),), "softplus")

    def selu(self):
        x = self
        return Tensor._result(kernels.selu(self.data), (x,),
                              lambda g: (g * _selu_grad(x),), "selu")

    # -- reductions ---------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        x = self
        if axis is None:
            axes = tuple(range(x.ndim))
        elif isinstance(axis, int):
            axes = (axis % x.ndim,)
        else:
            axes = tuple(a % x.ndim for a in axis)

        def vjp(g):
            if not keepdims and axes:
                shape = list(x.shape)
                for a in axes:
                    shape[a] = 1
                g = g.reshape(tuple(shape))
            return (g.broadcast_to(x.shape),)

        return Tensor._result(np.sum(x.data, axis=axes or None, keepdims=keepdims),
                              (x,), vjp, "sum")

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            n = self.size
        elif isinstance(axis, int):
            n = self.shape[axis]
        else:
            n = 1
            for a in axis:
                n *= self.shape[a]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- shape manipulation -------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        x = self
        old = x.shape
        return Tensor._result(x.data.reshape(shape), (x,),
                              lambda g: (g.reshape(old),), "reshape")

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        x = self
        inv = tuple(np.argsort(axes))
        return Tensor._result(np.transpose(x.data, axes), (x,),
                              lambda g: (g.transpose(inv),), "transpose")

    def swapaxes(self, a, b):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(tuple(axes))

    def broadcast_to(self, shape):
        x = self
        return Tensor._result(np.broadcast_to(x.data, shape).copy(), (x,),
                              lambda g: (_unbroadcast(g, x.shape),),
                              "broadcast")

    def __getitem__(self, index):
        x = self
        return Tensor._result(x.data[index], (x,),
                              lambda g: (_scatter(g, index, x.shape),),
                              "slice")

    def take_rows(self, indices):
        """Gather rows by integer index (repeats allowed; grads accumulate)."""
        idx = np.asarray(indices, dtype=np.int64)
        x = self
        return Tensor._result(x.data[idx], (x,),
                              lambda g: (_scatter_add_rows(g, idx, x.shape),),
                              "take_rows")

    def backward(self, create_graph=False):
        """Accumulate gradients of this scalar into every reachable leaf's ``.grad``."""
        if self.size != 1:
            raise ValueError("backward requires a scalar output")
        _accumulate_leaf_grads(self, create_graph)


def _unbroadcast(g, shape):
    """Sum ``g`` over the axes that were broadcast to reach ``g.shape``."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _selu_grad(x):
    """SELU derivative as a differentiable op (needed for second order)."""
    # d/dx selu'(x) = selu'(x) on the negative branch and 0 on the positive
    # branch, so the VJP reuses the op itself with a constant branch mask.
    neg_mask = (x.data <= 0.0).astype(np.float64)
    out = Tensor._result(kernels.selu_grad(x.data), (x,),
                         lambda g: (g * neg_mask * _selu_grad(x),),
                         "selu_grad")
    return out


def _scatter(g, index, shape):
    """Adjoint of basic slicing: place ``g`` into zeros of ``shape``."""
    data = np.zeros(shape)
    data[index] = g.data
    return Tensor._result(data, (g,), lambda gg: (gg[index],), "scatter")


def _scatter_add_rows(g, idx, shape):
    """Adjoint of row gathering: accumulate rows of ``g`` at ``idx``."""
    data = np.zeros(shape)
    np.add.at(data, idx, g.data)
    return Tensor._result(data, (g,), lambda gg: (gg.take_rows(idx),),
                          "scatter_add")


# -- multi-input ops --------------------------------------------------------

def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    axis = axis % tensors[0].ndim
    sizes = [t.shape[axis] for t in tensors]
    edges = np.cumsum([0] + sizes)

    def vjp(g):
        grads = []
        for i in range(len(tensors)):
            index = (slice(None),) * axis + (slice(int(edges[i]), int(edges[i + 1])),)
            grads.append(g[index])
        return tuple(grads)

    return Tensor._result(np.concatenate([t.data for t in tensors], axis=axis),
                          tensors, vjp, "concat")


def stack(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    shape = tensors[0].shape
    axis = axis % (len(shape) + 1)
    expanded = shape[:axis] + (1,) + shape[axis:]
    return concat([t.reshape(expanded) for t in tensors], axis=axis)


# -- composite neural-net ops ----------------------------------------------

def softmax(x, axis=-1):
    """Numerically stable softmax; the running max is treated as a constant."""
    m = np.max(x.data, axis=axis, keepdims=True)
    e = (x - Tensor(m)).exp()
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize over the last axis, then scale and shift."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = xc.square().mean(axis=-1, keepdims=True)
    return gamma * (xc / (var + eps).sqrt()) + beta


def group_norm(x, num_groups, gamma, beta, eps=1e-5):
    """Normalize contiguous channel groups of the last axis."""
    c = x.shape[-1]
    if c % num_groups:
        raise ValueError(f"channels {c} not divisible by {num_groups} groups")
    xg = x.reshape(x.shape[:-1] + (num_groups, c // num_groups))
    mu = xg.mean(axis=-1, keepdims=True)
    xc = xg - mu
    var = xc.square().mean(axis=-1, keepdims=True)
    xn = (xc / (var + eps).sqrt()).reshape(x.shape)
    return gamma * xn + beta


def attention(q, k, v):
    """Scaled dot-product attention over the second-to-last axis."""
    scale = 1.0 / np.sqrt(q.shape[-1])
    scores = (q @ k.swapaxes(-1, -2)) * scale
    return softmax(scores, axis=-1) @ v


def dropout_apply(x, mask, keep_prob):
    """Apply a caller-supplied 0/1 dropout mask with inverted scaling."""
    return x * Tensor(mask) * (1.0 / keep_prob)


# -- backward machinery -----------------------------------------------------

def _topo_order(root):
    """Iterative post-order over the graph reachable from ``root``."""
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order


def _needed_set(order, targets):
    """ids of nodes from which some target is reachable via parent edges.

    ``order`` lists parents before children, so one forward sweep marks
    every node whose gradient contributes to a target.
    """
    needed = {id(t) for t in targets}
    for node in order:
        if id(node) in needed:
            continue
        if any(id(p) in needed for p in node._parents):
            needed.add(id(node))
    return needed


def _backward_map(output, create_graph, targets=None):
    order = _topo_order(output)
    needed = None if targets is None else _needed_set(order, targets)
    grads = {id(output): Tensor.ones(output.shape)}
    ctx = contextlib.nullcontext() if create_graph else no_grad()
    with ctx:
        for node in reversed(order):
            g = grads.get(id(node))
            if g is None or node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if not parent.requires_grad or pg is None:
                    continue
                if needed is not None and id(parent) not in needed:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg
    return grads


def grad(output, inputs, create_graph=False):
    """Gradients of a scalar ``output`` w.r.t. ``inputs``.

    Returns one Tensor per input (zeros for inputs the output does not
    depend on).  With ``create_graph=True`` the returned gradients are
    themselves differentiable.  Branches of the graph that do not lead to
    any requested input are skipped entirely.
    """
    if output.size != 1:
        raise ValueError("grad requires a scalar output")
    grads = _backward_map(output, create_graph, targets=inputs)
    return [grads[id(x)] if id(x) in grads else Tensor.zeros(x.shape)
            for x in inputs]


def _accumulate_leaf_grads(output, create_graph):
    grads = _backward_map(output, create_graph)
    seen = set()
    stack = [output]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if node.requires_grad and node._vjp is None:
            g = grads.get(id(node))
            if g is not None:
                node.grad = g if node.grad is None else Tensor(node.grad.data + g.data)
        stack.extend(node._parents)


# -- gradient checking ------------------------------------------------------

def grad_check(f, x, eps=1e-5, sample=None, rng=None):
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps a Tensor to a scalar Tensor and must be deterministic.  The
    error at a coordinate is |analytic − numeric| / max(1, |analytic|); the
    maximum over checked coordinates is returned.  ``sample`` limits the
    check to that many randomly chosen coordinates (all, when None).
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    leaf = Tensor(x.data.copy(), requires_grad=True)
    (g,) = grad(f(leaf), [leaf])
    analytic = g.data.reshape(-1)

    flat = leaf.data.reshape(-1)
    if sample is None or sample >= flat.size:
        coords = range(flat.size)
    else:
        rng = rng or np.random.default_rng(0)
        coords = rng.choice(flat.size, size=sample, replace=False)

    worst = 0.0
    for i in coords:
        saved = flat[i]
        flat[i] = saved + eps
        fp = f(leaf).item()
        flat[i] = saved - eps
        fm = f(leaf).item()
        flat[i] = saved
        numeric = (fp - fm) / (2.0 * eps)
        err = abs(analytic[i] - numeric) / max(1.0, abs(analytic[i]))
        worst = max(worst, err)
    return worst
