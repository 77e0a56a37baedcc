"""Reverse-mode automatic differentiation over dense numpy arrays.

The graph is an implicit tape: tensors get monotonically increasing ids at
creation, every operation records its input tensors and a backward rule on
the output, and processing nodes in descending id order is a valid reverse
topological order. Backward rules are written in terms of the taped
operations themselves, so running them with recording enabled
(``grad(..., create_graph=True)``) yields a differentiable gradient and
therefore second-order derivatives, which force-loss training needs.

Conventions:

- Arrays are 64-bit; 32-bit arrays pass through unchanged (inference only).
- A tape is single-threaded. Parameter tensors are immutable during an
  evaluation and may be shared read-only across independent evaluations.
- Outputs of ``grad`` with ``create_graph=False`` are terminal: using them
  in a later differentiated expression raises ``GradModeError`` rather
  than silently returning zero gradients.
"""

import heapq
import itertools
from contextlib import contextmanager

import numpy as np
from scipy.special import expit

from .errors import GradModeError, NonScalarError, ShapeError

_ids = itertools.count()
_grad_enabled = True


def is_grad_enabled():
    return _grad_enabled


@contextmanager
def _grad_mode(enabled):
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = enabled
    try:
        yield
    finally:
        _grad_enabled = previous


def no_grad():
    """Context manager that suspends recording of operations."""
    return _grad_mode(False)


class Tensor:
    """Dense real array plus the tape bookkeeping for reverse mode."""

    __slots__ = ("data", "requires_grad", "_id", "_parents", "_backward", "_nongraph")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data)
        if arr.dtype != np.float64 and arr.dtype != np.float32:
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._id = next(_ids)
        self._parents = ()
        self._backward = None
        self._nongraph = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        """Copy of the underlying array."""
        return np.array(self.data)

    def item(self):
        return float(self.data)

    def detach(self):
        """Same values, cut loose from the graph."""
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            return NotImplemented
        return power(self, float(exponent))

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)


def tensor(data, requires_grad=False):
    """Wrap data in a Tensor."""
    return Tensor(data, requires_grad=requires_grad)


def _coerce(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(data, parents, backward):
    out = Tensor(data)
    if _grad_enabled:
        for p in parents:
            if p.requires_grad:
                out.requires_grad = True
                out._parents = parents
                out._backward = backward
                break
    return out


def _unbroadcast(g, shape):
    """Reduce a broadcast cotangent back to the given input shape."""
    if g.data.shape == shape:
        return g
    extra = g.data.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.data.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    if g.data.shape != shape:
        g = g.reshape(shape)
    return g


def add(x, y):
    x, y = _coerce(x), _coerce(y)

    def backward(g):
        return (
            _unbroadcast(g, x.data.shape) if x.requires_grad else None,
            _unbroadcast(g, y.data.shape) if y.requires_grad else None,
        )

    return _record(x.data + y.data, (x, y), backward)


def sub(x, y):
    x, y = _coerce(x), _coerce(y)

    def backward(g):
        return (
            _unbroadcast(g, x.data.shape) if x.requires_grad else None,
            _unbroadcast(-g, y.data.shape) if y.requires_grad else None,
        )

    return _record(x.data - y.data, (x, y), backward)


def neg(x):
    x = _coerce(x)

    def backward(g):
        return (-g,)

    return _record(-x.data, (x,), backward)


def mul(x, y):
    x, y = _coerce(x), _coerce(y)

    def backward(g):
        return (
            _unbroadcast(g * y, x.data.shape) if x.requires_grad else None,
            _unbroadcast(g * x, y.data.shape) if y.requires_grad else None,
        )

    return _record(x.data * y.data, (x, y), backward)


def div(x, y):
    x, y = _coerce(x), _coerce(y)
    out = _record(x.data / y.data, (x, y), None)
    if out._parents:

        def backward(g):
            return (
                _unbroadcast(g / y, x.data.shape) if x.requires_grad else None,
                _unbroadcast(-(g * out) / y, y.data.shape)
                if y.requires_grad
                else None,
            )

        out._backward = backward
    return out


def matmul(x, y):
    x, y = _coerce(x), _coerce(y)
    if x.data.ndim != 2 or y.data.ndim != 2:
        raise ShapeError(
            f"matmul expects 2-d operands, got {x.data.shape} and {y.data.shape}"
        )

    def backward(g):
        return (
            g @ transpose(y) if x.requires_grad else None,
            transpose(x) @ g if y.requires_grad else None,
        )

    return _record(x.data @ y.data, (x, y), backward)


def tensor_sum(x, axis=None, keepdims=False):
    x = _coerce(x)
    nd = x.data.ndim
    if axis is None:
        axes = tuple(range(nd))
    elif isinstance(axis, int):
        axes = (axis % nd,)
    else:
        axes = tuple(a % nd for a in axis)
    kept = tuple(1 if i in axes else n for i, n in enumerate(x.data.shape))

    def backward(g):
        if not keepdims and nd and g.data.shape != kept:
            g = g.reshape(kept)
        return (broadcast_to(g, x.data.shape),)

    return _record(x.data.sum(axis=axes or None, keepdims=keepdims), (x,), backward)


def mean(x, axis=None, keepdims=False):
    x = _coerce(x)
    if axis is None:
        count = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = 1
        for a in axes:
            count *= x.data.shape[a]
    return tensor_sum(x, axis=axis, keepdims=keepdims) * (1.0 / count)


def broadcast_to(x, shape):
    x = _coerce(x)

    def backward(g):
        return (_unbroadcast(g, x.data.shape),)

    return _record(np.broadcast_to(x.data, shape), (x,), backward)


def reshape(x, shape):
    x = _coerce(x)
    original = x.data.shape

    def backward(g):
        return (reshape(g, original),)

    return _record(np.reshape(x.data, shape), (x,), backward)


def transpose(x, axes=None):
    x = _coerce(x)
    if axes is None:
        inverse = None
    else:
        axes = tuple(axes)
        inverse = tuple(np.argsort(axes))

    def backward(g):
        return (transpose(g, inverse),)

    return _record(np.transpose(x.data, axes), (x,), backward)


def gather(x, index):
    """Rows of x selected by an integer index array (axis 0)."""
    x = _coerce(x)
    index = np.asarray(index, dtype=np.intp)
    n = x.data.shape[0]

    def backward(g):
        return (segment_sum(g, index, n),)

    return _record(x.data[index], (x,), backward)


def segment_sum(x, segment_ids, num_segments):
    """out[k] = sum of rows of x whose segment id is k."""
    x = _coerce(x)
    segment_ids = np.asarray(segment_ids, dtype=np.intp)
    if segment_ids.size and (segment_ids.min() < 0 or segment_ids.max() >= num_segments):
        raise IndexError("segment id out of range")
    out = np.zeros((num_segments,) + x.data.shape[1:], dtype=x.data.dtype)
    np.add.at(out, segment_ids, x.data)

    def backward(g):
        return (gather(g, segment_ids),)

    return _record(out, (x,), backward)


def concatenate(tensors, axis=0):
    ts = tuple(_coerce(t) for t in tensors)
    sizes = [t.data.shape[axis] for t in ts]

    def backward(g):
        cots, start = [], 0
        for t, n in zip(ts, sizes):
            cots.append(narrow(g, axis, start, n) if t.requires_grad else None)
            start += n
        return tuple(cots)

    return _record(np.concatenate([t.data for t in ts], axis=axis), ts, backward)


def narrow(x, axis, start, length):
    """Contiguous slice [start, start+length) along one axis."""
    x = _coerce(x)
    nd = x.data.ndim
    axis = axis % nd
    total = x.data.shape[axis]
    sl = tuple(
        slice(start, start + length) if k == axis else slice(None) for k in range(nd)
    )

    def backward(g):
        parts = []
        if start:
            shape = list(x.data.shape)
            shape[axis] = start
            parts.append(Tensor(np.zeros(shape, dtype=x.data.dtype)))
        parts.append(g)
        if total - start - length:
            shape = list(x.data.shape)
            shape[axis] = total - start - length
            parts.append(Tensor(np.zeros(shape, dtype=x.data.dtype)))
        if len(parts) == 1:
            return (g,)
        return (concatenate(parts, axis=axis),)

    return _record(x.data[sl], (x,), backward)


def where(condition, x, y):
    """Elementwise select; the condition is constant, not differentiated."""
    if isinstance(condition, Tensor):
        condition = condition.data
    mask = np.asarray(condition, dtype=bool)
    x, y = _coerce(x), _coerce(y)
    mask_x = Tensor(mask.astype(np.float64))
    mask_y = Tensor((~mask).astype(np.float64))

    def backward(g):
        return (
            _unbroadcast(g * mask_x, x.data.shape) if x.requires_grad else None,
            _unbroadcast(g * mask_y, y.data.shape) if y.requires_grad else None,
        )

    return _record(np.where(mask, x.data, y.data), (x, y), backward)


def exp(x):
    x = _coerce(x)
    out = _record(np.exp(x.data), (x,), None)
    if out._parents:
        out._backward = lambda g: (g * out,)
    return out


def sin(x):
    x = _coerce(x)

    def backward(g):
        return (g * cos(x),)

    return _record(np.sin(x.data), (x,), backward)


def cos(x):
    x = _coerce(x)

    def backward(g):
        return (-(g * sin(x)),)

    return _record(np.cos(x.data), (x,), backward)


def sqrt(x):
    x = _coerce(x)
    out = _record(np.sqrt(x.data), (x,), None)
    if out._parents:
        out._backward = lambda g: ((g * 0.5) / out,)
    return out


def sigmoid(x):
    x = _coerce(x)
    out = _record(expit(x.data), (x,), None)
    if out._parents:
        out._backward = lambda g: (g * out * (1.0 - out),)
    return out


def silu(x):
    """x * sigmoid(x), the smooth nonlinearity used throughout the model."""
    x = _coerce(x)
    return x * sigmoid(x)


def power(x, exponent):
    """x raised to a constant real exponent."""
    x = _coerce(x)
    p = float(exponent)
    if p == 0.0:
        return Tensor(np.ones_like(x.data))

    def backward(g):
        return (g * p * power(x, p - 1.0),)

    return _record(x.data ** p, (x,), backward)


def safe_norm(v, axis=-1, keepdims=False, eps=1e-8):
    """Regularized Euclidean norm sqrt(sum(v^2) + eps^2) - eps.

    The value is >= 0 and within eps of the true norm, and the gradient
    v / sqrt(sum(v^2) + eps^2) is finite everywhere, including v = 0.
    """
    if eps <= 0.0:
        raise ValueError("safe_norm needs eps > 0")
    v = _coerce(v)
    squared = tensor_sum(v * v, axis=axis, keepdims=keepdims)
    return sqrt(squared + eps * eps) - eps


def zeros_like(x):
    return Tensor(np.zeros_like(x.data))


def ones_like(x):
    return Tensor(np.ones_like(x.data))


def grad(output, wrt, create_graph=False):
    """Gradients of a scalar output with respect to each tensor in wrt.

    Inputs that did not participate in the output get zero gradients.
    With ``create_graph=True`` the returned gradients are themselves
    differentiable, which is how second-order quantities (for example
    parameter gradients of a force loss) are obtained. Without it the
    results are terminal: differentiating through them raises
    ``GradModeError`` instead of silently yielding zeros.
    """
    single = isinstance(wrt, Tensor)
    wrt_list = [wrt] if single else list(wrt)
    if output.data.size != 1:
        raise NonScalarError(
            f"grad target must be scalar, got shape {output.data.shape}"
        )
    if output._nongraph:
        raise GradModeError(
            "output comes from grad(create_graph=False); rerun the inner "
            "grad with create_graph=True to differentiate through it"
        )
    wrt_ids = {w._id for w in wrt_list}
    grads = {}
    if output.requires_grad:
        with _grad_mode(create_graph):
            grads[output._id] = Tensor(np.ones_like(output.data))
            nodes = {output._id: output}
            heap = [-output._id]
            pushed = {output._id}
            while heap:
                node = nodes[-heapq.heappop(heap)]
                if node._backward is None:
                    continue
                cotangents = node._backward(grads[node._id])
                for parent, cot in zip(node._parents, cotangents):
                    if cot is None or not parent.requires_grad:
                        continue
                    if parent._nongraph and parent._id not in wrt_ids:
                        raise GradModeError(
                            "expression depends on a grad(create_graph=False) "
                            "result; rerun the inner grad with create_graph=True"
                        )
                    if cot.data.shape != parent.data.shape:
                        raise ShapeError(
                            f"backward accumulation shape {cot.data.shape} does "
                            f"not match tensor shape {parent.data.shape}"
                        )
                    held = grads.get(parent._id)
                    grads[parent._id] = cot if held is None else held + cot
                    if parent._backward is not None and parent._id not in pushed:
                        nodes[parent._id] = parent
                        heapq.heappush(heap, -parent._id)
                        pushed.add(parent._id)

    results = []
    for w in wrt_list:
        g = grads.get(w._id)
        if g is None:
            g = Tensor(np.zeros_like(w.data))
        if not create_graph:
            g._parents = ()
            g._backward = None
            g._nongraph = True
            g.requires_grad = True
        results.append(g)
    return results[0] if single else results
