"""Reverse-mode automatic differentiation over numpy arrays.

Deliberately small: only the operations the twin-tower model needs are
implemented (affine maps, layer norm, softmax/logsumexp for masked
attention, GELU, gathers, stacking, reductions). Training runs in float32;
every op also works in float64 so analytic gradients can be checked
against central finite differences.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError

_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables tape recording (inference paths)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    """A numpy array plus the tape hooks needed for backprop."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Backpropagate from a scalar through the recorded tape."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        # Iterative postorder walk; recursion would overflow on long tapes.
        order: list[Tensor] = []
        state: dict[int, int] = {}
        stack: list[Tensor] = [self]
        while stack:
            node = stack.pop()
            nid = id(node)
            st = state.get(nid, 0)
            if st == 0:
                state[nid] = 1
                stack.append(node)
                for p in node._parents:
                    if state.get(id(p), 0) == 0:
                        stack.append(p)
            elif st == 1:
                state[nid] = 2
                order.append(node)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # Operator sugar. Scalars stay python floats so float32 is preserved.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, scalar):
        return mul(self, 1.0 / float(scalar))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def parameter(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype)


def _wrap(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _tracks(*ts: Tensor) -> bool:
    return _GRAD_ENABLED and any(t.requires_grad for t in ts)


def _record(out: Tensor, parents, backward):
    out.requires_grad = True
    out._parents = tuple(p for p in parents if p.requires_grad)
    out._backward = backward


def _accum(t: Tensor, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a gradient back to `shape` after numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    b = _wrap(b, a)
    out = Tensor(a.data + b.data)
    if _tracks(a, b):

        def _back(g):
            _accum(a, _unbroadcast(g, a.data.shape))
            _accum(b, _unbroadcast(g, b.data.shape))

        _record(out, (a, b), _back)
    return out


def mul(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    if isinstance(b, (int, float)):
        s = float(b)
        out = Tensor(a.data * s)
        if _tracks(a):
            _record(out, (a,), lambda g: _accum(a, g * s))
        return out
    b = _wrap(b, a)
    out = Tensor(a.data * b.data)
    if _tracks(a, b):

        def _back(g):
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

        _record(out, (a, b), _back)
    return out


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product. Batched operands must share leading dims exactly."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeMismatchError("matmul requires rank >= 2 operands")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeMismatchError(f"matmul inner dims {a.data.shape} @ {b.data.shape}")
    if b.data.ndim > 2 and a.data.shape[:-2] != b.data.shape[:-2]:
        raise ShapeMismatchError(f"matmul batch dims {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)
    if _tracks(a, b):

        def _back(g):
            if a.requires_grad:
                _accum(a, g @ _swap(b.data))
            if b.requires_grad:
                if b.data.ndim == 2 and a.data.ndim > 2:
                    axes = tuple(range(a.data.ndim - 1))
                    _accum(b, np.tensordot(a.data, g, axes=(axes, axes)))
                else:
                    _accum(b, _swap(a.data) @ g)

        _record(out, (a, b), _back)
    return out


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    if _tracks(x):
        _record(out, (x,), lambda g: _accum(x, g.reshape(x.data.shape)))
    return out


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    out = Tensor(x.data.transpose(axes))
    if _tracks(x):
        inv = tuple(np.argsort(axes))
        _record(out, (x,), lambda g: _accum(x, g.transpose(inv)))
    return out


def gather_rows(x: Tensor, idx) -> Tensor:
    """out[i] = x[idx[i]] along axis 0; duplicate indices accumulate grads."""
    idx = np.asarray(idx, dtype=np.intp)
    out = Tensor(x.data[idx])
    if _tracks(x):

        def _back(g):
            buf = np.zeros_like(x.data)
            np.add.at(buf, idx, g)
            _accum(x, buf)

        _record(out, (x,), _back)
    return out


def take_pairs(x: Tensor, rows, cols) -> Tensor:
    """out[i] = x[rows[i], cols[i]] for a rank-2 tensor."""
    if x.data.ndim != 2:
        raise ShapeMismatchError("take_pairs requires a rank-2 tensor")
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    out = Tensor(x.data[rows, cols])
    if _tracks(x):

        def _back(g):
            buf = np.zeros_like(x.data)
            np.add.at(buf, (rows, cols), g)
            _accum(x, buf)

        _record(out, (x,), _back)
    return out


def stack(tensors, axis: int = 0) -> Tensor:
    ts = list(tensors)
    out = Tensor(np.stack([t.data for t in ts], axis=axis))
    if _tracks(*ts):

        def _back(g):
            slices = np.moveaxis(g, axis, 0)
            for t, gi in zip(ts, slices):
                _accum(t, gi)

        _record(out, ts, _back)
    return out


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))
    if _tracks(x):

        def _back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(g, x.data.shape))

        _record(out, (x,), _back)
    return out


def mean_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else x.data.shape[axis]
    out = Tensor(x.data.mean(axis=axis, keepdims=keepdims))
    if _tracks(x):

        def _back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(g, x.data.shape) / count)

        _record(out, (x,), _back)
    return out


def logsumexp(x: Tensor, axis: int = -1) -> Tensor:
    m = np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = Tensor(np.squeeze(m + np.log(s), axis=axis))
    if _tracks(x):
        p = e / s

        def _back(g):
            _accum(x, np.expand_dims(g, axis) * p)

        _record(out, (x,), _back)
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    m = np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)
    if _tracks(x):

        def _back(g):
            _accum(x, y * (g - (g * y).sum(axis=axis, keepdims=True)))

        _record(out, (x,), _back)
    return out


# tanh-form GELU, the variant transformer stacks typically use
_GELU_K = 0.7978845608028654  # sqrt(2/pi)
_GELU_C = 0.044715


def gelu(x: Tensor) -> Tensor:
    d = x.data
    t = np.tanh(_GELU_K * (d + _GELU_C * d**3))
    out = Tensor(0.5 * d * (1.0 + t))
    if _tracks(x):

        def _back(g):
            du = _GELU_K * (1.0 + 3.0 * _GELU_C * d**2)
            _accum(x, g * (0.5 * (1.0 + t) + 0.5 * d * (1.0 - t**2) * du))

        _record(out, (x,), _back)
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = x.data
    if gamma.data.shape != (d.shape[-1],) or beta.data.shape != (d.shape[-1],):
        raise ShapeMismatchError("layer_norm affine params must match the last axis")
    mu = d.mean(axis=-1, keepdims=True)
    var = ((d - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (d - mu) * inv
    out = Tensor(xhat * gamma.data + beta.data)
    if _tracks(x, gamma, beta):

        def _back(g):
            if gamma.requires_grad:
                _accum(gamma, (g * xhat).reshape(-1, d.shape[-1]).sum(axis=0))
            if beta.requires_grad:
                _accum(beta, g.reshape(-1, d.shape[-1]).sum(axis=0))
            if x.requires_grad:
                gx = g * gamma.data
                _accum(
                    x,
                    inv
                    * (
                        gx
                        - gx.mean(axis=-1, keepdims=True)
                        - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
                    ),
                )

        _record(out, (x, gamma, beta), _back)
    return out


def l2_normalize(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Scale rows (last axis) to unit L2 norm."""
    d = x.data
    n = np.sqrt((d * d).sum(axis=-1, keepdims=True) + eps)
    out = Tensor(d / n)
    if _tracks(x):

        def _back(g):
            proj = (g * d).sum(axis=-1, keepdims=True)
            _accum(x, g / n - d * proj / n**3)

        _record(out, (x,), _back)
    return out
