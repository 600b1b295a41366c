"""Tape-based reverse-mode differentiation over float64 numpy arrays.

Every :class:`Tensor` produced by an operation records its parents and a
closure that maps the output gradient to parent gradients.  ``backward`` walks
the graph in reverse topological order.  Complex signals are carried as two
real tensors (:class:`CTensor`), so no complex-derivative convention is needed.
"""

import numpy as np

from . import buffers

# number of times atan2 was differentiated at the origin (gradient set to zero)
arg_origin_hits = 0


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")
    __array_ufunc__ = None  # ndarray <op> Tensor defers to the reflected method

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Populate ``.grad`` of every tensor this scalar depends on."""
        if self.data.size != 1:
            raise ValueError(f"backward needs a scalar, got shape {self.data.shape}")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward):
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward)
    return Tensor(data)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _send(t, g):
    if t.requires_grad:
        t._accumulate(_unbroadcast(g, t.data.shape))


# ---------------------------------------------------------------- elementwise


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _send(a, g)
        _send(b, g)

    return _node(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _send(a, g)
        _send(b, -g)

    return _node(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _send(a, g * b.data)
        _send(b, g * a.data)

    return _node(a.data * b.data, (a, b), backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def backward(g):
        _send(a, g / b.data)
        _send(b, -g * out / b.data)

    return _node(out, (a, b), backward)


def neg(a):
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: _send(a, -g))


def square(a):
    a = as_tensor(a)
    return _node(a.data * a.data, (a,), lambda g: _send(a, 2.0 * g * a.data))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: _send(a, g * out))


def log(a):
    a = as_tensor(a)
    return _node(np.log(a.data), (a,), lambda g: _send(a, g / a.data))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _node(out, (a,), lambda g: _send(a, 0.5 * g / out))


def tabs(a):
    a = as_tensor(a)
    return _node(np.abs(a.data), (a,), lambda g: _send(a, g * np.sign(a.data)))


def cos(a):
    a = as_tensor(a)
    return _node(np.cos(a.data), (a,), lambda g: _send(a, -g * np.sin(a.data)))


def sin(a):
    a = as_tensor(a)
    return _node(np.sin(a.data), (a,), lambda g: _send(a, g * np.cos(a.data)))


def atan2(y, x):
    """Four-quadrant angle; branch cut on the negative real axis.

    The gradient at the origin is undefined and is returned as zero; each
    occurrence increments ``arg_origin_hits``.
    """
    y, x = as_tensor(y), as_tensor(x)
    r2 = y.data**2 + x.data**2

    def backward(g):
        global arg_origin_hits
        zero = r2 == 0
        if zero.any():
            arg_origin_hits += int(zero.sum())
        safe = np.where(zero, 1.0, r2)
        _send(y, np.where(zero, 0.0, g * x.data / safe))
        _send(x, np.where(zero, 0.0, -g * y.data / safe))

    return _node(np.arctan2(y.data, x.data), (y, x), backward)


def relu(a):
    """``max(a, 0)``; subgradient 0 at the kink."""
    a = as_tensor(a)
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: _send(a, g * mask))


def sigmoid(a):
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _node(out, (a,), lambda g: _send(a, g * out * (1.0 - out)))


def softplus(a):
    """``log(1 + exp(a))`` without overflow."""
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)
    return _node(out, (a,), lambda g: _send(a, g * 0.5 * (1.0 + np.tanh(0.5 * a.data))))


def clip(a, lo, hi):
    a = as_tensor(a)
    mask = (a.data >= lo) & (a.data <= hi)
    return _node(np.clip(a.data, lo, hi), (a,), lambda g: _send(a, g * mask))


def stop_gradient(a):
    return Tensor(as_tensor(a).data)


# ----------------------------------------------------------------- reductions


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _send(a, np.broadcast_to(g, a.data.shape))

    return _node(out, (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.data.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / n)


def logsumexp(a, axis=-1):
    """Log-sum-exp along ``axis`` with max subtraction."""
    a = as_tensor(a)
    peak = a.data.max(axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    shifted = np.exp(a.data - peak)
    total = shifted.sum(axis=axis, keepdims=True)
    out = np.squeeze(np.log(total) + peak, axis=axis)
    weights = shifted / total

    def backward(g):
        _send(a, np.expand_dims(g, axis) * weights)

    return _node(out, (a,), backward)


# ------------------------------------------------------------ linear algebra


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    if a.data.ndim < 2:
        raise ValueError("matmul expects a matrix (or batch of matrices) on the left")

    def backward(g):
        if b.data.ndim == 1:
            _send(a, g[..., None] * b.data)
            _send(b, np.einsum("...nk,...n->k", a.data, g))
        else:
            _send(a, g @ np.swapaxes(b.data, -1, -2))
            _send(b, np.swapaxes(a.data, -1, -2) @ g)

    return _node(a.data @ b.data, (a, b), backward)


# ------------------------------------------------------------- shape / index


def reshape(a, shape):
    a = as_tensor(a)
    return _node(a.data.reshape(shape), (a,), lambda g: _send(a, g.reshape(a.data.shape)))


def transpose(a, axes=None):
    a = as_tensor(a)
    inv = None if axes is None else np.argsort(axes)
    return _node(np.transpose(a.data, axes), (a,), lambda g: _send(a, np.transpose(g, inv)))


def getitem(a, index):
    """Basic or advanced indexing; repeated indices accumulate in the gradient."""
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        _send(a, full)

    return _node(a.data[index], (a,), backward)


def concatenate(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            _send(t, np.take(g, np.arange(lo, hi), axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


# ------------------------------------------------------------ signal ops


def convolve(x, h):
    """Full linear convolution of ``x`` (last axis) with 1-D kernel ``h``."""
    x, h = as_tensor(x), as_tensor(h)

    def backward(g):
        if x.requires_grad:
            x._accumulate(buffers.correlate_valid(g, h.data))
        if h.requires_grad:
            gf = g.reshape(-1, g.shape[-1])
            xf = x.data.reshape(-1, x.data.shape[-1])
            h._accumulate(sum(np.correlate(gr, xr, "valid") for gr, xr in zip(gf, xf)))

    return _node(buffers.convolve(x.data, h.data), (x, h), backward)


def upsample(x, m):
    x = as_tensor(x)
    return _node(buffers.upsample(x.data, m), (x,), lambda g: _send(x, g[..., ::m]))


def downsample(x, m, offset=0, count=None):
    x = as_tensor(x)
    out = buffers.downsample(x.data, m, offset, count)
    stop = offset + m * out.shape[-1]

    def backward(g):
        full = np.zeros_like(x.data)
        full[..., offset:stop:m] = g
        _send(x, full)

    return _node(out, (x,), backward)


# ----------------------------------------------------------- complex pairs


class CTensor:
    """Complex array held as two real tensors."""

    __slots__ = ("re", "im")
    __array_ufunc__ = None

    def __init__(self, re, im=None):
        if im is None:
            z = np.asarray(re)
            re, im = z.real, z.imag
        self.re = as_tensor(re)
        self.im = as_tensor(im)

    @property
    def shape(self):
        return self.re.shape

    def numpy(self):
        return self.re.data + 1j * self.im.data

    def __add__(self, other):
        other = _as_ctensor(other)
        return CTensor(self.re + other.re, self.im + other.im)

    def __sub__(self, other):
        other = _as_ctensor(other)
        return CTensor(self.re - other.re, self.im - other.im)

    __radd__ = __add__

    def __rsub__(self, other):
        return _as_ctensor(other) - self

    def __neg__(self):
        return CTensor(-self.re, -self.im)

    def __mul__(self, other):
        if isinstance(other, (Tensor, float, int)) or (
            isinstance(other, np.ndarray) and not np.iscomplexobj(other)
        ):
            return CTensor(self.re * other, self.im * other)
        other = _as_ctensor(other)
        return CTensor(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    __rmul__ = __mul__

    def __getitem__(self, index):
        return CTensor(self.re[index], self.im[index])

    def conj(self):
        return CTensor(self.re, -self.im)

    def abs2(self):
        return square(self.re) + square(self.im)

    def abs(self):
        return sqrt(self.abs2())

    def angle(self):
        return atan2(self.im, self.re)

    def sum(self, axis=None, keepdims=False):
        return CTensor(self.re.sum(axis, keepdims), self.im.sum(axis, keepdims))

    def mean(self, axis=None, keepdims=False):
        return CTensor(self.re.mean(axis, keepdims), self.im.mean(axis, keepdims))

    def reshape(self, *shape):
        return CTensor(self.re.reshape(*shape), self.im.reshape(*shape))

    def convolve(self, h):
        return CTensor(convolve(self.re, h), convolve(self.im, h))

    def upsample(self, m):
        return CTensor(upsample(self.re, m), upsample(self.im, m))

    def downsample(self, m, offset=0, count=None):
        return CTensor(downsample(self.re, m, offset, count), downsample(self.im, m, offset, count))


def _as_ctensor(z):
    return z if isinstance(z, CTensor) else CTensor(z)


def cconcatenate(parts, axis=0):
    parts = [_as_ctensor(p) for p in parts]
    return CTensor(
        concatenate([p.re for p in parts], axis),
        concatenate([p.im for p in parts], axis),
    )


def phasor(theta):
    """``exp(j*theta)`` for a real tensor ``theta``."""
    return CTensor(cos(theta), sin(theta))
