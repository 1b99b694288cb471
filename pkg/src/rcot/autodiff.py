"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Var` wraps an array and, while recording is enabled, remembers
its parents and a closure mapping the upstream gradient to gradients for
each parent. :func:`backward` walks the recorded graph once in reverse
topological order, then releases it.

Leaves created by :meth:`rcot.nets.ParamStore.var` carry a *sink* so that
their gradient is accumulated into the owning store.
"""

from __future__ import annotations

import contextlib

import numpy as np

from .core import StateError

_recording = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording a graph."""
    global _recording
    prev, _recording = _recording, False
    try:
        yield
    finally:
        _recording = prev


class Var:
    __slots__ = ("value", "parents", "grad_fn", "sink")

    def __init__(self, value, parents=(), grad_fn=None, sink=None):
        self.value = value
        self.parents = parents
        self.grad_fn = grad_fn
        self.sink = sink

    @property
    def shape(self):
        return np.shape(self.value)

    @property
    def ndim(self):
        return np.ndim(self.value)

    def __repr__(self):
        return f"Var(shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, k):
        return mul(self, 1.0 / k)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return vsum(self, axis)

    def mean(self, axis=None):
        return vmean(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


def lift(x):
    return x if isinstance(x, Var) else Var(np.asarray(x, dtype=np.float64))


def value_of(x):
    return x.value if isinstance(x, Var) else x


def _make(value, parents, grad_fn):
    if not _recording:
        return Var(value)
    return Var(value, parents, grad_fn)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def backward(loss):
    """Propagate d(loss)/d(.) to every leaf with a sink, then free the graph."""
    if not isinstance(loss, Var) or (not loss.parents and loss.sink is None):
        raise StateError("backward() called without a recorded forward pass")
    if np.size(loss.value) != 1:
        raise StateError(f"backward() needs a scalar loss, got shape {loss.shape}")
    order, seen = [], set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    grads = {id(loss): np.ones_like(np.asarray(loss.value, dtype=np.float64))}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.sink is not None:
            node.sink(g)
        if node.grad_fn is not None:
            for p, gp in zip(node.parents, node.grad_fn(g)):
                if gp is None:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + gp
                else:
                    grads[key] = gp
        node.parents = ()
        node.grad_fn = None


def add(a, b):
    a, b = lift(a), lift(b)
    sa, sb = np.shape(a.value), np.shape(b.value)
    return _make(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def neg(a):
    a = lift(a)
    return _make(-a.value, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = lift(a), lift(b)
    av, bv = a.value, b.value
    sa, sb = np.shape(av), np.shape(bv)
    return _make(av * bv, (a, b),
                 lambda g: (_unbroadcast(g * bv, sa), _unbroadcast(g * av, sb)))


def square(a):
    a = lift(a)
    av = a.value
    return _make(av * av, (a,), lambda g: (2.0 * av * g,))


def matmul(a, b):
    a, b = lift(a), lift(b)
    av, bv = a.value, b.value
    return _make(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def transpose(a):
    a = lift(a)
    return _make(a.value.T, (a,), lambda g: (g.T,))


def vsum(a, axis=None):
    a = lift(a)
    shape = np.shape(a.value)
    out = np.sum(a.value, axis=axis)

    def grad_fn(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(out, (a,), grad_fn)


def vmean(a, axis=None):
    shape = np.shape(value_of(a))
    axes = range(len(shape)) if axis is None else np.atleast_1d(axis)
    count = int(np.prod([shape[ax] for ax in axes]))
    return mul(vsum(a, axis), 1.0 / count)


def reshape(a, shape):
    a = lift(a)
    old = np.shape(a.value)
    return _make(np.reshape(a.value, shape), (a,), lambda g: (np.reshape(g, old),))


def getitem(a, idx):
    a = lift(a)
    shape = np.shape(a.value)

    def grad_fn(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _make(a.value[idx], (a,), grad_fn)


def stack(items):
    items = [lift(x) for x in items]
    out = np.stack([x.value for x in items])
    return _make(out, tuple(items), lambda g: tuple(g[i] for i in range(len(items))))


# -- activations -------------------------------------------------------------

def silu(a):
    a = lift(a)
    x = a.value
    with np.errstate(over="ignore"):
        s = 1.0 / (1.0 + np.exp(-x))
    return _make(x * s, (a,), lambda g: (g * (s * (1.0 + x * (1.0 - s))),))


def tanh(a):
    a = lift(a)
    t = np.tanh(a.value)
    return _make(t, (a,), lambda g: (g * (1.0 - t * t),))


def relu(a):
    a = lift(a)
    mask = a.value > 0
    return _make(a.value * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a, slope=0.2):
    a = lift(a)
    factor = np.where(a.value > 0, 1.0, slope)
    return _make(a.value * factor, (a,), lambda g: (g * factor,))


ACTIVATIONS = {"silu": silu, "tanh": tanh, "relu": relu, "leaky_relu": leaky_relu}


# -- reductions with kinks ---------------------------------------------------

def norm(a, axis=None):
    """Euclidean norm; the subgradient at zero is taken as zero."""
    a = lift(a)
    x = a.value
    n = np.sqrt(np.sum(x * x, axis=axis))

    def grad_fn(g):
        safe = np.where(n > 0, n, 1.0)
        scale = np.where(n > 0, g / safe, 0.0)
        if axis is not None:
            scale = np.expand_dims(scale, axis)
        return (x * scale,)

    return _make(n, (a,), grad_fn)


def sqrt_abs(a):
    """Elementwise ``sqrt(a)`` for ``a >= 0`` with zero gradient at zero."""
    a = lift(a)
    r = np.sqrt(a.value)
    return _make(r, (a,), lambda g: (np.where(r > 0, 0.5 * g / np.where(r > 0, r, 1.0), 0.0),))


def fft_amplitude(a):
    """``|DFT(a)|`` over the last two axes (unnormalized forward DFT)."""
    a = lift(a)
    z = np.fft.fft2(a.value, axes=(-2, -1))
    amp = np.abs(z)
    h, w = amp.shape[-2:]

    def grad_fn(g):
        phase = np.where(amp > 0, z / np.where(amp > 0, amp, 1.0), 0.0)
        return ((h * w) * np.fft.ifft2(g * phase, axes=(-2, -1)).real,)

    return _make(amp, (a,), grad_fn)


# -- image layers ------------------------------------------------------------

def conv2d(x, w, b=None, stride=1):
    """Cross-correlation with 'same'-style zero padding ``k // 2``.

    ``x`` is ``(N, C, H, W)``, ``w`` is ``(O, C, k, k)``. With ``stride=2``
    the output is ``ceil(H/2) x ceil(W/2)``.
    """
    x, w = lift(x), lift(w)
    xv, wv = x.value, w.value
    n, c, h, wd = xv.shape
    o, _, k, _ = wv.shape
    p = k // 2
    oh, ow = (h - 1) // stride + 1, (wd - 1) // stride + 1
    # channel-last padded copy; im2col columns ordered (ki, kj, c)
    xp = np.zeros((n, h + 2 * p, wd + 2 * p, c))
    xp[:, p:p + h, p:p + wd] = xv.transpose(0, 2, 3, 1)
    cols = np.empty((n, oh, ow, k, k, c))
    for i in range(k):
        for j in range(k):
            cols[:, :, :, i, j] = xp[:, i:i + stride * oh:stride, j:j + stride * ow:stride]
    cols = cols.reshape(n * oh * ow, k * k * c)
    wmat = np.ascontiguousarray(wv.transpose(0, 2, 3, 1).reshape(o, k * k * c))
    out = cols @ wmat.T
    parents = (x, w)
    if b is not None:
        b = lift(b)
        out += b.value
        parents = (x, w, b)
    out = np.ascontiguousarray(out.reshape(n, oh, ow, o).transpose(0, 3, 1, 2))

    def grad_fn(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * oh * ow, o)
        gw = (g2.T @ cols).reshape(o, k, k, c).transpose(0, 3, 1, 2)
        dcols = (g2 @ wmat).reshape(n, oh, ow, k, k, c)
        gxp = np.zeros(xp.shape)
        for i in range(k):
            for j in range(k):
                gxp[:, i:i + stride * oh:stride, j:j + stride * ow:stride] += dcols[:, :, :, i, j]
        gx = gxp[:, p:p + h, p:p + wd].transpose(0, 3, 1, 2)
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return _make(out, parents, grad_fn)


def upsample2x(x, size=None):
    """Nearest-neighbour x2 upsampling, cropped to ``size=(H, W)`` if given."""
    x = lift(x)
    xv = x.value
    out = xv.repeat(2, axis=2).repeat(2, axis=3)
    if size is not None:
        out = out[:, :, :size[0], :size[1]]
    n, c, h, w = xv.shape

    def grad_fn(g):
        full = np.zeros((n, c, 2 * h, 2 * w))
        full[:, :, :g.shape[2], :g.shape[3]] = g
        return (full.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return _make(np.ascontiguousarray(out), (x,), grad_fn)
