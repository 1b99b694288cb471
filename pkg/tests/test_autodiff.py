import numpy as np
import pytest

from rcot import autodiff as ad
from rcot.core import StateError

from conftest import assert_grad_close, central_diff


def check_op(fn, *shapes, rng, positive=False):
    """Compare backward() against central differences for ``sum(w * fn(*inputs))``."""
    inputs = [rng.normal(size=s) for s in shapes]
    if positive:
        inputs = [np.abs(a) + 0.5 for a in inputs]
    weight = rng.normal(size=np.shape(fn(*[ad.Var(a) for a in inputs]).value))
    grads = {}
    leaves = [ad.Var(a, sink=lambda g, k=k: grads.__setitem__(k, g)) for k, a in enumerate(inputs)]
    ad.backward(ad.vsum(ad.mul(fn(*leaves), weight)))

    def value():
        with ad.no_grad():
            return float(np.sum(fn(*[ad.Var(a) for a in inputs]).value * weight))

    for k, a in enumerate(inputs):
        assert_grad_close(grads.get(k, np.zeros_like(a)), central_diff(value, a, 1e-6))


OPS = {
    "add_broadcast": (lambda a, b: a + b, [(3, 4), (1, 4)]),
    "sub": (lambda a, b: a - b, [(2, 3), (2, 3)]),
    "mul_broadcast": (lambda a, b: a * b, [(2, 3, 4), (3, 1)]),
    "square": (ad.square, [(5,)]),
    "matmul": (ad.matmul, [(3, 4), (4, 2)]),
    "transpose": (lambda a: ad.transpose(a) @ a, [(3, 2)]),
    "sum_axis": (lambda a: ad.vsum(a, axis=(1, 2)), [(2, 3, 4)]),
    "mean": (lambda a: ad.vmean(a, axis=0), [(4, 3)]),
    "reshape": (lambda a: ad.reshape(a, (6, 2)) * 2.0, [(3, 4)]),
    "getitem": (lambda a: ad.getitem(a, np.array([0, 2, 2])), [(4, 3)]),
    "getitem_slice": (lambda a: ad.getitem(a, (slice(None), slice(1, 3))), [(2, 5)]),
    "stack": (lambda a, b: ad.stack([a, b, a]), [(2, 2), (2, 2)]),
    "silu": (ad.silu, [(4, 5)]),
    "tanh": (ad.tanh, [(4, 5)]),
    "relu": (ad.relu, [(4, 5)]),
    "leaky_relu": (ad.leaky_relu, [(4, 5)]),
    "norm": (lambda a: ad.norm(a, axis=(1, 2)), [(3, 2, 4)]),
    "sqrt_abs": (ad.sqrt_abs, [(6,)]),
    "fft_amplitude": (ad.fft_amplitude, [(2, 1, 4, 5)]),
    "conv_s1": (lambda x, w, b: ad.conv2d(x, w, b), [(2, 3, 5, 6), (4, 3, 3, 3), (4,)]),
    "conv_s2_odd": (lambda x, w, b: ad.conv2d(x, w, b, 2), [(2, 2, 5, 7), (3, 2, 3, 3), (3,)]),
    "conv_s2_even": (lambda x, w: ad.conv2d(x, w, None, 2), [(1, 2, 6, 6), (2, 2, 3, 3)]),
    "upsample": (lambda x: ad.upsample2x(x), [(1, 2, 3, 3)]),
    "upsample_crop": (lambda x: ad.upsample2x(x, (5, 6)), [(1, 2, 3, 3)]),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients(name):
    fn, shapes = OPS[name]
    for seed in range(3):
        check_op(fn, *shapes, rng=np.random.default_rng(seed),
                 positive=name in ("sqrt_abs", "norm"))


def conv_loop(x, w, b, stride):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    oh, ow = (h - 1) // stride + 1, (wd - 1) // stride + 1
    out = np.zeros((n, o, oh, ow))
    for i in range(n):
        for q in range(o):
            for r in range(oh):
                for s in range(ow):
                    acc = 0.0 if b is None else b[q]
                    for ch in range(c):
                        for u in range(k):
                            for v in range(k):
                                acc += xp[i, ch, r * stride + u, s * stride + v] * w[q, ch, u, v]
                    out[i, q, r, s] = acc
    return out


@pytest.mark.parametrize("stride,shape", [(1, (2, 3, 5, 4)), (2, (1, 2, 7, 6)), (2, (1, 1, 4, 4))])
def test_conv_matches_scalar_loop(rng, stride, shape):
    x = rng.normal(size=shape)
    w = rng.normal(size=(3, shape[1], 3, 3))
    b = rng.normal(size=3)
    assert np.allclose(ad.conv2d(x, w, b, stride).value, conv_loop(x, w, b, stride), atol=1e-12)


def test_upsample_values():
    x = np.arange(4.0).reshape(1, 1, 2, 2)
    out = ad.upsample2x(x).value
    assert np.array_equal(out[0, 0], [[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]])


def test_norm_subgradient_at_zero():
    grads = {}
    a = ad.Var(np.zeros((2, 3)), sink=lambda g: grads.setdefault("a", g))
    ad.backward(ad.vsum(ad.norm(a, axis=1)))
    assert not grads["a"].any()


def test_backward_without_graph():
    with pytest.raises(StateError):
        ad.backward(ad.Var(np.array(1.0)))
    with pytest.raises(StateError):
        ad.backward(3.0)
    leaf = ad.Var(np.ones(3), sink=lambda g: None)
    with pytest.raises(StateError):
        ad.backward(leaf * 2.0)  # non-scalar loss


def test_no_grad_records_nothing():
    leaf = ad.Var(np.ones(2), sink=lambda g: None)
    with ad.no_grad():
        out = ad.vsum(leaf * 3.0)
    assert out.parents == () and out.grad_fn is None
    with pytest.raises(StateError):
        ad.backward(out)


def test_graph_released_after_backward():
    seen = []
    leaf = ad.Var(np.ones(2), sink=seen.append)
    loss = ad.vsum(leaf * 2.0)
    ad.backward(loss)
    assert len(seen) == 1
    with pytest.raises(StateError):
        ad.backward(loss)


def test_shared_subexpression_accumulates():
    grads = {}
    x = ad.Var(np.array([2.0]), sink=lambda g: grads.setdefault("x", g))
    y = x * x
    ad.backward(ad.vsum(y + y * x))
    # d/dx (x^2 + x^3) = 2x + 3x^2
    assert grads["x"][0] == pytest.approx(4.0 + 12.0)
