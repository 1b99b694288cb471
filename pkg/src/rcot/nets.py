"""Small differentiable networks: generator, residual encoder, potential.

Every network is a plain function of a :class:`ParamStore` and an input
batch. Image-shaped data ``(C, H, W)`` gets convolutional networks;
vector data ``(d,)`` gets MLPs, which is what the point-cloud transport
checks use.

Architectures (``widths`` in parentheses):

* generator, conv ``(c1, c2, c3)``: head conv, two stride-2 downsampling
  convs, two nearest-upsample + conv stages with additive skips, a tail
  conv, plus a per-channel learned gain on the input. The condition
  vector (length ``2 c1 + 2 c2 + c3``) is split across the five hidden
  stages and added per channel before each activation.
* generator, MLP ``(h1, ..., hk)``: hidden layers; the condition (length
  ``sum(widths)``) is added before every hidden activation.
* encoder: stride-2 convs (or dense layers), then global average pooling;
  the embedding length is ``widths[-1]``.
* potential: stride-2 convs (or dense layers), global pooling and a final
  linear layer to one scalar per sample.
* fusion: a bias-free linear projection from embedding to condition, so a
  zero embedding yields a zero condition.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .core import DimensionError, UsageError

NET_KINDS = ("generator", "encoder", "potential", "fusion")


@dataclass(frozen=True)
class NetSpec:
    kind: str
    shape: tuple
    widths: tuple
    activation: str = "silu"
    cond_width: int = 0
    # fusion only: embedding length feeding the projection
    in_width: int = 0

    def __post_init__(self):
        if self.kind not in NET_KINDS:
            raise UsageError(f"unknown network kind {self.kind!r}")
        if self.activation not in ad.ACTIVATIONS:
            raise UsageError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.shape) not in (1, 3):
            raise UsageError(f"data shape must be (d,) or (C, H, W), got {self.shape}")
        if self.kind == "generator" and self.is_conv and len(self.widths) != 3:
            raise UsageError("conv generator takes exactly three widths (c1, c2, c3)")
        if not self.widths and self.kind != "fusion":
            raise UsageError("widths must be non-empty")

    @property
    def is_conv(self):
        return len(self.shape) == 3

    @property
    def out_width(self):
        """Embedding length (encoder) or condition length (generator)."""
        if self.kind == "encoder":
            return self.widths[-1]
        if self.kind == "generator":
            return self.cond_width
        if self.kind == "fusion":
            return self.cond_width
        return 1

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["shape"] = tuple(d["shape"])
        d["widths"] = tuple(d["widths"])
        return cls(**d)


def generator_spec(shape, widths=(16, 32, 32), activation="silu"):
    widths = tuple(widths)
    if len(shape) == 3 and len(widths) == 3:
        cond = 2 * widths[0] + 2 * widths[1] + widths[2]
    else:
        cond = sum(widths)
    return NetSpec("generator", tuple(shape), widths, activation, cond_width=cond)


def encoder_spec(shape, widths=(16, 32), activation="silu"):
    return NetSpec("encoder", tuple(shape), tuple(widths), activation)


def potential_spec(shape, widths=(16, 32), activation="silu"):
    return NetSpec("potential", tuple(shape), tuple(widths), activation)


def fusion_spec(shape, embed_width, cond_width):
    return NetSpec("fusion", tuple(shape), (), cond_width=cond_width, in_width=embed_width)


class ParamStore:
    """Named float64 parameter arrays with matching gradient accumulators."""

    def __init__(self, values, spec=None):
        self.values = {k: np.array(v, dtype=np.float64) for k, v in values.items()}
        self.grads = {k: np.zeros_like(v) for k, v in self.values.items()}
        self.spec = spec

    def __getitem__(self, name):
        return self.values[name]

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def var(self, name):
        value = self.values[name]
        if not ad._recording:
            return ad.Var(value)
        grads = self.grads

        def sink(g, name=name):
            grads[name] += g

        return ad.Var(value, sink=sink)

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def copy(self):
        return ParamStore({k: v.copy() for k, v in self.values.items()}, self.spec)

    def zeros_like(self):
        return ParamStore({k: np.zeros_like(v) for k, v in self.values.items()}, self.spec)

    def equals(self, other):
        """Bitwise equality of names, shapes and values."""
        if set(self.values) != set(other.values):
            return False
        return all(
            self.values[k].shape == other.values[k].shape
            and self.values[k].tobytes() == other.values[k].tobytes()
            for k in self.values
        )

    def num_params(self):
        return int(sum(v.size for v in self.values.values()))


# -- initialization ----------------------------------------------------------

def _uniform(rng, shape, fan_in, gain=1.0):
    bound = gain * np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _conv(rng, values, name, cin, cout, gain=1.0, k=3):
    values[f"{name}.w"] = _uniform(rng, (cout, cin, k, k), cin * k * k, gain)
    values[f"{name}.b"] = np.zeros(cout)


def _dense(rng, values, name, nin, nout, gain=1.0, bias=True):
    values[f"{name}.w"] = _uniform(rng, (nout, nin), nin, gain)
    if bias:
        values[f"{name}.b"] = np.zeros(nout)


def init_params(spec, seed):
    """Deterministic LeCun-uniform weights, zero biases, unit input gains.

    The generator's last layer is scaled by 0.1 so that, together with
    the unit input gain, an untrained generator is close to the identity.
    """
    rng = np.random.default_rng(seed)
    v = {}
    c = spec.shape[0]
    w = spec.widths
    if spec.kind == "generator":
        if spec.is_conv:
            c1, c2, c3 = w
            _conv(rng, v, "head", c, c1)
            _conv(rng, v, "down1", c1, c2)
            _conv(rng, v, "down2", c2, c3)
            _conv(rng, v, "up1", c3, c2)
            _conv(rng, v, "up2", c2, c1)
            _conv(rng, v, "tail", c1, c, gain=0.1)
        else:
            prev = c
            for i, h in enumerate(w):
                _dense(rng, v, f"fc{i}", prev, h)
                prev = h
            _dense(rng, v, "out", prev, c, gain=0.1)
        v["skip"] = np.ones(c)
    elif spec.kind in ("encoder", "potential"):
        prev = c
        for i, h in enumerate(w):
            if spec.is_conv:
                _conv(rng, v, f"conv{i}", prev, h)
            else:
                _dense(rng, v, f"fc{i}", prev, h)
            prev = h
        if spec.kind == "potential":
            _dense(rng, v, "out", prev, 1)
    else:
        _dense(rng, v, "proj", spec.in_width, spec.cond_width, bias=False)
    return ParamStore(v, spec)


# -- forward passes ----------------------------------------------------------

def _batch(spec, x, name):
    """Return ``(batch Var, single)``; ``single`` if a lone sample was passed."""
    shape = ad.value_of(x).shape if isinstance(x, ad.Var) else np.shape(x)
    if tuple(shape) == spec.shape:
        return ad.reshape(ad.lift(x), (1,) + spec.shape), True
    if tuple(shape[1:]) != spec.shape:
        raise DimensionError(f"{name} has shape {tuple(shape)}, expected {spec.shape} or (N, *{spec.shape})")
    return ad.lift(x), False


def _unbatch(out, single):
    if single:
        return ad.reshape(out, out.shape[1:])
    return out


def _dense_fwd(params, name, h, bias=True):
    out = ad.matmul(h, ad.transpose(params.var(f"{name}.w")))
    if bias:
        out = out + params.var(f"{name}.b")
    return out


def _conv_fwd(params, name, h, stride=1):
    return ad.conv2d(h, params.var(f"{name}.w"), params.var(f"{name}.b"), stride)


def _channel_bias(vec, start, stop):
    return ad.reshape(ad.getitem(vec, (slice(None), slice(start, stop))), (-1, stop - start, 1, 1))


def generator_forward(params, y, condition=None):
    """G(y) or G(y | condition); ``condition`` has length ``spec.cond_width``."""
    spec = params.spec
    act = ad.ACTIVATIONS[spec.activation]
    yb, single = _batch(spec, y, "generator input")
    n = yb.shape[0]
    cond = None
    if condition is not None:
        cond = ad.lift(condition)
        if cond.ndim == 1:
            cond = ad.reshape(cond, (1, -1))
        if cond.shape[-1] != spec.cond_width or cond.shape[0] not in (1, n):
            raise DimensionError(
                f"condition has shape {cond.shape}, expected (*, {spec.cond_width})")
    skip = params.var("skip")

    def stage(pre, start, width):
        # condition enters as a per-channel bias before the nonlinearity
        if cond is not None:
            if pre.ndim == 4:
                pre = pre + _channel_bias(cond, start, start + width)
            else:
                pre = pre + ad.getitem(cond, (slice(None), slice(start, start + width)))
        return act(pre)

    if spec.is_conv:
        c1, c2, c3 = spec.widths
        h0 = stage(_conv_fwd(params, "head", yb), 0, c1)
        h1 = stage(_conv_fwd(params, "down1", h0, 2), c1, c2)
        h2 = stage(_conv_fwd(params, "down2", h1, 2), c1 + c2, c3)
        u1 = stage(_conv_fwd(params, "up1", ad.upsample2x(h2, h1.shape[2:])), c1 + c2 + c3, c2) + h1
        u2 = stage(_conv_fwd(params, "up2", ad.upsample2x(u1, h0.shape[2:])), c1 + 2 * c2 + c3, c1) + h0
        out = _conv_fwd(params, "tail", u2) + yb * ad.reshape(skip, (1, -1, 1, 1))
    else:
        hcur = yb
        start = 0
        for i, width in enumerate(spec.widths):
            hcur = stage(_dense_fwd(params, f"fc{i}", hcur), start, width)
            start += width
        out = _dense_fwd(params, "out", hcur) + yb * ad.reshape(skip, (1, -1))
    return _unbatch(out, single)


def _trunk(params, x):
    spec = params.spec
    act = ad.ACTIVATIONS[spec.activation]
    h = x
    for i in range(len(spec.widths)):
        if spec.is_conv:
            h = act(_conv_fwd(params, f"conv{i}", h, 2))
        else:
            h = act(_dense_fwd(params, f"fc{i}", h))
    if spec.is_conv:
        h = ad.vmean(h, axis=(2, 3))
    return h


def encoder_forward(params, r):
    """Residual embedding, shape ``(N, widths[-1])`` (or ``(widths[-1],)``)."""
    rb, single = _batch(params.spec, r, "encoder input")
    return _unbatch(_trunk(params, rb), single)


def potential_forward(params, x):
    """Scalar potential per sample, shape ``(N,)`` (or ``()`` for one sample)."""
    xb, single = _batch(params.spec, x, "potential input")
    out = ad.reshape(_dense_fwd(params, "out", _trunk(params, xb)), (-1,))
    return ad.reshape(out, ()) if single else out


def fusion_forward(params, embedding):
    """Linear, bias-free projection from embedding to generator condition."""
    e = ad.lift(embedding)
    if e.shape[-1] != params.spec.in_width:
        raise DimensionError(
            f"embedding length {e.shape[-1]} does not match fusion input {params.spec.in_width}")
    return ad.matmul(e, ad.transpose(params.var("proj.w")))


def backward(loss):
    """Accumulate d(loss)/d(param) into the gradient slots of every store used."""
    ad.backward(loss)
