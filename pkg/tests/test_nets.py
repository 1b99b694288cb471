import numpy as np
import pytest

from rcot import autodiff as ad
from rcot.core import DimensionError, StateError, UsageError
from rcot.nets import (
    NetSpec, ParamStore, backward, encoder_forward, encoder_spec, fusion_forward, fusion_spec,
    generator_forward, generator_spec, init_params, potential_forward, potential_spec,
)

from conftest import assert_grad_close, central_diff
from test_autodiff import conv_loop

IMG = (2, 8, 8)
SPECS = {
    "gen_conv": generator_spec(IMG, (3, 4, 5)),
    "enc_conv": encoder_spec(IMG, (3, 4)),
    "pot_conv": potential_spec(IMG, (3, 4)),
    "gen_mlp": generator_spec((3,), (5, 4)),
    "enc_mlp": encoder_spec((3,), (4, 3)),
    "pot_mlp": potential_spec((3,), (5, 4)),
}


def silu(z):
    return z / (1.0 + np.exp(-z))


# -- independent numpy re-implementations, one sample at a time ---------------

def ref_conv(x, p, name, stride=1):
    return conv_loop(x[None], p[f"{name}.w"], p[f"{name}.b"], stride)[0]


def ref_up(h, size):
    return h.repeat(2, axis=1).repeat(2, axis=2)[:, :size[0], :size[1]]


def ref_generator(p, spec, y, cond=None):
    if spec.is_conv:
        c1, c2, c3 = spec.widths
        sl = np.split(cond, np.cumsum([c1, c2, c3, c2])) if cond is not None else [0] * 5
        col = [np.reshape(s, (-1, 1, 1)) if cond is not None else 0 for s in sl]
        h0 = silu(ref_conv(y, p, "head") + col[0])
        h1 = silu(ref_conv(h0, p, "down1", 2) + col[1])
        h2 = silu(ref_conv(h1, p, "down2", 2) + col[2])
        u1 = silu(ref_conv(ref_up(h2, h1.shape[1:]), p, "up1") + col[3]) + h1
        u2 = silu(ref_conv(ref_up(u1, h0.shape[1:]), p, "up2") + col[4]) + h0
        return ref_conv(u2, p, "tail") + y * p["skip"][:, None, None]
    h = y
    start = 0
    for i, w in enumerate(spec.widths):
        z = p[f"fc{i}.w"] @ h + p[f"fc{i}.b"]
        if cond is not None:
            z = z + cond[start:start + w]
        h = silu(z)
        start += w
    return p["out.w"] @ h + p["out.b"] + y * p["skip"]


def ref_trunk(p, spec, x):
    h = x
    for i in range(len(spec.widths)):
        if spec.is_conv:
            h = silu(ref_conv(h, p, f"conv{i}", 2))
        else:
            h = silu(p[f"fc{i}.w"] @ h + p[f"fc{i}.b"])
    return h.mean(axis=(1, 2)) if spec.is_conv else h


def randomized(spec, seed):
    """Store with every entry (biases included) drawn at random."""
    p = init_params(spec, seed)
    r = np.random.default_rng(seed + 100)
    for k in p.values:
        p.values[k][...] = r.normal(scale=0.5, size=p.values[k].shape)
    return p


def sample(spec, rng, n=None):
    shape = spec.shape if n is None else (n,) + spec.shape
    return rng.uniform(0, 1, size=shape)


# -- init ---------------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(SPECS))
def test_init_determinism_and_biases(name):
    spec = SPECS[name]
    a, b, c = init_params(spec, 3), init_params(spec, 3), init_params(spec, 4)
    assert a.equals(b)
    assert not a.equals(c)
    for k, v in a.values.items():
        if k.endswith(".b"):
            assert not v.any()
        assert a.grads[k].shape == v.shape


def test_netspec_validation():
    with pytest.raises(UsageError):
        NetSpec("critic", (1,), (2,))
    with pytest.raises(UsageError):
        NetSpec("generator", (1, 4, 4), (2, 3))
    with pytest.raises(UsageError):
        NetSpec("encoder", (1, 4), (2,))
    with pytest.raises(UsageError):
        NetSpec("encoder", (1, 4, 4), (2,), activation="gelu")
    spec = SPECS["gen_conv"]
    assert NetSpec.from_dict(spec.to_dict()) == spec


# -- forward oracles ----------------------------------------------------------

@pytest.mark.parametrize("kind", ["conv", "mlp"])
def test_generator_matches_reference(rng, kind):
    spec = SPECS[f"gen_{kind}"]
    p = randomized(spec, 1)
    y = sample(spec, rng)
    cond = rng.normal(size=spec.cond_width)
    assert np.allclose(generator_forward(p, y).value, ref_generator(p.values, spec, y), atol=1e-10)
    assert np.allclose(generator_forward(p, y, cond).value, ref_generator(p.values, spec, y, cond),
                       atol=1e-10)


@pytest.mark.parametrize("kind", ["conv", "mlp"])
def test_encoder_and_potential_match_reference(rng, kind):
    enc, pot = SPECS[f"enc_{kind}"], SPECS[f"pot_{kind}"]
    pe, pp = randomized(enc, 2), randomized(pot, 3)
    x = sample(enc, rng)
    assert np.allclose(encoder_forward(pe, x).value, ref_trunk(pe.values, enc, x), atol=1e-10)
    want = pp["out.w"] @ ref_trunk(pp.values, pot, x) + pp["out.b"]
    got = potential_forward(pp, x).value
    assert np.shape(got) == ()
    assert got == pytest.approx(float(want[0]), abs=1e-10)


def test_batched_forward_equals_per_sample(rng):
    spec = SPECS["pot_conv"]
    p = randomized(spec, 5)
    xs = sample(spec, rng, 3)
    batch = potential_forward(p, xs).value
    assert batch.shape == (3,)
    for i in range(3):
        assert batch[i] == pytest.approx(float(potential_forward(p, xs[i]).value), abs=1e-12)


@pytest.mark.parametrize("name", sorted(SPECS))
def test_zero_network(rng, name):
    spec = SPECS[name]
    p = init_params(spec, 0).zeros_like()
    x = sample(spec, rng)
    if spec.kind == "generator":
        out = generator_forward(p, x).value
        assert out.shape == spec.shape and not out.any()
    elif spec.kind == "encoder":
        assert not encoder_forward(p, x).value.any()
    else:
        assert potential_forward(p, x).value == 0.0


@pytest.mark.parametrize("kind", ["conv", "mlp"])
def test_condition_neutrality(rng, kind):
    spec = SPECS[f"gen_{kind}"]
    p = randomized(spec, 7)
    y = sample(spec, rng, 2)
    a = generator_forward(p, y).value
    b = generator_forward(p, y, np.zeros(spec.cond_width)).value
    assert np.array_equal(a, b)
    fus = init_params(fusion_spec(spec.shape, 4, spec.cond_width), 1)
    assert not fusion_forward(fus, np.zeros((2, 4))).value.any()


def test_dimension_errors(rng):
    g = randomized(SPECS["gen_conv"], 0)
    with pytest.raises(DimensionError):
        generator_forward(g, np.zeros((1, 8, 8)))
    with pytest.raises(DimensionError):
        generator_forward(g, np.zeros(IMG), np.zeros(3))
    with pytest.raises(DimensionError):
        encoder_forward(randomized(SPECS["enc_conv"], 0), np.zeros((2, 4, 4)))
    with pytest.raises(DimensionError):
        potential_forward(randomized(SPECS["pot_mlp"], 0), np.zeros(4))
    fus = init_params(fusion_spec(IMG, 4, 6), 0)
    with pytest.raises(DimensionError):
        fusion_forward(fus, np.zeros(5))


def test_determinism_of_outputs_and_grads(rng):
    spec = SPECS["gen_conv"]
    p = randomized(spec, 2)
    y = sample(spec, rng, 2)
    outs, grads = [], []
    for _ in range(2):
        p.zero_grad()
        out = generator_forward(p, y)
        backward(ad.vsum(ad.square(out)))
        outs.append(out.value.copy())
        grads.append({k: v.copy() for k, v in p.grads.items()})
    assert np.array_equal(outs[0], outs[1])
    assert all(np.array_equal(grads[0][k], grads[1][k]) for k in grads[0])


# -- gradients ----------------------------------------------------------------

def test_constant_loss_has_zero_gradients(rng):
    spec = SPECS["pot_conv"]
    p = randomized(spec, 0)
    out = potential_forward(p, sample(spec, rng, 2))
    backward(ad.vsum(out * 0.0))
    assert all(not g.any() for g in p.grads.values())


def test_linear_layer_gradient_is_input():
    spec = potential_spec((3,), (2,), activation="relu")
    p = init_params(spec, 0)
    u = np.array([0.3, -1.2, 2.0])
    loss = ad.vsum(ad.matmul(ad.lift(u[None]), ad.transpose(p.var("fc0.w"))))
    backward(loss)
    assert np.allclose(p.grads["fc0.w"], np.tile(u, (2, 1)))


def test_backward_without_forward():
    with pytest.raises(StateError):
        backward(ad.Var(np.array(0.0)))


def _loss_for(spec, p, inputs, extra):
    if spec.kind == "generator":
        out = generator_forward(p, inputs, extra)
    elif spec.kind == "encoder":
        out = encoder_forward(p, inputs)
    else:
        out = potential_forward(p, inputs)
    return ad.vsum(ad.mul(ad.tanh(out), 1.0))


@pytest.mark.parametrize("name", sorted(SPECS))
@pytest.mark.parametrize("seed", range(5))
def test_parameter_gradients_match_finite_differences(name, seed):
    spec = SPECS[name]
    r = np.random.default_rng(seed)
    p = randomized(spec, seed)
    x = sample(spec, r, 2)
    cond = r.normal(size=(2, spec.cond_width)) if spec.kind == "generator" else None
    p.zero_grad()
    backward(_loss_for(spec, p, x, cond))

    def value():
        with ad.no_grad():
            return float(_loss_for(spec, p, x, cond).value)

    for k in p.values:
        # truncation error scales with the tensor's largest entries, not the smallest
        floor = 1e-6 * max(1.0, np.abs(p.grads[k]).max())
        assert_grad_close(p.grads[k], central_diff(value, p.values[k], 1e-5), floor=floor)


def test_paramstore_copy_is_deep():
    p = init_params(SPECS["pot_mlp"], 0)
    q = p.copy()
    q.values["out.b"] += 1.0
    assert not p.equals(q)
    assert p.num_params() == q.num_params() > 0
    assert isinstance(p.zeros_like(), ParamStore)
