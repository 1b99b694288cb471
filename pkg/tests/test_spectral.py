import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rcot.core import NumericalError, UsageError, l2_norm
from rcot.spectral import amplitude, dft2, freq_penalty, idft2


def direct_dft2(a):
    """O((HW)^2) double sum, independent of numpy.fft."""
    c, h, w = a.shape
    out = np.zeros((c, h, w), dtype=complex)
    ks = np.arange(h)[:, None]
    ls = np.arange(w)[None, :]
    for u in range(h):
        for v in range(w):
            phase = np.exp(-2j * np.pi * (u * ks / h + v * ls / w))
            out[:, u, v] = np.sum(a * phase, axis=(1, 2))
    return out


def test_dft_trivial_cases():
    assert not dft2(np.zeros((1, 3, 3))).any()
    assert dft2(np.array([[[0.7]]]))[0, 0, 0] == 0.7 + 0j
    assert np.allclose(dft2(np.array([[[1.0, -1.0]]])), [[[0.0, 2.0]]], atol=1e-15)


def test_dft_matches_direct_sum(rng):
    for shape in [(1, 4, 4), (2, 3, 5), (1, 6, 2)]:
        a = rng.normal(size=shape)
        assert np.allclose(dft2(a), direct_dft2(a), atol=1e-10)


def test_idft_cases():
    assert not idft2(np.zeros((1, 2, 2), dtype=complex)).any()
    assert np.allclose(idft2(np.array([[[0.0, 2.0]]], dtype=complex)), [[[1.0, -1.0]]], atol=1e-15)


def test_idft_rejects_non_hermitian_spectrum():
    s = np.zeros((1, 4, 4), dtype=complex)
    s[0, 1, 0] = 1.0
    with pytest.raises(NumericalError):
        idft2(s)


def test_roundtrip_and_parseval_on_100_tensors(rng):
    for _ in range(100):
        shape = (int(rng.integers(1, 4)), int(rng.integers(1, 17)), int(rng.integers(1, 17)))
        a = rng.normal(size=shape) * rng.uniform(0.1, 10)
        s = dft2(a)
        assert np.max(np.abs(idft2(s) - a)) <= 1e-10
        energy = np.sum(a * a)
        spec_energy = np.sum(np.abs(s) ** 2) / (shape[1] * shape[2])
        assert abs(energy - spec_energy) <= 1e-9 * energy
        hw = shape[1] * shape[2]
        assert freq_penalty(a, "l2") == pytest.approx(np.sqrt(hw) * l2_norm(a), rel=1e-9)


def test_penalty_examples():
    z = np.zeros((1, 3, 3))
    for kind in ("l1", "l2", "l0.5"):
        assert freq_penalty(z, kind) == 0.0
    r = np.array([[[1.0, -1.0]]])
    assert freq_penalty(r, "l1") == pytest.approx(2.0)
    assert freq_penalty(r, "l2") == pytest.approx(2.0)
    assert freq_penalty(r, "l0.5") == pytest.approx(np.sqrt(2.0))
    assert freq_penalty(r, "none") == 0.0


def test_constant_residual_single_bin():
    r = np.stack([np.full((4, 5), 0.3), np.full((4, 5), -0.2)])
    # one nonzero bin per channel with amplitude H*W*|mean|
    assert freq_penalty(r, "l1") == pytest.approx(20 * 0.3 + 20 * 0.2, rel=1e-12)
    assert freq_penalty(r[:1], "l2") == pytest.approx(20 * 0.3, rel=1e-12)
    assert freq_penalty(r[:1], "l1") == pytest.approx(freq_penalty(r[:1], "l2"), rel=1e-12)


def test_unknown_penalty_kind():
    with pytest.raises(UsageError):
        freq_penalty(np.zeros((1, 2, 2)), "l3")


def test_amplitude_is_modulus(rng):
    a = rng.normal(size=(2, 4, 4))
    assert np.allclose(amplitude(a), np.abs(direct_dft2(a)), atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (1, 4, 6), elements=st.floats(-5, 5)),
       st.floats(-4, 4), st.sampled_from(["l1", "l2", "l0.5"]))
def test_penalty_homogeneity(r, alpha, kind):
    scale = abs(alpha) if kind != "l0.5" else np.sqrt(abs(alpha))
    assert freq_penalty(alpha * r, kind) == pytest.approx(scale * freq_penalty(r, kind),
                                                          rel=1e-9, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (2, 3, 5), elements=st.floats(-5, 5)))
def test_penalty_nonnegative_and_zero_iff_zero(r):
    for kind in ("l1", "l2"):
        p = freq_penalty(r, kind)
        assert p > 0 if r.any() else p == 0
