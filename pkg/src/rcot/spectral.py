"""2-D DFT and Fourier-domain residual penalties.

Convention: unnormalized forward transform, ``1/(H*W)`` on the inverse
(numpy's default). Under it Parseval reads
``sum |a|^2 == sum |DFT(a)|^2 / (H*W)`` per channel.
"""

from __future__ import annotations

import numpy as np

from .core import NumericalError, UsageError

PENALTY_KINDS = ("none", "l1", "l2", "l0.5")


def check_penalty_kind(kind):
    kind = str(kind).lower()
    if kind not in PENALTY_KINDS:
        raise UsageError(f"unknown penalty kind {kind!r}; expected one of {PENALTY_KINDS}")
    return kind


def dft2(a):
    """Per-channel 2-D DFT over the last two axes."""
    return np.fft.fft2(np.asarray(a, dtype=np.float64), axes=(-2, -1))


def idft2(s, tol=1e-10):
    """Inverse of :func:`dft2`; raises if the result is not real to ``tol``."""
    out = np.fft.ifft2(np.asarray(s, dtype=np.complex128), axes=(-2, -1))
    residue = float(np.max(np.abs(out.imag))) if out.size else 0.0
    scale = max(1.0, float(np.max(np.abs(out.real)))) if out.size else 1.0
    if residue > tol * scale:
        raise NumericalError(f"imaginary residue {residue:.3e} exceeds {tol:.0e}")
    return out.real.copy()


def amplitude(r):
    """Complex modulus of every DFT bin of ``r``."""
    return np.abs(dft2(r))


def freq_penalty(r, kind="l1"):
    """Penalty ``g(r)`` on the amplitudes of the spectrum of ``r``.

    ``l1`` sums the amplitudes, ``l2`` takes their Euclidean norm and
    ``l0.5`` sums their square roots. ``none`` is identically zero.
    """
    kind = check_penalty_kind(kind)
    if kind == "none":
        return 0.0
    amp = amplitude(r)
    if kind == "l1":
        return float(amp.sum())
    if kind == "l2":
        # scale first so tiny residuals do not underflow when squared
        top = amp.max(initial=0.0)
        if top == 0.0:
            return 0.0
        return float(top * np.sqrt(np.sum((amp / top) ** 2)))
    return float(np.sum(np.sqrt(amp)))
