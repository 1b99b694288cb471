"""Two-pass residual-conditioned transport map.

    r0   = y - G(y)
    T(y) = G(y | fusion(E(r0)))

One generator is used for both passes. With ``trc=False`` the map is
the single unconditional pass ``T(y) = G(y)``, which is the "without
TRC" baseline of the ablation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .nets import (
    ParamStore, encoder_forward, encoder_spec, fusion_forward, fusion_spec,
    generator_forward, generator_spec, init_params,
)
from .core import DimensionError


@dataclass
class RcotMap:
    generator: ParamStore
    encoder: ParamStore
    fusion: ParamStore
    shape: tuple
    trc: bool = True
    # stop gradients through r0 into the first pass
    detach_residual: bool = False

    def __post_init__(self):
        self.shape = tuple(self.shape)
        if self.generator.spec.shape != self.shape:
            raise DimensionError("generator shape does not match map shape")
        if self.encoder.spec.shape != self.shape:
            raise DimensionError("encoder shape does not match map shape")
        if self.encoder.spec.out_width != self.fusion.spec.in_width:
            raise DimensionError("encoder output length does not match fusion input")
        if self.fusion.spec.cond_width != self.generator.spec.cond_width:
            raise DimensionError("fusion output length does not match generator condition")

    def stores(self):
        return {"generator": self.generator, "encoder": self.encoder, "fusion": self.fusion}

    def zero_grad(self):
        for s in self.stores().values():
            s.zero_grad()

    def copy(self):
        return RcotMap(self.generator.copy(), self.encoder.copy(), self.fusion.copy(),
                       self.shape, self.trc, self.detach_residual)

    def __call__(self, y):
        """Restored output as a plain array, without recording a graph."""
        with ad.no_grad():
            return apply(self, y).value


def build_map(shape, seed, gen_widths=None, enc_widths=None, activation="silu",
              trc=True, detach_residual=False):
    """Fresh map with deterministic initialization derived from ``seed``."""
    shape = tuple(shape)
    if gen_widths is None:
        gen_widths = (16, 32, 32) if len(shape) == 3 else (64, 64)
    if enc_widths is None:
        enc_widths = (16, 32) if len(shape) == 3 else (32, 16)
    g = generator_spec(shape, gen_widths, activation)
    e = encoder_spec(shape, enc_widths, activation)
    f = fusion_spec(shape, e.out_width, g.cond_width)
    seeds = np.random.SeedSequence(seed).generate_state(3)
    return RcotMap(init_params(g, int(seeds[0])), init_params(e, int(seeds[1])),
                   init_params(f, int(seeds[2])), shape, trc, detach_residual)


def _check(m, y):
    shape = np.shape(ad.value_of(y))
    if tuple(shape) != m.shape and tuple(shape[1:]) != m.shape:
        raise DimensionError(f"input shape {tuple(shape)} does not match map shape {m.shape}")


def first_pass(m, y):
    """Unconditional pass: returns ``(G(y), y - G(y))``."""
    _check(m, y)
    inter = generator_forward(m.generator, y)
    return inter, ad.lift(y) - inter


def apply(m, y):
    """Full transport ``T(y)``; differentiable through both passes."""
    _check(m, y)
    if not m.trc:
        return generator_forward(m.generator, y)
    _, r0 = first_pass(m, y)
    if m.detach_residual:
        r0 = ad.Var(r0.value)
    cond = fusion_forward(m.fusion, encoder_forward(m.encoder, r0))
    return generator_forward(m.generator, y, cond)


def transport_residual(m, y):
    """``y - T(y)``, the residual fed to the Fourier penalty."""
    return ad.lift(y) - apply(m, y)
