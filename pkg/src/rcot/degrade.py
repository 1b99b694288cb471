"""Synthetic degradations, procedural clean images, and dataset assembly.

Degradation models (all deterministic given ``DegradationSpec.seed``):

* ``gaussian_noise``: ``y = x + eps``, ``eps ~ N(0, (sigma/255)^2)``.
* ``rain_streaks``: ``y = x + s``; ``s`` holds 1-pixel-wide straight
  segments at 70-110 degrees from horizontal with additive intensity
  0.2-0.5. ``streaks`` is the count per 64x64 area.
* ``haze``: ``y = t x + A (1 - t)`` with constant transmission ``t`` and
  airlight ``A``.
* ``down_up``: bicubic downscale by ``scale`` followed by bicubic upscale
  to the original size.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .core import UsageError, as_image

DEGRADATION_KINDS = ("gaussian_noise", "rain_streaks", "haze", "down_up")


@dataclass(frozen=True)
class DegradationSpec:
    kind: str = "gaussian_noise"
    sigma: float = 25.0           # on the 0-255 scale
    streaks: int = 20             # per 64x64 area
    angle_range: tuple = (70.0, 110.0)
    intensity_range: tuple = (0.2, 0.5)
    transmission: float = 0.6
    airlight: float = 0.9
    scale: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DEGRADATION_KINDS:
            raise UsageError(f"unknown degradation {self.kind!r}; expected one of {DEGRADATION_KINDS}")
        if self.sigma < 0:
            raise UsageError("sigma must be >= 0")
        if not 0 < self.transmission <= 1:
            raise UsageError("transmission must lie in (0, 1]")
        if not 0 <= self.airlight <= 1:
            raise UsageError("airlight must lie in [0, 1]")
        if self.scale not in (2, 3, 4):
            raise UsageError("scale factor must be 2, 3 or 4")
        if self.streaks < 0:
            raise UsageError("streak count must be >= 0")
        object.__setattr__(self, "angle_range", tuple(self.angle_range))
        object.__setattr__(self, "intensity_range", tuple(self.intensity_range))

    def to_dict(self):
        d = asdict(self)
        d["angle_range"] = list(self.angle_range)
        d["intensity_range"] = list(self.intensity_range)
        return d


# -- bicubic resampling ------------------------------------------------------

def _cubic(x, a=-0.5):
    x = np.abs(x)
    return np.where(
        x <= 1, (a + 2) * x ** 3 - (a + 3) * x ** 2 + 1,
        np.where(x < 2, a * x ** 3 - 5 * a * x ** 2 + 8 * a * x - 4 * a, 0.0))


def resize_matrix(n_in, n_out):
    """Bicubic (Keys, a=-0.5) resampling matrix, antialiased when shrinking,
    with symmetric boundary handling."""
    scale = n_out / n_in
    shrink = min(scale, 1.0)
    support = 2.0 / shrink
    out = np.zeros((n_out, n_in))
    for i in range(n_out):
        center = (i + 0.5) / scale - 0.5
        taps = np.arange(math.floor(center - support), math.ceil(center + support) + 1)
        w = _cubic((center - taps) * shrink) * shrink
        w /= w.sum()
        idx = np.where(taps < 0, -taps - 1, taps)
        idx = np.where(idx > n_in - 1, 2 * n_in - 1 - idx, idx)
        idx = np.clip(idx, 0, n_in - 1)
        np.add.at(out[i], idx, w)
    return out


def bicubic_resize(img, height, width):
    img = np.asarray(img, dtype=np.float64)
    rh = resize_matrix(img.shape[-2], height)
    rw = resize_matrix(img.shape[-1], width)
    return rh @ img @ rw.T


# -- degradations ------------------------------------------------------------

def _rng(spec):
    return np.random.default_rng(spec.seed)


def noise_field(shape, spec):
    """The exact noise array ``degrade`` adds for ``gaussian_noise``."""
    return _rng(spec).normal(0.0, spec.sigma / 255.0, size=shape)


def rain_layer(shape, spec):
    """The exact streak layer ``degrade`` adds for ``rain_streaks``."""
    c, h, w = shape
    rng = _rng(spec)
    count = int(round(spec.streaks * h * w / 64.0 ** 2))
    layer = np.zeros((h, w))
    for _ in range(count):
        angle = np.deg2rad(rng.uniform(*spec.angle_range))
        length = rng.uniform(0.25, 0.6) * h
        level = rng.uniform(*spec.intensity_range)
        r0, c0 = rng.uniform(0, h), rng.uniform(0, w)
        ts = np.linspace(0.0, length, int(2 * length) + 2)
        rows = np.floor(r0 + ts * np.sin(angle)).astype(int)
        cols = np.floor(c0 + ts * np.cos(angle)).astype(int)
        keep = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
        mask = np.zeros((h, w), dtype=bool)
        mask[rows[keep], cols[keep]] = True
        layer = np.where(mask, np.maximum(layer, level), layer)
    return np.broadcast_to(layer, (c, h, w)).copy()


def degrade(x, spec):
    """Apply the degradation described by ``spec`` to image ``x``."""
    x = as_image(x)
    if spec.kind == "gaussian_noise":
        return x + noise_field(x.shape, spec)
    if spec.kind == "rain_streaks":
        return x + rain_layer(x.shape, spec)
    if spec.kind == "haze":
        t = spec.transmission
        return t * x + spec.airlight * (1.0 - t)
    _, h, w = x.shape
    small = bicubic_resize(x, max(1, round(h / spec.scale)), max(1, round(w / spec.scale)))
    return bicubic_resize(small, h, w)


# -- clean sources -----------------------------------------------------------

def synth_image(size, channels=1, rng=None):
    """Procedural image in [0, 1]: a gradient background, random ellipses
    and rotated rectangles, a faint texture, and on half of the images a
    strong oriented grating."""
    rng = np.random.default_rng(rng)
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    base = rng.uniform(0.1, 0.9, size=channels)
    slope = rng.uniform(-0.3, 0.3, size=(channels, 2))
    img = base[:, None, None] + slope[:, 0, None, None] * (yy - 0.5) + slope[:, 1, None, None] * (xx - 0.5)
    for _ in range(rng.integers(3, 7)):
        cy, cx = rng.uniform(0, 1, 2)
        ry, rx = rng.uniform(0.08, 0.35, 2)
        theta = rng.uniform(0, np.pi)
        u = (yy - cy) * np.cos(theta) + (xx - cx) * np.sin(theta)
        v = -(yy - cy) * np.sin(theta) + (xx - cx) * np.cos(theta)
        if rng.random() < 0.5:
            mask = (u / ry) ** 2 + (v / rx) ** 2 <= 1
        else:
            mask = (np.abs(u) <= ry) & (np.abs(v) <= rx)
        color = rng.uniform(0.0, 1.0, size=channels)
        shade = rng.uniform(-0.15, 0.15) * u
        img = np.where(mask[None], color[:, None, None] + shade[None], img)
    freq = rng.uniform(4, 12)
    phase = rng.uniform(0, 2 * np.pi)
    img = img + 0.03 * np.sin(2 * np.pi * freq * (xx + 0.5 * yy) + phase)[None]
    img = np.clip(img, 0.0, 1.0)
    if rng.random() < 0.5:
        # image-wide oriented grating of random frequency, angle and strength
        freq = rng.uniform(3, 8)
        theta = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.2, 0.4)
        wave = np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
        img = img + amp * wave[None]
    return np.clip(img, 0.0, 1.0)


def load_image_dir(path, channels=1):
    """Read every PNG/JPEG in ``path`` as a float image in [0, 1]."""
    from PIL import Image

    out = []
    for f in sorted(Path(path).iterdir()):
        if f.suffix.lower() not in (".png", ".jpg", ".jpeg", ".bmp"):
            continue
        with Image.open(f) as im:
            arr = np.asarray(im.convert("L" if channels == 1 else "RGB"), dtype=np.float64) / 255.0
        out.append(arr[None] if arr.ndim == 2 else arr.transpose(2, 0, 1))
    if not out:
        raise UsageError(f"no images found in {path}")
    return out


# -- datasets ----------------------------------------------------------------

@dataclass
class DatasetHandle:
    """Clean and degraded sample streams, each in its own order.

    ``pairs`` is an ``(K, 2)`` integer array of ``(degraded_index,
    clean_index)`` correspondences, or ``None`` when nothing is paired.
    """

    clean: np.ndarray
    degraded: np.ndarray
    pairs: np.ndarray | None = None
    paired_fraction: float = 0.0

    @property
    def shape(self):
        return tuple(self.degraded.shape[1:])

    def pair_lookup(self):
        """Map degraded index -> clean index for the paired subset."""
        if self.pairs is None:
            return {}
        return {int(i): int(j) for i, j in self.pairs}


def build_dataset(clean, spec, paired_fraction=0.0, seed=0):
    """Degrade ``clean`` and expose shuffled streams with a paired subset.

    The degraded and clean streams are permuted independently; exactly
    ``floor(paired_fraction * n + 0.5)`` source indices keep a
    correspondence, reported through ``pairs``.
    """
    if len(clean) == 0:
        raise UsageError("no clean samples")
    if not 0.0 <= paired_fraction <= 1.0:
        raise UsageError("paired_fraction must lie in [0, 1]")
    clean = np.stack([as_image(c) for c in clean])
    n = len(clean)
    seeds = np.random.SeedSequence(seed).generate_state(n + 1)
    degraded = np.stack([
        degrade(clean[i], replace(spec, seed=int(seeds[i]) ^ spec.seed)) for i in range(n)
    ])
    rng = np.random.default_rng(int(seeds[n]))
    perm_y = rng.permutation(n)
    perm_x = rng.permutation(n)
    n_pairs = int(math.floor(paired_fraction * n + 0.5))
    pairs = None
    if n_pairs:
        chosen = np.sort(rng.choice(n, size=n_pairs, replace=False))
        pos_y = np.argsort(perm_y)
        pos_x = np.argsort(perm_x)
        pairs = np.stack([pos_y[chosen], pos_x[chosen]], axis=1)
    return DatasetHandle(clean=clean[perm_x], degraded=degraded[perm_y], pairs=pairs,
                         paired_fraction=float(paired_fraction))
