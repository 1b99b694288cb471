"""Image tensors, the error hierarchy, and elementwise helpers.

An image is a float64 numpy array of shape ``(channels, height, width)``
with nominal pixel range [0, 1]. Nothing in this module clamps; clamping
is left to the metrics and I/O layers.
"""

from __future__ import annotations

import numpy as np


class RcotError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(RcotError, ValueError):
    """Shapes of the operands are incompatible."""


class UsageError(RcotError, ValueError):
    """Invalid argument value or empty input."""


class DomainError(RcotError, ValueError):
    """Argument outside the mathematical domain (e.g. non-SPD matrix)."""


class ContractError(RcotError):
    """A closed form was requested outside the setting where it holds."""


class NumericalError(RcotError, ArithmeticError):
    """A numerical consistency check failed."""


class StateError(RcotError, RuntimeError):
    """Operation invoked in the wrong state (e.g. backward without forward)."""


class DivergenceError(RcotError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


def as_image(a, name="image"):
    """Validate and return ``a`` as a finite float64 ``(C, H, W)`` array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 3:
        raise DimensionError(f"{name} must have shape (C, H, W), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} contains non-finite values")
    return arr


def check_same_shape(a, b, what="operands"):
    if np.shape(a) != np.shape(b):
        raise DimensionError(f"{what} differ in shape: {np.shape(a)} vs {np.shape(b)}")


def sub(a, b):
    """Elementwise ``a - b`` for equally shaped images."""
    a = as_image(a, "a")
    b = as_image(b, "b")
    check_same_shape(a, b)
    return a - b


def l2_norm(a):
    """Euclidean norm of the flattened data."""
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64).ravel()))


def crop_patch(a, top, left, size):
    """Return the ``size x size`` window at ``(top, left)`` across all channels."""
    a = as_image(a)
    _, h, w = a.shape
    if min(top, left) < 0 or size <= 0 or top + size > h or left + size > w:
        raise DimensionError(
            f"crop ({top}, {left}, size={size}) out of bounds for {h}x{w} image"
        )
    return a[:, top:top + size, left:left + size].copy()


def random_crops(images, size, count, rng):
    """Draw ``count`` random ``size`` crops from a list of images."""
    out = []
    for _ in range(count):
        img = images[rng.integers(len(images))]
        _, h, w = img.shape
        top = int(rng.integers(h - size + 1))
        left = int(rng.integers(w - size + 1))
        out.append(crop_patch(img, top, left, size))
    return out
