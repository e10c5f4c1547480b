"""Stage-1 brightening primitive: the per-pixel power mapping out = in ** g.

Exponents live in (0, 1), so the map brightens. Inputs are clamped to
[CURVE_EPS, 1] before exponentiation: x**g and its exponent-gradient
x**g * ln(x) are ill-behaved at x = 0, and the clamp bounds |ln x| while
leaving visible behavior unchanged (pure black brightens to at most
CURVE_EPS ** g).
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, clamp, pow_elementwise
from .errors import ContractError, DimensionError
from .validation import as_image_tensor

CURVE_EPS = 1e-4


def apply_curve(image: Tensor, g: Tensor) -> Tensor:
    """Brighten ``image`` with the per-pixel, per-channel exponent map ``g``.

    Differentiable in both arguments. ``g`` entries must lie in (0, 1].
    """
    image = as_image_tensor(image)
    if image.shape != g.shape:
        raise DimensionError(f"curve map extents {g.shape} do not match image {image.shape}")
    gmin, gmax = float(g.data.min()), float(g.data.max())
    if gmin <= 0.0 or gmax > 1.0:
        raise ContractError(f"curve exponents must lie in (0,1], found range [{gmin:.4g}, {gmax:.4g}]")
    return pow_elementwise(clamp(image, CURVE_EPS, 1.0), g)


def apply_uniform_gamma(image: Tensor, g: float) -> Tensor:
    """Brighten with one exponent for every pixel (classic gamma correction)."""
    if not 0.0 < g <= 1.0:
        raise ContractError(f"uniform gamma must lie in (0,1], got {g}")
    image = as_image_tensor(image)
    gmap = Tensor(np.full(image.shape, g, dtype=image.dtype), dtype=image.dtype)
    return apply_curve(image, gmap)


def extract_profile(image, row: int) -> np.ndarray:
    """Luminance (mean of RGB) along one row, as a length-W vector."""
    arr = as_image_tensor(image).data
    if arr.shape[0] != 1:
        raise ContractError(f"profiles are per-image; got a batch of {arr.shape[0]}")
    H = arr.shape[2]
    if not 0 <= row < H:
        raise ContractError(f"row {row} outside image height {H}")
    return arr[0, :, row, :].mean(axis=0)
