"""Input coercion and checking helpers shared by the public surfaces."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import ContractError, DimensionError


def as_image_array(x, name: str = "image") -> np.ndarray:
    """Coerce to a float (B, 3, H, W) ndarray (B is 1 for single images).

    Accepts a Tensor, a (B,3,H,W) or (3,H,W) array, or an (H,W,3) array.
    Values are validated as finite; range is the caller's contract.
    """
    if isinstance(x, Tensor):
        arr = x.data
    else:
        arr = np.asarray(x)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        if arr.ndim == 3:
            if arr.shape[0] == 3:
                arr = arr[None]
            elif arr.shape[2] == 3:
                arr = np.ascontiguousarray(arr.transpose(2, 0, 1))[None]
            else:
                raise DimensionError(f"{name}: expected 3 channels, got shape {arr.shape}")
    if arr.ndim != 4 or arr.shape[1] != 3:
        raise DimensionError(f"{name}: expected a (B,3,H,W) image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ContractError(f"{name}: contains non-finite values")
    return arr


def as_image_tensor(x, name: str = "image") -> Tensor:
    if isinstance(x, Tensor):
        as_image_array(x, name)
        return x
    return Tensor(as_image_array(x, name))


def check_unit_range(arr: np.ndarray, name: str = "image") -> None:
    lo, hi = float(arr.min()), float(arr.max())
    if lo < 0.0 or hi > 1.0:
        raise ContractError(f"{name}: values must lie in [0,1], found range [{lo:.4g}, {hi:.4g}]")


def check_same_extents(a: np.ndarray, b: np.ndarray, what: str = "images") -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{what} must share extents: {a.shape} vs {b.shape}")
