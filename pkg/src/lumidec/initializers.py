"""Weight initialization shared by the networks and the feature extractor.

Conv kernels are He-uniform (suits LReLU activations), biases zero,
layer-norm affines identity.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


def he_uniform(rng: np.random.Generator, out_ch: int, in_ch: int, k: int) -> np.ndarray:
    limit = float(np.sqrt(6.0 / (in_ch * k * k)))
    return rng.uniform(-limit, limit, size=(out_ch, in_ch, k, k)).astype(np.float32)


def add_conv(
    params: dict[str, Tensor],
    rng: np.random.Generator,
    name: str,
    in_ch: int,
    out_ch: int,
    k: int = 3,
    zero: bool = False,
) -> None:
    if zero:
        kern = np.zeros((out_ch, in_ch, k, k), dtype=np.float32)
    else:
        kern = he_uniform(rng, out_ch, in_ch, k)
    params[f"{name}/kernel"] = Tensor(kern, requires_grad=True)
    params[f"{name}/bias"] = Tensor(np.zeros((1, out_ch, 1, 1), dtype=np.float32), requires_grad=True)


def add_layer_norm(params: dict[str, Tensor], name: str, ch: int) -> None:
    params[f"{name}/scale"] = Tensor(np.ones((1, ch, 1, 1), dtype=np.float32), requires_grad=True)
    params[f"{name}/shift"] = Tensor(np.zeros((1, ch, 1, 1), dtype=np.float32), requires_grad=True)
