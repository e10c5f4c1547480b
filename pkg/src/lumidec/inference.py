"""Frozen-weight inference: compose the two stages on arbitrary-size images."""

from __future__ import annotations

from dataclasses import dataclass

from .autodiff import Tensor
from .curves import apply_curve
from .data import crop_back, reflect_pad
from .net1 import Net1Config, net1_forward
from .net2 import Net2Config, net2_forward
from .validation import as_image_tensor


@dataclass
class EnhanceResult:
    output: Tensor  # final result (stage 2 when available, else stage 1)
    ie1: Tensor  # stage-1 brightened image
    g: Tensor  # curve map, input extents


def enhance_image(
    image,
    net1_weights: dict[str, Tensor],
    net1_cfg: Net1Config = Net1Config(),
    net2_weights: dict[str, Tensor] | None = None,
    net2_cfg: Net2Config | None = None,
) -> EnhanceResult:
    """Enhance one image, reflect-padding and cropping transparently.

    ``net2_weights=None`` stops after stage 1. When Network-II was trained
    directly on low-light input (the un-decoupled variant), pass
    ``net1_weights=None``; the image then skips the curve stage.
    """
    x = as_image_tensor(image)
    multiple = 16 if net1_weights is not None else (net2_cfg.multiple if net2_cfg else 16)
    if net2_cfg is not None:
        multiple = max(multiple, net2_cfg.multiple)
    padded, extents = reflect_pad(x, multiple)

    if net1_weights is not None:
        g = net1_forward(padded, net1_weights, net1_cfg)
        ie1 = apply_curve(padded, g)
    else:
        g = None
        ie1 = padded

    if net2_weights is not None:
        if net2_cfg is None:
            net2_cfg = Net2Config()
        out = net2_forward(ie1, g, net2_weights, net2_cfg)
    else:
        out = ie1

    return EnhanceResult(
        output=crop_back(out, extents),
        ie1=crop_back(ie1, extents),
        g=crop_back(g, extents) if g is not None else None,
    )
