"""Network-I: the five-level Unet that estimates the per-pixel exponent map.

The encoder runs two 3x3 convs per level with LReLU and 2x2 average-pool
downsampling; the decoder upsamples (nearest 2x + 3x3 conv), concatenates the
skip feature, and runs two more convs. A final 3-channel conv plus sigmoid
yields exponents strictly inside (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    absolute,
    add,
    avgpool2,
    concat_channels,
    conv2d,
    forward_diff_x,
    forward_diff_y,
    lrelu,
    mean,
    mul,
    resize_nearest2x,
    scale,
    sigmoid,
    sub,
)
from .curves import apply_curve
from .errors import ConfigError, DimensionError
from .initializers import add_conv
from .validation import as_image_tensor, check_unit_range

DOWNSAMPLE_MULTIPLE = 16  # four 2x poolings


@dataclass(frozen=True)
class Net1Config:
    base_channels: int = 16
    levels: int = 5
    lrelu_slope: float = 0.2

    def __post_init__(self):
        if self.levels != 5:
            raise ConfigError("Network-I uses a fixed five-level encoder")
        if self.base_channels < 4:
            raise ConfigError(f"base_channels must be >= 4, got {self.base_channels}")

    def channels(self, level: int) -> int:
        return self.base_channels * 2 ** (level - 1)


def init_net1(cfg: Net1Config, rng: np.random.Generator) -> dict[str, Tensor]:
    """He-uniform kernels, zero biases, in a flat name -> tensor map."""
    p: dict[str, Tensor] = {}
    for lvl in range(1, cfg.levels + 1):
        ch = cfg.channels(lvl)
        prev = 3 if lvl == 1 else cfg.channels(lvl - 1)
        add_conv(p, rng, f"net1/enc{lvl}/conv1", prev, ch)
        add_conv(p, rng, f"net1/enc{lvl}/conv2", ch, ch)
    for lvl in range(cfg.levels - 1, 0, -1):
        ch = cfg.channels(lvl)
        add_conv(p, rng, f"net1/dec{lvl}/up", cfg.channels(lvl + 1), ch)
        add_conv(p, rng, f"net1/dec{lvl}/conv1", 2 * ch, ch)
        add_conv(p, rng, f"net1/dec{lvl}/conv2", ch, ch)
    add_conv(p, rng, "net1/out", cfg.base_channels, 3)
    return p


def net1_expected_shapes(cfg: Net1Config) -> dict[str, tuple[int, ...]]:
    return {k: v.shape for k, v in init_net1(cfg, np.random.default_rng(0)).items()}


def _conv_block(x, w, name, slope):
    try:
        kern, bias = w[f"{name}/kernel"], w[f"{name}/bias"]
    except KeyError:
        raise DimensionError(f"missing weight '{name}/kernel'; wrong checkpoint for this config?") from None
    return lrelu(conv2d(x, kern, bias, stride=1, padding=kern.shape[2] // 2), slope)


def net1_forward(image, weights: dict[str, Tensor], cfg: Net1Config = Net1Config()) -> Tensor:
    """Map a low-light image to its curve map. H and W must be multiples of 16
    (reflect_pad in the data pipeline handles arbitrary sizes)."""
    x = as_image_tensor(image)
    check_unit_range(x.data)
    _, _, H, W = x.shape
    if H % DOWNSAMPLE_MULTIPLE or W % DOWNSAMPLE_MULTIPLE:
        raise DimensionError(
            f"Network-I needs extents divisible by {DOWNSAMPLE_MULTIPLE}, got {H}x{W}; reflect_pad first"
        )
    skips = []
    for lvl in range(1, cfg.levels + 1):
        x = _conv_block(x, weights, f"net1/enc{lvl}/conv1", cfg.lrelu_slope)
        x = _conv_block(x, weights, f"net1/enc{lvl}/conv2", cfg.lrelu_slope)
        if lvl < cfg.levels:
            skips.append(x)
            x = avgpool2(x)
    for lvl in range(cfg.levels - 1, 0, -1):
        x = _conv_block(resize_nearest2x(x), weights, f"net1/dec{lvl}/up", cfg.lrelu_slope)
        x = concat_channels(x, skips[lvl - 1])
        x = _conv_block(x, weights, f"net1/dec{lvl}/conv1", cfg.lrelu_slope)
        x = _conv_block(x, weights, f"net1/dec{lvl}/conv2", cfg.lrelu_slope)
    kern, bias = weights["net1/out/kernel"], weights["net1/out/bias"]
    return sigmoid(conv2d(x, kern, bias, stride=1, padding=1))


# ---------------------------------------------------------------------------
# stage-1 losses
# ---------------------------------------------------------------------------

def loss_r1(image, g: Tensor, target) -> Tensor:
    """Mean squared error between the curve-brightened image and the target."""
    d = sub(apply_curve(image, g), as_image_tensor(target, "target"))
    return mean(mul(d, d))


def loss_smooth(g: Tensor) -> Tensor:
    """Local smoothness of the curve map: mean of (|dx| + |dy|)^2 over pixels
    and channels, forward differences zero-padded at the far row/column."""
    s = add(absolute(forward_diff_x(g)), absolute(forward_diff_y(g)))
    return mean(mul(s, s))


def loss_total1(image, g: Tensor, target, w_s: float = 20.0) -> Tensor:
    if w_s < 0:
        raise ConfigError(f"smoothness weight must be >= 0, got {w_s}")
    rec = loss_r1(image, g, target)
    if w_s == 0.0:
        return rec
    return add(rec, scale(loss_smooth(g), w_s))


def net1_config_from_weights(weights: dict[str, Tensor]) -> Net1Config:
    """Recover the architecture from a weight map (checkpoints are self-describing)."""
    try:
        base = weights["net1/enc1/conv1/kernel"].shape[0]
    except KeyError:
        raise DimensionError("not a Network-I weight map: 'net1/enc1/conv1/kernel' missing") from None
    return Net1Config(base_channels=base)
