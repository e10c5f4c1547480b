"""Network-II: the ResUnet that restores appearance fidelity.

Consumes the stage-1 output; a second encoder with matching feature extents
digests the curve map and is fused in by channel concatenation plus a 1x1
mixer at every scale, so the decoder sees lightness/structure hints. Four
residual blocks sit between encoder and decoder. Layer normalization follows
every conv (switchable for ablation), and the residual blocks' final convs
start at zero so the bottleneck is the identity at initialization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    add,
    arccos,
    avgpool2,
    clamp,
    concat_channels,
    conv2d,
    div,
    layer_norm,
    lrelu,
    mean,
    mul,
    resize_nearest2x,
    scale,
    sigmoid,
    sqrt,
    sub,
    sum_channels,
)
from .errors import ConfigError, DimensionError
from .initializers import add_conv, add_layer_norm
from .validation import as_image_tensor

NORM_FLOOR_SQ = 1e-12  # sqrt gives the 1e-6 norm floor of the color loss
DEG_PER_RAD = 180.0 / np.pi


@dataclass(frozen=True)
class Net2Config:
    base_channels: int = 32
    scales: int = 4
    residual_blocks: int = 4
    lrelu_slope: float = 0.2
    use_layer_norm: bool = True
    use_guidance: bool = True

    def __post_init__(self):
        if self.scales < 2:
            raise ConfigError(f"need at least 2 scales, got {self.scales}")
        if self.residual_blocks < 1:
            raise ConfigError(f"need at least 1 residual block, got {self.residual_blocks}")

    def channels(self, scale_idx: int) -> int:
        return self.base_channels * 2 ** (scale_idx - 1)

    @property
    def multiple(self) -> int:
        return 2 ** (self.scales - 1)


def init_net2(cfg: Net2Config, rng: np.random.Generator) -> dict[str, Tensor]:
    p: dict[str, Tensor] = {}

    def conv_ln(name, in_ch, out_ch, k=3, zero=False):
        add_conv(p, rng, name, in_ch, out_ch, k=k, zero=zero)

    def ln(name, ch):
        if cfg.use_layer_norm:
            add_layer_norm(p, name, ch)

    branches = ["main", "guide"] if cfg.use_guidance else ["main"]
    for branch in branches:
        for s in range(1, cfg.scales + 1):
            ch = cfg.channels(s)
            prev = 3 if s == 1 else cfg.channels(s - 1)
            conv_ln(f"net2/{branch}/enc{s}/conv1", prev, ch)
            ln(f"net2/{branch}/enc{s}/ln1", ch)
            conv_ln(f"net2/{branch}/enc{s}/conv2", ch, ch)
            ln(f"net2/{branch}/enc{s}/ln2", ch)
    if cfg.use_guidance:
        for s in range(1, cfg.scales + 1):
            ch = cfg.channels(s)
            # pass-through init: identity on the main half, zero on the guide
            # half, so the guided net starts at the unguided function and the
            # guidance path opens up only where training finds it useful
            kern = np.zeros((ch, 2 * ch, 1, 1), dtype=np.float32)
            kern[np.arange(ch), np.arange(ch), 0, 0] = 1.0
            p[f"net2/fuse{s}/kernel"] = Tensor(kern, requires_grad=True)
            p[f"net2/fuse{s}/bias"] = Tensor(np.zeros((1, ch, 1, 1), dtype=np.float32), requires_grad=True)
    deep = cfg.channels(cfg.scales)
    for i in range(1, cfg.residual_blocks + 1):
        conv_ln(f"net2/res{i}/conv1", deep, deep)
        ln(f"net2/res{i}/ln1", deep)
        conv_ln(f"net2/res{i}/conv2", deep, deep, zero=True)
        ln(f"net2/res{i}/ln2", deep)
    for s in range(cfg.scales - 1, 0, -1):
        ch = cfg.channels(s)
        conv_ln(f"net2/dec{s}/up", cfg.channels(s + 1), ch)
        ln(f"net2/dec{s}/lnup", ch)
        conv_ln(f"net2/dec{s}/conv1", 2 * ch, ch)
        ln(f"net2/dec{s}/ln1", ch)
        conv_ln(f"net2/dec{s}/conv2", ch, ch)
        ln(f"net2/dec{s}/ln2", ch)
    add_conv(p, rng, "net2/out", cfg.base_channels, 3)
    return p


def net2_expected_shapes(cfg: Net2Config) -> dict[str, tuple[int, ...]]:
    return {k: v.shape for k, v in init_net2(cfg, np.random.default_rng(0)).items()}


class _Blocks:
    """Forward helpers bound to one weight map and config."""

    def __init__(self, weights, cfg):
        self.w = weights
        self.cfg = cfg

    def _get(self, name):
        try:
            return self.w[name]
        except KeyError:
            raise DimensionError(f"missing weight '{name}'; wrong checkpoint for this config?") from None

    def conv(self, x, name):
        kern = self._get(f"{name}/kernel")
        return conv2d(x, kern, self._get(f"{name}/bias"), stride=1, padding=kern.shape[2] // 2)

    def norm(self, x, name):
        if not self.cfg.use_layer_norm:
            return x
        return layer_norm(x, self._get(f"{name}/scale"), self._get(f"{name}/shift"))

    def act(self, x):
        return lrelu(x, self.cfg.lrelu_slope)

    def enc_stage(self, x, prefix):
        x = self.act(self.norm(self.conv(x, f"{prefix}/conv1"), f"{prefix}/ln1"))
        return self.act(self.norm(self.conv(x, f"{prefix}/conv2"), f"{prefix}/ln2"))

    def residual(self, x, prefix):
        h = self.act(self.norm(self.conv(x, f"{prefix}/conv1"), f"{prefix}/ln1"))
        h = self.norm(self.conv(h, f"{prefix}/conv2"), f"{prefix}/ln2")
        return add(x, h)


def net2_forward(ie1, g, weights: dict[str, Tensor], cfg: Net2Config = Net2Config()) -> Tensor:
    """Refine the stage-1 output. ``g`` is the curve map used as guidance; it
    is ignored (and may be None) when guidance is disabled."""
    x = as_image_tensor(ie1, "ie1")
    _, _, H, W = x.shape
    if H % cfg.multiple or W % cfg.multiple:
        raise DimensionError(
            f"Network-II needs extents divisible by {cfg.multiple}, got {H}x{W}; reflect_pad first"
        )
    blocks = _Blocks(weights, cfg)
    guide = None
    if cfg.use_guidance:
        if g is None:
            raise DimensionError("guidance enabled but no curve map given")
        guide = g if isinstance(g, Tensor) else Tensor(np.asarray(g, dtype=np.float32))
        if guide.shape != x.shape:
            raise DimensionError(f"curve map extents {guide.shape} do not match input {x.shape}")

    feats = []
    for s in range(1, cfg.scales + 1):
        x = blocks.enc_stage(x, f"net2/main/enc{s}")
        if cfg.use_guidance:
            guide_feat = blocks.enc_stage(guide, f"net2/guide/enc{s}")
            if guide_feat.shape != x.shape:
                raise DimensionError(
                    f"guidance features {guide_feat.shape} do not match main features {x.shape} at scale {s}"
                )
            # linear mixer (no norm/activation): pass-through at init
            x = blocks.conv(concat_channels(x, guide_feat), f"net2/fuse{s}")
        feats.append(x)
        if s < cfg.scales:
            x = avgpool2(x)
            if cfg.use_guidance:
                guide = avgpool2(guide_feat)

    for i in range(1, cfg.residual_blocks + 1):
        x = blocks.residual(x, f"net2/res{i}")

    for s in range(cfg.scales - 1, 0, -1):
        x = blocks.act(blocks.norm(blocks.conv(resize_nearest2x(x), f"net2/dec{s}/up"), f"net2/dec{s}/lnup"))
        x = concat_channels(x, feats[s - 1])
        x = blocks.act(blocks.norm(blocks.conv(x, f"net2/dec{s}/conv1"), f"net2/dec{s}/ln1"))
        x = blocks.act(blocks.norm(blocks.conv(x, f"net2/dec{s}/conv2"), f"net2/dec{s}/ln2"))
    return sigmoid(blocks.conv(x, "net2/out"))


# ---------------------------------------------------------------------------
# stage-2 losses
# ---------------------------------------------------------------------------

def loss_r2(ie2, target) -> Tensor:
    """Pixel-fidelity term: mean squared error."""
    d = sub(as_image_tensor(ie2, "ie2"), as_image_tensor(target, "target"))
    return mean(mul(d, d))


def loss_color(ie2, target) -> Tensor:
    """Mean per-pixel angle in degrees between RGB vectors of the two images.

    Norms are floored at 1e-6 and the cosine clamped into [-1, 1], so black
    pixels stay finite and identical images score exactly zero.
    """
    a = as_image_tensor(ie2, "ie2")
    b = as_image_tensor(target, "target")
    na = sqrt(clamp(sum_channels(mul(a, a)), lo=NORM_FLOOR_SQ))
    nb = sqrt(clamp(sum_channels(mul(b, b)), lo=NORM_FLOOR_SQ))
    cos = clamp(div(sum_channels(mul(a, b)), mul(na, nb)), lo=-1.0, hi=1.0)
    return mean(scale(arccos(cos), DEG_PER_RAD))


def loss_total2(ie2, target, w_vgg: float = 1.0, w_c: float = 0.2, extractor=None) -> Tensor:
    """Fidelity loss: MSE plus weighted perceptual and color-angle terms.

    ``extractor`` is the frozen feature extractor from
    :mod:`lumidec.perceptual`; required whenever w_vgg > 0. Zero-weight terms
    are skipped entirely so they cannot perturb the computation.
    """
    if w_vgg < 0 or w_c < 0:
        raise ConfigError(f"loss weights must be >= 0, got w_vgg={w_vgg}, w_c={w_c}")
    total = loss_r2(ie2, target)
    if w_vgg > 0:
        if extractor is None:
            raise ConfigError("w_vgg > 0 requires a feature extractor")
        from .perceptual import loss_vgg

        total = add(total, scale(loss_vgg(ie2, target, extractor), w_vgg))
    if w_c > 0:
        total = add(total, scale(loss_color(ie2, target), w_c))
    return total


def count_params(weights: dict[str, Tensor]) -> int:
    """Total scalar count across all named parameters."""
    return int(sum(t.size for t in weights.values()))


def net2_config_from_weights(weights: dict[str, Tensor]) -> Net2Config:
    """Recover the architecture from a weight map (checkpoints are self-describing)."""
    try:
        base = weights["net2/main/enc1/conv1/kernel"].shape[0]
    except KeyError:
        raise DimensionError("not a Network-II weight map: 'net2/main/enc1/conv1/kernel' missing") from None
    scales = max(int(k.split("/enc")[1].split("/")[0]) for k in weights if "/main/enc" in k)
    blocks = max((int(k.split("net2/res")[1].split("/")[0]) for k in weights if k.startswith("net2/res")), default=0)
    return Net2Config(
        base_channels=base,
        scales=scales,
        residual_blocks=blocks,
        use_layer_norm=any("/ln" in k for k in weights),
        use_guidance=any(k.startswith("net2/guide/") for k in weights),
    )
