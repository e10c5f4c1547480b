"""Frozen convolutional feature pyramid behind the perceptual loss.

The default schedule mirrors a deep VGG-style stack (five stages, tap after
the last conv of stage five) at reduced widths so desk-scale training stays
tractable. Weights come either from a checkpoint file (e.g. exported from a
pretrained model) or from a seeded generator; seeded-random frozen features
are the test-suite default and remove any external-asset dependency.
Features are differentiable with respect to the image only; extractor
weights never receive gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, absolute, avgpool2, conv2d, lrelu, mean, sub
from .errors import ConfigError, DimensionError
from .initializers import add_conv
from .validation import as_image_tensor, check_unit_range

# Default seed of the frozen random extractor; fixed so every run and machine
# derives the identical feature space.
PSI_DEFAULT_SEED = 7


@dataclass(frozen=True)
class FeatureStage:
    out_channels: int
    convs: int
    downsample_after: bool


@dataclass(frozen=True)
class FeatureExtractorSpec:
    stages: tuple[FeatureStage, ...]
    tap_stage: int  # 1-based index of the stage whose output feeds the loss

    def __post_init__(self):
        if not 1 <= self.tap_stage <= len(self.stages):
            raise ConfigError(f"tap_stage {self.tap_stage} outside 1..{len(self.stages)}")

    @property
    def multiple(self) -> int:
        """Spatial divisibility required of inputs (one factor 2 per pool before the tap)."""
        pools = sum(1 for s in self.stages[: self.tap_stage - 1] if s.downsample_after)
        return 2**pools


def default_spec() -> FeatureExtractorSpec:
    widths = (16, 32, 64, 128, 128)
    convs = (2, 2, 4, 4, 4)
    return FeatureExtractorSpec(
        stages=tuple(
            FeatureStage(w, c, downsample_after=(i < 4)) for i, (w, c) in enumerate(zip(widths, convs))
        ),
        tap_stage=5,
    )


class FeatureExtractor:
    """Spec plus frozen weights. Construct via ``seeded`` or ``from_weights``."""

    def __init__(self, spec: FeatureExtractorSpec, weights: dict[str, Tensor]):
        self.spec = spec
        self.weights = {name: t.detach() for name, t in weights.items()}

    @classmethod
    def seeded(cls, spec: FeatureExtractorSpec | None = None, seed: int = 0) -> "FeatureExtractor":
        spec = spec or default_spec()
        rng = np.random.default_rng(seed)
        w: dict[str, Tensor] = {}
        in_ch = 3
        for s, stage in enumerate(spec.stages, start=1):
            for k in range(1, stage.convs + 1):
                add_conv(w, rng, f"psi/stage{s}/conv{k}", in_ch, stage.out_channels)
                in_ch = stage.out_channels
        return cls(spec, w)

    @classmethod
    def from_checkpoint(cls, path, spec: FeatureExtractorSpec | None = None) -> "FeatureExtractor":
        from .checkpoint import load_checkpoint

        spec = spec or default_spec()
        try:
            weights = load_checkpoint(path)
        except FileNotFoundError:
            raise ConfigError(f"feature-extractor weight file not found: {path}") from None
        template = cls.seeded(spec, seed=0).weights
        for name, t in template.items():
            if name not in weights:
                raise ConfigError(f"feature-extractor checkpoint {path} lacks tensor '{name}'")
            if weights[name].shape != t.shape:
                raise DimensionError(
                    f"'{name}' in {path} has shape {weights[name].shape}, spec expects {t.shape}"
                )
        return cls(spec, {name: weights[name] for name in template})


def extract(image, extractor: FeatureExtractor) -> Tensor:
    """Run the frozen pyramid and return the tap stage's feature map."""
    spec = extractor.spec
    x = as_image_tensor(image)
    check_unit_range(x.data)
    _, _, H, W = x.shape
    if H % spec.multiple or W % spec.multiple:
        raise DimensionError(f"extract needs extents divisible by {spec.multiple}, got {H}x{W}")
    for s, stage in enumerate(spec.stages, start=1):
        for k in range(1, stage.convs + 1):
            kern = extractor.weights[f"psi/stage{s}/conv{k}/kernel"]
            bias = extractor.weights[f"psi/stage{s}/conv{k}/bias"]
            x = lrelu(conv2d(x, kern, bias, stride=1, padding=1), 0.0)
        if s == spec.tap_stage:
            return x
        if stage.downsample_after:
            x = avgpool2(x)
    return x


def loss_vgg(ie2, target, extractor: FeatureExtractor) -> Tensor:
    """Perceptual term: mean absolute difference between tap features."""
    fa = extract(ie2, extractor)
    fb = extract(target, extractor)
    return mean(absolute(sub(fa, fb)))
