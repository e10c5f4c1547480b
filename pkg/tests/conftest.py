import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_field(rng, h, w, blur_passes=6, lo=0.0, hi=1.0):
    """Random smooth 2-D field in [lo, hi] via repeated box blurring of noise."""
    f = rng.random((h, w))
    for _ in range(blur_passes):
        f = (
            f
            + np.roll(f, 1, 0) + np.roll(f, -1, 0)
            + np.roll(f, 1, 1) + np.roll(f, -1, 1)
        ) / 5.0
    f = (f - f.min()) / (f.max() - f.min() + 1e-12)
    return lo + (hi - lo) * f


def synthetic_scene(seed, h=64, w=64):
    """A colorful normal-light test image: smooth blobs plus a few hard shapes."""
    rng = np.random.default_rng(seed)
    img = np.stack([smooth_field(rng, h, w, lo=0.25, hi=0.95) for _ in range(3)], axis=0)
    for _ in range(3):
        y, x = rng.integers(4, h - 12), rng.integers(4, w - 12)
        bh, bw = rng.integers(6, 14), rng.integers(6, 14)
        color = rng.random(3) * 0.7 + 0.25
        img[:, y : y + bh, x : x + bw] = color[:, None, None]
    return img[None].astype(np.float32)


def degrade_scene(clean, seed, noise_sigma=0.04, channel_gamma=(1.0, 1.2, 1.5)):
    """Make the paired low-light input: spatially varying darkening gamma,
    channel-dependent exponents (the cast is strongest where it is darkest),
    then Gaussian noise on the darkened image."""
    rng = np.random.default_rng(seed + 77)
    _, _, h, w = clean.shape
    gamma_map = smooth_field(rng, h, w, lo=2.0, hi=4.5)
    exponents = gamma_map[None] * np.asarray(channel_gamma, dtype=np.float64)[:, None, None]
    low = np.power(np.clip(clean[0], 1e-4, 1.0), exponents)
    low = low + rng.normal(0.0, noise_sigma, size=low.shape)
    return np.clip(low, 0.0, 1.0)[None].astype(np.float32)


@pytest.fixture(scope="session")
def paired_fixture_dir(tmp_path_factory):
    """Six-pair LOL-layout dataset of 64x64 synthetic scenes with a strong
    color cast and mild noise, so both stage-2 loss terms have work to do."""
    from lumidec.data import save_png

    root = tmp_path_factory.mktemp("pairs6")
    (root / "low").mkdir()
    (root / "high").mkdir()
    for i in range(6):
        clean = synthetic_scene(100 + i)
        low = degrade_scene(clean, 100 + i, noise_sigma=0.05)
        save_png(clean, root / "high" / f"{i:03d}.png")
        save_png(low, root / "low" / f"{i:03d}.png")
    return root


@pytest.fixture(scope="session")
def trained_ckpt_dir(tmp_path_factory, paired_fixture_dir):
    """Small stage-1 + stage-2 checkpoints shared by CLI and estimator tests."""
    from lumidec.data import scan_dataset
    from lumidec.net1 import Net1Config
    from lumidec.net2 import Net2Config
    from lumidec.perceptual import FeatureExtractor, FeatureExtractorSpec, FeatureStage
    from lumidec.training import TrainConfig, train_stage1, train_stage2

    out = tmp_path_factory.mktemp("ckpts")
    samples = scan_dataset(paired_fixture_dir)
    net1_cfg = Net1Config(base_channels=4)
    net2_cfg = Net2Config(base_channels=4)
    psi = FeatureExtractor.seeded(
        FeatureExtractorSpec(
            stages=(FeatureStage(8, 1, True), FeatureStage(16, 1, True), FeatureStage(32, 2, False)),
            tap_stage=3,
        ),
        seed=7,
    )
    cfg1 = TrainConfig.phase1(batch=2, patch=32, epochs=40, steps_per_epoch=3, seed=1)
    cfg2 = TrainConfig.phase2(batch=2, patch=32, epochs=20, steps_per_epoch=3, seed=1)
    res1 = train_stage1(samples, cfg1, net1_cfg, out_dir=out)
    train_stage2(samples, res1.weights, cfg2, net1_cfg, net2_cfg, extractor=psi, out_dir=out)
    return out
