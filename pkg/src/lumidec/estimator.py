"""Scikit-learn style estimator wrapping the whole two-stage pipeline.

``fit`` consumes a paired dataset (a root directory in ``low/``/``high/``
layout, or a list of PairedSample); ``transform``/``predict`` enhance images.
Hyperparameters follow the usual estimator conventions, so ``get_params``,
``set_params``, and ``clone`` compose with the wider ecosystem.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .checkpoint import load_checkpoint, save_checkpoint
from .data import PairedSample, scan_dataset
from .errors import ConfigError
from .inference import enhance_image
from .net1 import Net1Config, net1_config_from_weights
from .net2 import Net2Config, net2_config_from_weights
from .perceptual import PSI_DEFAULT_SEED, FeatureExtractor
from .training import TrainConfig, train_stage1, train_stage2
from .validation import as_image_array


class DecoupledEnhancer(BaseEstimator, TransformerMixin):
    """Two-stage low-light image enhancer.

    Stage 1 learns a per-pixel exponent map and brightens through the power
    mapping; stage 2 restores fidelity (noise, color) with a guided ResUnet.
    Defaults reproduce the full-scale training protocol; shrink channels,
    patches, and epochs for desk-scale experiments.
    """

    def __init__(
        self,
        net1_channels: int = 16,
        net2_channels: int = 32,
        use_guidance: bool = True,
        use_layer_norm: bool = True,
        stage1_epochs: int = 2000,
        stage1_batch: int = 10,
        stage1_patch: int = 48,
        stage2_epochs: int = 1000,
        stage2_batch: int = 8,
        stage2_patch: int = 256,
        lr: float = 1e-4,
        w_s: float = 20.0,
        w_vgg: float = 1.0,
        w_c: float = 0.2,
        seed: int = 0,
        steps_per_epoch: int = 0,
        validation_pairs: int = 0,
        psi_seed: int = PSI_DEFAULT_SEED,
    ):
        self.net1_channels = net1_channels
        self.net2_channels = net2_channels
        self.use_guidance = use_guidance
        self.use_layer_norm = use_layer_norm
        self.stage1_epochs = stage1_epochs
        self.stage1_batch = stage1_batch
        self.stage1_patch = stage1_patch
        self.stage2_epochs = stage2_epochs
        self.stage2_batch = stage2_batch
        self.stage2_patch = stage2_patch
        self.lr = lr
        self.w_s = w_s
        self.w_vgg = w_vgg
        self.w_c = w_c
        self.seed = seed
        self.steps_per_epoch = steps_per_epoch
        self.validation_pairs = validation_pairs
        self.psi_seed = psi_seed

    # ------------------------------------------------------------------
    def _resolve_samples(self, X) -> list[PairedSample]:
        if isinstance(X, (str, Path)):
            return scan_dataset(X)
        samples = list(X)
        if not samples or not isinstance(samples[0], PairedSample):
            raise ConfigError("fit expects a dataset root path or a list of PairedSample")
        return samples

    def fit(self, X, y=None):
        """Train both stages on a paired dataset. ``y`` is ignored; the
        supervision lives in the high/ side of the pairs."""
        samples = self._resolve_samples(X)
        val = None
        if self.validation_pairs:
            if self.validation_pairs >= len(samples):
                raise ConfigError(
                    f"validation_pairs={self.validation_pairs} leaves no training data "
                    f"(got {len(samples)} pairs)"
                )
            val = samples[-self.validation_pairs :]
            samples = samples[: -self.validation_pairs]

        net1_cfg = Net1Config(base_channels=self.net1_channels)
        net2_cfg = Net2Config(
            base_channels=self.net2_channels,
            use_guidance=self.use_guidance,
            use_layer_norm=self.use_layer_norm,
        )
        cfg1 = TrainConfig.phase1(
            batch=self.stage1_batch,
            patch=self.stage1_patch,
            epochs=self.stage1_epochs,
            lr=self.lr,
            w_s=self.w_s,
            seed=self.seed,
            steps_per_epoch=self.steps_per_epoch,
        )
        cfg2 = TrainConfig.phase2(
            batch=self.stage2_batch,
            patch=self.stage2_patch,
            epochs=self.stage2_epochs,
            lr=self.lr,
            w_vgg=self.w_vgg,
            w_c=self.w_c,
            seed=self.seed,
            steps_per_epoch=self.steps_per_epoch,
        )
        extractor = FeatureExtractor.seeded(seed=self.psi_seed) if self.w_vgg > 0 else None

        res1 = train_stage1(samples, cfg1, net1_cfg, val_samples=val)
        self.net1_weights_ = res1.best_weights
        self.history1_ = res1.history
        res2 = train_stage2(
            samples, self.net1_weights_, cfg2, net1_cfg, net2_cfg, extractor=extractor, val_samples=val
        )
        self.net2_weights_ = res2.best_weights
        self.history2_ = res2.history
        self.net1_cfg_ = net1_cfg
        self.net2_cfg_ = net2_cfg
        return self

    def _check_fitted(self):
        if not hasattr(self, "net1_weights_"):
            raise NotFittedError("DecoupledEnhancer is not fitted; call fit or from_checkpoints")

    def enhance(self, image):
        """Full inference detail: returns EnhanceResult(output, ie1, g)."""
        self._check_fitted()
        return enhance_image(
            image,
            self.net1_weights_,
            self.net1_cfg_,
            getattr(self, "net2_weights_", None),
            getattr(self, "net2_cfg_", None),
        )

    def transform(self, X):
        """Enhance one image or a list of images; arrays in, arrays out."""
        if isinstance(X, (list, tuple)):
            return [self.transform(x) for x in X]
        as_image_array(X)  # validation
        return self.enhance(X).output.data

    def predict(self, X):
        return self.transform(X)

    # ------------------------------------------------------------------
    def save(self, out_dir) -> None:
        """Write net1/net2 checkpoints under ``out_dir``."""
        self._check_fitted()
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(self.net1_weights_, out / "net1.ckpt", {"estimator": self.get_params()})
        if getattr(self, "net2_weights_", None) is not None:
            save_checkpoint(self.net2_weights_, out / "net2.ckpt", {"estimator": self.get_params()})

    @classmethod
    def from_checkpoints(cls, net1_path, net2_path=None) -> "DecoupledEnhancer":
        """Inference-only construction from saved weights."""
        est = cls()
        est.net1_weights_ = load_checkpoint(net1_path)
        est.net1_cfg_ = net1_config_from_weights(est.net1_weights_)
        est.history1_ = []
        if net2_path is not None:
            est.net2_weights_ = load_checkpoint(net2_path)
            est.net2_cfg_ = net2_config_from_weights(est.net2_weights_)
            est.history2_ = []
        else:
            est.net2_weights_ = None
            est.net2_cfg_ = None
        return est
