"""Two-phase training orchestration, model selection, and the ablation harness.

Phase one fits Network-I on low/normal pairs; phase two freezes it, feeds its
output (and curve map) into Network-II, and fits Network-II alone. Runs are
fully determined by (seed, config, dataset) when single-threaded.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import AdamState, Tape, Tensor, adam_step, add, scale
from .checkpoint import save_checkpoint
from .curves import apply_curve
from .data import PairedSample, epoch_plan, load_pair, reflect_pad, sample_batch
from .errors import ConfigError, ContractError, NumericError
from .net1 import Net1Config, init_net1, loss_total1, net1_forward
from .net2 import Net2Config, init_net2, loss_color, loss_total2, net2_forward
from .perceptual import PSI_DEFAULT_SEED, FeatureExtractor, loss_vgg

log = logging.getLogger(__name__)

ABLATION_VARIANTS = (
    "full",
    "net1_only",
    "net2_wo_G",
    "net1_plus_net2_wo_G",
    "wo_Ls",
    "wo_Lr2",
    "wo_Lvgg",
    "wo_Lc",
    "wo_LN",
)


@dataclass(frozen=True)
class TrainConfig:
    phase: str
    batch: int
    patch: int
    epochs: int
    lr: float = 1e-4
    w_s: float = 20.0
    w_vgg: float = 1.0
    w_c: float = 0.2
    seed: int = 0
    steps_per_epoch: int = 0  # 0 derives ceil(pairs / batch)

    def __post_init__(self):
        if self.phase not in ("one", "two"):
            raise ConfigError(f"phase must be 'one' or 'two', got '{self.phase}'")
        if self.batch < 1 or self.patch < 1 or self.epochs < 0:
            raise ConfigError("batch and patch must be >= 1 and epochs >= 0")

    @classmethod
    def phase1(cls, **overrides) -> "TrainConfig":
        base = dict(phase="one", batch=10, patch=48, epochs=2000)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def phase2(cls, **overrides) -> "TrainConfig":
        base = dict(phase="two", batch=8, patch=256, epochs=1000)
        base.update(overrides)
        return cls(**base)


_CONFIG_FIELDS = {
    "phase": str,
    "batch": int,
    "patch": int,
    "epochs": int,
    "lr": float,
    "w_s": float,
    "w_vgg": float,
    "w_c": float,
    "seed": int,
    "steps_per_epoch": int,
}


def parse_config_text(text: str) -> dict:
    """Flat key=value lines; '#' starts a comment. Keys must be TrainConfig fields."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value, got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"config line {lineno}: unknown key '{key}'")
        try:
            out[key] = _CONFIG_FIELDS[key](value)
        except ValueError:
            raise ConfigError(f"config line {lineno}: bad value '{value}' for '{key}'") from None
    return out


def format_config(cfg: TrainConfig) -> str:
    return "\n".join(f"{k}={v}" for k, v in asdict(cfg).items()) + "\n"


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float | None = None


@dataclass
class TrainResult:
    weights: dict[str, Tensor]
    best_weights: dict[str, Tensor]
    history: list[EpochRecord] = field(default_factory=list)


def _pair_tensors(sample: PairedSample, multiple: int) -> tuple[Tensor, Tensor]:
    low_u8, high_u8 = load_pair(sample)
    low, _ = reflect_pad(Tensor(low_u8.astype(np.float32)[None] / 255.0), multiple)
    high, _ = reflect_pad(Tensor(high_u8.astype(np.float32)[None] / 255.0), multiple)
    return low, high


def _abort_on_nonfinite(loss_value: float, weights, out_dir, tag: str):
    if math.isfinite(loss_value):
        return
    if out_dir is not None:
        path = Path(out_dir) / f"{tag}_last_good.ckpt"
        save_checkpoint(weights, path)
        log.error("non-finite loss; last good weights preserved at %s", path)
    raise NumericError(f"training loss became non-finite ({loss_value})")


def _emit(out_dir, tag, result: TrainResult, cfg: TrainConfig, net_meta: dict, steps: int):
    if out_dir is None:
        return
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"config": asdict(cfg), "net": net_meta, "steps": steps, "optimizer_state": False}
    save_checkpoint(result.weights, out / f"{tag}_final.ckpt", meta)
    save_checkpoint(result.best_weights, out / f"{tag}_best.ckpt", meta)


def train_stage1(
    samples: list[PairedSample],
    cfg: TrainConfig,
    net1_cfg: Net1Config = Net1Config(),
    val_samples: list[PairedSample] | None = None,
    out_dir=None,
    init_weights: dict[str, Tensor] | None = None,
) -> TrainResult:
    """Fit Network-I with loss_total1. Keeps the best-on-validation weights
    (best-on-train when no validation split is given)."""
    if cfg.phase != "one":
        raise ConfigError("train_stage1 needs a phase-one config")
    if not samples:
        raise ContractError("training set is empty")
    if cfg.patch % 16:
        raise ConfigError(f"phase-one patch must be divisible by 16, got {cfg.patch}")
    rng = np.random.default_rng(cfg.seed)
    weights = dict(init_weights) if init_weights is not None else init_net1(net1_cfg, rng)
    state = AdamState(lr=cfg.lr)
    steps = cfg.steps_per_epoch or math.ceil(len(samples) / cfg.batch)
    result = TrainResult(weights=weights, best_weights=dict(weights))
    best_score = math.inf
    total_steps = 0

    def val_loss() -> float | None:
        if not val_samples:
            return None
        acc = 0.0
        for s in val_samples:
            low, high = _pair_tensors(s, 16)
            g = net1_forward(low, result.weights, net1_cfg)
            acc += loss_total1(low, g, high, cfg.w_s).item()
        return acc / len(val_samples)

    for epoch in range(1, cfg.epochs + 1):
        plan = epoch_plan(len(samples), cfg.batch, steps, rng)
        epoch_losses = []
        for idx in plan:
            batch = sample_batch(samples, cfg.patch, cfg.batch, rng, indices=idx)
            with Tape() as tape:
                tape.watch(*result.weights.values())
                g = net1_forward(batch.low, result.weights, net1_cfg)
                loss = loss_total1(batch.low, g, batch.high, cfg.w_s)
            lv = loss.item()
            _abort_on_nonfinite(lv, result.weights, out_dir, "net1")
            grads = tape.backward(loss)
            by_name = {name: grads[t] for name, t in result.weights.items()}
            result.weights = adam_step(result.weights, by_name, state)
            epoch_losses.append(lv)
            total_steps += 1
        vl = val_loss()
        record = EpochRecord(epoch, float(np.mean(epoch_losses)), vl)
        result.history.append(record)
        score = vl if vl is not None else record.train_loss
        if score < best_score:
            best_score = score
            result.best_weights = dict(result.weights)
    _emit(out_dir, "net1", result, cfg, {"net1": asdict(net1_cfg)}, total_steps)
    return result


def train_stage2(
    samples: list[PairedSample],
    net1_weights: dict[str, Tensor] | None,
    cfg: TrainConfig,
    net1_cfg: Net1Config = Net1Config(),
    net2_cfg: Net2Config = Net2Config(),
    extractor: FeatureExtractor | None = None,
    val_samples: list[PairedSample] | None = None,
    out_dir=None,
    init_weights: dict[str, Tensor] | None = None,
    use_r2: bool = True,
) -> TrainResult:
    """Fit Network-II with loss_total2, Network-I frozen.

    Stage 1 runs outside the gradient tape, so its weights cannot drift and
    cost no backward work. ``net1_weights=None`` feeds the low-light image to
    Network-II directly (the un-decoupled ablation configuration); guidance
    must then be disabled.
    """
    if cfg.phase != "two":
        raise ConfigError("train_stage2 needs a phase-two config")
    if not samples:
        raise ContractError("training set is empty")
    if net1_weights is None and net2_cfg.use_guidance:
        raise ConfigError("no stage-1 weights: Network-II cannot use curve-map guidance")
    multiple = 16 if net1_weights is not None else net2_cfg.multiple
    if cfg.patch % multiple:
        raise ConfigError(f"phase-two patch must be divisible by {multiple}, got {cfg.patch}")
    if not use_r2 and cfg.w_vgg == 0 and cfg.w_c == 0:
        raise ConfigError("loss is empty: r2 disabled and both weights zero")
    if cfg.w_vgg > 0 and extractor is None:
        extractor = FeatureExtractor.seeded(seed=PSI_DEFAULT_SEED)

    rng = np.random.default_rng(cfg.seed)
    weights = dict(init_weights) if init_weights is not None else init_net2(net2_cfg, rng)
    state = AdamState(lr=cfg.lr)
    steps = cfg.steps_per_epoch or math.ceil(len(samples) / cfg.batch)
    result = TrainResult(weights=weights, best_weights=dict(weights))
    best_score = math.inf
    total_steps = 0

    def stage1_pass(low: Tensor) -> tuple[Tensor, Tensor | None]:
        if net1_weights is None:
            return low, None
        g = net1_forward(low, net1_weights, net1_cfg)
        return apply_curve(low, g), g

    def compose_loss(ie2: Tensor, high: Tensor) -> Tensor:
        if use_r2:
            return loss_total2(ie2, high, cfg.w_vgg, cfg.w_c, extractor)
        total = None
        if cfg.w_vgg > 0:
            total = scale(loss_vgg(ie2, high, extractor), cfg.w_vgg)
        if cfg.w_c > 0:
            term = scale(loss_color(ie2, high), cfg.w_c)
            total = term if total is None else add(total, term)
        return total

    def val_loss() -> float | None:
        if not val_samples:
            return None
        acc = 0.0
        for s in val_samples:
            low, high = _pair_tensors(s, max(multiple, extractor.spec.multiple if extractor else 1))
            ie1, g = stage1_pass(low)
            ie2 = net2_forward(ie1, g, result.weights, net2_cfg)
            acc += compose_loss(ie2, high).item()
        return acc / len(val_samples)

    for epoch in range(1, cfg.epochs + 1):
        plan = epoch_plan(len(samples), cfg.batch, steps, rng)
        epoch_losses = []
        for idx in plan:
            batch = sample_batch(samples, cfg.patch, cfg.batch, rng, indices=idx)
            ie1, g = stage1_pass(batch.low)
            with Tape() as tape:
                tape.watch(*result.weights.values())
                ie2 = net2_forward(ie1, g, result.weights, net2_cfg)
                loss = compose_loss(ie2, batch.high)
            lv = loss.item()
            _abort_on_nonfinite(lv, result.weights, out_dir, "net2")
            grads = tape.backward(loss)
            by_name = {name: grads[t] for name, t in result.weights.items()}
            result.weights = adam_step(result.weights, by_name, state)
            epoch_losses.append(lv)
            total_steps += 1
        vl = val_loss()
        record = EpochRecord(epoch, float(np.mean(epoch_losses)), vl)
        result.history.append(record)
        score = vl if vl is not None else record.train_loss
        if score < best_score:
            best_score = score
            result.best_weights = dict(result.weights)
    _emit(out_dir, "net2", result, cfg, {"net2": asdict(net2_cfg)}, total_steps)
    return result


# ---------------------------------------------------------------------------
# ablation harness
# ---------------------------------------------------------------------------

@dataclass
class AblationResult:
    variant: str
    net1_weights: dict[str, Tensor] | None
    net2_weights: dict[str, Tensor] | None
    net1_cfg: Net1Config
    net2_cfg: Net2Config | None
    report: object  # MetricReport (imported lazily to avoid a cycle)


def run_ablation(
    variant: str,
    train_samples: list[PairedSample],
    eval_samples: list[PairedSample],
    cfg1: TrainConfig,
    cfg2: TrainConfig,
    net1_cfg: Net1Config = Net1Config(),
    net2_cfg: Net2Config = Net2Config(),
    extractor: FeatureExtractor | None = None,
    net1_weights: dict[str, Tensor] | None = None,
    out_dir=None,
) -> AblationResult:
    """Train one named model variant and score it on the evaluation pairs.

    ``net1_weights`` short-circuits stage-1 training for variants that reuse a
    stock Network-I (everything except net2_wo_G and wo_Ls).
    """
    from .inference import enhance_image
    from .metrics import evaluate_dataset

    if variant not in ABLATION_VARIANTS:
        raise ConfigError(f"unknown ablation variant '{variant}'; valid: {', '.join(ABLATION_VARIANTS)}")

    cfg1_eff = replace(cfg1, w_s=0.0) if variant == "wo_Ls" else cfg1
    cfg2_eff = cfg2
    if variant == "wo_Lvgg":
        cfg2_eff = replace(cfg2, w_vgg=0.0)
    elif variant == "wo_Lc":
        cfg2_eff = replace(cfg2, w_c=0.0)
    net2_cfg_eff = net2_cfg
    if variant in ("net2_wo_G", "net1_plus_net2_wo_G"):
        net2_cfg_eff = replace(net2_cfg, use_guidance=False)
    elif variant == "wo_LN":
        net2_cfg_eff = replace(net2_cfg, use_layer_norm=False)

    w1 = None
    if variant != "net2_wo_G":
        if net1_weights is not None and variant != "wo_Ls":
            w1 = net1_weights
        else:
            w1 = train_stage1(train_samples, cfg1_eff, net1_cfg, out_dir=out_dir).weights

    w2 = None
    if variant != "net1_only":
        w2 = train_stage2(
            train_samples,
            w1,
            cfg2_eff,
            net1_cfg,
            net2_cfg_eff,
            extractor=extractor,
            out_dir=out_dir,
            use_r2=(variant != "wo_Lr2"),
        ).weights

    def enhancer(low: Tensor) -> Tensor:
        return enhance_image(low, w1, net1_cfg, w2, net2_cfg_eff if w2 is not None else None).output

    report = evaluate_dataset(enhancer, eval_samples)
    return AblationResult(variant, w1, w2, net1_cfg, net2_cfg_eff if w2 is not None else None, report)
