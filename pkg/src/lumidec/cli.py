"""Command-line interface.

Verbs: train1, train2, enhance, eval, ablate, curves, inspect. Every run
prints its resolved configuration before acting. Exit codes by error class:
2 configuration, 3 data/shape, 4 numeric, 5 checkpoint/io. Config precedence
for training verbs: flags > config file > built-in defaults. The optional
``LUMIDEC_THREADS`` environment variable caps BLAS threads.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, read_checkpoint_meta
from .curves import apply_uniform_gamma, extract_profile
from .data import load_png, save_png, scan_dataset
from .errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    LumidecError,
    NumericError,
)
from .inference import enhance_image
from .metrics import evaluate_dataset
from .net1 import Net1Config, net1_config_from_weights
from .net2 import Net2Config, count_params, net2_config_from_weights
from .perceptual import FeatureExtractor
from .training import (
    ABLATION_VARIANTS,
    TrainConfig,
    parse_config_text,
    run_ablation,
    train_stage1,
    train_stage2,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_IO = 5

DEFAULT_GAMMAS = "0.6667,0.4545,0.25,0.125"  # 1/1.5, 1/2.2, 1/4, 1/8


def _print_config(verb: str, ns: argparse.Namespace, extra: dict | None = None) -> None:
    print(f"[lumidec {__version__}] {verb}")
    items = {k: v for k, v in sorted(vars(ns).items()) if k != "func"}
    if extra:
        items.update(extra)
    for key, value in items.items():
        print(f"  {key} = {value}")


def _train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset root with low/ and high/ directories")
    p.add_argument("--val-data", default=None, help="validation dataset root (default: none)")
    p.add_argument("--out", required=True, help="output directory for checkpoints")
    p.add_argument("--config", default=None, help="key=value config file (default: none)")
    p.add_argument("--epochs", type=int, default=None, help="training epochs (default: per phase)")
    p.add_argument("--batch", type=int, default=None, help="batch size (default: per phase)")
    p.add_argument("--patch", type=int, default=None, help="square patch size (default: per phase)")
    p.add_argument("--lr", type=float, default=None, help="Adam learning rate (default: 0.0001)")
    p.add_argument("--seed", type=int, default=None, help="run seed (default: 0)")
    p.add_argument(
        "--steps-per-epoch", type=int, default=None,
        help="steps per epoch (default: 0 = ceil(pairs/batch))",
    )


def _resolve_cfg(phase: str, ns: argparse.Namespace, overrides: dict) -> TrainConfig:
    base = TrainConfig.phase1() if phase == "one" else TrainConfig.phase2()
    resolved = asdict(base)
    if ns.config:
        path = Path(ns.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        file_values = parse_config_text(path.read_text())
        file_values.pop("phase", None)
        resolved.update(file_values)
    for key, value in overrides.items():
        if value is not None:
            resolved[key] = value
    resolved["phase"] = phase
    return TrainConfig(**resolved)


def _scan(root) -> list:
    return scan_dataset(root)


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------

def cmd_train1(ns) -> int:
    cfg = _resolve_cfg(
        "one", ns,
        {"epochs": ns.epochs, "batch": ns.batch, "patch": ns.patch, "lr": ns.lr,
         "seed": ns.seed, "steps_per_epoch": ns.steps_per_epoch, "w_s": ns.ws},
    )
    _print_config("train1", ns, {"resolved": cfg})
    samples = _scan(ns.data)
    val = _scan(ns.val_data) if ns.val_data else None
    net1_cfg = Net1Config(base_channels=ns.base_channels)
    result = train_stage1(samples, cfg, net1_cfg, val_samples=val, out_dir=ns.out)
    last = result.history[-1] if result.history else None
    print(f"done: {len(result.history)} epochs, final train loss "
          f"{last.train_loss if last else float('nan'):.6f}; checkpoints in {ns.out}")
    return EXIT_OK


def cmd_train2(ns) -> int:
    cfg = _resolve_cfg(
        "two", ns,
        {"epochs": ns.epochs, "batch": ns.batch, "patch": ns.patch, "lr": ns.lr,
         "seed": ns.seed, "steps_per_epoch": ns.steps_per_epoch,
         "w_vgg": ns.wvgg, "w_c": ns.wc},
    )
    _print_config("train2", ns, {"resolved": cfg})
    samples = _scan(ns.data)
    val = _scan(ns.val_data) if ns.val_data else None
    net1_weights = load_checkpoint(ns.net1)
    net1_cfg = net1_config_from_weights(net1_weights)
    net2_cfg = Net2Config(
        base_channels=ns.base_channels,
        use_guidance=not ns.no_guidance,
        use_layer_norm=not ns.no_layer_norm,
    )
    extractor = FeatureExtractor.from_checkpoint(ns.psi) if ns.psi else None
    result = train_stage2(
        samples, net1_weights, cfg, net1_cfg, net2_cfg,
        extractor=extractor, val_samples=val, out_dir=ns.out,
    )
    last = result.history[-1] if result.history else None
    print(f"done: {len(result.history)} epochs, final train loss "
          f"{last.train_loss if last else float('nan'):.6f}; checkpoints in {ns.out}")
    return EXIT_OK


def _load_nets(net1_path, net2_path):
    net1_w = load_checkpoint(net1_path) if net1_path else None
    net1_cfg = net1_config_from_weights(net1_w) if net1_w else Net1Config()
    net2_w = net2_cfg = None
    if net2_path:
        net2_w = load_checkpoint(net2_path)
        net2_cfg = net2_config_from_weights(net2_w)
    return net1_w, net1_cfg, net2_w, net2_cfg


def cmd_enhance(ns) -> int:
    _print_config("enhance", ns)
    net1_w, net1_cfg, net2_w, net2_cfg = _load_nets(ns.net1, ns.net2)
    if net2_w is None:
        print("warning: no --net2 checkpoint; writing the stage-1 result only", file=sys.stderr)
    image = load_png(ns.input)
    result = enhance_image(image, net1_w, net1_cfg, net2_w, net2_cfg)
    save_png(result.output, ns.output)
    print(f"wrote {ns.output}")
    if ns.emit_g:
        if result.g is None:
            raise ConfigError("--emit-g needs a stage-1 checkpoint")
        gray = result.g.data.mean(axis=1, keepdims=True).repeat(3, axis=1)
        save_png(gray, ns.emit_g)
        print(f"wrote {ns.emit_g}")
    if ns.emit_intermediate:
        save_png(result.ie1, ns.emit_intermediate)
        print(f"wrote {ns.emit_intermediate}")
    return EXIT_OK


def cmd_eval(ns) -> int:
    _print_config("eval", ns)
    net1_w, net1_cfg, net2_w, net2_cfg = _load_nets(ns.net1, ns.net2)
    samples = _scan(ns.dataset)
    resize = None
    if ns.resize:
        try:
            w, h = (int(part) for part in ns.resize.lower().split("x"))
            resize = (w, h)
        except ValueError:
            raise ConfigError(f"--resize expects WxH, got '{ns.resize}'") from None

    def enhancer(low):
        return enhance_image(low, net1_w, net1_cfg, net2_w, net2_cfg).output

    report = evaluate_dataset(enhancer, samples, csv_path=ns.csv, gray_mode=ns.gray_mode, resize=resize)
    for row in report.rows:
        print(f"  {row.filename}: psnr={row.psnr_db:.4f} ssim={row.ssim:.4f} "
              f"ms_ssim={row.ms_ssim:.4f} color={row.color_angle_deg:.4f} {row.flags}")
    print(report.summary())
    return EXIT_OK


def cmd_ablate(ns) -> int:
    _print_config("ablate", ns)
    samples = _scan(ns.data)
    eval_samples = _scan(ns.eval_data) if ns.eval_data else samples
    cfg1 = _resolve_cfg("one", ns, {"epochs": ns.epochs1, "seed": ns.seed, "batch": ns.batch, "patch": ns.patch})
    ns.config = ns.config2  # second resolve reads the phase-two file
    cfg2 = _resolve_cfg("two", ns, {"epochs": ns.epochs2, "seed": ns.seed, "batch": ns.batch, "patch": ns.patch})
    result = run_ablation(
        ns.variant, samples, eval_samples, cfg1, cfg2,
        Net1Config(base_channels=ns.base_channels1),
        Net2Config(base_channels=ns.base_channels2),
        out_dir=ns.out,
    )
    print(f"variant {result.variant}: {result.report.summary()}")
    if ns.csv:
        result.report.write_csv(ns.csv)
        print(f"wrote {ns.csv}")
    return EXIT_OK


def cmd_curves(ns) -> int:
    _print_config("curves", ns)
    image = load_png(ns.input)
    H = image.shape[2]
    row = ns.row if ns.row is not None else H // 2
    try:
        gammas = [float(tok) for tok in ns.gammas.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"--gammas expects comma-separated floats, got '{ns.gammas}'") from None
    if not gammas or any(not 0 < g <= 1 for g in gammas):
        raise ConfigError("gamma values must lie in (0, 1]")
    out_dir = Path(ns.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    columns: dict[str, np.ndarray] = {}
    for g in gammas:
        mapped = apply_uniform_gamma(image, g)
        name = f"gamma_{g:.4f}".rstrip("0").rstrip(".")
        save_png(mapped, out_dir / f"{name}.png")
        columns[name] = extract_profile(mapped, row)
    if ns.net1:
        net1_w = load_checkpoint(ns.net1)
        net1_cfg = net1_config_from_weights(net1_w)
        result = enhance_image(image, net1_w, net1_cfg)
        save_png(result.ie1, out_dir / "learned.png")
        columns["learned"] = extract_profile(result.ie1, row)

    csv_path = out_dir / "profiles.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pixel_index", *columns.keys()])
        for i in range(image.shape[3]):
            writer.writerow([i, *(f"{columns[c][i]:.6f}" for c in columns)])
    print(f"wrote {csv_path} and {len(columns)} mapped images (row {row})")
    return EXIT_OK


def cmd_inspect(ns) -> int:
    _print_config("inspect", ns)
    weights = load_checkpoint(ns.ckpt)
    meta = read_checkpoint_meta(ns.ckpt)
    for name in sorted(weights):
        print(f"  {name}  {tuple(weights[name].shape)}")
    print(f"tensors: {len(weights)}  parameters: {count_params(weights)}")
    if meta:
        print(f"metadata: {meta}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lumidec",
        description="Two-stage low-light image enhancement: curve brightening plus guided restoration.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("train1", help="train the stage-1 curve estimator",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _train_flags(p)
    p.add_argument("--ws", type=float, default=None, help="smoothness weight (default: 20)")
    p.add_argument("--base-channels", type=int, default=16, help="stage-1 width")
    p.set_defaults(func=cmd_train1)

    p = sub.add_parser("train2", help="train the stage-2 restoration network",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _train_flags(p)
    p.add_argument("--net1", required=True, help="frozen stage-1 checkpoint")
    p.add_argument("--wvgg", type=float, default=None, help="perceptual weight (default: 1)")
    p.add_argument("--wc", type=float, default=None, help="color-angle weight (default: 0.2)")
    p.add_argument("--psi", default=None, help="feature-extractor checkpoint (default: seeded)")
    p.add_argument("--base-channels", type=int, default=32, help="stage-2 width")
    p.add_argument("--no-guidance", action="store_true", help="drop the curve-map guidance branch")
    p.add_argument("--no-layer-norm", action="store_true", help="drop layer normalization")
    p.set_defaults(func=cmd_train2)

    p = sub.add_parser("enhance", help="enhance one PNG",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--input", required=True, help="low-light input PNG")
    p.add_argument("--net1", required=True, help="stage-1 checkpoint")
    p.add_argument("--net2", default=None, help="stage-2 checkpoint (default: stage-1 only)")
    p.add_argument("--output", required=True, help="output PNG path")
    p.add_argument("--emit-g", default=None, help="also write the curve map as grayscale PNG")
    p.add_argument("--emit-intermediate", default=None, help="also write the stage-1 image")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("eval", help="score checkpoints on a paired dataset",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--net1", required=True, help="stage-1 checkpoint")
    p.add_argument("--net2", default=None, help="stage-2 checkpoint")
    p.add_argument("--dataset", required=True, help="dataset root with low/ and high/")
    p.add_argument("--resize", default=None, help="resize both sides of each pair to WxH")
    p.add_argument("--csv", default=None, help="write the per-image report CSV here")
    p.add_argument("--gray-mode", default="mean", choices=["mean", "luma"],
                   help="grayscale conversion for SSIM")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and score one model variant",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--variant", required=True, choices=list(ABLATION_VARIANTS))
    p.add_argument("--data", required=True, help="training dataset root")
    p.add_argument("--eval-data", default=None, help="evaluation dataset root (default: --data)")
    p.add_argument("--out", default=None, help="checkpoint output directory")
    p.add_argument("--config", default=None, help="phase-one config file")
    p.add_argument("--config2", default=None, help="phase-two config file")
    p.add_argument("--epochs1", type=int, default=None, help="phase-one epochs")
    p.add_argument("--epochs2", type=int, default=None, help="phase-two epochs")
    p.add_argument("--batch", type=int, default=None, help="batch size for both phases")
    p.add_argument("--patch", type=int, default=None, help="patch size for both phases")
    p.add_argument("--seed", type=int, default=None, help="run seed")
    p.add_argument("--base-channels1", type=int, default=16, help="stage-1 width")
    p.add_argument("--base-channels2", type=int, default=32, help="stage-2 width")
    p.add_argument("--csv", default=None, help="write the report CSV here")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("curves", help="uniform-gamma study: mapped images plus row profiles",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--input", required=True, help="input PNG")
    p.add_argument("--gammas", default=DEFAULT_GAMMAS, help="comma-separated exponents in (0,1]")
    p.add_argument("--row", type=int, default=None, help="profile row (default: center)")
    p.add_argument("--out-dir", required=True, help="directory for images and profiles.csv")
    p.add_argument("--net1", default=None, help="add a 'learned' profile from this checkpoint")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("inspect", help="print a checkpoint's tensor table",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--ckpt", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        threads = os.environ.get("LUMIDEC_THREADS")
        if threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=int(threads)):
                return ns.func(ns)
        return ns.func(ns)
    except ConfigError as exc:
        print(f"error (config): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DimensionError, ContractError) as exc:
        print(f"error (data): {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error (numeric): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CheckpointError, OSError) as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return EXIT_IO
    except LumidecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
