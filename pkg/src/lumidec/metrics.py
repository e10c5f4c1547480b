"""Full-reference image quality metrics: PSNR, SSIM, MS-SSIM, color angle.

Pure numpy on [0,1]-range images; nothing here participates in gradients.
PSNR of (near-)identical images is reported as a 100 dB cap so serialized
output never contains infinities. SSIM follows the standard single-scale
formulation: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, dynamic
range 1, averaged over valid window positions. Grayscale conversion is the
RGB mean by default ("luma" weights are available); the choice is recorded
in every report header.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import load_pair
from .errors import ContractError, DimensionError
from .validation import as_image_array

log = logging.getLogger(__name__)

PSNR_CAP_DB = 100.0
_MSE_FLOOR = 1e-10
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)

GRAY_MODES = {
    "mean": np.array([1 / 3, 1 / 3, 1 / 3]),
    "luma": np.array([0.299, 0.587, 0.114]),
}


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    aa = as_image_array(a, "a").astype(np.float64)
    bb = as_image_array(b, "b").astype(np.float64)
    if aa.shape != bb.shape:
        raise DimensionError(f"metric inputs must share extents: {aa.shape} vs {bb.shape}")
    return aa, bb


def psnr(a, b) -> float:
    """10*log10(1 / MSE) on unit-range images, capped at 100 dB."""
    aa, bb = _pair(a, b)
    mse = float(np.mean((aa - bb) ** 2))
    if mse < _MSE_FLOOR:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(1.0 / mse))


def _gray(img: np.ndarray, mode: str) -> np.ndarray:
    try:
        w = GRAY_MODES[mode]
    except KeyError:
        raise ContractError(f"unknown grayscale mode '{mode}'; use one of {sorted(GRAY_MODES)}") from None
    return np.tensordot(w, img[0], axes=(0, 0))


def _gaussian_kernel1d(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(ax**2) / (2.0 * sigma**2))
    return k / k.sum()


def _filter_valid(img: np.ndarray, k1d: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation with a symmetric 1-D kernel."""
    size = k1d.size
    H, W = img.shape
    tmp = np.zeros((H, W - size + 1), dtype=np.float64)
    for i, w in enumerate(k1d):
        tmp += w * img[:, i : i + W - size + 1]
    out = np.zeros((H - size + 1, tmp.shape[1]), dtype=np.float64)
    for i, w in enumerate(k1d):
        out += w * tmp[i : i + H - size + 1, :]
    return out


def _ssim_maps(ga: np.ndarray, gb: np.ndarray, k1: float = 0.01, k2: float = 0.03):
    """Luminance and contrast-structure maps over valid window positions."""
    win = _gaussian_kernel1d(SSIM_WINDOW, SSIM_SIGMA)
    mu_a = _filter_valid(ga, win)
    mu_b = _filter_valid(gb, win)
    var_a = _filter_valid(ga * ga, win) - mu_a**2
    var_b = _filter_valid(gb * gb, win) - mu_b**2
    cov = _filter_valid(ga * gb, win) - mu_a * mu_b
    c1, c2 = k1**2, k2**2
    l_map = (2 * mu_a * mu_b + c1) / (mu_a**2 + mu_b**2 + c1)
    cs_map = (2 * cov + c2) / (var_a + var_b + c2)
    return l_map, cs_map


def ssim(a, b, gray_mode: str = "mean") -> float:
    aa, bb = _pair(a, b)
    ga, gb = _gray(aa, gray_mode), _gray(bb, gray_mode)
    if min(ga.shape) < SSIM_WINDOW:
        raise ContractError(f"ssim needs extents >= {SSIM_WINDOW}, got {ga.shape}")
    l_map, cs_map = _ssim_maps(ga, gb)
    return float((l_map * cs_map).mean())


def _downsample2(img: np.ndarray) -> np.ndarray:
    H, W = img.shape
    return img[: H - H % 2, : W - W % 2].reshape(H // 2, 2, W // 2, 2).mean(axis=(1, 3))


def _ms_ssim_flagged(a, b, gray_mode: str = "mean") -> tuple[float, str]:
    aa, bb = _pair(a, b)
    ga, gb = _gray(aa, gray_mode), _gray(bb, gray_mode)
    min_extent = min(ga.shape)
    # deepest usable scale keeps >= SSIM_WINDOW pixels after pooling
    levels = 0
    while levels < len(MSSSIM_WEIGHTS) and min_extent // (2**levels) >= SSIM_WINDOW:
        levels += 1
    if levels < 2:
        if min_extent < SSIM_WINDOW:
            raise ContractError(f"ms_ssim needs extents >= {SSIM_WINDOW}, got {ga.shape}")
        l_map, cs_map = _ssim_maps(ga, gb)
        return float((l_map * cs_map).mean()), "ssim-fallback"
    weights = np.asarray(MSSSIM_WEIGHTS[:levels], dtype=np.float64)
    weights = weights / weights.sum()
    flag = "" if levels == len(MSSSIM_WEIGHTS) else f"reduced-{levels}"
    value = 1.0
    for level in range(levels):
        l_map, cs_map = _ssim_maps(ga, gb)
        if level == levels - 1:
            term = max(float((l_map * cs_map).mean()), 0.0)
        else:
            term = max(float(cs_map.mean()), 0.0)
            ga, gb = _downsample2(ga), _downsample2(gb)
        value *= term ** weights[level]
    return float(value), flag


def ms_ssim(a, b, gray_mode: str = "mean") -> float:
    """Five-scale MS-SSIM with dyadic mean pooling between scales.

    Images too small for the full pyramid use fewer scales with renormalized
    weights; images too small for even two scales fall back to single-scale
    SSIM (the dataset report records a flag either way).
    """
    return _ms_ssim_flagged(a, b, gray_mode)[0]


def mean_color_angle(a, b, floor: float = 1e-6) -> float:
    """Mean per-pixel angle in degrees between RGB vectors (diagnostic metric)."""
    aa, bb = _pair(a, b)
    va = aa[0].reshape(3, -1)
    vb = bb[0].reshape(3, -1)
    na = np.maximum(np.linalg.norm(va, axis=0), floor)
    nb = np.maximum(np.linalg.norm(vb, axis=0), floor)
    cos = np.clip((va * vb).sum(axis=0) / (na * nb), -1.0, 1.0)
    return float(np.degrees(np.arccos(cos)).mean())


# ---------------------------------------------------------------------------
# dataset evaluation
# ---------------------------------------------------------------------------

CSV_HEADER = ["filename", "psnr_db", "ssim", "ms_ssim", "color_angle_deg", "flags"]


@dataclass
class MetricRow:
    filename: str
    psnr_db: float
    ssim: float
    ms_ssim: float
    color_angle_deg: float
    flags: str = ""


@dataclass
class MetricReport:
    gray_mode: str
    rows: list[MetricRow] = field(default_factory=list)

    @property
    def ok_rows(self) -> list[MetricRow]:
        return [r for r in self.rows if "failed" not in r.flags]

    def mean(self, attr: str) -> float:
        rows = self.ok_rows
        if not rows:
            return float("nan")
        return float(np.mean([getattr(r, attr) for r in rows]))

    def summary(self) -> str:
        return (
            f"n={len(self.ok_rows)}/{len(self.rows)} "
            f"psnr={self.mean('psnr_db'):.4f} ssim={self.mean('ssim'):.4f} "
            f"ms_ssim={self.mean('ms_ssim'):.4f} color_angle={self.mean('color_angle_deg'):.4f}"
        )

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            fh.write(f"# gray_mode={self.gray_mode}\n")
            writer.writerow(CSV_HEADER)
            for r in self.rows:
                writer.writerow(
                    [r.filename, f"{r.psnr_db:.6f}", f"{r.ssim:.6f}", f"{r.ms_ssim:.6f}",
                     f"{r.color_angle_deg:.6f}", r.flags]
                )


def _resize_u8(arr: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    from PIL import Image

    W, H = size
    img = Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").resize((W, H), Image.BILINEAR)
    return np.asarray(img, dtype=np.uint8).transpose(2, 0, 1)


def evaluate_dataset(enhancer, samples, csv_path=None, gray_mode: str = "mean", resize=None) -> MetricReport:
    """Score ``enhancer`` (a low-image -> enhanced-image callable) against the
    normal-light references. One failing image marks its row and the run
    continues. Rows keep the deterministic sorted-by-filename order."""
    report = MetricReport(gray_mode=gray_mode)
    for sample in sorted(samples, key=lambda s: s.low.name):
        try:
            low_u8, high_u8 = load_pair(sample)
            if resize is not None:
                low_u8, high_u8 = _resize_u8(low_u8, resize), _resize_u8(high_u8, resize)
            low = low_u8.astype(np.float32)[None] / 255.0
            high = high_u8.astype(np.float32)[None] / 255.0
            out = enhancer(low)
            out_arr = as_image_array(out, "enhanced")
            ms, flag = _ms_ssim_flagged(out_arr, high, gray_mode)
            report.rows.append(
                MetricRow(
                    filename=sample.low.name,
                    psnr_db=psnr(out_arr, high),
                    ssim=ssim(out_arr, high, gray_mode),
                    ms_ssim=ms,
                    color_angle_deg=mean_color_angle(out_arr, high),
                    flags=flag,
                )
            )
        except Exception as exc:  # one bad image must not sink the run
            log.warning("evaluation failed for %s: %s", sample.low.name, exc)
            report.rows.append(MetricRow(sample.low.name, float("nan"), float("nan"), float("nan"), float("nan"), flags=f"failed:{type(exc).__name__}"))
    if csv_path is not None:
        report.write_csv(csv_path)
    return report
