"""Paired-dataset ingestion, patch sampling, and dihedral augmentation.

Dataset layout on disk: ``root/low/*.png`` and ``root/high/*.png``, 8-bit RGB,
paired by identical filename. Crops and augmentations are always applied
identically to both images of a pair.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .autodiff import Tensor
from .errors import ContractError, DataError, DecodeError

log = logging.getLogger(__name__)

DIHEDRAL_CODES = range(8)  # rotation k = code % 4, flip = code // 4


@dataclass(frozen=True)
class PairedSample:
    low: Path
    high: Path
    dataset_id: str


# ---------------------------------------------------------------------------
# PNG io
# ---------------------------------------------------------------------------

def load_png(path) -> Tensor:
    """Decode an 8-bit RGB PNG into a (1,3,H,W) float tensor, bytes mapped v/255."""
    return Tensor(_load_u8(Path(path)).astype(np.float32)[None] / 255.0)


def save_png(tensor, path) -> None:
    """Quantize values (clamped to [0,1]) to bytes via round(x*255) and write RGB PNG."""
    arr = tensor.data if isinstance(tensor, Tensor) else np.asarray(tensor)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 4:
        arr = arr[0]
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ContractError(f"save_png expects a (1,3,H,W) or (3,H,W) image, got {arr.shape}")
    u8 = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(u8.transpose(1, 2, 0), mode="RGB").save(Path(path), format="PNG")


def _load_u8(path: Path) -> np.ndarray:
    """(3,H,W) uint8 planes of an RGB PNG; cached because training revisits files."""
    return _load_u8_cached(str(path))


@lru_cache(maxsize=256)
def _load_u8_cached(path_str: str) -> np.ndarray:
    try:
        with Image.open(path_str) as img:
            if img.mode != "RGB":
                raise DecodeError(f"{path_str}: unsupported mode '{img.mode}', need 8-bit RGB")
            arr = np.asarray(img, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"{path_str}: cannot decode ({exc})") from exc
    out = np.ascontiguousarray(arr.transpose(2, 0, 1))
    out.flags.writeable = False
    return out


# ---------------------------------------------------------------------------
# dataset scanning
# ---------------------------------------------------------------------------

def scan_dataset(root, low_dir: str = "low", high_dir: str = "high") -> list[PairedSample]:
    """Pair files by identical name across the two directories, sorted
    lexicographically. Unpaired files are logged and skipped; an empty
    intersection is a dataset error."""
    root = Path(root)
    low_root, high_root = root / low_dir, root / high_dir
    for d in (low_root, high_root):
        if not d.is_dir():
            raise DataError(f"dataset directory missing: {d}")
    low_names = {p.name for p in low_root.iterdir() if p.is_file()}
    high_names = {p.name for p in high_root.iterdir() if p.is_file()}
    common = sorted(low_names & high_names)
    for name in sorted(low_names ^ high_names):
        side = low_dir if name in low_names else high_dir
        log.warning("unpaired file skipped: %s (only under %s/)", name, side)
    if not common:
        raise DataError(f"no paired files between {low_root} and {high_root}")
    return [PairedSample(low_root / n, high_root / n, dataset_id=root.name) for n in common]


def load_pair(sample: PairedSample) -> tuple[np.ndarray, np.ndarray]:
    """Decode both sides as (3,H,W) uint8, checking the extents agree."""
    low = _load_u8(sample.low)
    high = _load_u8(sample.high)
    if low.shape != high.shape:
        raise DataError(f"pair '{sample.low.name}': extents differ, {low.shape[1:]} vs {high.shape[1:]}")
    return low, high


# ---------------------------------------------------------------------------
# dihedral group
# ---------------------------------------------------------------------------

def dihedral(arr: np.ndarray, code: int) -> np.ndarray:
    """Apply one of the 8 square symmetries to the trailing (H, W) axes."""
    if not 0 <= code < 8:
        raise ContractError(f"dihedral code must be in [0,8), got {code}")
    out = np.rot90(arr, k=code % 4, axes=(-2, -1))
    if code >= 4:
        out = out[..., ::-1]
    return np.ascontiguousarray(out)


def dihedral_inverse_code(code: int) -> int:
    """Code of the inverse element: rotations invert, flip-rotations are involutions."""
    if not 0 <= code < 8:
        raise ContractError(f"dihedral code must be in [0,8), got {code}")
    if code < 4:
        return (4 - code) % 4
    return code


# ---------------------------------------------------------------------------
# padding and patch sampling
# ---------------------------------------------------------------------------

def reflect_pad(image, multiple: int) -> tuple[Tensor, tuple[int, int]]:
    """Pad right/bottom by reflection until H and W divide ``multiple``.

    Returns the padded tensor and the original extents; cropping back to
    those extents inverts the pad exactly.
    """
    arr = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float32)
    _, _, H, W = arr.shape
    ph = (-H) % multiple
    pw = (-W) % multiple
    if ph == 0 and pw == 0:
        return (image if isinstance(image, Tensor) else Tensor(arr)), (H, W)
    out = arr
    while ph > 0 or pw > 0:
        # reflect supports pads < current extent; loop for tiny images
        step_h = min(ph, out.shape[2] - 1)
        step_w = min(pw, out.shape[3] - 1)
        out = np.pad(out, ((0, 0), (0, 0), (0, step_h), (0, step_w)), mode="reflect")
        ph -= step_h
        pw -= step_w
    return Tensor(out, dtype=arr.dtype), (H, W)


def crop_back(tensor, extents: tuple[int, int]) -> Tensor:
    H, W = extents
    arr = tensor.data if isinstance(tensor, Tensor) else np.asarray(tensor)
    return Tensor(arr[:, :, :H, :W], dtype=arr.dtype)


@dataclass
class PatchBatch:
    low: Tensor  # (B,3,P,P)
    high: Tensor  # (B,3,P,P)
    augmentation_codes: np.ndarray  # (B,) ints in [0,8)


def _pad_u8_to(arr: np.ndarray, patch: int) -> np.ndarray:
    """Reflect-pad a (3,H,W) uint8 plane so both extents reach ``patch``."""
    out = arr
    while out.shape[1] < patch or out.shape[2] < patch:
        ph = min(max(patch - out.shape[1], 0), out.shape[1] - 1)
        pw = min(max(patch - out.shape[2], 0), out.shape[2] - 1)
        if ph == 0 and pw == 0:
            break
        out = np.pad(out, ((0, 0), (0, ph), (0, pw)), mode="reflect")
    return out


def sample_batch(
    samples: list[PairedSample],
    patch: int,
    batch: int,
    rng,
    indices=None,
) -> PatchBatch:
    """Cut ``batch`` augmented patch pairs.

    Crop coordinates are uniform and shared across each pair; the dihedral
    code is drawn uniformly from all 8 symmetries. ``rng`` is a seed or a
    numpy Generator; a fixed seed reproduces the batch exactly. ``indices``
    pins which samples are used (the training engine passes an epoch plan);
    by default samples are drawn uniformly with replacement.
    """
    if not samples:
        raise ContractError("sample_batch needs a nonempty sample list")
    gen = np.random.default_rng(rng) if isinstance(rng, (int, np.integer)) else rng
    if indices is None:
        indices = gen.integers(0, len(samples), size=batch)
    elif len(indices) != batch:
        raise ContractError(f"indices length {len(indices)} != batch {batch}")
    lows = np.empty((batch, 3, patch, patch), dtype=np.float32)
    highs = np.empty((batch, 3, patch, patch), dtype=np.float32)
    codes = np.empty(batch, dtype=np.int64)
    for i, idx in enumerate(indices):
        low_u8, high_u8 = load_pair(samples[int(idx)])
        low_u8 = _pad_u8_to(low_u8, patch)
        high_u8 = _pad_u8_to(high_u8, patch)
        _, H, W = low_u8.shape
        y = int(gen.integers(0, H - patch + 1))
        x = int(gen.integers(0, W - patch + 1))
        code = int(gen.integers(0, 8))
        codes[i] = code
        lo = dihedral(low_u8[:, y : y + patch, x : x + patch], code)
        hi = dihedral(high_u8[:, y : y + patch, x : x + patch], code)
        lows[i] = lo.astype(np.float32) / 255.0
        highs[i] = hi.astype(np.float32) / 255.0
    return PatchBatch(low=Tensor(lows), high=Tensor(highs), augmentation_codes=codes)


def epoch_plan(n_samples: int, batch: int, steps: int, gen: np.random.Generator) -> list[np.ndarray]:
    """Shuffled index batches for one epoch, wrapping so every sample appears
    at least once whenever steps * batch >= n_samples."""
    order = gen.permutation(n_samples)
    need = steps * batch
    reps = int(np.ceil(need / n_samples))
    tiled = np.concatenate([order] * reps)[:need]
    return [tiled[i * batch : (i + 1) * batch] for i in range(steps)]
