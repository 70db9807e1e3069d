"""PNG I/O, preprocessing and consistent geometric augmentation."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

from ..errors import DataError
from ..modality import MODALITIES
from .manifest import SampleRecord

MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


def read_image(path) -> np.ndarray:
    """8-bit image as uint8 [H,W] (grayscale) or [H,W,3]."""
    try:
        with Image.open(path) as im:
            if im.mode in ("L", "I", "I;16", "1", "P", "LA"):
                arr = np.asarray(im.convert("L"))
            else:
                arr = np.asarray(im.convert("RGB"))
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: cannot read image ({exc})") from None
    return arr


def write_gray_png(path, values: np.ndarray):
    """Write a [H,W] array in [0,1] (float) or uint8 as an 8-bit grayscale PNG."""
    arr = np.asarray(values)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")


def to_three_channels(arr: np.ndarray) -> np.ndarray:
    """[H,W] or [H,W,3] uint8 -> [H,W,3]; single channels are replicated."""
    if arr.ndim == 2:
        return np.repeat(arr[:, :, None], 3, axis=2)
    return arr


def resize(arr: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize of a float [H,W] or [H,W,C] array to ``size`` = (h, w)."""
    h, w = size
    if arr.shape[:2] == (h, w):
        return arr.astype(np.float32, copy=True)
    if arr.ndim == 2:
        return np.asarray(Image.fromarray(arr.astype(np.float32)).resize((w, h), Image.BILINEAR))
    return np.stack([resize(arr[:, :, c], size) for c in range(arr.shape[2])], axis=2)


def normalize(img01: np.ndarray) -> np.ndarray:
    """[H,W,3] in [0,1] -> channel-first, mean/std normalised [3,H,W]."""
    return ((img01 - MEAN) / STD).transpose(2, 0, 1).astype(np.float32)


@dataclass(frozen=True)
class Augmentation:
    base_size: int       # images resized to base x base before cropping
    offset: tuple[int, int]
    flip: bool

    def apply(self, arr: np.ndarray, size: int) -> np.ndarray:
        oy, ox = self.offset
        out = arr[oy:oy + size, ox:ox + size]
        if self.flip:
            out = out[:, ::-1]
        return np.ascontiguousarray(out)

    def invert(self, arr: np.ndarray) -> np.ndarray:
        """Undo the flip; the result aligns with the crop window of the base-size image."""
        return np.ascontiguousarray(arr[:, ::-1]) if self.flip else arr


@dataclass
class LoadedSample:
    record_id: str
    images: dict[str, np.ndarray]   # modality -> [3,H,W] float32
    gt: np.ndarray                  # [1,H,W] float32, binary
    augmentation: Augmentation | None


def draw_augmentation(size: int, rng: np.random.Generator, margin: int | None = None) -> Augmentation:
    margin = size // 8 if margin is None else margin
    base = size + margin
    oy, ox = (int(v) for v in rng.integers(0, margin + 1, size=2))
    return Augmentation(base, (oy, ox), bool(rng.integers(0, 2)))


def load_sample(record: SampleRecord, size: int, augment: bool = False,
                rng: np.random.Generator | None = None,
                modalities: Iterable[str] | None = None) -> LoadedSample:
    """Read, resize, optionally augment and normalise one record.

    Every modality and the ground truth go through the same crop and flip.
    ``modalities`` restricts loading to a subset of the record's modalities.
    """
    mods = tuple(m for m in MODALITIES if m in (record.modalities if modalities is None else set(modalities)))
    missing = [m for m in mods if m not in record.paths]
    if missing:
        raise DataError(f"record {record.id}: no {missing[0]} image")
    raw = {m: read_image(record.paths[m]) for m in mods}
    gt_raw = read_image(record.gt)
    if gt_raw.ndim == 3:
        gt_raw = gt_raw[:, :, 0]
    ref = gt_raw.shape[:2]
    for m, arr in raw.items():
        if arr.shape[:2] != ref:
            raise DataError(f"{record.paths[m]}: size {arr.shape[:2]} differs from ground truth {ref}")

    aug = draw_augmentation(size, rng) if augment else None
    target = (aug.base_size,) * 2 if aug else (size, size)
    images = {}
    for m, arr in raw.items():
        img = resize(to_three_channels(arr).astype(np.float32) / 255.0, target)
        if aug:
            img = aug.apply(img, size)
        images[m] = normalize(img)
    gt = (resize((gt_raw >= 128).astype(np.float32), target) >= 0.5).astype(np.float32)
    if aug:
        gt = aug.apply(gt, size)
    return LoadedSample(record.id, images, gt[None], aug)


def load_gt(record: SampleRecord, size: int) -> np.ndarray:
    """Binary ground truth [H,W] at ``size`` x ``size``."""
    gt_raw = read_image(record.gt)
    if gt_raw.ndim == 3:
        gt_raw = gt_raw[:, :, 0]
    return (resize((gt_raw >= 128).astype(np.float32), (size, size)) >= 0.5).astype(np.float32)


def load_image_tensor(path: Path, size: int) -> np.ndarray:
    """One image file as a normalised [1,3,size,size] array."""
    arr = to_three_channels(read_image(path)).astype(np.float32) / 255.0
    return normalize(resize(arr, (size, size)))[None]
