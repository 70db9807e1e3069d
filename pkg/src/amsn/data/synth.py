"""Deterministic synthetic multi-modal saliency scenes.

Each scene has one to three geometric objects over a textured background,
rendered three ways: a colour image, a depth map (smooth ramp with the
objects at a distinct nearer depth) and a thermal map (hot objects, blurred).
A fixed schedule corrupts some colour images (low contrast or darkness) and
some depth maps (noise or flattened objects), so single modalities are at
times insufficient on their own. The output uses the same directory layout
and manifest format as real datasets.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from PIL import Image

from ..errors import ConfigurationError
from ..modality import MODALITIES, parse_setting, setting_name
from .manifest import GT_DIR, SUBDIRS, Manifest, SampleRecord

DEFAULT_TYPES = ("RGB", "RGB-D", "RGB-T", "RGB-D-T")
META_FILE = "meta.tsv"
OBJECT_RADIUS = (0.12, 0.24)  # fraction of image size
COVERAGE = (0.12, 0.35)       # accepted salient area fraction


@dataclass
class Scene:
    rgb: np.ndarray      # [H,W,3] uint8
    depth: np.ndarray    # [H,W] uint8
    thermal: np.ndarray  # [H,W] uint8
    gt: np.ndarray       # [H,W] uint8, 0 or 255
    rgb_corrupted: bool
    depth_corrupted: bool


def _gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    radius = max(1, int(3 * sigma))
    x = np.arange(-radius, radius + 1)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    k /= k.sum()
    padded = np.pad(img, radius, mode="edge")
    rows = np.apply_along_axis(lambda r: np.convolve(r, k, mode="valid"), 1, padded)
    return np.apply_along_axis(lambda c: np.convolve(c, k, mode="valid"), 0, rows)


def _smooth_noise(rng, size, cells=4):
    coarse = rng.random((cells + 1, cells + 1))
    img = np.asarray(Image.fromarray(coarse.astype(np.float32)).resize((size, size), Image.BILINEAR))
    return img.astype(np.float64)


def _shape_mask(rng, size) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    kind = rng.integers(0, 3)
    r = rng.uniform(*OBJECT_RADIUS) * size
    cy, cx = rng.uniform(r, size - r, size=2)
    if kind == 0:
        ry = r * rng.uniform(0.7, 1.0)
        return ((yy - cy) / ry) ** 2 + ((xx - cx) / r) ** 2 <= 1.0
    if kind == 1:
        hy = r * rng.uniform(0.6, 1.0)
        return (np.abs(yy - cy) <= hy) & (np.abs(xx - cx) <= r)
    # upright triangle
    top, base = cy - r, cy + r
    half = (yy - top) / (2 * r) * r
    return (yy >= top) & (yy <= base) & (np.abs(xx - cx) <= half)


def render_scene(rng: np.random.Generator, size: int, corrupt_rgb: bool, corrupt_depth: bool) -> Scene:
    # redraw layouts until the objects cover a typical salient fraction
    for _ in range(100):
        mask = np.zeros((size, size), dtype=bool)
        for _ in range(int(rng.integers(1, 4))):
            mask |= _shape_mask(rng, size)
        if COVERAGE[0] <= mask.mean() <= COVERAGE[1]:
            break
    else:
        mask = np.zeros((size, size), dtype=bool)
        mask[size // 4: 3 * size // 4, size // 3: 2 * size // 3] = True

    # colour
    texture = 0.6 + 0.4 * _smooth_noise(rng, size, cells=int(rng.integers(3, 8)))
    bg_color = rng.uniform(0.2, 0.8, size=3)
    obj_color = rng.uniform(0.0, 1.0, size=3)
    if np.abs(obj_color - bg_color).max() < 0.35:
        obj_color = np.clip(1.0 - bg_color, 0, 1)
    if corrupt_rgb:
        if rng.random() < 0.5:
            obj_color = bg_color + rng.uniform(-0.06, 0.06, size=3)  # low contrast
        else:
            obj_color = obj_color * 0.2
            bg_color = bg_color * 0.2  # darkness
    rgb = texture[:, :, None] * bg_color
    rgb = np.where(mask[:, :, None], obj_color * (0.9 + 0.1 * texture[:, :, None]), rgb)
    rgb = rgb + rng.normal(0, 0.02, size=rgb.shape)

    # depth: brighter is nearer
    angle = rng.uniform(0, 2 * np.pi)
    yy, xx = np.mgrid[0:size, 0:size] / size
    ramp = 0.2 + 0.35 * (np.cos(angle) * xx + np.sin(angle) * yy + 1) / 2
    obj_depth = rng.uniform(0.75, 0.95)
    if corrupt_depth:
        obj_depth = float(ramp.mean()) + rng.uniform(0.0, 0.05)
    depth = np.where(mask, obj_depth, ramp)
    depth = depth + rng.normal(0, 0.12 if corrupt_depth else 0.01, size=depth.shape)

    # thermal
    thermal = 0.15 + 0.1 * _smooth_noise(rng, size, cells=3)
    thermal = np.where(mask, rng.uniform(0.75, 0.95), thermal)
    thermal = _gaussian_blur(thermal, 1.2) + rng.normal(0, 0.01, size=thermal.shape)

    def u8(a):
        return np.clip(np.rint(a * 255), 0, 255).astype(np.uint8)

    return Scene(u8(rgb), u8(depth), u8(thermal), (mask * 255).astype(np.uint8), corrupt_rgb, corrupt_depth)


def corruption_schedule(index: int) -> tuple[bool, bool]:
    """(rgb corrupted, depth corrupted) for the index-th scene of a type."""
    return index % 3 == 2, index % 4 == 1


def _save(path: Path, arr: np.ndarray):
    Image.fromarray(arr).save(path, format="PNG")


def synth_generate(out_dir, seed: int = 0, count_per_type: int | Mapping[str, int] = 4,
                   size: int = 64, types=DEFAULT_TYPES) -> Manifest:
    """Write a synthetic dataset tree and ``manifest.tsv`` under ``out_dir``.

    One dataset directory ``SYN-<type>`` is written per input type, holding
    only that type's modalities. Output is byte-identical for a given seed.
    """
    if size % 32:
        raise ConfigurationError(f"size must be divisible by 32, got {size}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(count_per_type, Mapping):
        counts = {setting_name(parse_setting(t)): n for t, n in count_per_type.items()}
    else:
        counts = {setting_name(parse_setting(t)): count_per_type for t in types}
    rng = np.random.default_rng(seed)
    records, meta = [], []
    for type_name, n in counts.items():
        mods = parse_setting(type_name)
        dataset = f"SYN-{type_name}"
        root = out / dataset
        for d in [GT_DIR] + [SUBDIRS[m] for m in mods]:
            (root / d).mkdir(parents=True, exist_ok=True)
        for i in range(n):
            bad_rgb, bad_depth = corruption_schedule(i)
            scene = render_scene(rng, size, bad_rgb, bad_depth)
            stem = f"{i:05d}"
            images = {"RGB": scene.rgb, "D": scene.depth, "T": scene.thermal}
            paths = {}
            for m in mods:
                p = root / SUBDIRS[m] / f"{stem}.png"
                _save(p, images[m])
                paths[m] = p
            gt_path = root / GT_DIR / f"{stem}.png"
            _save(gt_path, scene.gt)
            rid = f"{dataset}/{stem}"
            records.append(SampleRecord(rid, dataset, "train", mods, paths, gt_path))
            meta.append(f"{rid}\t{int(scene.rgb_corrupted)}\t{int(scene.depth_corrupted)}")
    manifest = Manifest(records)
    manifest.write(out / "manifest.tsv")
    (out / META_FILE).write_text("\n".join(meta) + "\n", encoding="utf-8")
    return manifest


def read_meta(out_dir) -> dict[str, tuple[bool, bool]]:
    flags = {}
    for line in (Path(out_dir) / META_FILE).read_text(encoding="utf-8").splitlines():
        rid, rgb_bad, depth_bad = line.split("\t")
        flags[rid] = (rgb_bad == "1", depth_bad == "1")
    return flags


def iou(a: np.ndarray, b: np.ndarray) -> float:
    a, b = a.astype(bool), b.astype(bool)
    union = np.count_nonzero(a | b)
    return np.count_nonzero(a & b) / union if union else 1.0


def thermal_recovers_gt(thermal: np.ndarray, gt: np.ndarray, min_iou: float = 0.5) -> bool:
    """Whether thresholding the thermal map midway between its extremes finds the objects."""
    t = thermal.astype(np.float64)
    tau = (t.min() + t.max()) / 2
    return iou(t > tau, gt > 127) > min_iou


__all__ = ["synth_generate", "render_scene", "read_meta", "thermal_recovers_gt", "MODALITIES"]
