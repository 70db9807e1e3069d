"""Sample records, manifest files and evaluation-mode expansion.

Directory convention per dataset: ``<dataset>/{rgb,depth,thermal,gt}/``
with files matched across subdirectories by stem.

Manifest file: UTF-8, one record per line, tab-separated
``id, dataset, split, modality-set, rgb-path, depth-path, thermal-path, gt-path``
where the modality set is comma-joined (``RGB,D``) and absent modalities
carry ``-``. Relative paths resolve against the manifest's directory.
"""
from __future__ import annotations

import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from ..errors import ConfigurationError, ManifestError
from ..modality import MODALITIES, all_settings, setting_name, sort_modalities

log = logging.getLogger(__name__)

SUBDIRS = {"RGB": "rgb", "D": "depth", "T": "thermal"}
GT_DIR = "gt"


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    modalities: tuple[str, ...]
    expected: int
    subsample: int | None = None  # draw this many at random when more are available


# Training and testing composition of the AM-XD benchmark.
AMXD_TRAIN = (
    DatasetSpec("DUTS-TR", ("RGB",), 5000, subsample=5000),
    DatasetSpec("NJU2K", ("RGB", "D"), 1485),
    DatasetSpec("NLPR", ("RGB", "D"), 700),
    DatasetSpec("DUT-RGBD", ("RGB", "D"), 800),
    DatasetSpec("VT5K", ("RGB", "T"), 2500),
    DatasetSpec("VDT-2048", ("RGB", "D", "T"), 1048),
)
AMXD_TEST = (
    DatasetSpec("DUTS-TE", ("RGB",), 5000),
    DatasetSpec("NJU2K", ("RGB", "D"), 500),
    DatasetSpec("NLPR", ("RGB", "D"), 300),
    DatasetSpec("SIP", ("RGB", "D"), 921),
    DatasetSpec("DUT-RGBD", ("RGB", "D"), 400),
    DatasetSpec("STEREO", ("RGB", "D"), 1000),
    DatasetSpec("VT821", ("RGB", "T"), 821),
    DatasetSpec("VT1K", ("RGB", "T"), 1000),
    DatasetSpec("VT5K", ("RGB", "T"), 2500),
    DatasetSpec("VDT-2048", ("RGB", "D", "T"), 1000),
)
REGISTRY = {"train": AMXD_TRAIN, "test": AMXD_TEST}


@dataclass(frozen=True)
class SampleRecord:
    id: str
    dataset: str
    split: str
    modalities: tuple[str, ...]
    paths: Mapping[str, Path]
    gt: Path

    @property
    def setting(self) -> str:
        return setting_name(self.modalities)

    def has(self, mods: Iterable[str]) -> bool:
        return set(mods) <= set(self.modalities)


@dataclass
class Manifest:
    records: list[SampleRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def summary(self, split: str | None = None) -> dict[str, int]:
        """Record count per modality set (``RGB``, ``RGB-D``, ...), plus ``total``."""
        counts = Counter(r.setting for r in self.records if split is None or r.split == split)
        out = {setting_name(s): counts[setting_name(s)] for s in all_settings() if counts[setting_name(s)]}
        out["total"] = sum(counts.values())
        return out

    def by_id(self) -> dict[str, SampleRecord]:
        return {r.id: r for r in self.records}

    def write(self, path):
        path = Path(path)
        base = path.parent.resolve()
        lines = []
        for r in self.records:
            cols = [r.id, r.dataset, r.split, ",".join(r.modalities)]
            cols += [_rel(r.paths[m], base) if m in r.paths else "-" for m in MODALITIES]
            cols.append(_rel(r.gt, base))
            lines.append("\t".join(cols))
        path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    @classmethod
    def read(cls, path) -> "Manifest":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ManifestError(f"{path}: cannot read manifest ({exc.strerror})") from None
        base = path.parent
        records = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 8:
                raise ManifestError(f"{path}:{lineno}: expected 8 tab-separated fields, got {len(cols)}")
            rid, dataset, split, modset = cols[:4]
            mods = sort_modalities(modset.split(","))
            paths = {}
            for m, p in zip(MODALITIES, cols[4:7]):
                if p != "-":
                    paths[m] = _resolve(p, base)
            if set(paths) != set(mods):
                raise ManifestError(f"{path}:{lineno}: modality set {modset} does not match listed paths")
            records.append(SampleRecord(rid, dataset, split, mods, paths, _resolve(cols[7], base)))
        return cls(records)


def _rel(p: Path, base: Path) -> str:
    p = Path(p).resolve()
    try:
        return p.relative_to(base).as_posix()
    except ValueError:
        return str(p)


def _resolve(p: str, base: Path) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def _stems(directory: Path) -> dict[str, Path]:
    out = {}
    with os.scandir(directory) as it:
        for entry in it:
            if entry.is_file() and not entry.name.startswith("."):
                out[os.path.splitext(entry.name)[0]] = Path(entry.path)
    return out


def _dataset_records(name: str, root: Path, split: str, mods: tuple[str, ...],
                     subsample: int | None, rng: np.random.Generator) -> list[SampleRecord]:
    gt_dir = root / GT_DIR
    if not gt_dir.is_dir():
        raise ManifestError(f"dataset {name}: missing ground-truth directory {gt_dir}")
    files = {}
    for m in mods:
        d = root / SUBDIRS[m]
        if not d.is_dir():
            raise ManifestError(f"dataset {name}: missing {m} modality directory {d}")
        files[m] = _stems(d)
    gts = _stems(gt_dir)
    stems = sorted(gts)
    for m in mods:
        missing = [s for s in stems if s not in files[m]]
        if missing:
            raise ManifestError(f"dataset {name}: no {m} file for sample {missing[0]!r} "
                                f"({len(missing)} missing)")
    if subsample is not None and len(stems) > subsample:
        picked = rng.choice(len(stems), size=subsample, replace=False)
        stems = [stems[i] for i in sorted(picked)]
    return [SampleRecord(f"{name}/{s}", name, split, mods, {m: files[m][s] for m in mods}, gts[s])
            for s in stems]


def build_manifest(roots, split: str, seed: int = 0,
                   rgb_subsample: int | None = 5000, registry=None) -> Manifest:
    """Assemble the records of one split from dataset directories.

    ``roots`` is either a directory holding one subdirectory per dataset or
    a ``{dataset: path}`` mapping. Datasets of the benchmark composition use
    their fixed modality sets, and the large RGB training set is subsampled
    to ``rgb_subsample`` records with ``seed``; any other dataset directory
    is included with the modalities it provides. Absent datasets are skipped.
    """
    if split not in REGISTRY:
        raise ManifestError(f"split must be 'train' or 'test', got {split!r}")
    specs = {s.name: s for s in (registry if registry is not None else REGISTRY[split])}
    if isinstance(roots, Mapping):
        locations = {name: Path(p) for name, p in roots.items()}
    else:
        parent = Path(roots)
        if not parent.is_dir():
            raise ManifestError(f"dataset root {parent} is not a directory")
        locations = {p.name: p for p in sorted(parent.iterdir()) if p.is_dir()}
    rng = np.random.default_rng(seed)
    records = []
    order = [n for n in specs if n in locations] + sorted(n for n in locations if n not in specs)
    for name in order:
        root = locations[name]
        if name in specs:
            spec = specs[name]
            sub = rgb_subsample if spec.subsample is not None else None
            recs = _dataset_records(name, root, split, spec.modalities, sub, rng)
            if len(recs) != spec.expected:
                log.info("dataset %s: %d samples (reference composition has %d)", name, len(recs), spec.expected)
        else:
            mods = tuple(m for m in MODALITIES if (root / SUBDIRS[m]).is_dir())
            if not mods:
                log.warning("skipping %s: no modality subdirectories", root)
                continue
            recs = _dataset_records(name, root, split, mods, None, rng)
        records.extend(recs)
    missing = [n for n in specs if n not in locations]
    if missing and any(n in locations for n in specs):
        log.warning("datasets not found for split %s: %s", split, ", ".join(missing))
    return Manifest(records)


@dataclass
class ModePlan:
    sole: dict[str, list[str]]
    joint: dict[str, list[str]]

    def plan(self, mode: str) -> dict[str, list[str]]:
        if mode not in ("sole", "joint"):
            raise ConfigurationError(f"mode must be 'sole' or 'joint', got {mode!r}")
        return self.sole if mode == "sole" else self.joint


def expand_modes(manifest: Manifest) -> ModePlan:
    """Record ids per evaluation setting.

    Sole mode: setting X lists every record whose modalities include X (the
    record is then evaluated on X alone). Joint mode: each record appears
    once, under its own full modality set.
    """
    sole = {setting_name(s): [r.id for r in manifest if r.has(s)] for s in all_settings()}
    joint: dict[str, list[str]] = {}
    for s in all_settings():
        ids = [r.id for r in manifest if r.setting == setting_name(s)]
        if ids:
            joint[setting_name(s)] = ids
    return ModePlan(sole, joint)
