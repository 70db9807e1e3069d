"""Empty-file dataset trees shaped like the benchmark composition."""
from pathlib import Path

from amsn.data.manifest import GT_DIR, REGISTRY, SUBDIRS


def make_stub_tree(root, split: str, counts: dict[str, int] | None = None) -> Path:
    """One directory per dataset of ``split``, with zero-byte files matched by stem."""
    root = Path(root)
    for spec in REGISTRY[split]:
        n = (counts or {}).get(spec.name, spec.expected)
        for sub in [GT_DIR] + [SUBDIRS[m] for m in spec.modalities]:
            d = root / spec.name / sub
            d.mkdir(parents=True, exist_ok=True)
            for i in range(n):
                (d / f"{i:05d}.png").touch()
    return root
