"""Line-oriented corpus manifests and seeded train/test splits.

Format (tab separated, one file per line)::

    # entrowave-manifest v1
    <path>\t<label>\t<split>\t<spec>

``split`` is ``train``, ``test`` or ``-``; ``spec`` is ``-`` or a one-line
JSON object (synthetic files record their generating spec there).
Relative paths are resolved against the manifest's directory.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

MANIFEST_HEADER = "# entrowave-manifest v1"
SPLITS = ("train", "test")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    split: str | None = None
    spec: dict | None = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"{self.path}: label must be 0 or 1")
        if self.split not in (None,) + SPLITS:
            raise ValueError(f"{self.path}: split must be train, test or empty")


@dataclass
class CorpusManifest:
    entries: list = field(default_factory=list)
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        paths = [e.path for e in self.entries]
        if len(set(paths)) != len(paths):
            raise ValueError("manifest paths must be unique")
        self.root = Path(self.root)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p

    def read_bytes(self, entry: ManifestEntry) -> bytes:
        return self.resolve(entry).read_bytes()

    def select(self, split: str | None) -> list:
        """Entries with the given split tag (all entries for None)."""
        if split is None:
            return list(self.entries)
        return [e for e in self.entries if e.split == split]

    def write(self, path) -> None:
        path = Path(path)
        lines = [MANIFEST_HEADER]
        for e in self.entries:
            spec = "-" if e.spec is None else json.dumps(e.spec, sort_keys=True, separators=(",", ":"))
            lines.append("\t".join([e.path, str(e.label), e.split or "-", spec]))
        path.write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path) -> "CorpusManifest":
        path = Path(path)
        lines = path.read_text().splitlines()
        if not lines or lines[0].strip() != MANIFEST_HEADER:
            raise ValueError(f"{path}: not an entrowave manifest")
        entries = []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) < 2:
                raise ValueError(f"{path}:{lineno}: expected path and label")
            split = cols[2] if len(cols) > 2 and cols[2] != "-" else None
            spec = json.loads(cols[3]) if len(cols) > 3 and cols[3] != "-" else None
            entries.append(ManifestEntry(cols[0], int(cols[1]), split, spec))
        return cls(entries=entries, root=path.parent)


def split_corpus(manifest: CorpusManifest, train_fraction: float = 0.8, seed: int = 0) -> CorpusManifest:
    """Tag entries train/test, stratified by label, deterministically from ``seed``."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    tags = [None] * len(manifest.entries)
    for label in (0, 1):
        idx = [i for i, e in enumerate(manifest.entries) if e.label == label]
        n_train = int(math.floor(train_fraction * len(idx) + 0.5))
        for rank, i in enumerate(rng.permutation(idx) if idx else []):
            tags[int(i)] = "train" if rank < n_train else "test"
    entries = [replace(e, split=t) for e, t in zip(manifest.entries, tags)]
    return CorpusManifest(entries=entries, root=manifest.root)


def thread_count() -> int:
    """Worker threads for batch extraction (``ENTROWAVE_THREADS``, default 1)."""
    try:
        return max(1, int(os.environ.get("ENTROWAVE_THREADS", "1")))
    except ValueError:
        return 1
