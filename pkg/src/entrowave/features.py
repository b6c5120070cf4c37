"""Sparse binary features from strings, entropy statistics and energy spectra.

Feature ids are laid out in three contiguous blocks::

    [ strings | wavelet bins | entropy bins ]

The wavelet block reserves ``J_max * (J_max + 1) / 2`` continuous slots:
size groups in ascending ``J``, each followed by its ``J`` energies from
coarse to fine.  A file only fills the slots of its own group.  Every
continuous slot is then split into quantile bins and exactly one bin
indicator fires per filled slot.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .binformat import DEFAULT_MIN_STRING_LEN, extract_strings, section_entropy_streams
from .entropy import DEFAULT_CHUNK_SIZE, EntropyStream, chunk_entropies
from .wavelet import EnergySpectrum, stream_spectrum

HIGH_ENTROPY_BITS = 6.5
STAT_NAMES = ("mean", "std", "snr", "max", "pct_high", "pct_zero", "length", "length_sq")
MODES = {
    # mode: (wavelet, entropy)
    "strings": (False, False),
    "strings+wavelet": (True, False),
    "strings+entropy": (False, True),
    "strings+entropy+wavelet": (True, True),
}
DICT_FORMAT = "entrowave-feature-dictionary"
DICT_VERSION = 1


def summary_entropy_features(stream) -> np.ndarray:
    """``(mean, std, snr, max, pct_high, pct_zero, T, T**2)`` of a stream.

    ``snr`` is mean/std, or 0 when the stream is flat.  Percentages are
    fractions; "high" means at least 6.5 bits.
    """
    v = np.asarray(stream.values if isinstance(stream, EntropyStream) else stream, dtype=float)
    if v.size == 0:
        raise ValueError("empty stream")
    mean = v.mean()
    std = v.std()
    snr = mean / std if std >= 1e-12 else 0.0
    T = float(v.size)
    return np.array([
        mean,
        std,
        snr,
        v.max(),
        np.mean(v >= HIGH_ENTROPY_BITS),
        np.mean(v == 0.0),
        T,
        T * T,
    ])


def wavelet_block_offset(J: int) -> int:
    """Position of size group ``J``'s first energy inside the wavelet block."""
    return (J - 1) * J // 2


def wavelet_group_features(spectrum, j_max: int) -> np.ndarray:
    """Place a spectrum into its size group's slots of the wavelet block."""
    e = spectrum.energies if isinstance(spectrum, EnergySpectrum) else np.asarray(spectrum, float)
    J = e.size
    if J > j_max:
        raise ValueError("unseen size group")
    out = np.zeros(j_max * (j_max + 1) // 2)
    start = wavelet_block_offset(J)
    out[start:start + J] = e
    return out


def quantile_thresholds(values, n_bins: int) -> np.ndarray:
    """Cut points splitting the nonzero ``values`` into ``n_bins`` quantile bins.

    Quantiles use midpoint interpolation; duplicate cut points are merged,
    so fewer than ``n_bins - 1`` thresholds may come back.
    """
    v = np.asarray(values, dtype=float)
    v = v[v != 0]
    if v.size == 0 or n_bins < 2:
        return np.zeros(0)
    qs = np.quantile(v, np.arange(1, n_bins) / n_bins, method="midpoint")
    return np.unique(qs)


def bin_features(values, thresholds: Sequence) -> list[int]:
    """Indices of the active bin indicators for a vector of continuous values.

    Feature ``i`` owns ``len(thresholds[i]) + 1`` consecutive indicators for
    the intervals ``(-inf, t1], (t1, t2], ..., (tK, inf)``.  NaN marks a
    structural zero and activates nothing.
    """
    values = np.asarray(values, dtype=float)
    if values.size != len(thresholds):
        raise ValueError("one threshold array per value required")
    out = []
    offset = 0
    for v, t in zip(values, thresholds):
        if not np.isnan(v):
            out.append(offset + int(np.searchsorted(t, v, side="left")))
        offset += len(t) + 1
    return out


@dataclass(frozen=True)
class FileFeatures:
    """Raw (unbinned) measurements of one file."""

    strings: frozenset
    spectrum: EnergySpectrum | None
    section_stats: dict


def _unique_names(names):
    seen = Counter()
    out = []
    for name in names:
        seen[name] += 1
        out.append(name if seen[name] == 1 else f"{name}#{seen[name]}")
    return out


def extract_file_features(
    data: bytes,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    min_string_len: int = DEFAULT_MIN_STRING_LEN,
) -> FileFeatures:
    """Strings, whole-file energy spectrum and per-section entropy statistics."""
    data = bytes(data)
    strings = frozenset(extract_strings(data, min_string_len))
    whole = chunk_entropies(data, chunk_size)
    spectrum = stream_spectrum(whole) if whole.size >= 2 else None
    pairs = section_entropy_streams(data, chunk_size)
    names = _unique_names([sec.name for sec, _ in pairs])
    stats = {name: summary_entropy_features(stream) for name, (_, stream) in zip(names, pairs)}
    return FileFeatures(strings=strings, spectrum=spectrum, section_stats=stats)


@dataclass(frozen=True)
class FeatureVector:
    indices: tuple
    sample_id: str | None = None
    label: int | None = None

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("indices must be strictly increasing")
        if idx and idx[0] < 0:
            raise ValueError("indices must be non-negative")
        object.__setattr__(self, "indices", idx)


@dataclass
class FeatureDictionary:
    """Frozen mapping from raw measurements to binary feature ids."""

    mode: str
    strings: list = field(default_factory=list)
    j_max: int = 0
    wavelet_thresholds: list = field(default_factory=list)
    sections: list = field(default_factory=list)
    entropy_thresholds: list = field(default_factory=list)
    chunk_size: int = DEFAULT_CHUNK_SIZE
    min_string_len: int = DEFAULT_MIN_STRING_LEN
    bins_per_feature: int = 10

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        self.wavelet_thresholds = [np.asarray(t, dtype=float) for t in self.wavelet_thresholds]
        self.entropy_thresholds = [np.asarray(t, dtype=float) for t in self.entropy_thresholds]
        for t in self.wavelet_thresholds + self.entropy_thresholds:
            if np.any(np.diff(t) <= 0):
                raise ValueError("bin thresholds must be strictly increasing")
        if len(self.wavelet_thresholds) != self.j_max * (self.j_max + 1) // 2:
            raise ValueError("wavelet thresholds do not match j_max")
        if len(self.entropy_thresholds) != len(self.sections) * len(STAT_NAMES):
            raise ValueError("entropy thresholds do not match sections")
        self.string_index = {s: i for i, s in enumerate(self.strings)}
        self._n_wavelet = sum(len(t) + 1 for t in self.wavelet_thresholds)
        self._n_entropy = sum(len(t) + 1 for t in self.entropy_thresholds)

    @property
    def uses_wavelet(self) -> bool:
        return MODES[self.mode][0]

    @property
    def uses_entropy(self) -> bool:
        return MODES[self.mode][1]

    @property
    def n_features(self) -> int:
        return len(self.strings) + self._n_wavelet + self._n_entropy

    def blocks(self) -> dict:
        """``{block name: (start, stop)}`` id ranges."""
        s = len(self.strings)
        w = s + self._n_wavelet
        return {"strings": (0, s), "wavelet": (s, w), "entropy": (w, w + self._n_entropy)}

    def block_of(self, feature_id: int) -> str:
        for name, (a, b) in self.blocks().items():
            if a <= feature_id < b:
                return name
        raise IndexError(f"feature id {feature_id} out of range")

    def feature_name(self, feature_id: int) -> str:
        """Human-readable description of a feature id."""
        block = self.block_of(feature_id)
        local = feature_id - self.blocks()[block][0]
        if block == "strings":
            return f"string:{self.strings[local]}"
        thresholds = self.wavelet_thresholds if block == "wavelet" else self.entropy_thresholds
        slot = 0
        while local >= len(thresholds[slot]) + 1:
            local -= len(thresholds[slot]) + 1
            slot += 1
        if block == "wavelet":
            J = 1
            while wavelet_block_offset(J + 1) <= slot:
                J += 1
            return f"wavelet:J={J}:level={slot - wavelet_block_offset(J) + 1}:bin={local}"
        section = self.sections[slot // len(STAT_NAMES)]
        return f"entropy:{section}:{STAT_NAMES[slot % len(STAT_NAMES)]}:bin={local}"

    def to_dict(self) -> dict:
        return {
            "format": DICT_FORMAT,
            "version": DICT_VERSION,
            "mode": self.mode,
            "chunk_size": self.chunk_size,
            "min_string_len": self.min_string_len,
            "bins_per_feature": self.bins_per_feature,
            "counts": {
                "strings": len(self.strings),
                "wavelet": self._n_wavelet,
                "entropy": self._n_entropy,
                "total": self.n_features,
            },
            "j_max": self.j_max,
            "wavelet_thresholds": [t.tolist() for t in self.wavelet_thresholds],
            "sections": list(self.sections),
            "entropy_thresholds": [t.tolist() for t in self.entropy_thresholds],
            "strings": list(self.strings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureDictionary":
        if d.get("format") != DICT_FORMAT:
            raise ValueError("not a feature dictionary")
        if d.get("version") != DICT_VERSION:
            raise ValueError(f"unsupported dictionary version {d.get('version')}")
        out = cls(
            mode=d["mode"],
            strings=d["strings"],
            j_max=d["j_max"],
            wavelet_thresholds=d["wavelet_thresholds"],
            sections=d["sections"],
            entropy_thresholds=d["entropy_thresholds"],
            chunk_size=d["chunk_size"],
            min_string_len=d["min_string_len"],
            bins_per_feature=d["bins_per_feature"],
        )
        if out.n_features != d["counts"]["total"]:
            raise ValueError("dictionary feature count does not match its layout")
        return out

    def dump(self, fh) -> None:
        json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")

    @classmethod
    def load(cls, fh) -> "FeatureDictionary":
        return cls.from_dict(json.load(fh))


def _as_file_features(sample, chunk_size, min_string_len) -> FileFeatures:
    if isinstance(sample, FileFeatures):
        return sample
    return extract_file_features(sample, chunk_size, min_string_len)


def build_dictionary(
    samples: Iterable,
    mode: str = "strings+entropy+wavelet",
    top_n_strings: int = 1000,
    bins_per_feature: int = 10,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    min_string_len: int = DEFAULT_MIN_STRING_LEN,
    max_sections: int = 16,
) -> FeatureDictionary:
    """Learn the string table, section list and bin cut points.

    ``samples`` are raw file contents or :class:`FileFeatures`, and should
    come from the training split only.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    feats = [_as_file_features(s, chunk_size, min_string_len) for s in samples]
    if not feats:
        raise ValueError("empty corpus")
    use_wavelet, use_entropy = MODES[mode]

    doc_freq = Counter()
    for f in feats:
        doc_freq.update(f.strings)
    ranked = sorted(doc_freq.items(), key=lambda kv: (-kv[1], kv[0]))
    strings = [s for s, _ in ranked[:max(top_n_strings, 0)]]

    j_max = 0
    wavelet_thresholds = []
    if use_wavelet:
        spectra = [f.spectrum for f in feats if f.spectrum is not None]
        j_max = max((s.J for s in spectra), default=0)
        for J in range(1, j_max + 1):
            group = np.array([s.energies for s in spectra if s.J == J]).reshape(-1, J)
            for j in range(J):
                wavelet_thresholds.append(quantile_thresholds(group[:, j], bins_per_feature))

    sections = []
    entropy_thresholds = []
    if use_entropy:
        sec_freq = Counter()
        for f in feats:
            sec_freq.update(f.section_stats.keys())
        sections = [name for name, _ in sorted(sec_freq.items(), key=lambda kv: (-kv[1], kv[0]))]
        sections = sections[:max_sections]
        for name in sections:
            rows = np.array([f.section_stats[name] for f in feats if name in f.section_stats])
            for k in range(len(STAT_NAMES)):
                entropy_thresholds.append(quantile_thresholds(rows[:, k], bins_per_feature))

    return FeatureDictionary(
        mode=mode,
        strings=strings,
        j_max=j_max,
        wavelet_thresholds=wavelet_thresholds,
        sections=sections,
        entropy_thresholds=entropy_thresholds,
        chunk_size=chunk_size,
        min_string_len=min_string_len,
        bins_per_feature=bins_per_feature,
    )


def featurize(sample, dictionary: FeatureDictionary, sample_id=None, label=None) -> FeatureVector:
    """Binary feature vector of one file under a frozen dictionary.

    A file whose size group exceeds the dictionary's ``J_max`` gets no
    wavelet indicators.
    """
    f = _as_file_features(sample, dictionary.chunk_size, dictionary.min_string_len)
    blocks = dictionary.blocks()
    active = sorted(dictionary.string_index[s] for s in f.strings if s in dictionary.string_index)

    if dictionary.uses_wavelet and dictionary.j_max:
        n_slots = len(dictionary.wavelet_thresholds)
        values = np.full(n_slots, np.nan)
        if f.spectrum is not None and f.spectrum.J <= dictionary.j_max:
            start = wavelet_block_offset(f.spectrum.J)
            values[start:start + f.spectrum.J] = f.spectrum.energies
        base = blocks["wavelet"][0]
        active.extend(base + i for i in bin_features(values, dictionary.wavelet_thresholds))

    if dictionary.uses_entropy and dictionary.sections:
        values = np.full(len(dictionary.entropy_thresholds), np.nan)
        width = len(STAT_NAMES)
        for s, name in enumerate(dictionary.sections):
            if name in f.section_stats:
                values[s * width:(s + 1) * width] = f.section_stats[name]
        base = blocks["entropy"][0]
        active.extend(base + i for i in bin_features(values, dictionary.entropy_thresholds))

    return FeatureVector(indices=tuple(active), sample_id=sample_id, label=label)


# -- sparse sample files -----------------------------------------------------

SPARSE_HEADER = "# entrowave-sparse v1"


def write_sparse(vectors: Iterable[FeatureVector], fh, n_features: int | None = None) -> None:
    """One line per sample: ``label id:1 id:1 ... [# sample_id]``.

    A leading comment line records the format version and, when given,
    the dictionary's feature count.
    """
    header = SPARSE_HEADER if n_features is None else f"{SPARSE_HEADER} n_features={n_features}"
    fh.write(header + "\n")
    for v in vectors:
        label = "?" if v.label is None else str(int(v.label))
        parts = [label] + [f"{i}:1" for i in v.indices]
        line = " ".join(parts)
        if v.sample_id is not None:
            line += f" # {v.sample_id}"
        fh.write(line + "\n")


def read_sparse(fh) -> tuple[list[FeatureVector], int | None]:
    """Parse a sparse sample file; returns ``(vectors, n_features or None)``."""
    out = []
    n_features = None
    for lineno, line in enumerate(fh, start=1):
        if line.startswith(SPARSE_HEADER):
            for tok in line.split()[3:]:
                key, _, val = tok.partition("=")
                if key == "n_features":
                    n_features = int(val)
            continue
        body, _, comment = line.rstrip("\n").partition("#")
        tokens = body.split()
        if not tokens:
            continue
        label = None if tokens[0] == "?" else int(tokens[0])
        if label not in (None, 0, 1):
            raise ValueError(f"line {lineno}: label must be 0 or 1")
        indices = []
        for tok in tokens[1:]:
            idx, _, val = tok.partition(":")
            if val not in ("1", "1.0"):
                raise ValueError(f"line {lineno}: non-binary feature value {val!r}")
            indices.append(int(idx))
        out.append(FeatureVector(tuple(indices), comment.strip() or None, label))
    return out, n_features


def to_matrix(vectors: Sequence[FeatureVector], n_features: int | None = None):
    """Stack feature vectors into a CSR matrix plus a label array."""
    if n_features is None:
        n_features = 1 + max((v.indices[-1] for v in vectors if v.indices), default=-1)
    rows = np.repeat(np.arange(len(vectors)), [len(v.indices) for v in vectors])
    cols = np.fromiter((i for v in vectors for i in v.indices), dtype=np.int64, count=rows.size)
    if cols.size and cols.max() >= n_features:
        raise ValueError("feature index beyond n_features")
    X = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(len(vectors), n_features))
    y = np.array([-1 if v.label is None else v.label for v in vectors])
    return X, y
