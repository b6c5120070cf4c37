"""Synthetic executables built from entropy regimes.

Each regime is a byte distribution whose expected 256-byte chunk entropy
matches a target level:

=========  ============  ==========================================
regime     target bits   byte source
=========  ============  ==========================================
padding    0.00          zeros
text       4.34          skewed over printable ASCII
native     5.09          skewed over all 256 values
packed     6.80          mildly skewed over all 256 values
encrypted  7.17          uniform random bytes
=========  ============  ==========================================

The skewed sources draw symbol ``i`` with probability proportional to
``exp(-theta * i)``; ``theta`` is found by bisection on the exact expected
plug-in entropy of a chunk (each symbol count is binomial), so no sampling
noise enters the calibration.  Uniform bytes measure about 7.18 bits, not
8, because the plug-in estimator is biased low when the chunk is no longer
than the alphabet.

Dirty files hide one contiguous packed/encrypted block (at least 4
chunks) next to padding; clean files scatter the same kinds of content as
isolated single chunks.  Both classes draw the amount of each regime from
the same distributions, so permutation-invariant statistics such as mean
or standard deviation carry little signal while the multi-scale layout
does.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .entropy import DEFAULT_CHUNK_SIZE

REGIME_TARGETS = {
    "padding": 0.0,
    "text": 4.34,
    "native": 5.09,
    "packed": 6.80,
    "encrypted": 7.17,
}
_PRINTABLE = np.arange(0x20, 0x7F, dtype=np.uint8)
_ALL_BYTES = np.arange(256, dtype=np.uint8)
HIGH_REGIMES = ("packed", "encrypted")
MIN_DIRTY_BLOCK = 4


@dataclass(frozen=True)
class RegimeSpec:
    regime: str
    length_bytes: int

    def __post_init__(self):
        if self.regime not in REGIME_TARGETS:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.length_bytes < 1:
            raise ValueError("length_bytes must be positive")

    @property
    def target(self) -> float:
        return REGIME_TARGETS[self.regime]

    def to_dict(self) -> dict:
        return {"regime": self.regime, "length_bytes": self.length_bytes}


@dataclass(frozen=True)
class FileSpec:
    segments: tuple
    label: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")
        if not self.segments:
            raise ValueError("a file needs at least one segment")

    @property
    def length_bytes(self) -> int:
        return sum(s.length_bytes for s in self.segments)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "seed": self.seed,
            "segments": [s.to_dict() for s in self.segments],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FileSpec":
        segs = tuple(RegimeSpec(s["regime"], int(s["length_bytes"])) for s in d["segments"])
        return cls(segments=segs, label=int(d["label"]), seed=int(d["seed"]))


@dataclass(frozen=True)
class SyntheticFile:
    data: bytes
    label: int
    spec: FileSpec


# -- calibration -------------------------------------------------------------

def _skewed_probs(theta: float, m: int) -> np.ndarray:
    w = np.exp(-theta * np.arange(m))
    return w / w.sum()


def expected_plugin_entropy(probs, n: int = DEFAULT_CHUNK_SIZE) -> float:
    """Exact expectation of the empirical entropy of ``n`` iid draws."""
    p = np.asarray(probs, dtype=float)
    c = np.arange(1, n + 1)
    q = c / n
    contrib = -q * np.log2(q)
    cc = c[:, None]
    log_pmf = (gammaln(n + 1) - gammaln(cc + 1) - gammaln(n - cc + 1)
               + xlogy(cc, p[None, :]) + xlog1py(n - cc, -p[None, :]))
    pmf = np.exp(log_pmf)
    return float(np.sum(pmf * contrib[:, None]))


@lru_cache(maxsize=None)
def calibrate_skew(target: float, alphabet_size: int = 256, n: int = DEFAULT_CHUNK_SIZE) -> float:
    """Skew ``theta`` whose chunks have expected entropy ``target`` bits."""
    if not 0.0 <= target <= 8.0:
        raise ValueError(f"unreachable target {target}")
    lo, hi = 0.0, 60.0
    top = expected_plugin_entropy(_skewed_probs(lo, alphabet_size), n)
    if target > top + 1e-12:
        raise ValueError(f"unreachable target {target}: at most {top:.3f} bits with "
                         f"{alphabet_size} symbols and {n}-byte chunks")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if expected_plugin_entropy(_skewed_probs(mid, alphabet_size), n) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def regime_distribution(regime: str, chunk_size: int = DEFAULT_CHUNK_SIZE):
    """``(symbols, probabilities)`` used to draw a regime's bytes."""
    if regime == "padding":
        return np.zeros(1, dtype=np.uint8), np.ones(1)
    if regime == "encrypted":
        return _ALL_BYTES, np.full(256, 1 / 256)
    symbols = _PRINTABLE if regime == "text" else _ALL_BYTES
    theta = calibrate_skew(REGIME_TARGETS[regime], symbols.size, chunk_size)
    return symbols, _skewed_probs(theta, symbols.size)


# -- generation --------------------------------------------------------------

def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def generate_segment(spec: RegimeSpec, seed=0, chunk_size: int = DEFAULT_CHUNK_SIZE) -> bytes:
    """Bytes of one regime; ``seed`` may be an int or a numpy Generator."""
    rng = _rng(seed)
    symbols, probs = regime_distribution(spec.regime, chunk_size)
    if symbols.size == 1:
        return bytes(spec.length_bytes)
    return rng.choice(symbols, size=spec.length_bytes, p=probs).astype(np.uint8).tobytes()


def generate_file(spec: FileSpec, chunk_size: int = DEFAULT_CHUNK_SIZE) -> bytes:
    rng = np.random.default_rng(spec.seed)
    return b"".join(generate_segment(s, rng, chunk_size) for s in spec.segments)


def _runs_to_segments(plan, chunk_size):
    segments = []
    start = 0
    for i in range(1, len(plan) + 1):
        if i == len(plan) or plan[i] != plan[start]:
            segments.append(RegimeSpec(plan[start], (i - start) * chunk_size))
            start = i
    return tuple(segments)


def _place_run(plan, length, regime, rng, allowed=("native",)):
    """Overwrite a random run of ``allowed`` chunks; returns its start or None."""
    T = len(plan)
    starts = [s for s in range(T - length + 1) if all(plan[s + i] in allowed for i in range(length))]
    if not starts:
        return None
    s = int(rng.choice(starts))
    plan[s:s + length] = [regime] * length
    return s


def _scatter(plan, count, regimes, rng):
    """Drop ``count`` isolated single chunks, none touching another high chunk."""
    T = len(plan)
    placed = 0
    for pos in rng.permutation(T):
        if placed >= count:
            break
        if plan[pos] != "native":
            continue
        regime = regimes[int(rng.integers(len(regimes)))]
        if regime in HIGH_REGIMES:
            neighbours = [plan[q] for q in (pos - 1, pos + 1) if 0 <= q < T]
            if any(r in HIGH_REGIMES for r in neighbours):
                continue
        plan[pos] = regime
        placed += 1


def plan_file(label: int, T: int, rng: np.random.Generator) -> list:
    """Regime label for each of ``T`` chunks.

    Shared draws: the fraction of high-entropy chunks ~ U(0.08, 0.35),
    padding ~ U(0, 0.15) and one text run ~ U(0, 0.2) of the file.
    """
    f_high = rng.uniform(0.08, 0.35)
    f_pad = rng.uniform(0.0, 0.15)
    f_text = rng.uniform(0.0, 0.2)
    plan = ["native"] * T
    n_text = int(round(f_text * T))
    if n_text:
        _place_run(plan, n_text, "text", rng)
    n_pad = int(round(f_pad * T))
    if label == 1:
        n_high = max(MIN_DIRTY_BLOCK, int(round(f_high * T)))
        regime = HIGH_REGIMES[int(rng.integers(2))]
        start = _place_run(plan, n_high, regime, rng)
        if start is None:
            raise ValueError(f"file of {T} chunks too short for a dirty block")
        # pad against the block so the high run is camouflaged by zeros
        left = int(rng.integers(n_pad + 1))
        for q in range(start - 1, max(start - 1 - left, -1), -1):
            if plan[q] != "native":
                break
            plan[q] = "padding"
        stop = start + n_high
        for q in range(stop, min(stop + n_pad - left, T)):
            if plan[q] != "native":
                break
            plan[q] = "padding"
    else:
        n_high = max(1, int(round(f_high * T)))
        _scatter(plan, n_high, HIGH_REGIMES, rng)
        _scatter(plan, n_pad, ("padding",), rng)
    return plan


def generate_corpus(
    n_clean: int,
    n_dirty: int,
    size_range: tuple = (16, 1024),
    seed: int = 0,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> list[SyntheticFile]:
    """Labelled synthetic files, clean ones first.

    File lengths in chunks are log-uniform on ``[size_range[0],
    size_range[1])`` so that every size group in that span is populated.
    The whole corpus is a deterministic function of ``seed``.
    """
    if n_clean < 1 or n_dirty < 1:
        raise ValueError("both classes need at least one file")
    lo, hi = size_range
    if lo < 2 * MIN_DIRTY_BLOCK or hi <= lo:
        raise ValueError(f"size_range must satisfy {2 * MIN_DIRTY_BLOCK} <= lo < hi")
    master = np.random.default_rng(seed)
    out = []
    for label, count in ((0, n_clean), (1, n_dirty)):
        for _ in range(count):
            file_seed = int(master.integers(2**63))
            rng = np.random.default_rng(file_seed)
            T = int(math.exp(rng.uniform(math.log(lo), math.log(hi))))
            T = min(max(T, lo), hi - 1)
            plan = plan_file(label, T, rng)
            spec = FileSpec(_runs_to_segments(plan, chunk_size), label, file_seed)
            out.append(SyntheticFile(generate_file(spec, chunk_size), label, spec))
    return out
