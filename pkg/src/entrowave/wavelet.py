"""Haar wavelet decomposition of entropy streams.

Levels are numbered ``j = 1..J`` from coarse to fine and locations
``k = 1..2**(j-1)``.  At level ``j`` the (dyadically truncated) signal of
length ``2**J`` is cut into ``2**(j-1)`` bins of ``2 * 2**(J-j)`` samples;
each coefficient is the sum over the second half of its bin minus the sum
over the first half, divided by ``sqrt(2) ** (J - j + 1)``.  With that
scaling the transform is orthonormal::

    sum(x**2) == 2**J * mean(x)**2 + sum(d**2)
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .entropy import EntropyStream


@dataclass(frozen=True, eq=False)
class WaveletDecomposition:
    """Mother coefficients of one stream plus its global mean.

    ``details[j - 1]`` holds the ``2**(j-1)`` coefficients of level ``j``.
    """

    details: tuple
    global_mean: float

    @property
    def J(self) -> int:
        return len(self.details)

    @property
    def truncated_length(self) -> int:
        return 2 ** self.J

    def coefficient(self, j: int, k: int) -> float:
        if not 1 <= j <= self.J or not 1 <= k <= 2 ** (j - 1):
            raise IndexError(f"no coefficient at (j={j}, k={k})")
        return float(self.details[j - 1][k - 1])

    def coefficients(self) -> dict:
        """All coefficients as a ``{(j, k): value}`` mapping."""
        return {
            (j, k): float(v)
            for j, level in enumerate(self.details, start=1)
            for k, v in enumerate(level, start=1)
        }

    def flat(self) -> np.ndarray:
        """Coefficients concatenated coarse to fine (length ``2**J - 1``)."""
        return np.concatenate(self.details)


@dataclass(frozen=True, eq=False)
class EnergySpectrum:
    """Per-level energies ``E_1..E_J`` in squared bits."""

    energies: np.ndarray

    def __post_init__(self):
        e = np.array(self.energies, dtype=float)
        if e.ndim != 1 or e.size == 0:
            raise ValueError("energy spectrum must be a non-empty vector")
        if np.any(e < 0) or not np.all(np.isfinite(e)):
            raise ValueError("energies must be finite and non-negative")
        e.setflags(write=False)
        object.__setattr__(self, "energies", e)

    @property
    def J(self) -> int:
        return self.energies.size

    def __len__(self):
        return self.energies.size

    def __iter__(self):
        return iter(self.energies.tolist())


def _values(stream) -> np.ndarray:
    if isinstance(stream, EntropyStream):
        return stream.values
    return np.asarray(stream, dtype=float).ravel()


def dyadic_level(T: int) -> int:
    """``floor(log2(T))`` computed exactly on integers."""
    if T < 1:
        raise ValueError("length must be positive")
    return int(T).bit_length() - 1


def dwt_haar(stream) -> WaveletDecomposition:
    """Haar DWT of an entropy stream (or any real sequence).

    The input is right-truncated to ``2**floor(log2(T))`` samples before
    transforming.  Raises ``ValueError("no resolution levels")`` for
    ``T < 2``.
    """
    x = _values(stream)
    if x.size < 2:
        raise ValueError("no resolution levels")
    J = dyadic_level(x.size)
    x = x[: 2**J]
    details = []
    for j in range(1, J + 1):
        n_bins = 2 ** (j - 1)
        half = 2 ** (J - j)
        sums = x.reshape(n_bins, 2, half).sum(axis=2)
        scale = math.sqrt(2.0) ** (J - j + 1)
        d = (sums[:, 1] - sums[:, 0]) / scale
        d.setflags(write=False)
        details.append(d)
    return WaveletDecomposition(details=tuple(details), global_mean=float(x.mean()))


def energy_spectrum(decomp: WaveletDecomposition) -> EnergySpectrum:
    return EnergySpectrum(np.array([float(np.dot(d, d)) for d in decomp.details]))


def stream_spectrum(stream) -> EnergySpectrum:
    """Shortcut for ``energy_spectrum(dwt_haar(stream))``."""
    return energy_spectrum(dwt_haar(stream))


def mra_approximation(decomp: WaveletDecomposition, level: int) -> np.ndarray:
    """Piecewise-constant approximation of the signal at ``level``.

    Level 0 is the global mean everywhere; level ``J`` reproduces the
    truncated signal.  Built by adding back the detail of each level in
    turn, so every contiguous block of ``2**(J - level)`` samples ends up
    holding its block mean.
    """
    J = decomp.J
    if not 0 <= level <= J:
        raise ValueError(f"level must lie in 0..{J}, got {level}")
    approx = np.array([decomp.global_mean])
    for j in range(1, level + 1):
        half = 2 ** (J - j)
        # mean shift of each half-bin is d * scale / half
        shift = decomp.details[j - 1] * (math.sqrt(2.0) ** (J - j + 1)) / (2 * half)
        approx = np.stack([approx - shift, approx + shift], axis=1).ravel()
    return np.repeat(approx, 2 ** (J - level))
