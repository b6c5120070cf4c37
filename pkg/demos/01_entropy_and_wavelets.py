"""Entropy streams and Haar energy spectra on a toy file.

Run:  python demos/01_entropy_and_wavelets.py
"""
import numpy as np

from entrowave.entropy import entropy_stream
from entrowave.synth import FileSpec, RegimeSpec, generate_file
from entrowave.wavelet import dwt_haar, energy_spectrum, mra_approximation

# %% A file made of regimes: native code, then an encrypted payload hidden
# behind padding.  Each regime is a whole number of 256-byte chunks.
spec = FileSpec(
    segments=(
        RegimeSpec("native", 256 * 12),
        RegimeSpec("padding", 256 * 4),
        RegimeSpec("encrypted", 256 * 8),
        RegimeSpec("text", 256 * 8),
    ),
    label=1,
    seed=0,
)
data = generate_file(spec)
stream = entropy_stream(data)
print(f"{len(data)} bytes -> {len(stream)} chunks")
print("entropy stream (bits):")
print(np.round(stream.values, 2))

# %% Haar transform.  T = 32 chunks gives J = 5 resolution levels; level 1
# compares the two halves of the file, level 5 neighbouring chunk pairs.
decomp = dwt_haar(stream)
print(f"\nJ = {decomp.J}, global mean = {decomp.global_mean:.3f}")
for j in range(1, decomp.J + 1):
    row = [decomp.coefficient(j, k) for k in range(1, 2 ** (j - 1) + 1)]
    print(f"  level {j}: " + " ".join(f"{v:+6.2f}" for v in row))

# %% Energy per level.  Large coarse energies mean big, sustained entropy
# changes; fine energies mean chunk-to-chunk jitter.
spectrum = energy_spectrum(decomp)
print("\nenergy spectrum:", np.round(spectrum.energies, 2))

x = stream.values[:decomp.truncated_length]
print(f"Parseval: sum x^2 = {x @ x:.4f}, "
      f"T*mean^2 + sum E = {decomp.truncated_length * decomp.global_mean**2 + spectrum.energies.sum():.4f}")

# %% Multi-resolution approximations: each level replaces blocks of
# 2^(J - level) chunks by their mean.
for level in range(decomp.J + 1):
    approx = mra_approximation(decomp, level)
    print(f"  approx level {level}: " + "".join(f"{v:5.1f}" for v in approx[::2]))

# %% The same amount of high entropy, scattered instead of contiguous,
# moves energy from coarse to fine levels.
scattered = FileSpec(
    segments=tuple(
        RegimeSpec("encrypted" if i % 4 == 0 else "native", 256) for i in range(32)
    ),
    label=0,
    seed=1,
)
e2 = energy_spectrum(dwt_haar(entropy_stream(generate_file(scattered))))
print("\ncontiguous payload spectrum:", np.round(spectrum.energies, 1))
print("scattered payload spectrum: ", np.round(e2.energies, 1))
