"""Danger map: per-size-group betas over resolution levels.

Rows are size groups J, columns resolution levels from coarse (1) to fine
(J).  Red cells mean energy at that level raises the odds of malware, blue
cells lower them.  Each row carries a likelihood-ratio test against the
intercept-only model, Bonferroni-corrected.

Run:  python demos/04_danger_map.py [output-dir]
"""
import sys
from pathlib import Path

from entrowave.entropy import entropy_stream
from entrowave.evaluation import danger_map
from entrowave.ssecs import LabeledSpectrum, train_ssecs
from entrowave.synth import generate_corpus
from entrowave.wavelet import stream_spectrum

out = Path(sys.argv[1] if len(sys.argv) > 1 else "danger_map_demo")
out.mkdir(parents=True, exist_ok=True)

files = generate_corpus(600, 600, seed=4)
corpus = [
    LabeledSpectrum(stream_spectrum(entropy_stream(f.data)), f.label, i)
    for i, f in enumerate(files)
]
result = train_ssecs(corpus, folds=5, normalize=True, seed=4)
dm = danger_map(result.models, min_J=min(result.models), m=10)

# %% The matrix as text.  The synthetic dirty files hide one long payload,
# so coarse energy is bad and fine energy is good.
width = dm.j_max
print("J   " + "".join(f"{j:>8}" for j in range(1, width + 1)) + "      chi2   p (Bonferroni, m=10)")
for J in sorted(dm.rows):
    cells = "".join(f"{b:+8.2f}" for b in dm.rows[J]) + " " * 8 * (width - J)
    ann = dm.annotations[J]
    print(f"{J:<4}{cells}{ann['chi2']:>10.1f}   {ann['p_adjusted']:.2g}")
for note in dm.notes:
    print("note:", note)

coarse, fine = dm.coarse_fine_means()
print(f"\nmean beta at the coarsest level {coarse:+.2f}, at the finest level {fine:+.2f}")

# %% Files for a spreadsheet or a browser.
with open(out / "danger_map.csv", "w") as fh:
    dm.to_csv(fh)
with open(out / "danger_map_raw.csv", "w") as fh:
    dm.to_csv(fh, raw=True)
with open(out / "danger_map.svg", "w") as fh:
    dm.to_svg(fh)
print(f"wrote {out}/danger_map.csv, danger_map_raw.csv and danger_map.svg")
