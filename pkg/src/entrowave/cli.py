"""``entrowave`` command line.

Every subcommand is deterministic given its inputs and ``--seed`` flags and
never modifies its input files.  Exit status is 0 on success, 1 on an
I/O or data error (one diagnostic line on stderr) and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import features as feat
from .binformat import parse_sections
from .corpus import CorpusManifest, ManifestEntry, split_corpus, thread_count
from .entropy import DEFAULT_CHUNK_SIZE, entropy_stream, write_stream_binary
from .evaluation import danger_map, metrics_at_threshold, roc_curve
from .lasso import LassoModel, predict_matrix, train_lasso
from .ssecs import LabeledSpectrum, dump_models, load_models, ssecs_score, train_ssecs
from .synth import generate_corpus
from .wavelet import dwt_haar, energy_spectrum


def _map(fn, items):
    n = thread_count()
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _out(path):
    """Text output handle: a file, or stdout for None / '-'."""
    if path in (None, "-"):
        return _Stdout()
    return open(path, "w", newline="\n")


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()
        return False


def _spectrum_of(path, chunk_size):
    return energy_spectrum(dwt_haar(entropy_stream(Path(path).read_bytes(), chunk_size)))


# -- subcommands -------------------------------------------------------------

def cmd_entropy(args):
    stream = entropy_stream(Path(args.file).read_bytes(), args.chunk_size, source_label=args.file)
    if args.format == "binary":
        if args.out in (None, "-"):
            write_stream_binary(stream, sys.stdout.buffer)
        else:
            with open(args.out, "wb") as fh:
                write_stream_binary(stream, fh)
        return
    with _out(args.out) as fh:
        for v in stream.values:
            fh.write(f"{float(v)!r}\n")


def cmd_dwt(args):
    decomp = dwt_haar(entropy_stream(Path(args.file).read_bytes(), args.chunk_size))
    with _out(args.out) as fh:
        for (j, k), v in decomp.coefficients().items():
            fh.write(f"{j} {k} {v!r}\n")


def cmd_spectrum(args):
    spec = _spectrum_of(args.file, args.chunk_size)
    with _out(args.out) as fh:
        for j, e in enumerate(spec.energies, start=1):
            fh.write(f"{j} {float(e)!r}\n")


def cmd_sections(args):
    with _out(args.out) as fh:
        for s in parse_sections(Path(args.file).read_bytes()):
            fh.write(f"{s.name}\t{s.file_offset}\t{s.size}\n")


def cmd_synth(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = generate_corpus(args.clean, args.dirty, (args.min_chunks, args.max_chunks),
                            args.seed, args.chunk_size)
    entries = []
    counters = {0: 0, 1: 0}
    for f in files:
        name = f"{'dirty' if f.label else 'clean'}_{counters[f.label]:05d}.bin"
        counters[f.label] += 1
        (out / name).write_bytes(f.data)
        entries.append(ManifestEntry(name, f.label, None, f.spec.to_dict()))
    manifest = CorpusManifest(entries=entries, root=out)
    if args.train_fraction is not None:
        manifest = split_corpus(manifest, args.train_fraction, args.seed)
    manifest.write(out / "manifest.tsv")


def cmd_split(args):
    manifest = CorpusManifest.read(args.corpus)
    split = split_corpus(manifest, args.train_fraction, args.seed)
    out = Path(args.out)
    entries = split.entries
    if out.parent.resolve() != split.root.resolve():
        # keep paths valid from the new manifest location
        entries = [replace(e, path=str(split.resolve(e).resolve())) for e in entries]
    CorpusManifest(entries=entries, root=out.parent).write(out)


def cmd_ssecs_train(args):
    manifest = CorpusManifest.read(args.corpus)
    entries = manifest.select(args.split)
    spectra = _map(lambda e: _spectrum_of(manifest.resolve(e), args.chunk_size), entries)
    corpus = [LabeledSpectrum(s, e.label, e.path) for s, e in zip(spectra, entries)]
    result = train_ssecs(corpus, folds=args.folds, normalize=not args.raw, seed=args.seed)
    with _out(args.out) as fh:
        dump_models(result.models, fh, chunk_size=args.chunk_size)
    for J, reason in sorted(result.skipped.items()):
        print(f"skipped size group J={J}: {reason}", file=sys.stderr)
    if args.scores_out:
        with _out(args.scores_out) as fh:
            for e in entries:
                score = result.scores.get(e.path)
                fh.write(f"{e.label} {'?' if score is None else repr(score)} # {e.path}\n")


def cmd_ssecs_score(args):
    with open(args.model) as fh:
        models, chunk_size = load_models(fh)
    chunk_size = chunk_size or DEFAULT_CHUNK_SIZE
    for path in args.files:
        spec = _spectrum_of(path, chunk_size)
        model = models.get(spec.J)
        score = "NA" if model is None else repr(ssecs_score(spec, model))
        print(f"{score}\t{path}")


def _features_for(manifest, entries, chunk_size, min_len):
    return _map(
        lambda e: feat.extract_file_features(manifest.read_bytes(e), chunk_size, min_len),
        entries,
    )


def cmd_build_dict(args):
    manifest = CorpusManifest.read(args.corpus)
    entries = manifest.select(args.split)
    if not entries:
        raise ValueError("empty corpus")
    ff = _features_for(manifest, entries, args.chunk_size, args.min_string_len)
    dictionary = feat.build_dictionary(
        ff, mode=args.mode, top_n_strings=args.top_strings, bins_per_feature=args.bins,
        chunk_size=args.chunk_size, min_string_len=args.min_string_len,
        max_sections=args.max_sections,
    )
    with _out(args.out) as fh:
        dictionary.dump(fh)


def cmd_featurize(args):
    with open(args.dict) as fh:
        dictionary = feat.FeatureDictionary.load(fh)
    manifest = CorpusManifest.read(args.corpus)
    entries = manifest.select(args.split)
    ff = _features_for(manifest, entries, dictionary.chunk_size, dictionary.min_string_len)
    vectors = [feat.featurize(f, dictionary, sample_id=e.path, label=e.label) for f, e in zip(ff, entries)]
    with _out(args.out) as fh:
        feat.write_sparse(vectors, fh, n_features=dictionary.n_features)


def _read_data(path, n_features=None):
    with open(path) as fh:
        vectors, declared = feat.read_sparse(fh)
    return vectors, feat.to_matrix(vectors, n_features or declared)


def cmd_train_lasso(args):
    vectors, (X, y) = _read_data(args.data, args.n_features)
    if np.any(y < 0):
        raise ValueError("training data has unlabeled samples")
    model = train_lasso(X, y, lam=args.lam, max_epochs=args.max_epochs, tol=args.tol)
    if not model.converged:
        print(f"warning: stopped after {model.iterations} epochs without converging", file=sys.stderr)
    with _out(args.out) as fh:
        model.dump(fh)


def cmd_predict(args):
    with open(args.model) as fh:
        model = LassoModel.load(fh)
    vectors, (X, _) = _read_data(args.data, model.n_features)
    scores = predict_matrix(model, X)
    with _out(args.out) as fh:
        for v, s in zip(vectors, scores):
            label = "?" if v.label is None else str(v.label)
            line = f"{label} {float(s)!r}"
            if v.sample_id is not None:
                line += f" # {v.sample_id}"
            fh.write(line + "\n")


def _read_numbers(path):
    out = []
    with open(path) as fh:
        for line in fh:
            body = line.split("#", 1)[0].split()
            out.extend(body)
    return out


def _read_scores(args):
    if args.labels:
        scores = [float(t) for t in _read_numbers(args.scores)]
        labels = [int(t) for t in _read_numbers(args.labels)]
        return scores, labels
    scores, labels = [], []
    with open(args.scores) as fh:
        for line in fh:
            body = line.split("#", 1)[0].split()
            if not body:
                continue
            if len(body) != 2:
                raise ValueError("expected 'label score' per line (or pass --labels)")
            if body[0] == "?" or body[1] == "?":
                continue
            labels.append(int(body[0]))
            scores.append(float(body[1]))
    return scores, labels


def cmd_eval(args):
    scores, labels = _read_scores(args)
    report = roc_curve(scores, labels)
    m = metrics_at_threshold(scores, labels, args.threshold)
    if args.roc_out:
        with _out(args.roc_out) as fh:
            report.to_csv(fh)
    rows = [
        ("n_pos", report.counts[0]),
        ("n_neg", report.counts[1]),
        ("auc", report.auc),
        ("threshold", args.threshold),
        ("accuracy", m.accuracy),
        ("balanced_accuracy", m.balanced_accuracy),
        ("hit_rate", m.hit_rate),
        ("false_positive_rate", m.false_positive_rate),
        ("correct_rejection_rate", m.correct_rejection_rate),
    ]
    for name, value in rows:
        print(f"{name:<24}{value!r}" if isinstance(value, float) else f"{name:<24}{value}")


def cmd_danger_map(args):
    src = Path(args.models)
    paths = sorted(src.glob("*.json")) if src.is_dir() else [src]
    models = {}
    for p in paths:
        with open(p) as fh:
            models.update(load_models(fh)[0])
    if not models:
        raise ValueError(f"no SSECS models found in {src}")
    dm = danger_map(models, min_J=args.min_j, m=args.bonferroni_m)
    with _out(args.out) as fh:
        dm.to_csv(fh)
    if args.raw_out:
        with _out(args.raw_out) as fh:
            dm.to_csv(fh, raw=True)
    if args.svg:
        with _out(args.svg) as fh:
            dm.to_svg(fh)
    for note in dm.notes:
        print(note, file=sys.stderr)


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entrowave", description="Entropy streams, wavelet energy spectra and malware classifiers.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.set_defaults(func=fn)
        return p

    def chunk(p):
        p.add_argument("--chunk-size", type=int, default=DEFAULT_CHUNK_SIZE)

    p = add("entropy", cmd_entropy, "print a file's chunk entropy stream")
    p.add_argument("file")
    chunk(p)
    p.add_argument("--format", choices=("text", "binary"), default="text")
    p.add_argument("--out")

    p = add("dwt", cmd_dwt, "print Haar coefficients as 'j k value' rows")
    p.add_argument("file")
    chunk(p)
    p.add_argument("--out")

    p = add("spectrum", cmd_spectrum, "print the wavelet energy spectrum as 'j E_j' rows")
    p.add_argument("file")
    chunk(p)
    p.add_argument("--out")

    p = add("sections", cmd_sections, "print the PE section table")
    p.add_argument("file")
    p.add_argument("--out")

    p = add("synth", cmd_synth, "write a synthetic labelled corpus and manifest")
    p.add_argument("--clean", type=int, required=True)
    p.add_argument("--dirty", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--min-chunks", type=int, default=16)
    p.add_argument("--max-chunks", type=int, default=1024)
    p.add_argument("--train-fraction", type=float)
    chunk(p)

    p = add("split", cmd_split, "tag a manifest's entries train/test (stratified)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("ssecs-train", cmd_ssecs_train, "fit per-size-group SSECS models")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--raw", action="store_true", help="do not z-score energies")
    p.add_argument("--split", choices=("train", "test"))
    p.add_argument("--scores-out", help="write out-of-fold scores as 'label score' lines")
    chunk(p)

    p = add("ssecs-score", cmd_ssecs_score, "score files with a trained SSECS model")
    p.add_argument("--model", required=True)
    p.add_argument("files", nargs="+")

    p = add("build-dict", cmd_build_dict, "learn a feature dictionary from training files")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=sorted(feat.MODES), default="strings+entropy+wavelet")
    p.add_argument("--top-strings", type=int, default=1000)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--min-string-len", type=int, default=feat.DEFAULT_MIN_STRING_LEN)
    p.add_argument("--max-sections", type=int, default=16)
    p.add_argument("--split", choices=("train", "test"), default="train")
    chunk(p)

    p = add("featurize", cmd_featurize, "write sparse binary samples")
    p.add_argument("--dict", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=("train", "test"))

    p = add("train-lasso", cmd_train_lasso, "fit an L1-penalised logistic model")
    p.add_argument("--data", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("--max-epochs", type=int, default=10_000)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--n-features", type=int, help="feature count (default: from the data)")

    p = add("predict", cmd_predict, "score sparse samples with a lasso model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")

    p = add("eval", cmd_eval, "ROC/AUC and threshold metrics")
    p.add_argument("--scores", required=True,
                   help="'label score' lines, or bare scores when --labels is given")
    p.add_argument("--labels")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--roc-out")

    p = add("danger-map", cmd_danger_map, "beta matrix of SSECS models as CSV (and SVG)")
    p.add_argument("--models", required=True, help="SSECS model file or directory of *.json")
    p.add_argument("--out", required=True)
    p.add_argument("--raw-out")
    p.add_argument("--svg")
    p.add_argument("--min-j", type=int, default=3)
    p.add_argument("--bonferroni-m", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"entrowave {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
