import pytest

from entrowave.corpus import CorpusManifest, ManifestEntry, split_corpus, thread_count


def manifest(n_pos, n_neg):
    entries = [ManifestEntry(f"p{i}", 1) for i in range(n_pos)]
    entries += [ManifestEntry(f"n{i}", 0) for i in range(n_neg)]
    return CorpusManifest(entries=entries)


def test_split_sizes():
    s = split_corpus(manifest(3, 7), 0.8, seed=1)
    assert sum(e.split == "train" for e in s) == 8


def test_split_stratified():
    s = split_corpus(manifest(5, 5), 0.8, seed=2)
    train = [e for e in s if e.split == "train"]
    assert sum(e.label for e in train) == 4 and len(train) == 8


def test_split_seeded():
    a = split_corpus(manifest(20, 20), 0.7, seed=3)
    b = split_corpus(manifest(20, 20), 0.7, seed=3)
    c = split_corpus(manifest(20, 20), 0.7, seed=4)
    assert a.entries == b.entries
    assert a.entries != c.entries


@pytest.mark.parametrize("f", [0.0, 1.0, -0.5, 1.5])
def test_split_fraction_range(f):
    with pytest.raises(ValueError):
        split_corpus(manifest(2, 2), f)


def test_manifest_roundtrip(tmp_path):
    m = CorpusManifest(entries=[
        ManifestEntry("a.bin", 1, "train", {"seed": 3}),
        ManifestEntry("sub/b.bin", 0),
    ], root=tmp_path)
    path = tmp_path / "m.tsv"
    m.write(path)
    back = CorpusManifest.read(path)
    assert back.entries == m.entries
    assert back.resolve(back.entries[1]) == tmp_path / "sub" / "b.bin"
    assert [e.path for e in back.select("train")] == ["a.bin"]


def test_manifest_invariants(tmp_path):
    with pytest.raises(ValueError):
        CorpusManifest(entries=[ManifestEntry("a", 1), ManifestEntry("a", 0)])
    with pytest.raises(ValueError):
        ManifestEntry("a", 2)
    with pytest.raises(ValueError):
        ManifestEntry("a", 1, "validation")
    bad = tmp_path / "bad.tsv"
    bad.write_text("a\t1\n")
    with pytest.raises(ValueError):
        CorpusManifest.read(bad)


def test_thread_count(monkeypatch):
    monkeypatch.delenv("ENTROWAVE_THREADS", raising=False)
    assert thread_count() == 1
    monkeypatch.setenv("ENTROWAVE_THREADS", "4")
    assert thread_count() == 4
    monkeypatch.setenv("ENTROWAVE_THREADS", "lots")
    assert thread_count() == 1
