import numpy as np
import pytest

from tooluse.embeddings import DEFAULT_DIM, EmbeddingTable, load_embeddings, make_embeddings


def test_default_dimension_is_300():
    table = EmbeddingTable()
    assert table.dim == DEFAULT_DIM == 300
    assert table.lookup("apple").shape == (300,)


def test_lookup_deterministic_and_unit_norm():
    table = EmbeddingTable(dim=64)
    a = table.lookup("tray")
    b = table.lookup("tray")
    assert np.array_equal(a, b)
    assert np.linalg.norm(a) == pytest.approx(1.0)
    fresh = EmbeddingTable(dim=64)
    assert np.array_equal(fresh.lookup("tray"), a)


def test_category_structure_dominates():
    cats = {"tray": "flat-carrier", "basket": "flat-carrier", "wall": "structure"}
    table = EmbeddingTable(dim=128, categories=cats)
    assert table.cosine("tray", "basket") > table.cosine("tray", "wall")


def test_substitution_pairs_are_closer_than_cross_category(mini_home):
    table = EmbeddingTable(dim=128, categories=mini_home.category_map())
    tokens = [t for t in mini_home.classes if t != "robot"]
    for seen, heldout in mini_home.substitutions.items():
        same = table.cosine(seen, heldout)
        for other in tokens:
            if mini_home.category_of(other) != mini_home.category_of(seen):
                assert same > table.cosine(seen, other), (seen, heldout, other)


def test_file_round_trip(tmp_path):
    table = EmbeddingTable(dim=16, categories={"a": "x", "b": "x"})
    path = tmp_path / "vecs.txt"
    table.serialize(path, tokens=["a", "b", "wall"])
    loaded = load_embeddings(path)
    assert loaded.provider == "file"
    assert loaded.dim == 16
    for token in ("a", "b", "wall"):
        assert np.allclose(loaded.lookup(token), table.lookup(token))


def test_file_provider_falls_back_for_oov(tmp_path):
    path = tmp_path / "vecs.txt"
    path.write_text("apple " + " ".join(["0.5"] * 8) + "\n")
    table = load_embeddings(path)
    assert table.lookup("apple").tolist() == [0.5] * 8
    oov = table.lookup("zeppelin")
    assert oov.shape == (8,)
    assert np.linalg.norm(oov) == pytest.approx(1.0)


def test_make_embeddings_spec_strings(tmp_path):
    syn = make_embeddings("synthetic", 32, None)
    assert syn.provider == "synthetic" and syn.dim == 32
    path = tmp_path / "v.txt"
    syn.serialize(path, tokens=["hammer"])
    fil = make_embeddings("file:%s" % path, 32, None)
    assert fil.provider == "file"
    with pytest.raises(ValueError):
        make_embeddings("magic", 32, None)


def test_bad_vector_file(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("a 1.0 2.0\nb 1.0\n")
    with pytest.raises(ValueError):
        load_embeddings(path)
