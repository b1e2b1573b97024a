import numpy as np
import pytest

from kgetot.graph import from_records, save_dir
from kgetot.variants import (VariantSpec, distinct_types, drop_count, drop_relation_types, drop_relational_neighbors,
                             split_easy_hard, write_variant)

from kgdata import messi, tiny_kg


def pairs(arr):
    return set(map(tuple, arr.tolist()))


def test_toy_easy_hard():
    train = [(f"a{i}", "A") for i in range(3)] + [(f"b{i}", "B") for i in range(10)]
    ds = from_records([], train, [("b0", "A")], [("a0", "B")])
    easy, hard = split_easy_hard(ds, 5)
    assert {ds.types.id_to_name[t] for t in easy.train[:, 1]} == {"B"}
    assert {ds.types.id_to_name[t] for t in hard.train[:, 1]} == {"A"}
    assert len(hard.valid) == 1 and len(easy.test) == 1


def test_easy_hard_partition_tuples():
    ds = from_records(*tiny_kg())
    for k in (1, 5, 30, 1000):
        easy, hard = split_easy_hard(ds, k)
        for name in ("train", "valid", "test"):
            a, b, full = pairs(easy.split(name)), pairs(hard.split(name)), pairs(ds.split(name))
            assert a | b == full and not a & b
        assert np.array_equal(easy.edges, ds.edges) and np.array_equal(hard.edges, ds.edges)
    easy, _ = split_easy_hard(ds, int(np.bincount(ds.train[:, 1]).max()))
    assert distinct_types(easy) == 0


def test_k_must_be_positive():
    with pytest.raises(ValueError):
        split_easy_hard(from_records(*tiny_kg()), 0)


@pytest.mark.parametrize("rate,n,expected", [(0.25, 4, 1), (0.5, 4, 2), (0.75, 4, 3), (0.9, 4, 4),
                                             (0.01, 1, 1), (0.7, 10, 7), (0.3, 10, 3), (0.5, 0, 0)])
def test_drop_count(rate, n, expected):
    assert drop_count(rate, n) == expected


def messi_only():
    triples, train, valid, test = messi()
    return from_records([t for t in triples if t[0] == "Messi"], train, valid, test)


def test_messi_drop_two_of_four():
    ds = messi_only()
    for seed in range(20):
        out = drop_relational_neighbors(ds, 0.5, seed)
        assert len(out.edges) == 2
        assert pairs(out.edges) <= pairs(ds.edges)


def test_degree_one_entity_loses_its_edge():
    ds = from_records([("a", "r", "b")], [("a", "T")], [], [])
    assert len(drop_relational_neighbors(ds, 0.1, 0).edges) == 0
    assert len(drop_relation_types(ds, 0.1, 0).edges) == 0


def test_messi_drop_relation_type():
    ds = messi_only()
    team = ds.relations["member_of_sports_team"]
    seen_team = False
    for seed in range(30):
        out = drop_relation_types(ds, 0.5, seed)
        rels = set(out.edges[:, 1].tolist())
        assert len(rels) == 1
        if team not in rels:
            seen_team = True
            assert len(out.edges) == 2 and (out.edges[:, 1] == ds.relations["teammate"]).all()
    assert seen_team


@pytest.mark.parametrize("fn", [drop_relational_neighbors, drop_relation_types])
def test_deterministic_and_type_graph_untouched(fn, tmp_path):
    ds = from_records(*tiny_kg())
    a, b = fn(ds, 0.5, 7), fn(ds, 0.5, 7)
    assert np.array_equal(a.edges, b.edges)
    assert not np.array_equal(fn(ds, 0.5, 8).edges, a.edges)
    assert pairs(a.edges) <= pairs(ds.edges)
    save_dir(ds, tmp_path / "orig")
    save_dir(a, tmp_path / "drop")
    for name in ("ET_train.txt", "ET_valid.txt", "ET_test.txt"):
        assert (tmp_path / "orig" / name).read_bytes() == (tmp_path / "drop" / name).read_bytes()
    a.check()


def uniform_fixture():
    # 40 entities, each with 2 edges under each of 5 relation types
    triples = [(f"e{i}", f"r{r}", f"e{(i + r * 7 + k + 1) % 40}") for i in range(40) for r in range(5) for k in range(2)]
    return from_records(triples, [("e0", "T")], [], [])


@pytest.mark.parametrize("rate", [0.25, 0.5, 0.75, 0.9])
@pytest.mark.parametrize("fn", [drop_relational_neighbors, drop_relation_types])
def test_monte_carlo_rate(fn, rate):
    ds = uniform_fixture()
    fractions = [1 - len(fn(ds, rate, seed).edges) / len(ds.edges) for seed in range(100)]
    # ceiling rounding on 10 edges / 5 relation types per entity
    expected = drop_count(rate, 10) / 10 if fn is drop_relational_neighbors else drop_count(rate, 5) / 5
    assert abs(np.mean(fractions) - expected) < 1e-12
    assert abs(np.mean(fractions) - rate) <= 0.05 + (expected - rate)


def test_variant_options_validated():
    for bad in (dict(kind="drop_neighbors", rate=0), dict(kind="drop_neighbors", rate=1.0),
                dict(kind="easy", k=0), dict(kind="nope")):
        with pytest.raises(ValueError):
            VariantSpec(**bad)


def test_write_variant(tmp_path):
    ds = from_records(*tiny_kg())
    m = write_variant(drop_relation_types(ds, 0.25, 1), VariantSpec("drop_relation_types", rate=0.25, seed=1),
                      tmp_path, "src")
    assert m["variant"] == {"kind": "drop_relation_types", "rate": 0.25, "k": None, "seed": 1}
    assert (tmp_path / "manifest.json").exists() and (tmp_path / "train.txt").exists()
