import dataclasses

import numpy as np
import pytest

from kgetot.graph import (CLUSTER, ENTITY, TYPE, DataError, ParseError, build_neighbor_index, from_records,
                          load_dataset, load_dir, save_dir)
from kgetot.views import build_views

from kgdata import messi, tiny_kg, write_kg


def write(path, lines):
    path.write_text("".join(line + "\n" for line in lines))
    return path


def four_files(tmp_path, triples=(), train=(), valid=(), test=()):
    return [write(tmp_path / n, rows) for n, rows in
            (("triples", triples), ("train", train), ("valid", valid), ("test", test))]


class TestLoad:
    def test_duplicate_triples_collapse(self, tmp_path):
        ds = load_dataset(*four_files(tmp_path, ["a\tr\tb", "b\tr\tc", "a\tr\tb"]))
        assert len(ds.edges) == 2
        assert ds.counts()["entities"] == 3

    def test_empty_files(self, tmp_path):
        ds = load_dataset(*four_files(tmp_path))
        assert set(ds.counts().values()) == {0}

    def test_blank_lines_skipped(self, tmp_path):
        ds = load_dataset(*four_files(tmp_path, ["a\tr\tb", "", "  "], ["a\tT"]))
        assert len(ds.edges) == 1 and len(ds.train) == 1

    def test_wrong_field_count_names_line(self, tmp_path):
        files = four_files(tmp_path, ["a\tr\tb", "b\tr", "c\tr\td"])
        with pytest.raises(ParseError) as info:
            load_dataset(*files)
        assert info.value.lineno == 2
        assert "triples:2" in str(info.value)

    def test_tuple_with_three_fields(self, tmp_path):
        with pytest.raises(ParseError):
            load_dataset(*four_files(tmp_path, [], ["a\tT\textra"]))

    def test_missing_file(self, tmp_path):
        files = four_files(tmp_path)
        with pytest.raises(OSError):
            load_dataset(files[0], files[1], files[2], tmp_path / "nope")

    def test_eval_tuples_repeating_train_are_dropped(self):
        ds = from_records([], [("a", "T")], [("a", "T"), ("a", "U")], [])
        assert len(ds.valid) == 1
        ds.check()

    def test_reload_reproduces_ids(self, tmp_path):
        d = write_kg(tmp_path / "kg", *tiny_kg())
        a, b = load_dir(d), load_dir(d)
        assert a.vocab_digest() == b.vocab_digest()
        assert np.array_equal(a.edges, b.edges) and np.array_equal(a.train, b.train)
        save_dir(a, tmp_path / "copy")
        c = load_dir(tmp_path / "copy")
        assert c.vocab_digest() == a.vocab_digest()
        for name in ("edges", "train", "valid", "test"):
            assert np.array_equal(getattr(a, name), getattr(c, name))

    def test_check_rejects_out_of_range(self):
        ds = from_records([("a", "r", "b")], [("a", "T")], [], [])
        with pytest.raises(DataError):
            dataclasses.replace(ds, edges=np.array([[0, 0, 9]])).check()


def index_for(ds, **kw):
    return build_neighbor_index(ds, build_views(ds), **kw)


class TestNeighborIndex:
    def test_two_edges_one_type_two_clusters(self):
        ds = from_records([("x", "r", "y"), ("x", "s", "z")], [("x", "Argentinian_footballers")], [], [])
        idx = index_for(ds, inverse=False)
        assert idx.degree(ds.entities["x"]) == 5
        kinds = [k for _, _, k in idx.entries(ds.entities["x"])]
        assert kinds.count(ENTITY) == 2 and kinds.count(TYPE) == 1 and kinds.count(CLUSTER) == 2

    def test_isolated_entity_has_no_entries(self):
        ds = from_records([("x", "r", "y")], [], [], [("lonely", "T")])
        idx = index_for(ds)
        assert idx.degree(ds.entities["lonely"]) == 0

    def test_messi_entries(self):
        ds = from_records(*messi())
        views = build_views(ds)
        idx = build_neighbor_index(ds, views)
        messi_id = ds.entities["Messi"]
        entries = set(idx.entries(messi_id))
        assert (idx.has_type, ds.types["Argentinian_footballers"], TYPE) in entries
        assert (idx.has_cluster, views.clusters["argentinian"], CLUSTER) in entries
        rel = ds.relations["member_of_sports_team"]
        assert (rel, ds.entities["FC_Barcelona"], ENTITY) in entries
        assert (ds.relations["teammate"], ds.entities["Neymar"], ENTITY) in entries

    def test_entries_sorted(self):
        ds = from_records(*tiny_kg())
        idx = index_for(ds)
        for e in range(ds.num_entities):
            ent = idx.entries(e)
            assert ent == sorted(ent, key=lambda x: (x[0], x[1]))

    def test_test_and_valid_types_never_leak(self):
        ds = from_records(*tiny_kg())
        idx = index_for(ds)
        held = set(map(tuple, np.vstack([ds.valid, ds.test]).tolist()))
        for e in range(ds.num_entities):
            for rel, nbr, kind in idx.entries(e):
                if kind == TYPE:
                    assert (e, nbr) not in held

    @pytest.mark.parametrize("inverse,factor", [(True, 2), (False, 1)])
    def test_relational_entry_count(self, inverse, factor):
        ds = from_records(*tiny_kg())
        idx = index_for(ds, inverse=inverse)
        assert int((idx.kind == ENTITY).sum()) == factor * len(ds.edges)
        assert idx.num_relation_ids == ds.num_relations * factor + 2

    def test_degree_is_sum_over_graphs(self):
        ds = from_records(*tiny_kg())
        views = build_views(ds)
        idx = build_neighbor_index(ds, views)
        deg = np.bincount(ds.edges[:, 0], minlength=ds.num_entities) + \
            np.bincount(ds.edges[:, 2], minlength=ds.num_entities) + \
            np.bincount(views.e2t[:, 0], minlength=ds.num_entities) + \
            np.bincount(views.e2c[:, 0], minlength=ds.num_entities)
        assert np.array_equal(np.diff(idx.indptr), deg)

    def test_without_clusters(self):
        ds = from_records(*tiny_kg())
        idx = index_for(ds, clusters=False)
        assert not (idx.kind == CLUSTER).any()

    def test_vocab_mismatch(self):
        a = from_records(*tiny_kg())
        b = from_records(*messi())
        with pytest.raises(DataError):
            build_neighbor_index(a, build_views(b))
