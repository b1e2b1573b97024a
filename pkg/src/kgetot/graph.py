"""Raw triple/tuple ingestion, id interning and per-entity neighbor indexes."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

ENTITY, TYPE, CLUSTER = 0, 1, 2
KIND_NAMES = ("entity", "type", "cluster")


class DataError(ValueError):
    """Malformed input data or inconsistent vocabularies."""


class ParseError(DataError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class Vocab:
    """Dense 0-based string interning table."""

    def __init__(self, kind: str, names=()):
        self.kind = kind
        self.name_to_id: dict[str, int] = {}
        self.id_to_name: list[str] = []
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        idx = self.name_to_id.get(name)
        if idx is None:
            idx = len(self.id_to_name)
            self.name_to_id[name] = idx
            self.id_to_name.append(name)
        return idx

    def __len__(self):
        return len(self.id_to_name)

    def __getitem__(self, name: str) -> int:
        return self.name_to_id[name]

    def __contains__(self, name):
        return name in self.name_to_id

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.kind == other.kind and self.id_to_name == other.id_to_name

    def digest(self) -> str:
        h = hashlib.sha256(self.kind.encode())
        for name in self.id_to_name:
            h.update(b"\0" + name.encode("utf-8"))
        return h.hexdigest()[:16]


def _as_pairs(rows) -> np.ndarray:
    return np.asarray(rows, dtype=np.int64).reshape(-1, 2)


@dataclass
class Dataset:
    """Relational graph plus train/valid/test type tuples over shared vocabularies.

    ``edges`` is an (M, 3) array of (head, relation, tail); each tuple split is an
    (K, 2) array of (entity, type).
    """

    entities: Vocab
    relations: Vocab
    types: Vocab
    edges: np.ndarray
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    name: str = ""
    _known: dict | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 3)
        self.train = _as_pairs(self.train)
        self.valid = _as_pairs(self.valid)
        self.test = _as_pairs(self.test)

    @property
    def num_entities(self):
        return len(self.entities)

    @property
    def num_relations(self):
        return len(self.relations)

    @property
    def num_types(self):
        return len(self.types)

    def split(self, name: str) -> np.ndarray:
        if name not in ("train", "valid", "test"):
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def counts(self) -> dict:
        return {
            "entities": self.num_entities,
            "relations": self.num_relations,
            "types": self.num_types,
            "train_triples": len(self.edges),
            "train_tuples": len(self.train),
            "valid_tuples": len(self.valid),
            "test_tuples": len(self.test),
        }

    def known_types(self) -> dict[int, set[int]]:
        """Entity -> all types asserted in any split (the filter set)."""
        if self._known is None:
            known: dict[int, set[int]] = {}
            for arr in (self.train, self.valid, self.test):
                for e, t in arr.tolist():
                    known.setdefault(e, set()).add(t)
            self._known = known
        return self._known

    def vocab_digest(self) -> dict[str, str]:
        return {v.kind: v.digest() for v in (self.entities, self.relations, self.types)}

    def check(self):
        """Validate the structural invariants; raises DataError."""
        ne, nr, nt = self.num_entities, self.num_relations, self.num_types
        if len(self.edges):
            if self.edges[:, [0, 2]].min() < 0 or self.edges[:, [0, 2]].max() >= ne:
                raise DataError("edge entity id out of range")
            if self.edges[:, 1].min() < 0 or self.edges[:, 1].max() >= nr:
                raise DataError("edge relation id out of range")
            if len(np.unique(self.edges, axis=0)) != len(self.edges):
                raise DataError("duplicate relational edge")
        train_set = set(map(tuple, self.train.tolist()))
        for name in ("train", "valid", "test"):
            arr = self.split(name)
            if len(arr) == 0:
                continue
            if arr[:, 0].min() < 0 or arr[:, 0].max() >= ne or arr[:, 1].min() < 0 or arr[:, 1].max() >= nt:
                raise DataError(f"{name} tuple id out of range")
            pairs = set(map(tuple, arr.tolist()))
            if len(pairs) != len(arr):
                raise DataError(f"duplicate tuple in {name}")
            if name != "train" and pairs & train_set:
                raise DataError(f"{name} tuples overlap train")


def _read_records(path, width):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return list(_parse(path, text, width))


def _parse(path, text, width):
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split("\t")]
        if len(fields) != width:
            raise ParseError(path, lineno, f"expected {width} tab-separated fields, got {len(fields)}")
        yield fields


def from_records(triples, train, valid, test, name="") -> Dataset:
    """Intern string records in first-appearance order and deduplicate.

    Self-loop triples are dropped, as are valid/test tuples that repeat a train tuple.
    """
    entities, relations, types = Vocab("entity"), Vocab("relation"), Vocab("type")

    edges, seen = [], set()
    self_loops = 0
    for h, r, t in triples:
        key = (entities.add(h), relations.add(r), entities.add(t))
        if key[0] == key[2]:
            self_loops += 1
            continue
        if key not in seen:
            seen.add(key)
            edges.append(key)
    if self_loops:
        log.info("dropped %d self-loop triples", self_loops)

    splits, train_pairs = [], set()
    for split_name, records in (("train", train), ("valid", valid), ("test", test)):
        rows, local = [], set()
        leaked = 0
        for e, t in records:
            key = (entities.add(e), types.add(t))
            if key in local:
                continue
            if split_name != "train" and key in train_pairs:
                leaked += 1
                continue
            local.add(key)
            rows.append(key)
        if split_name == "train":
            train_pairs = local
        if leaked:
            log.warning("dropped %d %s tuples already present in train", leaked, split_name)
        splits.append(rows)

    return Dataset(entities, relations, types, edges, *splits, name=name)


def load_dataset(triples_path, train_tuples_path, valid_tuples_path, test_tuples_path, name="") -> Dataset:
    """Read the four tab-separated files of a dataset (see ``from_records``)."""
    ds = from_records(
        _read_records(triples_path, 3),
        _read_records(train_tuples_path, 2),
        _read_records(valid_tuples_path, 2),
        _read_records(test_tuples_path, 2),
        name=name,
    )
    log.info("loaded dataset %s: %s", name, ds.counts())
    return ds


DEFAULT_FILES = {
    "triples": "train.txt",
    "train": "ET_train.txt",
    "valid": "ET_valid.txt",
    "test": "ET_test.txt",
}


def load_dir(directory, files=None) -> Dataset:
    """Load a dataset directory laid out like the public FB15kET/YAGO43kET release."""
    files = {**DEFAULT_FILES, **(files or {})}
    d = Path(directory)
    return load_dataset(d / files["triples"], d / files["train"], d / files["valid"], d / files["test"], name=d.name)


def save_dir(dataset: Dataset, directory, files=None):
    """Write a dataset back out in the same tab-separated layout."""
    files = {**DEFAULT_FILES, **(files or {})}
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    ent, rel, typ = dataset.entities.id_to_name, dataset.relations.id_to_name, dataset.types.id_to_name
    with open(d / files["triples"], "w", encoding="utf-8", newline="\n") as fh:
        for h, r, t in dataset.edges.tolist():
            fh.write(f"{ent[h]}\t{rel[r]}\t{ent[t]}\n")
    for split_name in ("train", "valid", "test"):
        with open(d / files[split_name], "w", encoding="utf-8", newline="\n") as fh:
            for e, t in dataset.split(split_name).tolist():
                fh.write(f"{ent[e]}\t{typ[t]}\n")


@dataclass(frozen=True)
class NeighborIndex:
    """CSR layout of every entity's (relation, neighbor, kind) entries.

    Relation ids: ``r`` for outgoing edges, ``r + R`` for inverse edges,
    ``has_type`` and ``has_cluster`` for the type-graph neighbors. Entries of
    each entity are sorted by (relation, neighbor id).
    """

    indptr: np.ndarray
    relation: np.ndarray
    neighbor: np.ndarray
    kind: np.ndarray
    num_relation_ids: int
    has_type: int
    has_cluster: int
    inverse: bool

    @property
    def num_entities(self):
        return len(self.indptr) - 1

    def degree(self, entity: int) -> int:
        return int(self.indptr[entity + 1] - self.indptr[entity])

    def entries(self, entity: int) -> list[tuple[int, int, int]]:
        lo, hi = self.indptr[entity], self.indptr[entity + 1]
        return list(zip(self.relation[lo:hi].tolist(), self.neighbor[lo:hi].tolist(), self.kind[lo:hi].tolist()))


def relation_id_count(num_relations: int, inverse: bool = True) -> int:
    """Size of the relation embedding table: base (+inverse) + has_type + has_cluster."""
    return num_relations * (2 if inverse else 1) + 2


def build_neighbor_index(dataset: Dataset, viewset, inverse: bool = True, clusters: bool = True) -> NeighborIndex:
    """Merge relational, type (train) and cluster neighbors of every entity.

    Set ``clusters=False`` to leave cluster neighbors out (entity-cluster view ablation).
    """
    if viewset.num_entities != dataset.num_entities or viewset.num_types != dataset.num_types:
        raise DataError("viewset was built from a different dataset")
    R = dataset.num_relations
    has_type = R * (2 if inverse else 1)
    has_cluster = has_type + 1

    parts = []
    if len(dataset.edges):
        h, r, t = dataset.edges.T
        parts.append((h, r, t, np.full_like(h, ENTITY)))
        if inverse:
            parts.append((t, r + R, h, np.full_like(h, ENTITY)))
    if len(viewset.e2t):
        e, ty = viewset.e2t.T
        parts.append((e, np.full_like(e, has_type), ty, np.full_like(e, TYPE)))
    if clusters and len(viewset.e2c):
        e, c = viewset.e2c.T
        parts.append((e, np.full_like(e, has_cluster), c, np.full_like(e, CLUSTER)))

    if parts:
        ent, rel, nbr, kind = (np.concatenate(x).astype(np.int64) for x in zip(*parts))
    else:
        ent = rel = nbr = kind = np.zeros(0, dtype=np.int64)
    order = np.lexsort((nbr, rel, ent))
    ent, rel, nbr, kind = ent[order], rel[order], nbr[order], kind[order]
    indptr = np.zeros(dataset.num_entities + 1, dtype=np.int64)
    np.cumsum(np.bincount(ent, minlength=dataset.num_entities), out=indptr[1:])
    return NeighborIndex(indptr, rel, nbr, kind, relation_id_count(R, inverse), has_type, has_cluster, inverse)
