"""Robustness variants: easy/hard type splits and sparse-neighbor graphs."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .graph import Dataset, from_records, save_dir

KINDS = ("easy", "hard", "easy_hard", "drop_neighbors", "drop_relation_types")


@dataclass
class VariantSpec:
    kind: str
    rate: float | None = None
    k: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown variant kind {self.kind!r}")
        if self.kind.startswith("drop"):
            if self.rate is None or not 0 < self.rate < 1:
                raise ValueError("dropping rate must lie in (0, 1)")
        elif self.k is None or self.k < 1:
            raise ValueError("easy/hard threshold k must be >= 1")


def _with(dataset: Dataset, **changes) -> Dataset:
    fields = dict(entities=dataset.entities, relations=dataset.relations, types=dataset.types,
                  edges=dataset.edges, train=dataset.train, valid=dataset.valid, test=dataset.test,
                  name=dataset.name)
    fields.update(changes)
    return Dataset(**fields)


def type_frequency(dataset: Dataset) -> np.ndarray:
    return np.bincount(dataset.train[:, 1], minlength=dataset.num_types) if len(dataset.train) \
        else np.zeros(dataset.num_types, dtype=np.int64)


def split_easy_hard(dataset: Dataset, k: int):
    """Partition every split by train frequency: hard if it occurs <= k times, easy otherwise."""
    if k < 1:
        raise ValueError("k must be >= 1")
    hard_type = type_frequency(dataset) <= k

    def part(arr, want_hard):
        return arr[hard_type[arr[:, 1]] == want_hard] if len(arr) else arr

    easy = _with(dataset, train=part(dataset.train, False), valid=part(dataset.valid, False),
                 test=part(dataset.test, False), name=f"{dataset.name}-easy")
    hard = _with(dataset, train=part(dataset.train, True), valid=part(dataset.valid, True),
                 test=part(dataset.test, True), name=f"{dataset.name}-hard")
    return easy, hard


def distinct_types(dataset: Dataset) -> int:
    """Number of types with at least one tuple in any split."""
    arrs = [a[:, 1] for a in (dataset.train, dataset.valid, dataset.test) if len(a)]
    return int(len(np.unique(np.concatenate(arrs)))) if arrs else 0


def drop_count(rate: float, n: int) -> int:
    # guard against e.g. 0.7 * 10 = 7.000000000000001
    return min(n, math.ceil(rate * n - 1e-9)) if n else 0


def _entity_rng(seed: int, entity: int) -> np.random.Generator:
    return np.random.default_rng([seed, entity])


def _edges_by_head(edges: np.ndarray):
    order = np.argsort(edges[:, 0], kind="stable")
    heads, starts = np.unique(edges[order, 0], return_index=True)
    bounds = np.append(starts, len(order))
    for h, lo, hi in zip(heads.tolist(), bounds[:-1], bounds[1:]):
        yield h, order[lo:hi]


def drop_relational_neighbors(dataset: Dataset, rate: float, seed: int = 0) -> Dataset:
    """Remove a random ceil(rate * out-degree) subset of every entity's outgoing triples."""
    VariantSpec("drop_neighbors", rate=rate, seed=seed)
    keep = np.ones(len(dataset.edges), dtype=bool)
    for head, rows in _edges_by_head(dataset.edges):
        n = drop_count(rate, len(rows))
        keep[_entity_rng(seed, head).choice(rows, size=n, replace=False)] = False
    return _with(dataset, edges=dataset.edges[keep], name=f"{dataset.name}-dropnbr{rate}")


def drop_relation_types(dataset: Dataset, rate: float, seed: int = 0) -> Dataset:
    """For every entity remove all outgoing triples under a random ceil(rate * #relation types) subset."""
    VariantSpec("drop_relation_types", rate=rate, seed=seed)
    keep = np.ones(len(dataset.edges), dtype=bool)
    for head, rows in _edges_by_head(dataset.edges):
        rels = np.unique(dataset.edges[rows, 1])
        chosen = _entity_rng(seed, head).choice(rels, size=drop_count(rate, len(rels)), replace=False)
        keep[rows[np.isin(dataset.edges[rows, 1], chosen)]] = False
    return _with(dataset, edges=dataset.edges[keep], name=f"{dataset.name}-droprel{rate}")


def subsample_entities(dataset: Dataset, n: int, seed: int = 0) -> Dataset:
    """Induced sub-dataset on ``n`` random entities that have at least one train type."""
    typed = np.unique(dataset.train[:, 0])
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(typed, size=min(n, len(typed)), replace=False))
    keep = np.zeros(dataset.num_entities, dtype=bool)
    keep[chosen] = True
    ent, rel, typ = dataset.entities.id_to_name, dataset.relations.id_to_name, dataset.types.id_to_name
    triples = [(ent[h], rel[r], ent[t]) for h, r, t in dataset.edges.tolist() if keep[h] and keep[t]]

    def tuples(arr):
        return [(ent[e], typ[t]) for e, t in arr.tolist() if keep[e]]

    return from_records(triples, tuples(dataset.train), tuples(dataset.valid), tuples(dataset.test),
                        name=f"{dataset.name}-sub{n}")


def write_variant(dataset: Dataset, spec: VariantSpec, directory, source=None):
    """Write the variant files plus a manifest.json recording how they were made."""
    save_dir(dataset, directory)
    manifest = {"variant": asdict(spec), "source": str(source) if source else None, "counts": dataset.counts(),
                "distinct_types": distinct_types(dataset)}
    Path(directory, "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
