"""Cluster extraction from type names and the entity-type / entity-cluster /
type-cluster-type views."""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Dataset, Vocab

DEFAULT_STOPLIST = frozenset({"wordnet", "wikicat", "base", "freebase"})
PAIR_CAP = 50

_SEPARATORS = re.compile(r"[/_.]+")
_CAMEL = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")


def extract_clusters(type_name: str, stoplist=DEFAULT_STOPLIST) -> list[str]:
    """Lowercased name tokens of a type, in order of first appearance.

    >>> extract_clusters("Argentinian_footballers")
    ['argentinian', 'footballers']
    >>> extract_clusters("wordnet_footballer_110043643")
    ['footballer']
    """
    if not type_name:
        raise ValueError("empty type name")
    out: list[str] = []
    for piece in _SEPARATORS.split(type_name):
        for tok in _CAMEL.split(piece):
            tok = tok.lower()
            if not tok or tok.isdigit() or tok in stoplist or tok in out:
                continue
            out.append(tok)
    return out


@dataclass
class ViewSet:
    """The three derived graphs, as integer edge arrays.

    e2t: (K, 2) entity-type; e2c: (K', 2) entity-cluster;
    tct: (P, 3) type, cluster-as-relation, type.
    """

    num_entities: int
    num_types: int
    clusters: Vocab
    type_clusters: list[list[int]]
    cluster_members: dict[int, set[int]]
    e2t: np.ndarray
    e2c: np.ndarray
    tct: np.ndarray

    @property
    def num_clusters(self):
        return len(self.clusters)


def _cluster_pairs(members: list[int], cap: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    k = len(members)
    if k <= cap:
        return [(a, b) for a in members for b in members if a != b]
    # keep the output symmetric: sample unordered pairs, emit both directions
    want = cap * k // 2
    chosen: set[tuple[int, int]] = set()
    arr = np.asarray(members)
    while len(chosen) < want:
        a, b = rng.choice(arr, size=2, replace=False).tolist()
        chosen.add((min(a, b), max(a, b)))
    return [p for a, b in sorted(chosen) for p in ((a, b), (b, a))]


def build_views(dataset: Dataset, stoplist=DEFAULT_STOPLIST, pair_cap: int = PAIR_CAP, seed: int = 0) -> ViewSet:
    """Derive clusters from every type name and build views from train tuples only."""
    clusters = Vocab("cluster")
    type_clusters = []
    for name in dataset.types.id_to_name:
        type_clusters.append([clusters.add(tok) for tok in extract_clusters(name, stoplist)])

    members: dict[int, set[int]] = {c: set() for c in range(len(clusters))}
    for t, cs in enumerate(type_clusters):
        for c in cs:
            members[c].add(t)

    e2t = dataset.train.copy()
    e2c, seen = [], set()
    for e, t in e2t.tolist():
        for c in type_clusters[t]:
            if (e, c) not in seen:
                seen.add((e, c))
                e2c.append((e, c))

    rng = np.random.default_rng(seed)
    tct = []
    for c in range(len(clusters)):
        for a, b in _cluster_pairs(sorted(members[c]), pair_cap, rng):
            tct.append((a, c, b))

    return ViewSet(
        num_entities=dataset.num_entities,
        num_types=dataset.num_types,
        clusters=clusters,
        type_clusters=type_clusters,
        cluster_members=members,
        e2t=np.asarray(e2t, dtype=np.int64).reshape(-1, 2),
        e2c=np.asarray(e2c, dtype=np.int64).reshape(-1, 2),
        tct=np.asarray(tct, dtype=np.int64).reshape(-1, 3),
    )


def write_views(dataset: Dataset, views: ViewSet, directory):
    """Dump the cluster vocabulary and the three views as TSV files."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    ent, typ, clu = dataset.entities.id_to_name, dataset.types.id_to_name, views.clusters.id_to_name
    with open(d / "clusters.tsv", "w", encoding="utf-8") as fh:
        for c, name in enumerate(clu):
            fh.write(f"{c}\t{name}\t{len(views.cluster_members[c])}\n")
    with open(d / "type_clusters.tsv", "w", encoding="utf-8") as fh:
        for t, cs in enumerate(views.type_clusters):
            fh.write(f"{typ[t]}\t{','.join(clu[c] for c in cs)}\n")
    with open(d / "e2t.tsv", "w", encoding="utf-8") as fh:
        fh.writelines(f"{ent[e]}\thas_type\t{typ[t]}\n" for e, t in views.e2t.tolist())
    with open(d / "e2c.tsv", "w", encoding="utf-8") as fh:
        fh.writelines(f"{ent[e]}\thas_cluster\t{clu[c]}\n" for e, c in views.e2c.tolist())
    with open(d / "tct.tsv", "w", encoding="utf-8") as fh:
        fh.writelines(f"{typ[a]}\t{clu[c]}\t{typ[b]}\n" for a, c, b in views.tct.tolist())
