"""Filtered ranking metrics."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .checkpoint import Checkpoint, CheckpointError
from .graph import Dataset

HITS_AT = (1, 3, 10)


@dataclass
class Metrics:
    mrr: float
    hits_at: dict
    tuple_count: int

    def table(self) -> str:
        rows = [("MRR", f"{self.mrr:.4f}")]
        rows += [(f"Hits@{k}", f"{self.hits_at[k]:.4f}") for k in HITS_AT]
        rows.append(("Tuples", str(self.tuple_count)))
        return "\n".join(f"{name:<8}{value:>10}" for name, value in rows)

    def line(self) -> str:
        return f"mrr={self.mrr:.6f} h1={self.hits_at[1]:.6f} h3={self.hits_at[3]:.6f} h10={self.hits_at[10]:.6f}"


def filtered_rank(scores, target: int, known=()) -> int:
    """1 + number of unfiltered competitors scoring >= the target (ties count against it)."""
    scores = np.asarray(scores)
    if not 0 <= target < len(scores):
        raise ValueError(f"target {target} out of range for {len(scores)} types")
    keep = np.ones(len(scores), dtype=bool)
    keep[list(known)] = False
    keep[target] = False
    return 1 + int(np.count_nonzero(scores[keep] >= scores[target]))


def metrics_from_ranks(ranks) -> Metrics:
    ranks = np.asarray(ranks, dtype=np.float64)
    if len(ranks) == 0:
        return Metrics(0.0, {k: 0.0 for k in HITS_AT}, 0)
    return Metrics(float(np.mean(1.0 / ranks)), {k: float(np.mean(ranks <= k)) for k in HITS_AT}, len(ranks))


def split_ranks(model, dataset: Dataset, split: str) -> np.ndarray:
    """Filtered rank of every (entity, type) tuple of ``split`` under ``model``."""
    tuples = dataset.split(split)
    if len(tuples) == 0:
        return np.zeros(0, dtype=np.int64)
    by_entity: dict[int, list[int]] = defaultdict(list)
    for e, t in tuples.tolist():
        by_entity[e].append(t)
    entities = np.fromiter(by_entity, dtype=np.int64)
    scores = model.predict_logits(entities)
    known = dataset.known_types()
    ranks = []
    for row, e in zip(scores, entities.tolist()):
        mask = np.ones(len(row), dtype=bool)
        mask[list(known.get(e, ()))] = False
        candidates = row[mask]
        targets = np.asarray(by_entity[e])
        ranks.extend((1 + (candidates[None, :] >= row[targets][:, None]).sum(1)).tolist())
    return np.asarray(ranks, dtype=np.int64)


def evaluate_model(model, dataset: Dataset, split: str) -> Metrics:
    if split not in ("valid", "test"):
        raise ValueError("split must be 'valid' or 'test'")
    return metrics_from_ranks(split_ranks(model, dataset, split))


def model_from_checkpoint(ckpt: Checkpoint, dataset: Dataset):
    from .config import from_dict
    from .model import TypingModel

    cfg = from_dict(ckpt.header["config"])
    expected = ckpt.header.get("vocab", {})
    actual = dataset.vocab_digest()
    for kind, digest in expected.items():
        if kind in actual and actual[kind] != digest:
            raise CheckpointError(f"{kind} vocabulary does not match the checkpoint")
    model = TypingModel(dataset, cfg.train)
    if "cluster" in expected and model.viewset.clusters.digest() != expected["cluster"]:
        raise CheckpointError("cluster vocabulary does not match the checkpoint")
    ckpt.load_into(model.space)
    return model


def evaluate(ckpt: Checkpoint, dataset: Dataset, split: str) -> Metrics:
    return evaluate_model(model_from_checkpoint(ckpt, dataset), dataset, split)


def count_parameters(ckpt: Checkpoint) -> int:
    return ckpt.num_parameters()
