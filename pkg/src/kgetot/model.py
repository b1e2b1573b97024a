"""Wiring of views, encoders, alignment and the typing head into one model."""
from __future__ import annotations

import zlib

import numpy as np
import torch

from .config import TrainConfig
from .encoder import EmbeddingSpace, ViewGraphs, encode_all
from .graph import Dataset, build_neighbor_index
from .head import alignment_plans, score_entities, unify
from .views import ViewSet, build_views

DTYPES = {"float64": torch.float64, "float32": torch.float32}


def substream(seed: int, name: str) -> int:
    """Independent integer seed for a named consumer of the root seed."""
    return int(np.random.SeedSequence([seed, zlib.crc32(name.encode())]).generate_state(1)[0])


def views_for(dataset: Dataset, cfg: TrainConfig) -> ViewSet:
    return build_views(dataset, stoplist=frozenset(cfg.stoplist), pair_cap=cfg.pair_cap, seed=substream(cfg.seed, "views"))


class TypingModel:
    def __init__(self, dataset: Dataset, cfg: TrainConfig, viewset: ViewSet | None = None, space=None):
        self.cfg = cfg
        self.dataset = dataset
        self.viewset = viewset if viewset is not None else views_for(dataset, cfg)
        self.graphs = ViewGraphs(self.viewset)
        self.index = build_neighbor_index(dataset, self.viewset, inverse=cfg.inverse_edges,
                                          clusters="e2c" in cfg.views)
        if space is None:
            space = EmbeddingSpace(dataset.num_entities, dataset.num_types, self.viewset.num_clusters,
                                   self.index.num_relation_ids, dim=cfg.dim, comp_layers=cfg.comp_layers,
                                   share_tables=cfg.share_tables, views=cfg.views, dtype=DTYPES[cfg.dtype])
            space.reset_parameters(substream(cfg.seed, "init"))
        self.space = space

    def encode(self):
        return encode_all(self.graphs, self.space, self.cfg.light_layers, self.cfg.composition)

    def plans(self, views=None):
        with torch.no_grad():
            views = self.encode() if views is None else views
            return alignment_plans(views, self.cfg.ot(), self.cfg.swap_roles)

    def unified(self, views=None, plans=None):
        views = self.encode() if views is None else views
        return unify(views, self.cfg.ot(), plans=plans, swap_roles=self.cfg.swap_roles)

    def scores(self, entities, unified):
        return score_entities(entities, self.index, unified, self.space, self.cfg.temperatures)

    @torch.no_grad()
    def predict_logits(self, entities, batch_size=None) -> np.ndarray:
        """Pre-sigmoid scores (len(entities), N) from a fresh encode/align pass."""
        entities = np.asarray(entities, dtype=np.int64)
        unified = self.unified(plans=self.plans())
        bs = batch_size or self.cfg.batch_size
        out = np.empty((len(entities), self.dataset.num_types))
        for lo in range(0, len(entities), bs):
            out[lo:lo + bs] = self.scores(entities[lo:lo + bs], unified).logits.double().numpy()
        return out
