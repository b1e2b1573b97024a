"""View encoders: LightGCN for the bipartite views, CompGCN for the type-cluster-type view."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

SOURCE, DESTINATION = "source", "destination"

# (kind, view) -> role used by the cross-view alignment
ROLES = {
    ("entity", "e2t"): DESTINATION,
    ("entity", "e2c"): SOURCE,
    ("type", "e2t"): DESTINATION,
    ("type", "tct"): SOURCE,
    ("cluster", "e2c"): DESTINATION,
    ("cluster", "tct"): SOURCE,
}


class BipartiteGraph:
    """Edge list of a two-sided graph with symmetric 1/sqrt(d_u d_v) weights."""

    def __init__(self, edges, n_left: int, n_right: int):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        self.n_left, self.n_right = n_left, n_right
        self.left = torch.from_numpy(edges[:, 0].copy())
        self.right = torch.from_numpy(edges[:, 1].copy())
        dl = np.bincount(edges[:, 0], minlength=n_left).astype(np.float64)
        dr = np.bincount(edges[:, 1], minlength=n_right).astype(np.float64)
        w = 1.0 / np.sqrt(dl[edges[:, 0]] * dr[edges[:, 1]]) if len(edges) else np.zeros(0)
        self.weight = torch.from_numpy(w)


def lightgcn_forward(graph, left_table: torch.Tensor, right_table: torch.Tensor, layers: int):
    """Parameter-free propagation over a bipartite graph; returns the mean of layers 0..L.

    ``graph`` is a BipartiteGraph or an (K, 2) array of (left, right) edges.
    """
    if layers < 0:
        raise ValueError("layers must be >= 0")
    if not isinstance(graph, BipartiteGraph):
        graph = BipartiteGraph(graph, left_table.shape[0], right_table.shape[0])
    w = graph.weight.to(left_table.dtype).unsqueeze(1)
    x_l, x_r = left_table, right_table
    acc_l, acc_r = left_table, right_table
    for _ in range(layers):
        new_l = torch.zeros_like(x_l).index_add(0, graph.left, w * x_r[graph.right])
        new_r = torch.zeros_like(x_r).index_add(0, graph.right, w * x_l[graph.left])
        x_l, x_r = new_l, new_r
        acc_l = acc_l + x_l
        acc_r = acc_r + x_r
    return acc_l / (layers + 1), acc_r / (layers + 1)


def _compose(h, rel, op):
    if op == "sub":
        return h - rel
    if op == "mult":
        return h * rel
    raise ValueError(f"unknown composition {op!r}")


def compgcn_forward(tct, type_table: torch.Tensor, cluster_table: torch.Tensor, layers, composition: str = "sub"):
    """CompGCN over (type, cluster, type) edges with clusters acting as relations.

    ``layers`` is a sequence of objects/mappings exposing ``w_self``, ``w_in``,
    ``w_out`` and ``w_rel`` (D x D). Forward edges use ``w_in``, their inverses
    ``w_out``; incoming messages are averaged, the self-loop term added, then ReLU.
    """
    if len(layers) < 1:
        raise ValueError("need at least one CompGCN layer")
    tct = torch.as_tensor(np.asarray(tct, dtype=np.int64).reshape(-1, 3))
    src, rel_idx, dst = tct[:, 0], tct[:, 1], tct[:, 2]
    n = type_table.shape[0]
    deg = torch.bincount(torch.cat([dst, src]), minlength=n).to(type_table.dtype).clamp_(min=1).unsqueeze(1)
    h, r = type_table, cluster_table
    for layer in layers:
        if isinstance(layer, dict):
            w_self, w_in, w_out, w_rel = (layer[k] for k in ("w_self", "w_in", "w_out", "w_rel"))
        else:
            w_self, w_in, w_out, w_rel = layer.w_self, layer.w_in, layer.w_out, layer.w_rel
        msg_in = _compose(h[src], r[rel_idx], composition) @ w_in.T
        msg_out = _compose(h[dst], r[rel_idx], composition) @ w_out.T
        agg = torch.zeros_like(h).index_add(0, dst, msg_in).index_add(0, src, msg_out) / deg
        h = torch.relu(agg + h @ w_self.T)
        r = r @ w_rel.T
    return h, r


class CompLayer(nn.Module):
    def __init__(self, dim, dtype):
        super().__init__()
        self.w_self = nn.Parameter(torch.empty(dim, dim, dtype=dtype))
        self.w_in = nn.Parameter(torch.empty(dim, dim, dtype=dtype))
        self.w_out = nn.Parameter(torch.empty(dim, dim, dtype=dtype))
        self.w_rel = nn.Parameter(torch.empty(dim, dim, dtype=dtype))


class EmbeddingSpace(nn.Module):
    """All learnable tables: per-view base embeddings, CompGCN weights,
    relation embeddings and the prediction MLP (W, b).

    With ``share_tables`` the entity, type and cluster base tables are shared
    between views instead of one table per view.
    """

    def __init__(self, num_entities, num_types, num_clusters, num_relation_ids, dim=100,
                 comp_layers=2, share_tables=False, views=("e2t", "e2c", "tct"), dtype=torch.float64):
        super().__init__()
        self.dims = dict(entities=num_entities, types=num_types, clusters=num_clusters,
                         relation_ids=num_relation_ids, dim=dim)
        self.dim = dim
        self.share_tables = share_tables
        self.views = tuple(views)

        def table(n):
            return nn.Parameter(torch.empty(n, dim, dtype=dtype))

        self.tables = nn.ParameterDict()
        for kind, view in ROLES:
            if view not in self.views:
                continue
            n = {"entity": num_entities, "type": num_types, "cluster": num_clusters}[kind]
            key = self._key(kind, view)
            if key not in self.tables:
                self.tables[key] = table(n)
        self.relation = table(num_relation_ids)
        self.comp = nn.ModuleList(CompLayer(dim, dtype) for _ in range(comp_layers if "tct" in self.views else 0))
        self.out_w = nn.Parameter(torch.empty(num_types, dim, dtype=dtype))
        self.out_b = nn.Parameter(torch.zeros(num_types, dtype=dtype))

    @property
    def num_types(self):
        return self.out_w.shape[0]

    def _key(self, kind, view):
        # a bare "type" key would shadow Module.type
        return f"{kind}_shared" if self.share_tables else f"{kind}_{view}"

    def base(self, kind: str, view: str) -> torch.Tensor:
        return self.tables[self._key(kind, view)]

    @torch.no_grad()
    def reset_parameters(self, seed: int = 0):
        gen = torch.Generator().manual_seed(seed)
        bound = 1.0 / math.sqrt(self.dim)
        for name in sorted(self.tables):
            t = self.tables[name]
            t.copy_(torch.rand(t.shape, generator=gen, dtype=t.dtype) * 2 * bound - bound)
        self.relation.copy_(torch.rand(self.relation.shape, generator=gen, dtype=self.relation.dtype) * 2 * bound - bound)
        for layer in self.comp:
            for w in (layer.w_self, layer.w_in, layer.w_out, layer.w_rel):
                _xavier(w, gen)
        _xavier(self.out_w, gen)
        self.out_b.zero_()
        return self


def _xavier(w, gen):
    fan_out, fan_in = w.shape
    a = math.sqrt(6.0 / (fan_in + fan_out))
    w.copy_(torch.rand(w.shape, generator=gen, dtype=w.dtype) * 2 * a - a)


@dataclass
class ViewEmbeddings:
    """View-specific outputs; None where the producing view is disabled."""

    entity_e2t: torch.Tensor | None = None
    type_e2t: torch.Tensor | None = None
    entity_e2c: torch.Tensor | None = None
    cluster_e2c: torch.Tensor | None = None
    type_tct: torch.Tensor | None = None
    cluster_tct: torch.Tensor | None = None

    def get(self, kind: str, view: str):
        return getattr(self, f"{kind}_{view}")

    @staticmethod
    def role(kind: str, view: str) -> str:
        return ROLES[(kind, view)]


class ViewGraphs:
    """Precomputed tensors for encoding a ViewSet."""

    def __init__(self, viewset):
        self.e2t = BipartiteGraph(viewset.e2t, viewset.num_entities, viewset.num_types)
        self.e2c = BipartiteGraph(viewset.e2c, viewset.num_entities, viewset.num_clusters)
        self.tct = viewset.tct


def encode_all(graphs: ViewGraphs, space: EmbeddingSpace, light_layers: int = 4, composition: str = "sub") -> ViewEmbeddings:
    out = ViewEmbeddings()
    if "e2t" in space.views:
        out.entity_e2t, out.type_e2t = lightgcn_forward(
            graphs.e2t, space.base("entity", "e2t"), space.base("type", "e2t"), light_layers)
    if "e2c" in space.views:
        out.entity_e2c, out.cluster_e2c = lightgcn_forward(
            graphs.e2c, space.base("entity", "e2c"), space.base("cluster", "e2c"), light_layers)
    if "tct" in space.views:
        out.type_tct, out.cluster_tct = compgcn_forward(
            graphs.tct, space.base("type", "tct"), space.base("cluster", "tct"), space.comp, composition)
    return out
