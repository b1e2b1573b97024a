"""Single-neighbor type scoring and mixture pooling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .encoder import ViewEmbeddings
from .graph import TYPE, NeighborIndex
from .ot import OTConfig, TransportPlan, ota_align, transport_plan

DEFAULT_TEMPERATURES = (0.5, 1.0, 1.5, 2.0, 2.5)

# (kind, source view, destination view)
ALIGNMENTS = (("entity", "e2c", "e2t"), ("type", "tct", "e2t"), ("cluster", "tct", "e2c"))


@dataclass
class UnifiedTable:
    """Row-stacked [Z^e; Z^t; Z^c] with block offsets."""

    Z: torch.Tensor
    offsets: tuple[int, int, int]
    sizes: tuple[int, int, int]

    def block(self, kind: int) -> torch.Tensor:
        lo = self.offsets[kind]
        return self.Z[lo:lo + self.sizes[kind]]


@dataclass
class TypingScores:
    s_max: torch.Tensor
    s_avg: torch.Tensor
    s_w: torch.Tensor
    logits: torch.Tensor  # s_w + s_max + s_avg

    @property
    def probs(self) -> torch.Tensor:
        return torch.sigmoid(self.logits)


def _pair(views: ViewEmbeddings, kind, src_view, dst_view, swap):
    src, dst = views.get(kind, src_view), views.get(kind, dst_view)
    return (dst, src) if swap else (src, dst)


def alignment_plans(views: ViewEmbeddings, cfg: OTConfig, swap_roles=False) -> dict[str, TransportPlan | None]:
    """Transport plans for the entity, type and cluster alignments (no gradient)."""
    plans = {}
    for kind, sv, dv in ALIGNMENTS:
        src, dst = _pair(views, kind, sv, dv, swap_roles)
        plans[kind] = transport_plan(src, dst, cfg) if src is not None and dst is not None else None
    return plans


def unify(views: ViewEmbeddings, cfg: OTConfig, plans=None, swap_roles=False) -> UnifiedTable:
    """Align each source/destination pair and stack the results.

    A kind whose source or destination view is disabled uses the remaining
    view's embedding directly.
    """
    blocks = []
    for kind, sv, dv in ALIGNMENTS:
        src, dst = _pair(views, kind, sv, dv, swap_roles)
        if src is None or dst is None:
            only = dst if dst is not None else src
            if only is None:
                raise ValueError(f"no view produces {kind} embeddings")
            blocks.append(only)
            continue
        if plans is not None and kind in plans:
            plan = plans[kind]
            if plan is None:
                Z = src + dst if src.shape[0] == dst.shape[0] else dst
            else:
                Z, _ = ota_align(src, dst, cfg, plan=plan)
        else:
            Z, _ = ota_align(src, dst, cfg)
        blocks.append(Z)
    sizes = tuple(b.shape[0] for b in blocks)
    offsets = (0, sizes[0], sizes[0] + sizes[1])
    return UnifiedTable(torch.cat(blocks, dim=0), offsets, sizes)


def neighbor_logits(neighbor_row, relation_row, W, b, self_type: int | None = None):
    """W · ReLU(f - r) + b; the neighbor's own type index is masked to -inf."""
    out = W @ torch.relu(neighbor_row - relation_row) + b
    if self_type is not None:
        out = out.clone()
        out[self_type] = -torch.inf
    return out


def pool_segments(logits, segment, num_segments, temperatures, bias) -> TypingScores:
    """Mixture pooling of per-neighbor logits grouped by ``segment``.

    ``logits`` is (K, N) with -inf at masked positions; ``segment`` (K,) maps each
    row to its entity slot. Per type dimension: max, mean and the per-head
    temperature softmax over neighbors, all over unmasked entries only. A
    dimension with no unmasked entry (including a neighborless entity) falls
    back to the bias-only pseudo-neighbor.
    """
    K, N = logits.shape
    dtype = logits.dtype
    valid = ~torch.isneginf(logits)
    validf = valid.to(dtype)
    lz = torch.where(valid, logits, torch.zeros((), dtype=dtype))
    seg_exp = segment.unsqueeze(1).expand(K, N)

    cnt = torch.zeros(num_segments, N, dtype=dtype).index_add(0, segment, validf)
    has = cnt > 0
    s_max = torch.full((num_segments, N), -torch.inf, dtype=dtype).scatter_reduce(
        0, seg_exp, torch.where(valid, logits, torch.full((), -torch.inf, dtype=dtype)), "amax", include_self=True)
    s_avg = torch.zeros(num_segments, N, dtype=dtype).index_add(0, segment, lz) / cnt.clamp(min=1)

    shift = torch.where(has, s_max, torch.zeros((), dtype=dtype)).detach()[segment]
    s_w = torch.zeros(num_segments, N, dtype=dtype)
    for h in temperatures:
        e = torch.exp(torch.where(valid, h * (lz - shift), torch.zeros((), dtype=dtype))) * validf
        den = torch.zeros(num_segments, N, dtype=dtype).index_add(0, segment, e)
        w = e / den.clamp(min=torch.finfo(dtype).tiny)[segment]
        s_w = s_w.index_add(0, segment, w * lz)

    b = bias.unsqueeze(0).expand(num_segments, N)
    s_max = torch.where(has, s_max, b)
    s_avg = torch.where(has, s_avg, b)
    s_w = torch.where(has, s_w, len(temperatures) * b)
    return TypingScores(s_max, s_avg, s_w, s_w + s_max + s_avg)


def mixture_pool(logit_list, temperatures=DEFAULT_TEMPERATURES, bias=None) -> TypingScores:
    """Pool the logit vectors of a single entity's neighbors (shape (N,) results)."""
    if len(logit_list) == 0:
        raise ValueError("mixture_pool needs at least one neighbor; score neighborless entities with the bias")
    if len(temperatures) == 0:
        raise ValueError("need at least one head")
    logits = torch.stack([torch.as_tensor(x, dtype=torch.float64) if not torch.is_tensor(x) else x for x in logit_list])
    seg = torch.zeros(logits.shape[0], dtype=torch.long)
    bias = torch.zeros(logits.shape[1], dtype=logits.dtype) if bias is None else bias
    s = pool_segments(logits, seg, 1, temperatures, bias)
    return TypingScores(s.s_max[0], s.s_avg[0], s.s_w[0], s.logits[0])


def gather_neighbors(index: NeighborIndex, entities: np.ndarray):
    """Flattened neighbor entries of ``entities``: (segment, relation, neighbor, kind)."""
    entities = np.asarray(entities, dtype=np.int64)
    starts = index.indptr[entities]
    counts = index.indptr[entities + 1] - starts
    total = int(counts.sum())
    segment = np.repeat(np.arange(len(entities)), counts)
    pos = np.repeat(starts - np.concatenate(([0], np.cumsum(counts)[:-1])), counts) + np.arange(total)
    return segment, index.relation[pos], index.neighbor[pos], index.kind[pos]


def score_entities(entities, index: NeighborIndex, unified: UnifiedTable, space, temperatures=DEFAULT_TEMPERATURES,
                   mask_self_type=True) -> TypingScores:
    """Scores over all types for each entity in ``entities`` (B, N)."""
    entities = np.asarray(entities, dtype=np.int64)
    if len(entities) and (entities.min() < 0 or entities.max() >= index.num_entities):
        raise KeyError("unknown entity id")
    segment, rel, nbr, kind = gather_neighbors(index, entities)
    offsets = np.asarray(unified.offsets)
    rows = torch.from_numpy(offsets[kind] + nbr)
    f = unified.Z[rows]
    r = space.relation[torch.from_numpy(rel)]
    logits = torch.relu(f - r) @ space.out_w.T + space.out_b
    if mask_self_type:
        is_type = np.nonzero(kind == TYPE)[0]
        if len(is_type):
            logits = logits.index_put((torch.from_numpy(is_type), torch.from_numpy(nbr[is_type])),
                                      torch.tensor(-torch.inf, dtype=logits.dtype))
    return pool_segments(logits, torch.from_numpy(segment), len(entities), temperatures, space.out_b)


def predict_entity(entity_id: int, index: NeighborIndex, unified: UnifiedTable, space,
                   temperatures=DEFAULT_TEMPERATURES) -> TypingScores:
    if not 0 <= entity_id < index.num_entities:
        raise KeyError(f"unknown entity id {entity_id}")
    s = score_entities([entity_id], index, unified, space, temperatures)
    return TypingScores(s.s_max[0], s.s_avg[0], s.s_w[0], s.logits[0])

