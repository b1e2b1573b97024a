"""Training loop: per-epoch transport plans, entity batches, BDCE, Adam."""
from __future__ import annotations

import logging
import math
import time

import numpy as np
import torch

from .checkpoint import Checkpoint
from .config import ResolvedConfig
from .evaluate import evaluate_model
from .graph import Dataset
from .loss import AdamState, adam_step, bdce_loss
from .model import TypingModel, substream

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    pass


def configure_torch(threads: int = 1, deterministic: bool = False):
    torch.set_num_threads(threads)
    torch.use_deterministic_algorithms(deterministic)


def positives_matrix(dataset: Dataset, entities: np.ndarray) -> torch.Tensor:
    """Dense (B, N) train-type indicator for ``entities``."""
    slot = {e: i for i, e in enumerate(entities.tolist())}
    pos = torch.zeros(len(entities), dataset.num_types, dtype=torch.bool)
    rows = [(slot[e], t) for e, t in dataset.train.tolist() if e in slot]
    if rows:
        r = torch.tensor(rows)
        pos[r[:, 0], r[:, 1]] = True
    return pos


def _norms(params):
    return {k: float(p.detach().norm()) for k, p in params.items()}


def checkpoint_header(model: TypingModel, config: ResolvedConfig, **extra) -> dict:
    vocab = model.dataset.vocab_digest()
    vocab["cluster"] = model.viewset.clusters.digest()
    return {"config": config.as_dict(), "vocab": vocab, "counts": model.dataset.counts(),
            "clusters": model.viewset.num_clusters, **extra}


def train(dataset: Dataset, config: ResolvedConfig, viewset=None, callback=None) -> Checkpoint:
    """Train and return the checkpoint with the best validation MRR.

    Transport plans are refreshed once per epoch from a no-grad encoding and
    held constant inside the epoch; every batch re-encodes the views so that
    gradients reach all encoder parameters.
    """
    cfg, loss_cfg = config.train, config.loss
    configure_torch(cfg.threads, cfg.deterministic)
    model = TypingModel(dataset, cfg, viewset=viewset)
    space = model.space
    params = dict(space.named_parameters())
    state = AdamState()
    rng = np.random.default_rng(substream(cfg.seed, "sampling"))

    train_entities = np.unique(dataset.train[:, 0]) if len(dataset.train) else np.zeros(0, dtype=np.int64)
    has_valid = len(dataset.valid) > 0

    best = Checkpoint.from_space(space, {})
    best_epoch, best_mrr = 0, -math.inf
    history = []
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        try:
            plans = model.plans()
        except ValueError as exc:
            raise NumericalError(f"alignment failed at epoch {epoch}: {exc}; parameter norms {_norms(params)}") from exc
        order = rng.permutation(train_entities)
        total = 0.0
        for bi, lo in enumerate(range(0, len(order), cfg.batch_size)):
            batch = order[lo:lo + cfg.batch_size]
            unified = model.unified(plans=plans)
            scores = model.scores(batch, unified)
            loss = bdce_loss(scores.probs, positives_matrix(dataset, batch), loss_cfg)
            if not torch.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {bi}; parameter norms {_norms(params)}")
            space.zero_grad(set_to_none=True)
            loss.backward()
            adam_step(params, {k: p.grad for k, p in params.items()}, state,
                      lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
            total += loss.detach().item()
        record = {"epoch": epoch, "loss": total, "seconds": time.perf_counter() - t0}
        if has_valid and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            try:
                m = evaluate_model(model, dataset, "valid")
            except ValueError as exc:
                raise NumericalError(f"validation failed at epoch {epoch}: {exc}; "
                                     f"parameter norms {_norms(params)}") from exc
            record["valid_mrr"] = m.mrr
            if m.mrr > best_mrr:
                best_mrr, best_epoch = m.mrr, epoch
                best = Checkpoint.from_space(space, {})
        elif not has_valid:
            best, best_epoch = Checkpoint.from_space(space, {}), epoch
        history.append(record)
        log.info("epoch %d loss %.4f%s", epoch, total,
                 f" valid_mrr {record['valid_mrr']:.4f}" if "valid_mrr" in record else "")
        if callback is not None:
            callback(record)

    best.header = checkpoint_header(model, config, best_epoch=best_epoch,
                                    best_valid_mrr=None if best_mrr == -math.inf else best_mrr,
                                    history=history)
    return best
