"""Distribution-weighted binary cross-entropy and a plain Adam optimizer."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

CLAMP = 1e-7

# (location, scale) used when only the distribution name is given
DEFAULT_LOC_SCALE = {"cauchy": (0.5, 1.0), "gumbel": (1.0, 3.0), "laplace": (0.5, 0.5)}


@dataclass
class LossConfig:
    theta: float = 0.7
    weight_fn: str = "beta"
    alpha: float = 2.0
    beta: float = 2.0
    loc: float | None = None
    scale: float | None = None

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        if self.weight_fn not in ("beta", "cauchy", "gumbel", "laplace", "constant"):
            raise ValueError(f"unknown weight_fn {self.weight_fn!r}")
        if self.weight_fn == "beta" and (self.alpha <= 0 or self.beta <= 0):
            raise ValueError("beta weighting needs alpha > 0 and beta > 0")
        if self.weight_fn in DEFAULT_LOC_SCALE:
            loc, scale = DEFAULT_LOC_SCALE[self.weight_fn]
            self.loc = loc if self.loc is None else self.loc
            self.scale = scale if self.scale is None else self.scale
            if self.scale <= 0:
                raise ValueError("scale must be positive")


def weight_pdf(x, cfg: LossConfig):
    """Density of the configured weighting distribution at probabilities ``x``.

    Accepts a float, numpy array or tensor and returns the same kind.
    """
    is_scalar = isinstance(x, (int, float))
    t = torch.as_tensor(x, dtype=torch.float64) if not torch.is_tensor(x) else x
    if ((t < 0) | (t > 1) | torch.isnan(t)).any():
        raise ValueError("weight_pdf is defined on [0, 1]")
    kind = cfg.weight_fn
    if kind == "constant":
        out = torch.ones_like(t)
    elif kind == "beta":
        a, b = cfg.alpha, cfg.beta
        log_b = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
        out = torch.pow(t, a - 1) * torch.pow(1 - t, b - 1) / math.exp(log_b)
    else:
        z = (t - cfg.loc) / cfg.scale
        if kind == "cauchy":
            out = 1.0 / (math.pi * cfg.scale * (1 + z * z))
        elif kind == "gumbel":
            out = torch.exp(-(z + torch.exp(-z))) / cfg.scale
        else:
            out = torch.exp(-z.abs()) / (2 * cfg.scale)
    if is_scalar:
        return float(out)
    if isinstance(x, np.ndarray):
        return out.numpy()
    return out


def bdce_loss(probs: torch.Tensor, positives: torch.Tensor, cfg: LossConfig, neg_weight: torch.Tensor | None = None):
    """Sum over entities and all N types of the BDCE objective.

    ``probs`` (B, N) sigmoid outputs, ``positives`` (B, N) boolean. The negative
    weight ``theta * f(s')`` is a constant for autograd; pass ``neg_weight`` to
    supply it explicitly (the same weight evaluated elsewhere).
    """
    positives = positives.to(torch.bool)
    s = probs.clamp(CLAMP, 1 - CLAMP)
    if neg_weight is None:
        neg_weight = cfg.theta * weight_pdf(s.detach(), cfg)
    pos_term = -torch.where(positives, torch.log(s), torch.zeros((), dtype=s.dtype)).sum()
    neg_term = -torch.where(positives, torch.zeros((), dtype=s.dtype), neg_weight.detach() * torch.log1p(-s)).sum()
    return pos_term + neg_term


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place on ``params``."""
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    with torch.no_grad():
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            if name not in state.m:
                state.m[name] = torch.zeros_like(p)
                state.v[name] = torch.zeros_like(p)
            m, v = state.m[name], state.v[name]
            m.mul_(beta1).add_(g, alpha=1 - beta1)
            v.mul_(beta2).addcmul_(g, g, value=1 - beta2)
            p.sub_(lr * (m / bc1) / ((v / bc2).sqrt() + eps))
    return params, state
