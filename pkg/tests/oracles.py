"""Independent reference computations used by the tests."""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog


def exact_ot(C, mu=None, nu=None):
    """Unregularized OT cost and plan by linear programming."""
    C = np.asarray(C, dtype=np.float64)
    n, m = C.shape
    mu = np.full(n, 1.0 / n) if mu is None else np.asarray(mu)
    nu = np.full(m, 1.0 / m) if nu is None else np.asarray(nu)
    A = np.zeros((n + m, n * m))
    for i in range(n):
        A[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        A[n + j, j::m] = 1.0
    res = linprog(C.ravel(), A_eq=A, b_eq=np.concatenate([mu, nu]), bounds=(0, None), method="highs")
    assert res.success
    return float(res.fun), res.x.reshape(n, m)


def exact_ot_2x2(C):
    """Uniform 2x2 OT by scanning the one-parameter feasible family T = [[a, .5-a], [.5-a, a]]."""
    C = np.asarray(C, dtype=np.float64)
    best = None
    for a in np.linspace(0.0, 0.5, 50001):
        T = np.array([[a, 0.5 - a], [0.5 - a, a]])
        cost = float((T * C).sum())
        if best is None or cost < best[0]:
            best = (cost, T)
    return best


def cosine_cost(A, B):
    A, B = np.asarray(A, float), np.asarray(B, float)
    out = np.empty((len(A), len(B)))
    for i, a in enumerate(A):
        for j, b in enumerate(B):
            out[i, j] = 1.0 - float(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return out


def softmax_pool(logits, temperatures):
    """Per-dimension max, mean and multi-head softmax-weighted sum over rows, written with loops."""
    logits = np.asarray(logits, dtype=np.float64)
    L, N = logits.shape
    s_max, s_avg, s_w = np.empty(N), np.empty(N), np.zeros(N)
    for p in range(N):
        col = logits[:, p]
        s_max[p] = max(col)
        s_avg[p] = sum(col) / L
        for h in temperatures:
            z = [math.exp(h * x) for x in col]
            s_w[p] += sum(zj / sum(z) * x for zj, x in zip(z, col))
    return s_max, s_avg, s_w


def brute_rank(scores, target, known):
    """Rank of ``target`` after deleting ``known`` from a descending sort; ties placed ahead of it."""
    order = sorted(range(len(scores)), key=lambda p: (-scores[p], p == target))
    kept = [p for p in order if p == target or p not in known]
    return kept.index(target) + 1


def beta_pdf(x, a, b):
    B = math.gamma(a) * math.gamma(b) / math.gamma(a + b)
    return x ** (a - 1) * (1 - x) ** (b - 1) / B


def all_subsets(items):
    items = list(items)
    return [set(c) for r in range(len(items) + 1) for c in itertools.combinations(items, r)]


def central_gradient(f, params, h=1e-5):
    """Central finite differences of scalar ``f()`` w.r.t. every entry of each tensor in ``params``."""
    import torch

    grads = {}
    with torch.no_grad():
        for name, p in params.items():
            g = torch.zeros_like(p)
            flat, gflat = p.view(-1), g.view(-1)
            for k in range(flat.numel()):
                old = flat[k].item()
                flat[k] = old + h
                fp = f()
                flat[k] = old - h
                fm = f()
                flat[k] = old
                gflat[k] = (fp - fm) / (2 * h)
            grads[name] = g
    return grads
