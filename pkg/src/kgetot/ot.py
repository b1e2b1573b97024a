"""Entropic optimal transport between view-specific embedding sets."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import torch

log = logging.getLogger(__name__)

# potentials are re-absorbed once a scaling factor leaves [1/ABSORB, ABSORB]
ABSORB = 1e30
# Newton refinement is used when scaling stalls and n + m is at most this
NEWTON_SIZE = 256
NEWTON_STEPS = 50


@dataclass
class OTConfig:
    epsilon: float = 0.05
    max_iters: int = 200
    tol: float = 1e-6
    cap: int = 4096
    barycentric: bool = True
    method: str = "stabilized"


@dataclass
class TransportPlan:
    plan: torch.Tensor
    cost_matrix: torch.Tensor
    cost: float
    iterations: int
    residual: float
    converged: bool

    @property
    def shape(self):
        return tuple(self.plan.shape)


def _t(x):
    return torch.as_tensor(x, dtype=torch.float64) if not torch.is_tensor(x) else x


def uniform(n: int, dtype=torch.float64) -> torch.Tensor:
    return torch.full((n,), 1.0 / n, dtype=dtype)


def cost_matrix(E_s, E_d) -> torch.Tensor:
    """Cosine distances 1 - cos(E_s[i], E_d[j]); rows with zero norm get cost 1."""
    E_s, E_d = _t(E_s), _t(E_d)
    ns, nd = E_s.norm(dim=1), E_d.norm(dim=1)
    zs, zd = ns == 0, nd == 0
    if zs.any() or zd.any():
        log.debug("zero-norm rows in cost matrix: %d source, %d destination", int(zs.sum()), int(zd.sum()))
    a = E_s / torch.where(zs, torch.ones_like(ns), ns).unsqueeze(1)
    b = E_d / torch.where(zd, torch.ones_like(nd), nd).unsqueeze(1)
    C = (1.0 - a @ b.T).clamp_(0.0, 2.0)
    C[zs, :] = 1.0
    C[:, zd] = 1.0
    return C


def _residual(T, mu, nu):
    return max(float((T.sum(1) - mu).abs().max()), float((T.sum(0) - nu).abs().max()))


def _plan(f, g, C, eps):
    return ((f.unsqueeze(1) + g.unsqueeze(0) - C) / eps).exp()


def _sinkhorn_log(C, mu, nu, eps, max_iters, tol):
    log_mu, log_nu = mu.log(), nu.log()
    f = torch.zeros_like(mu)
    g = torch.zeros_like(nu)
    it = 0
    while it < max_iters:
        it += 1
        f = eps * (log_mu - torch.logsumexp((g.unsqueeze(0) - C) / eps, dim=1))
        g = eps * (log_nu - torch.logsumexp((f.unsqueeze(1) - C) / eps, dim=0))
        row = torch.logsumexp((f.unsqueeze(1) + g.unsqueeze(0) - C) / eps, dim=1).exp()
        if float((row - mu).abs().max()) < tol:
            break
    return f, g, it


def _sinkhorn_stabilized(C, mu, nu, eps, max_iters, tol):
    # start from potentials that put a unit kernel entry in every row and column
    f = C.min(dim=1).values
    g = (C - f.unsqueeze(1)).min(dim=0).values
    K = _plan(f, g, C, eps)
    u = torch.ones_like(mu)
    v = torch.ones_like(nu)
    it = 0
    while it < max_iters:
        it += 1
        v = nu / (K.T @ u)
        u = mu / (K @ v)
        if not (torch.isfinite(u).all() and torch.isfinite(v).all()) or (u == 0).any() or (v == 0).any():
            return None
        if u.max() > ABSORB or v.max() > ABSORB or u.min() < 1 / ABSORB or v.min() < 1 / ABSORB:
            f, g = f + eps * u.log(), g + eps * v.log()
            K = _plan(f, g, C, eps)
            u = torch.ones_like(mu)
            v = torch.ones_like(nu)
        col = v * (K.T @ u)
        if float((col - nu).abs().max()) < tol:
            break
    return f + eps * u.log(), g + eps * v.log(), it


def _newton_polish(C, mu, nu, f, g, eps, tol, max_steps=NEWTON_STEPS):
    """Damped Newton ascent on the entropic dual, started from Sinkhorn potentials.

    Alternating scaling contracts at a rate close to 1 when the optimal plan
    has entries near zero; Newton reaches the same fixed point in a handful of
    steps. The gauge direction (f + c, g - c) is removed with a rank-one term.
    """
    n, m = C.shape
    w = torch.cat([torch.ones(n, dtype=C.dtype), -torch.ones(m, dtype=C.dtype)])
    gauge = torch.outer(w, w) / (n + m)

    def state(f, g):
        T = _plan(f, g, C, eps)
        grad = torch.cat([mu - T.sum(1), nu - T.sum(0)])
        return T, grad, float(f @ mu + g @ nu - eps * T.sum())

    T, grad, phi = state(f, g)
    steps = 0
    while steps < max_steps and float(grad.abs().max()) >= tol:
        steps += 1
        H = torch.zeros(n + m, n + m, dtype=C.dtype)
        H[:n, :n] = torch.diag(T.sum(1))
        H[n:, n:] = torch.diag(T.sum(0))
        H[:n, n:] = T
        H[n:, :n] = T.T
        d = torch.linalg.solve(H / eps + gauge, grad)
        if not torch.isfinite(d).all():
            break
        slope, norm, t = float(grad @ d), float(grad.norm()), 1.0
        while t > 1e-10:
            nf, ng = f + t * d[:n], g + t * d[n:]
            nT, ngrad, nphi = state(nf, ng)
            # the dual gain drowns in rounding near the optimum; a smaller gradient also counts
            if nphi >= phi + 1e-4 * t * slope or float(ngrad.norm()) < norm:
                break
            t /= 2
        else:
            break
        f, g, T, grad, phi = nf, ng, nT, ngrad, nphi
    return f, g, steps


def sinkhorn(C, mu=None, nu=None, epsilon=0.05, max_iters=200, tol=1e-6, method="stabilized",
             newton=True) -> TransportPlan:
    """Entropically regularized OT plan T = diag(u) K diag(v), K = exp(-C/epsilon).

    ``method="log"`` iterates dual potentials with log-sum-exp; ``"stabilized"``
    scales in kernel space and absorbs large scalings into the log potentials,
    falling back to the log iteration if the kernel underflows. If scaling
    stops short of ``tol`` on a small problem, Newton steps on the dual
    potentials finish the job (``newton=False`` disables this). Not reaching
    ``tol`` is reported on the plan, not raised.
    """
    C = _t(C)
    if C.dim() != 2:
        raise ValueError("cost matrix must be 2-D")
    if not torch.isfinite(C).all():
        raise ValueError("cost matrix has non-finite entries")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    n, m = C.shape
    mu = uniform(n, C.dtype) if mu is None else _t(mu).to(C.dtype)
    nu = uniform(m, C.dtype) if nu is None else _t(nu).to(C.dtype)
    for w in (mu, nu):
        if (w < 0).any() or abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError("marginals must be nonnegative and sum to 1")

    with torch.no_grad():
        out = None
        if method == "stabilized":
            out = _sinkhorn_stabilized(C, mu, nu, epsilon, max_iters, tol)
            if out is None:
                log.debug("kernel underflow at epsilon=%g; switching to log-domain iteration", epsilon)
        elif method != "log":
            raise ValueError(f"unknown sinkhorn method {method!r}")
        if out is None:
            out = _sinkhorn_log(C, mu, nu, epsilon, max_iters, tol)
        f, g, it = out
        T = _plan(f, g, C, epsilon)
        res = _residual(T, mu, nu)
        if res >= tol and n + m <= NEWTON_SIZE and newton:
            f, g, steps = _newton_polish(C, mu, nu, f, g, epsilon, tol)
            T2 = _plan(f, g, C, epsilon)
            res2 = _residual(T2, mu, nu)
            if res2 < res:
                T, res, it = T2, res2, it + steps
    converged = res < tol
    if not converged:
        log.warning("sinkhorn stopped after %d iterations with marginal residual %.3g (tol %.3g)", it, res, tol)
    return TransportPlan(T, C, float((T * C).sum()), it, res, converged)


def transport_plan(E_s, E_d, cfg: OTConfig) -> TransportPlan | None:
    """Plan between two embedding sets, or None when the set-size cap is exceeded."""
    if max(E_s.shape[0], E_d.shape[0]) > cfg.cap:
        log.info("OT cap %d exceeded (%d x %d); using residual fusion", cfg.cap, E_s.shape[0], E_d.shape[0])
        return None
    with torch.no_grad():
        C = cost_matrix(E_s.detach(), E_d.detach())
    return sinkhorn(C, epsilon=cfg.epsilon, max_iters=cfg.max_iters, tol=cfg.tol, method=cfg.method)


def ota_align(E_s, E_d, cfg: OTConfig | None = None, plan: TransportPlan | None = None):
    """Transport source rows onto destination rows and add: Z = Ê + E_d.

    Ê[j] = sum_i T_ij E_s[i] / nu_j (barycentric) or without the division
    (``cfg.barycentric=False``). T is a constant for autograd. Pass a
    precomputed ``plan`` to reuse one; otherwise it is computed here.
    Returns (Z, plan); plan is None on the cap fallback.
    """
    cfg = cfg or OTConfig()
    E_s, E_d = _t(E_s), _t(E_d)
    if plan is None:
        plan = transport_plan(E_s, E_d, cfg)
    if plan is None:
        if E_s.shape[0] == E_d.shape[0]:
            return E_s + E_d, None
        return E_d, None
    T = plan.plan.to(E_s.dtype).detach()
    projected = T.T @ E_s
    if cfg.barycentric:
        projected = projected * T.shape[1]  # divide by nu_j = 1/m
    return projected + E_d, plan
