"""Approximate BP: the vertex-level reduction of the edge recursion.

Each edge message is written as a vertex value plus an O(N^-1/2) correction,
and the correction is eliminated analytically. What remains is one K-vector
``G`` (users) and one N-vector ``G_hat`` (chips), updated in this order:

    G(t+1)     = G(t) / (lam(t) lam_hat(t)) + S^T G_hat(t) / (lam_hat(t) sqrt(N))
    G_hat(t+1) = y + alpha G_hat(t) / (lam(t+1) lam_hat(t))
                   - S G(t+1) / (lam(t+1) sqrt(N))

starting from G(0) = 0, G_hat(0) = y. The scalars lam(t), lam_hat(t) are the
finite-size variance recursion; the estimate is x_hat(t) = G(t) / lam(t).
Two matrix-vector products per iteration. Binary signatures only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fixedpoint
from .bp_core import BpRunReport, MarginalEstimate, OpCounter, _History, default_t_max
from .errors import DivergedError, ParameterError, UnsupportedDistributionError
from .sysmodel import SystemInstance

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class VertexState:
    G: np.ndarray
    G_hat: np.ndarray
    iteration: int
    lam: float
    lam_hat: float
    lam_hat_prev: float | None = None

    def estimate(self) -> MarginalEstimate:
        L = np.full_like(self.G, self.lam)
        return MarginalEstimate(self.G, L, self.iteration)


def _require_binary(instance):
    if not instance.signatures.is_binary:
        raise UnsupportedDistributionError("approximate BP is defined for +/-1 signatures only")


def abp_init(instance: SystemInstance) -> VertexState:
    _require_binary(instance)
    lam = 1.0
    lam_hat = fixedpoint.lambda_hat_step(lam, instance.K, instance.N, instance.sigma)
    return VertexState(np.zeros(instance.K), instance.received.copy(), 0, lam, lam_hat, None)


def abp_iterate(state: VertexState, instance: SystemInstance, counter: OpCounter | None = None) -> VertexState:
    _require_binary(instance)
    K, N = instance.K, instance.N
    S = instance.signatures.entries
    rootN = math.sqrt(N)
    lam, lam_hat = state.lam, state.lam_hat

    lam_next = fixedpoint.lambda_step(lam_hat, N)
    with np.errstate(over="ignore", invalid="ignore"):
        G = state.G / (lam * lam_hat) + (S.T @ state.G_hat) / (lam_hat * rootN)
        G_hat = (instance.received + (instance.alpha() / (lam_next * lam_hat)) * state.G_hat
                 - (S @ G) / (lam_next * rootN))
    if counter is not None:
        counter.add(4 * N * K + 4 * K + 5 * N)
    for name, arr in (("G", G), ("G_hat", G_hat)):
        if not np.all(np.isfinite(arr)):
            idx = int(np.argwhere(~np.isfinite(arr))[0, 0])
            raise DivergedError(f"non-finite {name} at index {idx}", (name, idx))
    lam_hat_next = fixedpoint.lambda_hat_step(lam_next, K, N, instance.sigma)
    return VertexState(G, G_hat, state.iteration + 1, lam_next, lam_hat_next, lam_hat)


def fixed_point_residual(state: VertexState, instance: SystemInstance, Lambda: float | None = None, *,
                         lambda_inf: float | None = None, lambda_hat_inf: float | None = None) -> float:
    """Max-norm residual of the two vertex fixed-point equations.

    With ``Lambda`` the asymptotic values lambda = 1 + Lambda,
    lambda_hat = 1/Lambda are used, giving

        G     = Lambda/(1+Lambda) G + Lambda S^T G_hat / sqrt(N)
        G_hat = alpha Lambda/(1+Lambda) G_hat + y - S G / ((1+Lambda) sqrt(N)).

    Without it the pair (lambda_inf, lambda_hat_inf) is used, defaulting to
    the scalars carried by ``state``. Only the latter is exactly stationary
    for the finite-N iteration.
    """
    if Lambda is not None:
        lam, lam_hat = 1.0 + Lambda, 1.0 / Lambda
    else:
        lam = state.lam if lambda_inf is None else lambda_inf
        lam_hat = state.lam_hat if lambda_hat_inf is None else lambda_hat_inf
    S = instance.signatures.scaled()
    G, G_hat = state.G, state.G_hat
    r1 = G - G / (lam * lam_hat) - (S.T @ G_hat) / lam_hat
    r2 = G_hat - instance.alpha() * G_hat / (lam * lam_hat) - instance.received + (S @ G) / lam
    return float(max(np.max(np.abs(r1), initial=0.0), np.max(np.abs(r2), initial=0.0)))


def run_abp(instance: SystemInstance, tol: float = DEFAULT_TOL, t_max: int | None = None,
            reference=None) -> BpRunReport:
    """Iterate until the max-norm change of (G, G_hat) is <= tol.

    The final estimate divides G by the finite-N scalar fixed point lambda_inf.
    """
    if not tol > 0:
        raise ParameterError(f"tol must be > 0, got {tol}")
    if t_max is None:
        t_max = default_t_max(instance)
    hist = _History(instance, reference)
    state = abp_init(instance)
    converged = False
    used = 0
    for _ in range(t_max):
        nxt = abp_iterate(state, instance)
        with np.errstate(over="ignore", invalid="ignore"):
            change = max(np.max(np.abs(nxt.G - state.G)), np.max(np.abs(nxt.G_hat - state.G_hat)))
        state = nxt
        used += 1
        hist.record(state.iteration, state.G / state.lam)
        if change <= tol:
            converged = True
            break
    lam_inf = fixedpoint.scalar_variance_recursion(instance.K, instance.N, instance.sigma).lambda_inf
    final = MarginalEstimate(state.G, np.full_like(state.G, lam_inf), state.iteration)
    return hist.report(final, used, converged, state)
