"""Edge-message Gaussian belief propagation on the complete user/chip graph.

Message layout: ``lam`` and ``gamma`` are K x N arrays indexed ``[i, a]``
(user i -> chip a); ``lam_hat`` and ``gamma_hat`` are N x K arrays indexed
``[a, i]`` (chip a -> user i).

A state at iteration t holds lambda^(t), gamma^(t) together with the chip
messages lambda_hat^(t), gamma_hat^(t) computed from them. One call to
:func:`bp_iterate` produces the user messages at t+1 from the chip messages
at t, then the chip messages at t+1. The schedule is synchronous.

Each excluded-term sum is evaluated as "full vertex sum minus own edge", so
an iteration costs O(NK). ``naive=True`` evaluates every exclusion sum
explicitly through a masked product (O(N^2 K) at fixed K/N); it is kept as
a cross-check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fixedpoint
from .errors import DivergedError, ParameterError, UnsupportedDistributionError
from .sysmodel import SystemInstance

DEFAULT_TOL = 1e-10


class OpCounter:
    """Tally of scalar arithmetic operations, filled by the iterate functions."""

    def __init__(self):
        self.ops = 0

    def add(self, n):
        self.ops += int(n)


@dataclass(frozen=True)
class EdgeMessages:
    lam: np.ndarray
    gamma: np.ndarray
    lam_hat: np.ndarray
    gamma_hat: np.ndarray
    iteration: int = 0


@dataclass(frozen=True)
class MarginalEstimate:
    G: np.ndarray
    L: np.ndarray
    iteration: int = 0

    @property
    def x_hat(self) -> np.ndarray:
        return self.G / self.L


@dataclass
class BpRunReport:
    final: MarginalEstimate
    iterations_used: int
    converged: bool
    mse: list = field(default_factory=list)
    dist_to_reference: list = field(default_factory=list)
    history_iters: list = field(default_factory=list)
    dist_to_final: list = field(default_factory=list)
    state: object = None

    @property
    def x_hat(self) -> np.ndarray:
        return self.final.x_hat

    def history_rows(self):
        """(iter, mse, dist) tuples; dist is nan when no reference was given."""
        dist = self.dist_to_reference or [math.nan] * len(self.mse)
        return list(zip(self.history_iters, self.mse, dist))


def _excl(total, own):
    return total - own


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        idx = tuple(int(v) for v in np.argwhere(~np.isfinite(arr))[0])
        raise DivergedError(f"non-finite {name} message at {idx}", (name, *idx))


def _chip_update(lam, gamma, s, y, sigma, naive, counter):
    """lambda_hat, gamma_hat (N x K) from user messages lambda, gamma (K x N)."""
    K, N = lam.shape
    s2 = s**2
    prec = s2 / lam                 # s_ka^2 / lambda_{k->a}
    mean = s * gamma / lam          # s_ka gamma_{k->a} / lambda_{k->a}
    if naive:
        mask = 1.0 - np.eye(K)      # sum over k != i
        prec_sum = mask @ prec      # [i, a]
        mean_sum = mask @ mean
        if counter is not None:
            counter.add(4 * K * K * N + 4 * K * N)
    else:
        prec_sum = _excl(prec.sum(axis=0), prec)
        mean_sum = _excl(mean.sum(axis=0), mean)
        if counter is not None:
            counter.add(8 * K * N)
    lam_hat = sigma**2 + prec_sum / N
    gamma_hat = y[None, :] - mean_sum / math.sqrt(N)
    return lam_hat.T, gamma_hat.T


def _user_update(lam_hat, gamma_hat, s, naive, counter):
    """lambda, gamma (K x N) from chip messages lambda_hat, gamma_hat (N x K)."""
    K, N = s.shape
    lh = lam_hat.T
    gh = gamma_hat.T
    prec = s**2 / lh
    mean = s * gh / lh
    if naive:
        mask = 1.0 - np.eye(N)      # sum over b != a
        prec_sum = prec @ mask
        mean_sum = mean @ mask
        if counter is not None:
            counter.add(4 * K * N * N + 4 * K * N)
    else:
        prec_sum = _excl(prec.sum(axis=1)[:, None], prec)
        mean_sum = _excl(mean.sum(axis=1)[:, None], mean)
        if counter is not None:
            counter.add(8 * K * N)
    return 1.0 + prec_sum / N, mean_sum / math.sqrt(N)


def _edge_signatures(instance):
    # K x N view, [i, a] = s_{ia}
    return instance.signatures.entries.T


def init_messages(instance: SystemInstance) -> EdgeMessages:
    K, N = instance.K, instance.N
    s = _edge_signatures(instance)
    lam = np.ones((K, N))
    gamma = np.zeros((K, N))
    lam_hat, gamma_hat = _chip_update(lam, gamma, s, instance.received, instance.sigma, False, None)
    return EdgeMessages(lam, gamma, lam_hat, gamma_hat, 0)


def bp_iterate(messages: EdgeMessages, instance: SystemInstance, *, naive: bool = False,
               scalar_variances: bool = False, counter: OpCounter | None = None) -> EdgeMessages:
    """One synchronous BP step.

    ``scalar_variances`` skips the per-edge precision sums and advances the
    precisions with the scalar recursion instead; this is exact only for
    +/-1 signatures and is refused otherwise.
    """
    s = _edge_signatures(instance)
    # overflow surfaces as DivergedError below, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        if scalar_variances:
            return _iterate_scalar(messages, instance, s)
        lam, gamma = _user_update(messages.lam_hat, messages.gamma_hat, s, naive, counter)
        _check_finite("lambda", lam)
        _check_finite("gamma", gamma)
        lam_hat, gamma_hat = _chip_update(lam, gamma, s, instance.received, instance.sigma, naive, counter)
    _check_finite("lambda_hat", lam_hat)
    _check_finite("gamma_hat", gamma_hat)
    return EdgeMessages(lam, gamma, lam_hat, gamma_hat, messages.iteration + 1)


def _iterate_scalar(messages, instance, s):
    if not instance.signatures.is_binary:
        raise UnsupportedDistributionError("scalar variance path requires +/-1 signatures")
    K, N = s.shape
    lh = fixedpoint.lambda_hat_step(messages.lam.flat[0], K, N, instance.sigma)
    assert np.allclose(messages.lam_hat, lh, rtol=1e-12, atol=0), "precision messages are not edge-uniform"
    mean = s * messages.gamma_hat.T / lh
    gamma = (mean.sum(axis=1)[:, None] - mean) / math.sqrt(N)
    lam = fixedpoint.lambda_step(lh, N)
    mean = s * gamma / lam
    gamma_hat = instance.received[None, :] - (mean.sum(axis=0) - mean) / math.sqrt(N)
    _check_finite("gamma", gamma)
    _check_finite("gamma_hat", gamma_hat)
    lam_hat = fixedpoint.lambda_hat_step(lam, K, N, instance.sigma)
    return EdgeMessages(np.full((K, N), lam), gamma, np.full((N, K), lam_hat), gamma_hat.T,
                        messages.iteration + 1)


def extract_marginals(messages: EdgeMessages, instance: SystemInstance) -> MarginalEstimate:
    """G and L from the chip messages; sums run over every chip."""
    s = _edge_signatures(instance)
    N = instance.N
    lh = messages.lam_hat.T
    G = (s * messages.gamma_hat.T / lh).sum(axis=1) / math.sqrt(N)
    L = 1.0 + (s**2 / lh).sum(axis=1) / N
    return MarginalEstimate(G, L, messages.iteration + 1)


def message_change(a: EdgeMessages, b: EdgeMessages) -> float:
    return max(float(np.max(np.abs(x - y))) for x, y in
               ((a.lam, b.lam), (a.gamma, b.gamma), (a.lam_hat, b.lam_hat), (a.gamma_hat, b.gamma_hat)))


def default_t_max(instance: SystemInstance) -> int:
    try:
        ts = fixedpoint.t_star(instance.alpha(), instance.sigma)
    except ParameterError:
        return 500
    return 10 * math.ceil(ts) + 50


class _History:
    def __init__(self, instance, reference):
        self.x = instance.symbols
        self.ref = None if reference is None else np.asarray(reference, dtype=float)
        self.iters, self.mse, self.dist, self.estimates = [], [], [], []

    def record(self, t, x_hat):
        self.iters.append(t)
        self.estimates.append(np.array(x_hat))
        with np.errstate(over="ignore", invalid="ignore"):
            self.mse.append(float(np.mean((x_hat - self.x) ** 2)))
            if self.ref is not None:
                self.dist.append(float(np.linalg.norm(x_hat - self.ref) / math.sqrt(len(x_hat))))

    def report(self, final, used, converged, state):
        x_end = final.x_hat
        with np.errstate(over="ignore", invalid="ignore"):
            to_final = [float(np.linalg.norm(e - x_end) / math.sqrt(len(e))) for e in self.estimates]
        return BpRunReport(final, used, converged, self.mse, self.dist, self.iters, to_final, state)


def run_bp(instance: SystemInstance, tol: float = DEFAULT_TOL, t_max: int | None = None,
           reference=None, *, naive: bool = False, scalar_variances: bool = False) -> BpRunReport:
    """Iterate BP until the max-norm message change is <= tol.

    The history has one entry per extracted estimate, starting with the
    estimate read off the initial messages (iteration 1). Hitting ``t_max``
    is reported through ``converged=False``.
    """
    if not tol > 0:
        raise ParameterError(f"tol must be > 0, got {tol}")
    if t_max is None:
        t_max = default_t_max(instance)
    hist = _History(instance, reference)
    msgs = init_messages(instance)
    est = extract_marginals(msgs, instance)
    hist.record(est.iteration, est.x_hat)
    converged = False
    used = 0
    for _ in range(t_max):
        nxt = bp_iterate(msgs, instance, naive=naive, scalar_variances=scalar_variances)
        change = message_change(msgs, nxt)
        msgs = nxt
        used += 1
        est = extract_marginals(msgs, instance)
        hist.record(est.iteration, est.x_hat)
        if change <= tol:
            converged = True
            break
    return hist.report(est, used, converged, msgs)
