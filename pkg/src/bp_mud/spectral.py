"""Diagnostics for the BP convergence argument.

* the exact Gaussian posterior (MMSE mean and per-user variances);
* the NK x NK interference operator Omega that drives the homogeneous part
  of the BP mean-message recursion, with entries

      Omega[(i,a), (k,b)] = s_ib s_kb   if i != k and a != b, else 0;

* power-iteration growth rate of Omega and the trace Tr{(Omega^t)^T Omega^t};
* the discrepancy D between BP's fixed-point variances and the exact ones.

Edge vectors of length NK use the row-major index (i, a) -> i*N + a, i.e. a
flat vector reshapes to a K x N array ``v[i, a]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import fixedpoint
from .errors import DimensionError, ResourceLimitError, SingularSystemError, UnsupportedDistributionError
from .sysmodel import SignatureMatrix, SystemInstance, generate_signatures

MAX_DENSE_DIM = 1024


@dataclass(frozen=True)
class PosteriorOracle:
    mean: np.ndarray
    variance_diag: np.ndarray
    sigma: float
    residual: float


def mmse_solve(instance: SystemInstance) -> PosteriorOracle:
    """Solve (sigma^2 I + S~^T S~) x = S~^T y by Cholesky, S~ = S / sqrt(N).

    Posterior variances are v_i = sigma^2 [(sigma^2 I + S~^T S~)^{-1}]_ii,
    which equals [(I + S~^T S~ / sigma^2)^{-1}]_ii.
    """
    S = instance.signatures.scaled()
    s2 = instance.sigma**2
    A = s2 * np.eye(instance.K) + S.T @ S
    rhs = S.T @ instance.received
    try:
        factor = linalg.cho_factor(A, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularSystemError(f"MMSE system is singular (sigma={instance.sigma})") from exc
    mean = linalg.cho_solve(factor, rhs)
    inv_diag = np.diag(linalg.cho_solve(factor, np.eye(instance.K)))
    residual = float(np.max(np.abs(A @ mean - rhs), initial=0.0))
    return PosteriorOracle(mean, s2 * inv_diag, instance.sigma, residual)


def _as_edges(v, K, N):
    v = np.asarray(v)
    if v.shape[0] != K * N:
        raise DimensionError(f"edge vector must have leading length {K * N}, got {v.shape[0]}")
    return v.reshape((K, N) + v.shape[1:])


def apply_omega(signatures: SignatureMatrix, v) -> np.ndarray:
    """Matrix-free Omega @ v in O(NK) per column.

    ``v`` may be a length-NK vector or an (NK, m) block of columns. Integer
    input stays integer, so small cases are computed exactly.
    """
    if not signatures.is_binary:
        raise UnsupportedDistributionError("Omega is defined for +/-1 signatures")
    K, N = signatures.K, signatures.N
    V = _as_edges(v, K, N)
    s = signatures.entries.T                   # [i, a]
    if np.issubdtype(V.dtype, np.integer):
        s = s.astype(np.int64)
    sb = s.reshape((K, N) + (1,) * (V.ndim - 2))
    sv = sb * V                                # s_kb v_kb
    chip_tot = sv.sum(axis=0)                  # sum_k s_kb v_kb, indexed [b]
    # sum_{b != a} sum_{k != i} s_ib s_kb v_kb by inclusion-exclusion
    full = (sb * chip_tot[None]).sum(axis=1)            # sum_b s_ib sum_k s_kb v_kb
    same_user = (sb * sv).sum(axis=1)                   # k = i terms
    same_chip = sb * chip_tot[None]                     # b = a terms
    both = sb * sb * V                                  # k = i and b = a
    out = full[:, None] - same_user[:, None] - same_chip + both
    return out.reshape(v.shape)


def dense_omega(signatures: SignatureMatrix) -> np.ndarray:
    """Omega built entry by entry from its definition (small sizes only)."""
    K, N = signatures.K, signatures.N
    if K * N > MAX_DENSE_DIM:
        raise ResourceLimitError(f"NK={K * N} exceeds dense limit {MAX_DENSE_DIM}")
    s = signatures.entries.T.astype(np.int64)
    out = np.zeros((K * N, K * N), dtype=np.int64)
    for i in range(K):
        for a in range(N):
            for k in range(K):
                for b in range(N):
                    if i != k and a != b:
                        out[i * N + a, k * N + b] = s[i, b] * s[k, b]
    return out


@dataclass(frozen=True)
class GrowthEstimate:
    raw: float
    normalized: float
    confident: bool
    ratios: np.ndarray


def spectral_growth_rate(signatures: SignatureMatrix, sigma: float, iters: int = 60, seed: int = 0,
                         rel_spread: float = 0.05) -> GrowthEstimate:
    """Estimate |zeta_max| of Omega from the growth of ||Omega^t v0||.

    The raw rate is the geometric mean of the step ratios over the second
    half of the run; ``normalized`` divides it by N lambda_inf lambda_hat_inf
    (finite-N scalar fixed point), so values below 1 mean the mean-message
    recursion contracts. ``confident`` is False when the last-half log
    ratios spread by more than ``rel_spread`` around their mean (e.g. a
    complex dominant pair that has not settled).
    """
    if iters < 10:
        raise ValueError(f"iters must be >= 10, got {iters}")
    K, N = signatures.K, signatures.N
    traj = fixedpoint.scalar_variance_recursion(K, N, sigma)
    scale = N * traj.lambda_inf * traj.lambda_hat_inf
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(K * N)
    v /= np.linalg.norm(v)
    ratios = []
    for _ in range(iters):
        w = apply_omega(signatures, v)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return GrowthEstimate(0.0, 0.0, True, np.zeros(len(ratios) + 1))
        ratios.append(nrm)
        v = w / nrm
    ratios = np.array(ratios)
    tail = np.log(ratios[len(ratios) // 2:])
    raw = float(np.exp(tail.mean()))
    confident = bool(np.std(tail) <= rel_spread)
    return GrowthEstimate(raw, raw / scale, confident, ratios)


@dataclass(frozen=True)
class TraceStats:
    K: int
    N: int
    t: int
    traces: np.ndarray
    ratio_mean: float
    ratio_stderr: float

    @property
    def scale(self) -> float:
        return float(self.N) ** (2 * self.t + 2) * (self.K / self.N) ** (self.t + 1)


def omega_power_trace(signatures: SignatureMatrix, t: int) -> int:
    """Tr{(Omega^t)^T Omega^t} = ||Omega^t||_F^2, in exact integer arithmetic."""
    K, N = signatures.K, signatures.N
    if K * N > MAX_DENSE_DIM:
        raise ResourceLimitError(f"NK={K * N} exceeds dense limit {MAX_DENSE_DIM}")
    M = np.eye(K * N, dtype=np.int64)
    for _ in range(t):
        M = apply_omega(signatures, M)
    return int((M.astype(object) ** 2).sum()) if t > 2 else int((M * M).sum())


def trace_check(K: int, N: int, t: int, trials: int, seed: int = 0) -> TraceStats:
    """Monte-Carlo E Tr{(Omega^t)^T Omega^t} relative to N^(2t+2) alpha^(t+1).

    Signature draws use seeds ``seed, seed+1, ...``.
    """
    if K * N > MAX_DENSE_DIM:
        raise ResourceLimitError(f"NK={K * N} exceeds dense limit {MAX_DENSE_DIM}")
    if not 1 <= t <= 4:
        raise ValueError(f"t must be in 1..4, got {t}")
    traces = np.array([omega_power_trace(generate_signatures(K, N, seed=seed + j), t) for j in range(trials)],
                      dtype=float)
    scale = float(N) ** (2 * t + 2) * (K / N) ** (t + 1)
    ratios = traces / scale
    stderr = float(ratios.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.nan
    return TraceStats(K, N, t, traces, float(ratios.mean()), stderr)


@dataclass(frozen=True)
class DiscrepancyStat:
    delta: np.ndarray
    D: float


def discrepancy_D(instance: SystemInstance, bp_report, oracle: PosteriorOracle) -> DiscrepancyStat:
    """delta_i = 1/L_i (BP fixed point) - v_i (exact); D = mean(delta^2)."""
    delta = 1.0 / bp_report.final.L - oracle.variance_diag
    return DiscrepancyStat(delta, float(np.mean(delta**2)))
