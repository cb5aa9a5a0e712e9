"""Scalar variance recursion and the large-system fixed point.

For +/-1 signatures every BP precision message is identical across edges and
follows the two-term recursion

    lambda_hat(t) = sigma^2 + ((K-1)/N) / lambda(t)
    lambda(t+1)   = 1 + ((N-1)/N) / lambda_hat(t),      lambda(0) = 1.

As N grows with K/N = alpha fixed, the limit is lambda = 1 + Lam and
lambda_hat = 1/Lam where Lam is the positive root of

    1/Lam = sigma^2 + alpha / (1 + Lam).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NonContractiveError, ParameterError

DEFAULT_TOL = 1e-12
DEFAULT_TMAX = 10_000


def lambda_hat_step(lam: float, K: int, N: int, sigma: float) -> float:
    return sigma**2 + ((K - 1) / N) / lam


def lambda_step(lam_hat: float, N: int) -> float:
    return 1.0 + ((N - 1) / N) / lam_hat


@dataclass
class ScalarVarianceTrajectory:
    lam: np.ndarray
    lam_hat: np.ndarray
    K: int
    N: int
    sigma: float
    converged: bool

    @property
    def lambda_inf(self) -> float:
        return float(self.lam[-1])

    @property
    def lambda_hat_inf(self) -> float:
        return float(self.lam_hat[-1])


def scalar_variance_recursion(K: int, N: int, sigma: float, t_max: int = DEFAULT_TMAX,
                              tol: float = DEFAULT_TOL) -> ScalarVarianceTrajectory:
    """Iterate the finite-size recursion from lambda(0) = 1.

    ``lam[t]`` and ``lam_hat[t]`` are lambda(t) and lambda_hat(t); both arrays
    have the same length. Stops once |lambda(t+1) - lambda(t)| <= tol.
    """
    if K < 1 or N < 1:
        raise DimensionError(f"K and N must be >= 1, got K={K}, N={N}")
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0 and K == 1:
        # no interference and no noise: lambda_hat = 0, the precision is infinite
        raise ParameterError("sigma = 0 with a single user has no finite variance recursion")
    lam = [1.0]
    lam_hat = [lambda_hat_step(1.0, K, N, sigma)]
    converged = False
    for _ in range(t_max):
        nxt = lambda_step(lam_hat[-1], N)
        done = abs(nxt - lam[-1]) <= tol
        lam.append(nxt)
        lam_hat.append(lambda_hat_step(nxt, K, N, sigma))
        if done:
            converged = True
            break
    return ScalarVarianceTrajectory(np.array(lam), np.array(lam_hat), K, N, sigma, converged)


def _check_asymptotic(alpha, sigma):
    if alpha < 0:
        raise ParameterError(f"alpha must be >= 0, got {alpha}")
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0 for the asymptotic fixed point, got {sigma}")


def tse_hanly_lambda(alpha: float, sigma: float) -> float:
    """Positive root of sigma^2 L^2 + (sigma^2 + alpha - 1) L - 1 = 0."""
    _check_asymptotic(alpha, sigma)
    s2 = sigma**2
    b = s2 + alpha - 1.0
    disc = math.sqrt(b * b + 4.0 * s2)
    # pick the cancellation-free form of the positive root
    root = (disc - b) / (2.0 * s2) if b <= 0 else 2.0 / (b + disc)
    # one Newton step on f(L) = 1/L - s2 - alpha/(1+L)
    f = 1.0 / root - s2 - alpha / (1.0 + root)
    fp = -1.0 / root**2 + alpha / (1.0 + root) ** 2
    return root - f / fp


def tse_hanly_residual(Lam: float, alpha: float, sigma: float) -> float:
    return 1.0 / Lam - sigma**2 - alpha / (1.0 + Lam)


def contraction_factor(alpha: float, sigma: float) -> float:
    """sqrt(alpha) * Lam / (1 + Lam): per-iteration shrink of the BP error."""
    Lam = tse_hanly_lambda(alpha, sigma)
    return math.sqrt(alpha) * Lam / (1.0 + Lam)


def t_star(alpha: float, sigma: float) -> float:
    if not alpha > 0:
        raise ParameterError(f"alpha must be > 0 for t*, got {alpha}")
    c = contraction_factor(alpha, sigma)
    if c >= 1.0:
        raise NonContractiveError(f"contraction factor {c:.6g} >= 1 at alpha={alpha}, sigma={sigma}")
    return -1.0 / math.log(c)


def iterations_for_precision(alpha: float, sigma: float, delta: float, Delta: float) -> int:
    """Iterations needed to shrink an initial distance Delta down to delta."""
    if not 0 < delta < Delta:
        raise ParameterError(f"need 0 < delta < Delta, got delta={delta}, Delta={Delta}")
    # guard against log(e)*t* landing a hair above an integer
    return math.ceil(round(t_star(alpha, sigma) * math.log(Delta / delta), 12))


def theoretical_mse(alpha: float, sigma: float) -> float:
    """Large-system per-user MMSE, 1/(1 + Lam)."""
    return 1.0 / (1.0 + tse_hanly_lambda(alpha, sigma))


@dataclass(frozen=True)
class FixedPointReport:
    alpha: float
    sigma: float
    Lambda: float
    lambda_inf: float
    lambda_hat_inf: float
    t_star: float
    asymptotic_mse: float

    def as_row(self) -> dict:
        return {
            "alpha": self.alpha,
            "sigma": self.sigma,
            "Lambda": self.Lambda,
            "t_star": self.t_star,
            "asymptotic_mse": self.asymptotic_mse,
        }


def fixed_point_report(alpha: float, sigma: float) -> FixedPointReport:
    """Collect the asymptotic quantities; t_star is inf when non-contractive."""
    Lam = tse_hanly_lambda(alpha, sigma)
    try:
        ts = t_star(alpha, sigma)
    except ParameterError:
        ts = math.inf
    return FixedPointReport(alpha, sigma, Lam, 1.0 + Lam, 1.0 / Lam, ts, 1.0 / (1.0 + Lam))
