import sys
import numpy as np
import pytest

from bp_mud.sysmodel import SignatureMatrix, assemble_instance, generate_instance


def mmse_direct(inst):
    """Plain dense solve of (sigma^2 I + S~^T S~) x = S~^T y, independent of the library oracle."""
    S = inst.signatures.entries / np.sqrt(inst.N)
    return np.linalg.solve(inst.sigma**2 * np.eye(inst.K) + S.T @ S, S.T @ inst.received)


def lambda_by_iteration(alpha, sigma, tol=1e-14, max_iter=100_000):
    """Fixed-point iteration of 1/L = sigma^2 + alpha/(1+L) from L = 1."""
    lam = 1.0
    for _ in range(max_iter):
        lam = 1.0 / (sigma**2 + alpha / (1.0 + lam))
        if abs(1.0 / lam - sigma**2 - alpha / (1.0 + lam)) < tol:
            break
    return lam


@pytest.fixture
def small_instance():
    return generate_instance(6, 10, sigma=0.3, seed=11)


@pytest.fixture
def make_instance():
    def _make(entries, x, sigma=0.0, w=None):
        return assemble_instance(SignatureMatrix(np.asarray(entries, dtype=float)), x, sigma, w)
    return _make


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n][1])
