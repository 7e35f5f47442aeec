import numpy as np
import pytest

from pnft.signal_design import design_constellation


@pytest.fixture(scope="session")
def table():
    """Default constellation, fully validated (residuals, power, bandwidth)."""
    return design_constellation(validate=True)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def random_tau(rng, g, floor=0.5):
    """Symmetric g x g matrix with Im part >= floor * I."""
    A = rng.normal(size=(g, g))
    Y = A @ A.T / g + floor * np.eye(g)
    X = rng.normal(size=(g, g))
    return 0.5 * (X + X.T) + 1j * Y


def brute_theta(u, tau, m):
    """Direct box sum over |n_k| <= m."""
    g = len(u)
    axes = [np.arange(-m, m + 1)] * g
    n = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, g).astype(float)
    quad = np.einsum("pi,ij,pj->p", n, tau, n)
    return np.sum(np.exp(1j * np.pi * quad + 2j * np.pi * n @ u))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    order = ["1", "2", "3", "4", "5", "6", "7a", "7b", "7c", "8", "9"]
    for k in order:
        line = mod.RESULTS.get(k if k.startswith("7") else int(k))
        terminalreporter.write_line(line or f"criterion {k}: NOT RUN")
