"""Shared fixtures and scenario builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from drcontracts import EmpiricalDistribution, NormalDistribution, ProgramTerms


@pytest.fixture
def basic_terms() -> ProgramTerms:
    """A well-posed program with psi comfortably inside (0, 1)."""
    return ProgramTerms(pi_e=4.0, pi_r=0.01, pi_p=5.0, p=3.0 / 720.0)


@pytest.fixture
def uniform_terms() -> ProgramTerms:
    """The closed-form uniform[0,1] scenario: psi = 1.04/2.04."""
    return ProgramTerms(pi_e=0.2, pi_r=1.0, pi_p=10.0, p=0.2)


def dense_uniform(n: int = 200_001) -> EmpiricalDistribution:
    """An empirical stand-in for uniform[0, 1] on an even grid."""
    return EmpiricalDistribution(np.linspace(0.0, 1.0, n))


def terms_for_psi(
    psi: float,
    *,
    pi_e: float = 2.0,
    pi_p: float = 8.0,
    p: float = 0.1,
    alpha: float = 0.0,
    c_hat: float = 0.95,
    c_max: float | None = None,
) -> ProgramTerms:
    """Build terms whose quantile argument equals psi exactly.

    Solves the psi definition for pi_r given the other rates:
    pi_r·(1 + alpha) = p·(psi·(pi_p + pi_e) − pi_e + alpha·pi_p).
    """
    pi_r = p * (psi * (pi_p + pi_e) - pi_e + alpha * pi_p) / (1.0 + alpha)
    if pi_r < 0.0:
        raise ValueError(
            f"psi={psi} unreachable with pi_e={pi_e}, pi_p={pi_p}, p={p}, alpha={alpha}"
        )
    return ProgramTerms(
        pi_e=pi_e, pi_r=pi_r, pi_p=pi_p, p=p, alpha=alpha, c_hat=c_hat, c_max=c_max
    )


def sampled_normal(
    mu: float, sigma: float, n: int, seed: int
) -> EmpiricalDistribution:
    """A dense empirical distribution drawn from a normal, clipped at 0."""
    rng = np.random.default_rng(seed)
    return EmpiricalDistribution(np.maximum(rng.normal(mu, sigma, n), 0.0))


def standard_portfolio_dists() -> tuple[NormalDistribution, NormalDistribution]:
    """The two-asset normal pair used across aggregation examples."""
    return NormalDistribution(100.0, 3.0), NormalDistribution(200.0, 4.0)
