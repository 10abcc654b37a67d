"""Optimal contract sizing for a single asset.

The expected per-window profit of a contract c against capability q ~ F is

    J(c) = pi_r*c + p*[-pi_p*S(c) + pi_e*(P(c) + c*(1 - F(c)))]

with P the partial expectation over [0, c] and S the shortfall expectation.
The risk-adjusted objective adds alpha times the CVaR of the window profit at
level c_hat.  Maximizing the objective reduces to a quantile rule: c* is the
capability quantile at

    psi = (pi_r + p*pi_e + alpha*(pi_r - p*pi_p)) / (p*(pi_p + pi_e))

clipped to [0, c_max].  The quantile rule relies on the contract covering the
whole CVaR tail (c >= q_hat, the lower 1-c_hat capability quantile); when a
risk-averse optimum falls below that point the optimizer falls back to a grid
search over the objective, refined by ternary search (the objective is concave
in c).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import (
    CurtailmentDistribution,
    EmpiricalDistribution,
    NormalDistribution,
    standard_normal_pdf,
    standard_normal_quantile,
)
from .errors import UnconstrainedContractError
from .program import ProgramTerms

# Default grid resolution: the search interval divided into this many steps.
GRID_POINTS = 10_000
# Ternary-search refinement of the grid optimum; interval shrinks by (2/3)^n.
_REFINE_ITERATIONS = 120
# Bracket width for the sign-change search on the sigma coefficient.
GAMMA_HAT_TOLERANCE = 1e-6


def quantile_argument(terms: ProgramTerms) -> float:
    """The critical fractile psi of the quantile rule."""
    if terms.p == 0.0:
        raise UnconstrainedContractError(
            "event probability is zero: reservation revenue is unopposed and "
            "no finite optimum exists"
        )
    denom = terms.p * (terms.pi_p + terms.pi_e)
    if denom == 0.0:
        raise UnconstrainedContractError(
            "pi_p + pi_e = 0: the objective is linear in c and has no interior optimum"
        )
    return (
        terms.pi_r
        + terms.p * terms.pi_e
        + terms.alpha * (terms.pi_r - terms.p * terms.pi_p)
    ) / denom


def expected_profit(terms: ProgramTerms, dist: CurtailmentDistribution, c):
    """Expected per-window profit J(c); accepts scalar or array c."""
    c_arr = np.asarray(c, dtype=float)
    if c_arr.size and np.min(c_arr) < 0.0:
        raise ValueError("contract size must be >= 0")
    if c_arr.size and np.max(c_arr) > terms.contract_cap:
        raise ValueError(f"contract size exceeds cap {terms.contract_cap:g}")
    f = np.asarray(dist.cdf(c_arr), dtype=float)
    part = np.asarray(dist.partial_expectation(c_arr), dtype=float)
    shortfall = c_arr * f - part
    out = terms.pi_r * c_arr + terms.p * (
        -terms.pi_p * shortfall + terms.pi_e * (part + c_arr * (1.0 - f))
    )
    return out if np.ndim(c) else float(out)


def cvar(terms: ProgramTerms, dist: CurtailmentDistribution, c):
    """CVaR at level c_hat of the per-window profit of contract c.

    Window profit is monotone non-decreasing in q, so the worst 1-c_hat of
    outcomes is the event branch over the lower capability tail q <= q_hat.
    The tail average uses the realized settlement pi_e*min(c, q) - pi_p*(c-q)+,
    so capability beyond c neither earns nor pays inside the tail.
    """
    c_arr = np.asarray(c, dtype=float)
    if c_arr.size and np.min(c_arr) < 0.0:
        raise ValueError("contract size must be >= 0")
    tail = terms.tail_mass
    q_hat = float(dist.quantile(1.0 - terms.c_hat))
    m = np.minimum(c_arr, q_hat)
    f_hat = float(dist.cdf(q_hat))
    f_m = np.asarray(dist.cdf(m), dtype=float)
    p_m = np.asarray(dist.partial_expectation(m), dtype=float)
    tail_term = terms.pi_e * (p_m + c_arr * (f_hat - f_m)) - terms.pi_p * (
        c_arr * f_m - p_m
    )
    out = terms.pi_r * c_arr + (terms.p / tail) * tail_term
    return out if np.ndim(c) else float(out)


def objective(terms: ProgramTerms, dist: CurtailmentDistribution, c):
    """Risk-adjusted objective: expected profit plus alpha times CVaR."""
    if terms.alpha == 0.0:
        return expected_profit(terms, dist, c)
    return expected_profit(terms, dist, c) + terms.alpha * cvar(terms, dist, c)


@dataclass(frozen=True)
class ContractDecision:
    """One sized contract with its diagnostics."""

    c_star: float
    psi: float
    clipped_low: bool
    clipped_high: bool
    used_grid_fallback: bool
    expected_profit: float
    cvar_value: float
    objective_value: float

    @property
    def clipped(self) -> str:
        if self.clipped_low:
            return "low"
        if self.clipped_high:
            return "high"
        return "none"


def _search_upper_bound(terms: ProgramTerms, dist: CurtailmentDistribution) -> float:
    if isinstance(dist, EmpiricalDistribution):
        upper = float(dist.samples[-1])
    else:
        upper = float(dist.quantile(1.0 - 1e-6)) if dist.sigma > 0.0 else dist.mu
    upper = max(upper, 0.0)
    return min(upper, terms.contract_cap)


def grid_search_optimal(
    terms: ProgramTerms,
    dist: CurtailmentDistribution,
    resolution: float | None = None,
) -> float:
    """Argmax of the objective over {0, r, 2r, ...} up to the search bound.

    Ties break toward the smaller contract (first maximum).
    """
    upper = _search_upper_bound(terms, dist)
    if upper <= 0.0:
        return 0.0
    if resolution is None:
        resolution = upper / GRID_POINTS
    if not (resolution > 0.0 and math.isfinite(resolution)):
        raise ValueError(f"grid resolution must be positive, got {resolution!r}")
    steps = int(math.floor(upper / resolution + 1e-9))
    grid = np.arange(steps + 1) * resolution
    if grid[-1] > upper:
        grid[-1] = upper
    values = objective(terms, dist, grid)
    return float(grid[int(np.argmax(values))])


def _refine_concave_argmax(
    terms: ProgramTerms,
    dist: CurtailmentDistribution,
    center: float,
    halfwidth: float,
    upper: float,
) -> float:
    lo = max(0.0, center - halfwidth)
    hi = min(upper, center + halfwidth)
    for _ in range(_REFINE_ITERATIONS):
        third = (hi - lo) / 3.0
        m1 = lo + third
        m2 = hi - third
        if objective(terms, dist, m1) < objective(terms, dist, m2):
            lo = m1
        else:
            hi = m2
    return 0.5 * (lo + hi)


def optimal_contract(terms: ProgramTerms, dist: CurtailmentDistribution) -> ContractDecision:
    """Size the contract by the quantile rule, with clipping and fallback."""
    psi = quantile_argument(terms)
    cap = terms.contract_cap
    clipped_low = clipped_high = used_grid = False
    if psi <= 0.0:
        c = 0.0
        clipped_low = True
    elif psi >= 1.0:
        if math.isinf(cap):
            raise UnconstrainedContractError(
                f"psi = {psi:g} >= 1 with no contract cap: optimum is unbounded"
            )
        c = cap
        clipped_high = True
    else:
        c = float(dist.quantile(psi))
        if c >= cap:
            c = cap
            clipped_high = True
        elif terms.alpha > 0.0:
            q_hat = float(dist.quantile(1.0 - terms.c_hat))
            if c >= q_hat:
                # Above the tail boundary the objective slope uses the actual
                # probability mass at or below q_hat.  For a discrete
                # distribution that mass misses the ideal tail mass by O(1/n),
                # which shifts the exact stationary fractile; solve the
                # first-order condition with the realized mass instead.
                mass = float(dist.cdf(q_hat))
                if abs(mass - terms.tail_mass) > 1e-12:
                    psi_exact = psi + terms.alpha * terms.pi_p * (
                        terms.tail_mass - mass
                    ) / (terms.tail_mass * (terms.pi_p + terms.pi_e))
                    c = float(dist.quantile(min(max(psi_exact, 0.0), 1.0)))
                    if c >= cap:
                        c = cap
                        clipped_high = True
            if not clipped_high and c < q_hat:
                # Quantile rule invalid below the CVaR tail boundary.
                upper = _search_upper_bound(terms, dist)
                step = upper / GRID_POINTS if upper > 0.0 else 0.0
                c = grid_search_optimal(terms, dist)
                if step > 0.0:
                    c = _refine_concave_argmax(terms, dist, c, step, upper)
                used_grid = True
                if c >= cap:
                    c = cap
                    clipped_high = True
    return ContractDecision(
        c_star=c,
        psi=psi,
        clipped_low=clipped_low,
        clipped_high=clipped_high,
        used_grid_fallback=used_grid,
        expected_profit=expected_profit(terms, dist, c),
        cvar_value=cvar(terms, dist, c),
        objective_value=objective(terms, dist, c),
    )


@dataclass(frozen=True)
class ProfitAudit:
    """Closed-form optimal profit against the direct evaluation of J."""

    formula_value: float
    expected_profit: float

    @property
    def residual(self) -> float:
        return self.formula_value - self.expected_profit


def optimal_profit_formula(
    terms: ProgramTerms, dist: CurtailmentDistribution, c_star: float
) -> ProfitAudit:
    """Evaluate J* = p*(pi_p + pi_e)*P(c*) - alpha*(pi_r - p*pi_p)*c*.

    The closed form assumes F(c*) equals psi exactly; with interpolated or
    clipped quantiles (or alpha > 0, where it drops the CVaR adjustment) it
    deviates from J(c*), so the residual is reported rather than hidden.
    """
    formula = terms.p * (terms.pi_p + terms.pi_e) * float(
        dist.partial_expectation(c_star)
    ) - terms.alpha * (terms.pi_r - terms.p * terms.pi_p) * c_star
    return ProfitAudit(
        formula_value=formula,
        expected_profit=expected_profit(terms, dist, c_star),
    )


def gamma(terms: ProgramTerms) -> float:
    """Standard-normal quantile of psi: c* = mu + gamma*sigma for N(mu, sigma)."""
    psi = quantile_argument(terms)
    if not 0.0 < psi < 1.0:
        raise ValueError(f"gamma undefined: psi = {psi:g} outside (0, 1)")
    return float(standard_normal_quantile(psi))


def alpha_threshold(terms: ProgramTerms) -> float:
    """Risk aversion at which psi reaches zero and the contract shuts off.

    Solves pi_r + p*pi_e + alpha*(pi_r - p*pi_p) = 0; requires the no-asset
    margin to be negative, which well-posed terms guarantee.
    """
    margin = terms.no_asset_margin
    if margin >= 0.0:
        raise ValueError(
            "psi is non-decreasing in alpha when pi_r - p*pi_p >= 0; no threshold"
        )
    return (terms.pi_r + terms.p * terms.pi_e) / (-margin)


def sigma_coefficient(terms: ProgramTerms, gamma_value: float) -> float:
    """Coefficient of sigma in the optimal profit for N(mu, sigma).

    d(J*)/d(sigma) = -p*(pi_p + pi_e)*phi(gamma) - alpha*(pi_r - p*pi_p)*gamma.
    Negative at gamma = 0; for alpha > 0 the linear term eventually dominates
    and the sign flips at gamma_hat.
    """
    return -terms.p * (terms.pi_p + terms.pi_e) * float(
        standard_normal_pdf(gamma_value)
    ) - terms.alpha * (terms.pi_r - terms.p * terms.pi_p) * gamma_value


def gamma_hat(terms: ProgramTerms, tolerance: float = GAMMA_HAT_TOLERANCE) -> float | None:
    """Sign-change point of the sigma coefficient, or None when there is none.

    At alpha = 0 the coefficient is -p*(pi_p+pi_e)*phi(gamma) < 0 everywhere.
    For alpha > 0 (and a negative no-asset margin) the coefficient is negative
    at 0 and grows linearly, so a root exists; it is located by bisection to
    the given bracket width.
    """
    if terms.alpha == 0.0 or terms.no_asset_margin >= 0.0:
        return None
    lo = 0.0
    hi = 1.0
    for _ in range(128):
        if sigma_coefficient(terms, hi) > 0.0:
            break
        hi *= 2.0
    else:
        return None
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if sigma_coefficient(terms, mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class SigmaSensitivity:
    derivative: float
    gamma_value: float
    gamma_hat: float | None


def sigma_sensitivity(
    terms: ProgramTerms, mu: float, sigma: float, delta: float | None = None
) -> SigmaSensitivity:
    """Central finite difference of the optimal profit J* in sigma at N(mu, sigma).

    J* is the closed-form optimal profit evaluated at the optimizer for each
    perturbed sigma.  The companion gamma_hat locates where the analytic sigma
    coefficient changes sign.
    """
    if sigma <= 0.0:
        raise ValueError("sigma must be > 0 for a sigma sensitivity")
    if delta is None:
        delta = 1e-4 * sigma
    if not 0.0 < delta < sigma:
        raise ValueError(f"delta must lie in (0, sigma), got {delta!r}")

    def j_star(s: float) -> float:
        dist = NormalDistribution(mu, s)
        decision = optimal_contract(terms, dist)
        return optimal_profit_formula(terms, dist, decision.c_star).formula_value

    derivative = (j_star(sigma + delta) - j_star(sigma - delta)) / (2.0 * delta)
    return SigmaSensitivity(
        derivative=derivative,
        gamma_value=gamma(terms),
        gamma_hat=gamma_hat(terms),
    )


def alpha_sweep(
    terms: ProgramTerms, dist: CurtailmentDistribution, alphas
) -> list[ContractDecision]:
    """Re-optimize the contract at each risk-aversion value."""
    out = []
    for a in np.asarray(alphas, dtype=float):
        out.append(optimal_contract(terms.with_alpha(float(a)), dist))
    return out
