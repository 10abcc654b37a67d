"""Joint participation of several assets under one contract.

An aggregation signs a single contract against the summed capability.  Its
value relative to separate contracts is governed by the complementarity
delta_sigma = sum_k sigma_k - sigma_ag: pooling pays exactly when the members'
capabilities do not move together.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .contracts import (
    ContractDecision,
    expected_profit,
    gamma,
    optimal_contract,
)
from .distributions import (
    CovarianceModel,
    CurtailmentDistribution,
    EmpiricalDistribution,
    NormalDistribution,
    standard_normal_cdf,
    standard_normal_pdf,
    sum_empirical,
    sum_normal,
)
from .errors import AlignmentError, ModelConsistencyError
from .formatting import sig9
from .program import ProgramTerms

RANKING_CSV_HEADER = [
    "candidate_id",
    "delta_sigma",
    "delta_j_oracle",
    "delta_j_printed",
    "delta_j_cancelled",
    "individual_profit",
]

# Relative tolerance for calling two contract sizes equal.
_EQUAL_RTOL = 1e-9

PROFIT_DELTA_MODES = ("as_printed", "mean_cancelled")


@dataclass(frozen=True, eq=False)
class AssetPortfolio:
    """Members sharing program terms, plus the aggregation's risk aversion.

    alpha_ag defaults to the members' common alpha (terms.alpha).  A
    covariance model is required to sum normal members; its ids must cover
    the member ids and its moments must agree with the member distributions.
    """

    members: tuple[tuple[str, CurtailmentDistribution], ...]
    terms: ProgramTerms
    covariance: CovarianceModel | None = None
    alpha_ag: float | None = None

    def __post_init__(self) -> None:
        members = tuple((str(aid), dist) for aid, dist in self.members)
        if not members:
            raise ValueError("portfolio needs at least one member")
        ids = [aid for aid, _ in members]
        if len(set(ids)) != len(ids):
            raise ValueError("member ids must be unique")
        if any(not aid for aid in ids):
            raise ValueError("member ids must be non-empty")
        for aid, dist in members:
            if not isinstance(dist, (EmpiricalDistribution, NormalDistribution)):
                raise TypeError(f"member {aid!r} has no distribution: {type(dist).__name__}")
        if self.alpha_ag is not None:
            if not (np.isfinite(self.alpha_ag) and self.alpha_ag >= 0.0):
                raise ValueError(f"alpha_ag must be >= 0, got {self.alpha_ag!r}")
        if self.covariance is not None and self.covariance.asset_ids is not None:
            missing = [aid for aid in ids if aid not in self.covariance.asset_ids]
            if missing:
                raise ModelConsistencyError(
                    f"covariance model missing member ids {missing}"
                )
        if self.covariance is not None:
            self._check_covariance_moments(members)
        object.__setattr__(self, "members", members)

    def _check_covariance_moments(
        self, members: tuple[tuple[str, CurtailmentDistribution], ...]
    ) -> None:
        cov = self.covariance
        for idx, (aid, dist) in enumerate(members):
            if not isinstance(dist, NormalDistribution):
                continue
            j = cov.index_of(aid) if cov.asset_ids is not None else idx
            if cov.asset_ids is None and cov.k != len(members):
                raise ModelConsistencyError(
                    f"covariance model has {cov.k} assets for {len(members)} members"
                )
            for got, want, what in (
                (cov.means[j], dist.mu, "mean"),
                (cov.stddevs[j], dist.sigma, "stddev"),
            ):
                if abs(got - want) > 1e-9 * max(1.0, abs(want)):
                    raise ModelConsistencyError(
                        f"covariance {what} {got:g} disagrees with member {aid!r} ({want:g})"
                    )

    @property
    def member_ids(self) -> tuple[str, ...]:
        return tuple(aid for aid, _ in self.members)

    @property
    def effective_alpha_ag(self) -> float:
        return self.terms.alpha if self.alpha_ag is None else self.alpha_ag

    @property
    def ag_terms(self) -> ProgramTerms:
        return self.terms.with_alpha(self.effective_alpha_ag)

    def _require_shared_alpha(self, what: str) -> None:
        if self.alpha_ag is not None and self.alpha_ag != self.terms.alpha:
            raise ValueError(
                f"{what} assumes the aggregation shares the members' risk aversion; "
                f"got alpha_ag={self.alpha_ag:g} vs alpha={self.terms.alpha:g}"
            )


def aggregate_distribution(portfolio: AssetPortfolio) -> CurtailmentDistribution:
    """Distribution of the summed capability."""
    dists = [dist for _, dist in portfolio.members]
    if len(dists) == 1:
        return dists[0]
    if all(isinstance(d, EmpiricalDistribution) for d in dists):
        return sum_empirical(dists)
    if all(isinstance(d, NormalDistribution) for d in dists):
        if portfolio.covariance is None:
            raise ModelConsistencyError(
                "summing normal members requires a covariance model"
            )
        cov = portfolio.covariance
        if cov.asset_ids is not None:
            cov = cov.subset(portfolio.member_ids)
        return sum_normal(cov)
    raise AlignmentError("cannot sum a mix of empirical and normal members")


def member_contracts(portfolio: AssetPortfolio) -> list[ContractDecision]:
    """Each member's standalone optimal contract under the shared terms."""
    return [optimal_contract(portfolio.terms, dist) for _, dist in portfolio.members]


def aggregation_contract(portfolio: AssetPortfolio) -> ContractDecision:
    """The single contract the aggregation signs (risk aversion alpha_ag)."""
    return optimal_contract(portfolio.ag_terms, aggregate_distribution(portfolio))


def member_sigmas(portfolio: AssetPortfolio) -> np.ndarray:
    return np.array([dist.stddev() for _, dist in portfolio.members])


def complementarity(portfolio: AssetPortfolio) -> float:
    """delta_sigma = sum of member stddevs minus the aggregate stddev."""
    sigma_sum = float(member_sigmas(portfolio).sum())
    sigma_ag = aggregate_distribution(portfolio).stddev()
    return sigma_sum - sigma_ag


@dataclass(frozen=True)
class ComparisonVerdict:
    verdict: str
    c_star_ag: float
    c_star_sum: float
    gamma_value: float
    delta_sigma: float


def contract_comparison(portfolio: AssetPortfolio) -> ComparisonVerdict:
    """Order the aggregation's contract against the sum of member contracts.

    For normal members the ordering follows the sign of gamma whenever
    delta_sigma > 0; that law is checked, not just reported.
    """
    portfolio._require_shared_alpha("contract comparison")
    c_ag = aggregation_contract(portfolio).c_star
    c_sum = float(sum(d.c_star for d in member_contracts(portfolio)))
    gamma_value = gamma(portfolio.terms)
    delta_sigma = complementarity(portfolio)
    tol = _EQUAL_RTOL * max(1.0, abs(c_sum), abs(c_ag))
    diff = c_sum - c_ag
    if abs(diff) <= tol:
        verdict = "equal"
    elif diff > 0.0:
        verdict = "ag_smaller"
    else:
        verdict = "ag_larger"
    all_normal = all(isinstance(d, NormalDistribution) for _, d in portfolio.members)
    if all_normal and delta_sigma > tol and verdict != "equal":
        expected = "ag_smaller" if gamma_value > 0.0 else "ag_larger"
        if gamma_value != 0.0 and verdict != expected:
            raise RuntimeError(
                f"contract ordering {verdict} contradicts sign(gamma)={gamma_value:g} "
                f"at delta_sigma={delta_sigma:g}"
            )
    return ComparisonVerdict(
        verdict=verdict,
        c_star_ag=c_ag,
        c_star_sum=c_sum,
        gamma_value=gamma_value,
        delta_sigma=delta_sigma,
    )


def profit_delta_oracle(portfolio: AssetPortfolio) -> float:
    """Ground-truth profit gain of aggregating: joint minus separate.

    Every party signs its own risk-adjusted optimal contract; the delta is
    taken on expected profit, the quantity the complementarity result
    describes.  Requires a shared risk aversion.
    """
    portfolio._require_shared_alpha("profit delta")
    agg = aggregate_distribution(portfolio)
    joint = optimal_contract(portfolio.ag_terms, agg)
    joint_profit = expected_profit(portfolio.ag_terms, agg, joint.c_star)
    separate = sum(d.expected_profit for d in member_contracts(portfolio))
    return float(joint_profit - separate)


def bracket_factor(terms: ProgramTerms) -> float:
    """The delta_sigma multiplier: p*(pi_p+pi_e)*phi(gamma) + alpha*(pi_r-p*pi_p)*gamma.

    The alpha term is negative whenever gamma > 0, but at the program's own
    fractile the whole factor stays positive: psi = 1 + (1+alpha)*margin/D
    (D = p*(pi_p+pi_e)) gives alpha*|margin|*gamma/D < (1-psi)*gamma < phi(gamma)
    by the Gaussian tail bound.  The negative_bracket report flag is therefore a
    tripwire for inconsistent inputs, not an expected regime.
    """
    g = gamma(terms)
    return float(
        terms.p * (terms.pi_p + terms.pi_e) * standard_normal_pdf(g)
        + terms.alpha * (terms.pi_r - terms.p * terms.pi_p) * g
    )


def profit_delta_from_sigmas(
    terms: ProgramTerms, sigmas: Sequence[float], sigma_ag: float, mode: str
) -> float:
    """Analytic profit delta from member and aggregate spreads.

    mean_cancelled: delta_sigma times the bracket factor (the member means
    cancel against the aggregate mean, removing the count-proportional term).
    as_printed: additionally keeps -p*(pi_p+pi_e)*(n_members-1)*Phi(gamma),
    a count-proportional term that survives only if the cancellation is not
    applied; exposed for auditing, not for decisions.
    """
    if mode not in PROFIT_DELTA_MODES:
        raise ValueError(f"mode must be one of {PROFIT_DELTA_MODES}, got {mode!r}")
    sigmas = np.asarray(sigmas, dtype=float)
    delta_sigma = float(sigmas.sum()) - float(sigma_ag)
    value = delta_sigma * bracket_factor(terms)
    if mode == "as_printed":
        g = gamma(terms)
        value += (
            -terms.p
            * (terms.pi_p + terms.pi_e)
            * (sigmas.size - 1)
            * float(standard_normal_cdf(g))
        )
    return value


def profit_delta_normal(terms: ProgramTerms, portfolio: AssetPortfolio, mode: str) -> float:
    """Analytic profit delta for an all-normal portfolio."""
    for aid, dist in portfolio.members:
        if not isinstance(dist, NormalDistribution):
            raise TypeError(f"member {aid!r} is not normal; the formula needs sigmas")
    sigmas = member_sigmas(portfolio)
    sigma_ag = aggregate_distribution(portfolio).stddev()
    return profit_delta_from_sigmas(terms, sigmas, sigma_ag, mode)


@dataclass(frozen=True)
class AggregationReport:
    """Everything the aggregate-vs-separate decision needs, in one place."""

    aggregate: CurtailmentDistribution
    c_star_ag: float
    c_star_sum: float
    verdict: str
    delta_sigma: float
    delta_j_oracle: float
    delta_j_printed: float
    delta_j_cancelled: float
    negative_bracket: bool


def build_report(portfolio: AssetPortfolio) -> AggregationReport:
    comparison = contract_comparison(portfolio)
    sigmas = member_sigmas(portfolio)
    sigma_ag = aggregate_distribution(portfolio).stddev()
    return AggregationReport(
        aggregate=aggregate_distribution(portfolio),
        c_star_ag=comparison.c_star_ag,
        c_star_sum=comparison.c_star_sum,
        verdict=comparison.verdict,
        delta_sigma=comparison.delta_sigma,
        delta_j_oracle=profit_delta_oracle(portfolio),
        delta_j_printed=profit_delta_from_sigmas(
            portfolio.terms, sigmas, sigma_ag, "as_printed"
        ),
        delta_j_cancelled=profit_delta_from_sigmas(
            portfolio.terms, sigmas, sigma_ag, "mean_cancelled"
        ),
        negative_bracket=bracket_factor(portfolio.terms) < 0.0,
    )


@dataclass(frozen=True)
class PartnerRank:
    candidate_id: str
    delta_sigma: float
    delta_j_oracle: float
    delta_j_printed: float
    delta_j_cancelled: float
    individual_profit: float


def rank_partners(
    base: tuple[str, CurtailmentDistribution],
    candidates: Sequence[tuple[str, CurtailmentDistribution]],
    terms: ProgramTerms,
    covariance: CovarianceModel | None = None,
) -> list[PartnerRank]:
    """Score each candidate as a partner for the base asset.

    Sorted by delta_sigma descending, ties broken by candidate id, so the
    most complementary partner comes first.
    """
    base_id, _ = base
    rows = []
    for cand_id, cand_dist in candidates:
        if cand_id == base_id:
            raise ValueError(f"candidate {cand_id!r} duplicates the base asset")
        pair = AssetPortfolio(
            members=(base, (cand_id, cand_dist)),
            terms=terms,
            covariance=covariance,
        )
        sigmas = member_sigmas(pair)
        sigma_ag = aggregate_distribution(pair).stddev()
        rows.append(
            PartnerRank(
                candidate_id=cand_id,
                delta_sigma=complementarity(pair),
                delta_j_oracle=profit_delta_oracle(pair),
                delta_j_printed=profit_delta_from_sigmas(
                    terms, sigmas, sigma_ag, "as_printed"
                ),
                delta_j_cancelled=profit_delta_from_sigmas(
                    terms, sigmas, sigma_ag, "mean_cancelled"
                ),
                individual_profit=optimal_contract(terms, cand_dist).expected_profit,
            )
        )
    return sorted(rows, key=lambda r: (-r.delta_sigma, r.candidate_id))


def write_ranking_csv(path, rows: Sequence[PartnerRank]) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(RANKING_CSV_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row.candidate_id,
                    sig9(row.delta_sigma),
                    sig9(row.delta_j_oracle),
                    sig9(row.delta_j_printed),
                    sig9(row.delta_j_cancelled),
                    sig9(row.individual_profit),
                ]
            )
