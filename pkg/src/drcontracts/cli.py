"""Command-line pipeline driver.

Four subcommands mirror the workflow stages:

  estimate   load CSV + shapes CSV -> capability model JSON
  contract   capability model -> per-bucket contract schedule CSV
  aggregate  capability model -> partner ranking CSV
  simulate   capability model + contract schedule -> Monte Carlo report JSON

Every command is a pure function of (input files, config, seed): re-runs
write byte-identical output.  Exit codes: 0 success, 2 input error, 3
model-consistency error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .aggregation import (
    AssetPortfolio,
    PartnerRank,
    aggregate_distribution,
    complementarity,
    member_sigmas,
    profit_delta_from_sigmas,
    profit_delta_oracle,
    write_ranking_csv,
)
from .contracts import (
    ContractDecision,
    grid_search_optimal,
    optimal_contract,
)
from .distributions import restrict_to_common
from .errors import (
    AlignmentError,
    DrContractsError,
    IllPosedProgramError,
    InputFormatError,
    ModelConsistencyError,
    UnconstrainedContractError,
)
from .estimation import (
    BucketKey,
    CapabilityModel,
    EstimationConfig,
    build_capability_model,
    model_json_text,
    read_load_csv,
    read_shapes_csv,
)
from .formatting import flag, parse_flag, sig9
from .program import ProgramTerms
from .simulation import (
    SimulationConfig,
    analytic_summary,
    convergence_rows,
    simulate_horizon,
    write_profits_csv,
)

SCHEDULE_CSV_HEADER = [
    "month",
    "hour",
    "is_weekend",
    "psi",
    "c_star",
    "clipped",
    "expected_profit",
    "cvar",
    "objective",
]
# The grid-search oracle is emitted alongside the analytic optimum.
SCHEDULE_CSV_HEADER_FULL = SCHEDULE_CSV_HEADER + ["c_star_grid"]

ALPHA_SWEEP_HEADER = [
    "alpha",
    "total_c_star",
    "total_expected_profit",
    "total_objective",
    "zero_buckets",
]

_CONFIG_BLOCKS = {"terms", "estimation", "simulation", "paths"}
_PATH_KEYS = {"load_csv", "shapes_csv", "model", "contracts"}


@dataclass(frozen=True)
class RunConfig:
    """Validated contents of the JSON config file."""

    terms: ProgramTerms | None
    estimation: EstimationConfig | None
    simulation_raw: dict | None
    paths: dict[str, Path]
    config_path: Path

    def require_terms(self) -> ProgramTerms:
        if self.terms is None:
            raise InputFormatError(f"{self.config_path}: missing 'terms' block")
        return self.terms

    def require_estimation(self) -> EstimationConfig:
        if self.estimation is None:
            raise InputFormatError(f"{self.config_path}: missing 'estimation' block")
        return self.estimation

    def simulation_config(self, seed_override: int | None) -> SimulationConfig:
        if self.simulation_raw is None:
            raise InputFormatError(f"{self.config_path}: missing 'simulation' block")
        raw = dict(self.simulation_raw)
        if seed_override is not None:
            raw["seed"] = seed_override
        try:
            return SimulationConfig(**raw)
        except (TypeError, ValueError) as exc:
            raise InputFormatError(f"{self.config_path}: simulation block: {exc}") from exc

    def path(self, key: str) -> Path:
        if key not in self.paths:
            raise InputFormatError(
                f"{self.config_path}: missing 'paths.{key}' entry"
            )
        return self.paths[key]


def load_run_config(path_text: str) -> RunConfig:
    path = Path(path_text)
    try:
        obj = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputFormatError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise InputFormatError(f"{path}: config must be a JSON object")
    unknown = set(obj) - _CONFIG_BLOCKS
    if unknown:
        raise InputFormatError(f"{path}: unknown config blocks {sorted(unknown)}")

    terms = None
    if "terms" in obj:
        try:
            terms = ProgramTerms.from_json_dict(obj["terms"])
        except IllPosedProgramError:
            raise
        except ValueError as exc:
            raise InputFormatError(f"{path}: terms block: {exc}") from exc

    estimation = None
    if "estimation" in obj:
        block = obj["estimation"]
        if not isinstance(block, dict):
            raise InputFormatError(f"{path}: estimation block must be an object")
        allowed = {"curtailable_fraction", "min_bucket_size", "curtailable_end_use"}
        unknown = set(block) - allowed
        if unknown:
            raise InputFormatError(
                f"{path}: unknown estimation keys {sorted(unknown)}"
            )
        for required in ("curtailable_fraction", "curtailable_end_use"):
            if required not in block:
                raise InputFormatError(
                    f"{path}: estimation block must state {required!r} explicitly"
                )
        try:
            estimation = EstimationConfig(**block)
        except (TypeError, ValueError) as exc:
            raise InputFormatError(f"{path}: estimation block: {exc}") from exc

    simulation_raw = None
    if "simulation" in obj:
        block = obj["simulation"]
        if not isinstance(block, dict):
            raise InputFormatError(f"{path}: simulation block must be an object")
        allowed = {"n_trials", "windows_per_horizon", "seed", "parallel_streams"}
        unknown = set(block) - allowed
        if unknown:
            raise InputFormatError(f"{path}: unknown simulation keys {sorted(unknown)}")
        if "n_trials" not in block:
            raise InputFormatError(f"{path}: simulation block needs 'n_trials'")
        simulation_raw = dict(block)

    paths: dict[str, Path] = {}
    if "paths" in obj:
        block = obj["paths"]
        if not isinstance(block, dict):
            raise InputFormatError(f"{path}: paths block must be an object")
        unknown = set(block) - _PATH_KEYS
        if unknown:
            raise InputFormatError(f"{path}: unknown path keys {sorted(unknown)}")
        for key, value in block.items():
            if not isinstance(value, str) or not value:
                raise InputFormatError(f"{path}: paths.{key} must be a non-empty string")
            # Relative paths resolve against the config file's directory.
            paths[key] = (path.parent / value).resolve()

    return RunConfig(
        terms=terms,
        estimation=estimation,
        simulation_raw=simulation_raw,
        paths=paths,
        config_path=path,
    )


def _digest(*paths: Path) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(p.read_bytes())
    return h.hexdigest()


def cmd_estimate(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    est = config.require_estimation()
    load_path = config.path("load_csv")
    shapes_path = config.path("shapes_csv")
    records = read_load_csv(load_path)
    shapes = read_shapes_csv(shapes_path, est.curtailable_end_use)
    model = build_capability_model(
        records, shapes, est, source_digest=_digest(load_path, shapes_path)
    )
    Path(args.out).write_text(model_json_text(model))

    total_kept = total_dropped = zero_sigma = 0
    distances = []
    for bid in sorted(model.buildings):
        bm = model.buildings[bid]
        kept = len(bm.buckets)
        dropped = len(bm.dropped_buckets)
        total_kept += kept
        total_dropped += dropped
        sigmas = [b.normal.sigma for b in bm.buckets.values()]
        zero_sigma += sum(1 for s in sigmas if s == 0.0)
        distances.extend(b.fit_distance for b in bm.buckets.values())
        print(
            f"{bid}: {kept} buckets ({dropped} dropped), "
            f"{bm.days_used} days used, {bm.skipped_days} skipped"
        )
    print(
        f"total: {total_kept} buckets kept, {total_dropped} dropped; "
        f"fit distance mean {np.mean(distances):.4g}, max {np.max(distances):.4g}"
    )
    if zero_sigma:
        print(f"warning: {zero_sigma} point-mass buckets (sigma = 0)")
    print(f"model written to {args.out}")
    return 0


def _schedule_rows(model: CapabilityModel, building_id: str, terms: ProgramTerms):
    building = model.building(building_id)
    for key in building.sorted_keys():
        emp = building.buckets[key].empirical
        decision = optimal_contract(terms, emp)
        oracle = grid_search_optimal(terms, emp)
        yield key, emp, decision, oracle


def _write_schedule_csv(path, rows) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SCHEDULE_CSV_HEADER_FULL)
        for key, _, decision, oracle in rows:
            writer.writerow(
                [
                    key.month,
                    key.hour,
                    flag(key.is_weekend),
                    sig9(decision.psi),
                    sig9(decision.c_star),
                    decision.clipped,
                    sig9(decision.expected_profit),
                    sig9(decision.cvar_value),
                    sig9(decision.objective_value),
                    sig9(oracle),
                ]
            )


def _parse_alpha_sweep(spec_text: str) -> np.ndarray:
    parts = spec_text.split(":")
    if len(parts) != 3:
        raise InputFormatError(
            f"--alpha-sweep expects a0:a1:n, got {spec_text!r}"
        )
    try:
        a0, a1 = float(parts[0]), float(parts[1])
        n = int(parts[2])
    except ValueError:
        raise InputFormatError(
            f"--alpha-sweep expects numeric a0:a1:n, got {spec_text!r}"
        ) from None
    if n < 2 or a1 <= a0 or a0 < 0.0:
        raise InputFormatError(
            f"--alpha-sweep needs 0 <= a0 < a1 and n >= 2, got {spec_text!r}"
        )
    return np.linspace(a0, a1, n)


def cmd_contract(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    terms = config.require_terms()
    model = CapabilityModel.load(config.path("model"))
    rows = list(_schedule_rows(model, args.building, terms))
    _write_schedule_csv(args.out, rows)

    weights = np.array([emp.n for _, emp, _, _ in rows], dtype=float)
    profits = np.array([d.expected_profit for _, _, d, _ in rows])
    c_stars = np.array([d.c_star for _, _, d, _ in rows])
    fallback = sum(1 for _, _, d, _ in rows if d.used_grid_fallback)
    clipped = sum(1 for _, _, d, _ in rows if d.clipped != "none")
    print(
        f"{args.building}: {len(rows)} buckets; "
        f"window-weighted expected profit {np.average(profits, weights=weights):.6g} $/window; "
        f"mean c_star {np.average(c_stars, weights=weights):.6g} kWh; "
        f"{clipped} clipped, {fallback} via grid fallback"
    )
    print(f"schedule written to {args.out}")

    if args.alpha_sweep:
        alphas = _parse_alpha_sweep(args.alpha_sweep)
        out = Path(args.out)
        sweep_path = out.with_name(out.stem + "_alpha_sweep.csv")
        building = model.building(args.building)
        keys = building.sorted_keys()
        emps = [building.buckets[k].empirical for k in keys]
        counts = np.array([e.n for e in emps], dtype=float)
        with sweep_path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(ALPHA_SWEEP_HEADER)
            for alpha in alphas:
                swept = terms.with_alpha(float(alpha))
                decisions = [optimal_contract(swept, e) for e in emps]
                total_c = float(np.dot(counts, [d.c_star for d in decisions]))
                total_j = float(np.dot(counts, [d.expected_profit for d in decisions]))
                total_obj = float(np.dot(counts, [d.objective_value for d in decisions]))
                zero_buckets = sum(1 for d in decisions if d.c_star == 0.0)
                writer.writerow(
                    [
                        sig9(float(alpha)),
                        sig9(total_c),
                        sig9(total_j),
                        sig9(total_obj),
                        zero_buckets,
                    ]
                )
        print(f"alpha sweep written to {sweep_path}")
    return 0


def _pair_metrics(
    terms: ProgramTerms,
    base_bucket,
    cand_bucket,
) -> tuple[float, float, float, float, int] | None:
    """Per-window metrics for one bucket pair, or None when unalignable."""
    try:
        base_emp, cand_emp = restrict_to_common(
            [base_bucket.empirical, cand_bucket.empirical]
        )
    except AlignmentError:
        return None
    if base_emp.n < 2:
        return None
    pair = AssetPortfolio(
        members=(("base", base_emp), ("candidate", cand_emp)), terms=terms
    )
    sigmas = member_sigmas(pair)
    sigma_ag = aggregate_distribution(pair).stddev()
    return (
        complementarity(pair),
        profit_delta_oracle(pair),
        profit_delta_from_sigmas(terms, sigmas, sigma_ag, "as_printed"),
        profit_delta_from_sigmas(terms, sigmas, sigma_ag, "mean_cancelled"),
        base_emp.n,
    )


def _standalone_profit(terms: ProgramTerms, building) -> float:
    """Window-weighted mean optimal expected profit over a building's buckets."""
    weights = []
    values = []
    for key in building.sorted_keys():
        emp = building.buckets[key].empirical
        weights.append(emp.n)
        values.append(optimal_contract(terms, emp).expected_profit)
    return float(np.average(values, weights=weights))


def cmd_aggregate(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    terms = config.require_terms()
    model = CapabilityModel.load(config.path("model"))
    base = model.building(args.base)
    if args.base in args.candidates:
        raise ModelConsistencyError(f"base {args.base!r} listed among candidates")

    ranks = []
    unalignable: list[str] = []
    for cand_id in args.candidates:
        cand = model.building(cand_id)
        common_keys = sorted(set(base.buckets) & set(cand.buckets))
        metrics = []
        for key in common_keys:
            result = _pair_metrics(terms, base.buckets[key], cand.buckets[key])
            if result is None:
                unalignable.append(f"{cand_id}:{key.label}")
                continue
            metrics.append(result)
        if not metrics:
            raise ModelConsistencyError(
                f"candidate {cand_id!r} has no alignable buckets with base {args.base!r}"
            )
        weights = np.array([m[4] for m in metrics], dtype=float)
        ranks.append(
            PartnerRank(
                candidate_id=cand_id,
                delta_sigma=float(np.average([m[0] for m in metrics], weights=weights)),
                delta_j_oracle=float(np.average([m[1] for m in metrics], weights=weights)),
                delta_j_printed=float(np.average([m[2] for m in metrics], weights=weights)),
                delta_j_cancelled=float(
                    np.average([m[3] for m in metrics], weights=weights)
                ),
                individual_profit=_standalone_profit(terms, cand),
            )
        )
    ranks.sort(key=lambda r: (-r.delta_sigma, r.candidate_id))
    write_ranking_csv(args.out, ranks)

    for rank in ranks:
        print(
            f"{rank.candidate_id}: delta_sigma {rank.delta_sigma:.6g} kWh, "
            f"delta_j_oracle {rank.delta_j_oracle:.6g} $/window"
        )
    if unalignable:
        print(f"unalignable buckets skipped: {', '.join(sorted(unalignable))}")
    if len(ranks) >= 2:
        rho = stats.spearmanr(
            [r.delta_sigma for r in ranks], [r.delta_j_oracle for r in ranks]
        ).statistic
        print(f"spearman(delta_sigma, delta_j_oracle) = {rho:.9g}")
    print(f"ranking written to {args.out}")
    return 0


def _read_contracts_csv(path: Path) -> dict[BucketKey, float]:
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InputFormatError(f"cannot read contracts CSV {path}: {exc}") from exc
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise InputFormatError(f"{path}: empty file") from None
    if header not in (SCHEDULE_CSV_HEADER, SCHEDULE_CSV_HEADER_FULL):
        raise InputFormatError(
            f"{path}: expected contract schedule header, got {','.join(header)}"
        )
    contracts: dict[BucketKey, float] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        where = f"{path}:{lineno}"
        if len(row) != len(header):
            raise InputFormatError(
                f"{where}: expected {len(header)} fields, got {len(row)}"
            )
        try:
            key = BucketKey(int(row[0]), int(row[1]), parse_flag(row[2]))
            c_star = float(row[4])
        except ValueError as exc:
            raise InputFormatError(f"{where}: {exc}") from exc
        if key in contracts:
            raise InputFormatError(f"{where}: duplicate bucket {key.label}")
        contracts[key] = c_star
    if not contracts:
        raise InputFormatError(f"{path}: no contract rows")
    return contracts


def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    terms = config.require_terms()
    sim_config = config.simulation_config(args.seed)
    model = CapabilityModel.load(config.path("model"))
    building = model.building(args.building)
    contracts = _read_contracts_csv(config.path("contracts"))

    bucket_keys = set(building.buckets)
    contract_keys = set(contracts)
    missing = sorted(k.label for k in contract_keys - bucket_keys)
    extra = sorted(k.label for k in bucket_keys - contract_keys)
    if missing or extra:
        raise ModelConsistencyError(
            f"contract schedule does not match building {args.building!r}: "
            f"contracts without buckets {missing}, buckets without contracts {extra}"
        )

    capability = {
        key: building.buckets[key].empirical for key in building.sorted_keys()
    }
    # Replay the historical bucket structure: each bucket contributes as many
    # windows as it has samples.
    schedule = [
        key for key in building.sorted_keys() for _ in range(capability[key].n)
    ]
    result = simulate_horizon(terms, capability, contracts, sim_config, schedule)
    summary = analytic_summary(terms, capability, contracts, sim_config, schedule)
    rows = convergence_rows(result, summary)

    payload = {
        "result": result.to_json_dict(),
        "analytic": {
            "total_expected_profit": summary.total_expected_profit,
            "expected_events_per_trial": summary.expected_events_per_trial,
            "shortfall_probability": summary.shortfall_probability,
            "groups": {
                label: {
                    "windows": g.windows,
                    "contract": g.contract,
                    "expected_profit": g.expected_profit,
                    "cvar": g.cvar_value,
                    "shortfall_probability": g.shortfall_probability,
                }
                for label, g in sorted(summary.groups.items())
            },
        },
        "convergence": [
            {
                "quantity": row.quantity,
                "simulated": row.simulated,
                "analytic": row.analytic,
                "standard_error": row.standard_error,
                "z_score": row.z_score,
            }
            for row in rows
        ],
    }
    Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")

    print(f"{'quantity':<28} {'simulated':>14} {'analytic':>14} {'z':>8}")
    worst = 0.0
    for row in rows:
        z = row.z_score
        z_text = f"{z:8.2f}" if z is not None else "     n/a"
        print(
            f"{row.quantity:<28} {row.simulated:>14.6g} {row.analytic:>14.6g} {z_text}"
        )
        if z is not None:
            worst = max(worst, abs(z))
    print(f"max |z| = {worst:.2f} over {result.n_trials} trials x {result.windows} windows")
    if args.profits_csv:
        write_profits_csv(args.profits_csv, result)
        print(f"per-trial profits written to {args.profits_csv}")
    print(f"report written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drcontracts",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", required=True, help="output file path")
        p.add_argument(
            "--seed", type=int, default=None, help="override the configured seed"
        )

    p_est = sub.add_parser(
        "estimate",
        help="build the capability model from metered load data",
        description=(
            "Reads paths.load_csv (header: timestamp,building_id,load_kwh; ISO "
            "hourly timestamps) and paths.shapes_csv (header: end_use,day_type,"
            "hour,weight; day_type in weekday/weekend/all), decomposes each "
            "complete day by non-negative least squares, scales the curtailable "
            "end use by estimation.curtailable_fraction, pools hourly estimates "
            "into (month, hour, weekday/weekend) buckets and writes the "
            "capability model JSON to --out."
        ),
    )
    common(p_est)
    p_est.set_defaults(func=cmd_estimate)

    p_con = sub.add_parser(
        "contract",
        help="size optimal contracts per bucket",
        description=(
            "Writes one row per bucket of --building: month,hour,is_weekend,"
            "psi,c_star,clipped,expected_profit,cvar,objective,c_star_grid "
            "(the last column is the brute-force grid oracle). --alpha-sweep "
            "a0:a1:n additionally writes <out>_alpha_sweep.csv with "
            "window-count-weighted totals per risk-aversion value."
        ),
    )
    common(p_con)
    p_con.add_argument("--building", required=True, help="building id in the model")
    p_con.add_argument(
        "--alpha-sweep",
        default=None,
        metavar="A0:A1:N",
        help="emit totals for N alpha values from A0 to A1",
    )
    p_con.set_defaults(func=cmd_contract)

    p_agg = sub.add_parser(
        "aggregate",
        help="rank aggregation partners for a base building",
        description=(
            "For each candidate, restricts every shared bucket to the "
            "timestamps both buildings observed, evaluates the complementarity "
            "delta_sigma and the aggregation profit delta per window, and "
            "writes the ranking CSV: candidate_id,delta_sigma,delta_j_oracle,"
            "delta_j_printed,delta_j_cancelled,individual_profit.  Metrics are "
            "window-count-weighted means over the alignable buckets."
        ),
    )
    common(p_agg)
    p_agg.add_argument("--base", required=True, help="base building id")
    p_agg.add_argument(
        "--candidates", required=True, nargs="+", help="candidate building ids"
    )
    p_agg.set_defaults(func=cmd_aggregate)

    p_sim = sub.add_parser(
        "simulate",
        help="Monte Carlo settlement of a contract schedule",
        description=(
            "Replays the building's historical bucket structure (each bucket "
            "contributes as many windows as it has samples) for "
            "simulation.n_trials trials using the contract sizes from "
            "paths.contracts, and writes a JSON report with MC-vs-analytic "
            "convergence rows in standard-error units."
        ),
    )
    common(p_sim)
    p_sim.add_argument("--building", required=True, help="building id in the model")
    p_sim.add_argument(
        "--profits-csv", default=None, help="also write per-trial profits (trial,profit)"
    )
    p_sim.set_defaults(func=cmd_simulate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ModelConsistencyError, AlignmentError, UnconstrainedContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (InputFormatError, IllPosedProgramError, DrContractsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
