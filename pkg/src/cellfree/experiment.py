"""Monte-Carlo harness over network drops: per-drop pipelines for both systems,
throughput conversion, CDFs, and percentile statistics."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .linkmodel import (LinkStats, PowerAllocation, RateReport,
                        full_power_allocation, full_power_evaluator, gamma, rate_cf)
from .maxmin import SolveOptions, SolverFailure, solve_maxmin
from .pilots import GreedyOptions, PilotBook, assign_random, greedy_assign
from .propagation import (LargeScale, PathLossParams, RadioConfig, ShadowingParams,
                          large_scale, normalized_snr)
from .smallcell import assign_aps, estimate_variance_mu, rate_sc
from .topology import NetworkDrop, place_uniform

PILOT_SCHEMES = ("random", "greedy", "orthogonal-bound")
POWER_SCHEMES = ("full", "maxmin")
SYSTEMS = ("cellfree", "smallcell", "both")


@dataclass
class Scenario:
    """Everything one experiment needs: sizes, radio parameters, schemes, seed."""

    n_aps: int = 60
    n_users: int = 20
    tau: int = 10                   # uplink training length, samples
    coherence_samples: int = 200    # coherence interval T, samples
    extent: float = 1000.0          # square side D, meters
    n_drops: int = 100
    seed: int = 1
    pilot_scheme: str = "greedy"
    power_scheme: str = "maxmin"
    system: str = "cellfree"
    radio: RadioConfig = field(default_factory=RadioConfig)
    path_loss: PathLossParams = field(default_factory=PathLossParams)
    shadowing: ShadowingParams = field(default_factory=ShadowingParams)
    greedy: GreedyOptions = field(default_factory=GreedyOptions)
    solve: SolveOptions = field(default_factory=SolveOptions)
    mu_sqrt_variant: bool = False

    def __post_init__(self):
        if self.n_aps < 1 or self.n_users < 1:
            raise ValueError("n_aps and n_users must be >= 1")
        if not 1 <= self.tau < self.coherence_samples:
            raise ValueError("tau must satisfy 1 <= tau < coherence_samples")
        if self.n_drops < 1:
            raise ValueError("n_drops must be >= 1")
        if self.extent <= 0:
            raise ValueError("extent must be positive")
        if self.pilot_scheme not in PILOT_SCHEMES:
            raise ValueError(f"pilot_scheme must be one of {PILOT_SCHEMES}")
        if self.power_scheme not in POWER_SCHEMES:
            raise ValueError(f"power_scheme must be one of {POWER_SCHEMES}")
        if self.system not in SYSTEMS:
            raise ValueError(f"system must be one of {SYSTEMS}")
        if self.pilot_scheme == "orthogonal-bound" and self.tau < self.n_users:
            raise ValueError("orthogonal-bound pilots require tau >= n_users")
        if self.system in ("smallcell", "both") and self.n_aps < self.n_users:
            raise ValueError("small-cell system requires n_aps >= n_users")

    @property
    def bandwidth(self) -> float:
        return self.radio.bandwidth


@dataclass(frozen=True)
class SampleRecord:
    drop: int
    user: int
    system: str
    rate: float        # bits/s/Hz
    throughput: float  # bits/s


@dataclass
class SampleSet:
    """Per-user records plus per-drop minimum rates and any failed drops."""

    records: list[SampleRecord] = field(default_factory=list)
    min_rates: list[tuple[int, str, float]] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)

    def rates(self, system: str) -> np.ndarray:
        return np.array([r.rate for r in self.records if r.system == system])

    def throughputs(self, system: str) -> np.ndarray:
        return np.array([r.throughput for r in self.records if r.system == system])

    def min_rate_values(self, system: str) -> np.ndarray:
        return np.array([v for _, s, v in self.min_rates if s == system])

    def systems(self) -> list[str]:
        return sorted({r.system for r in self.records})


@dataclass
class DropResult:
    """Everything computed inside one drop, for the harness and the CLI."""

    drop_index: int
    drop: NetworkDrop
    beta: LargeScale
    book: PilotBook
    stats: LinkStats
    rho_d: float
    rho_p: float
    cellfree: RateReport | None = None
    cellfree_alloc: PowerAllocation | None = None
    maxmin_sinr: float | None = None
    smallcell: RateReport | None = None
    smallcell_serving: np.ndarray | None = None


def throughput(rate: float, bandwidth: float, tau: int, coherence_samples: int) -> float:
    """Per-user throughput in bits/s: half the post-training interval carries
    downlink data, so B (1 - tau/T) / 2 times the rate."""
    if not tau < coherence_samples:
        raise ValueError("tau must be < coherence_samples")
    return bandwidth * (1.0 - tau / coherence_samples) / 2.0 * rate


def empirical_cdf(samples) -> list[tuple[float, float]]:
    """Sorted (value, i/n) pairs of the empirical distribution."""
    values = np.asarray(samples, dtype=float)
    if values.size == 0:
        raise ValueError("samples must be non-empty")
    ordered = np.sort(values)
    n = ordered.size
    return [(float(v), (i + 1) / n) for i, v in enumerate(ordered)]


def percentile(samples, p: float) -> float:
    """Nearest-rank percentile: the value at 1-based index ceil(p n) of the
    sorted samples."""
    values = np.sort(np.asarray(samples, dtype=float))
    if values.size == 0:
        raise ValueError("samples must be non-empty")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")
    rank = math.ceil(p * values.size)
    return float(values[rank - 1])


def drop_rngs(seed: int, drop_index: int):
    """Independent per-drop generators for geometry, shadowing, pilots, and the
    small-cell selection order, derived from the master seed by a counter
    scheme so drops are reproducible regardless of execution order."""
    root = np.random.SeedSequence(seed, spawn_key=(drop_index,))
    return tuple(np.random.default_rng(child) for child in root.spawn(4))


def build_pilot_book(scenario: Scenario, beta: LargeScale, rho_p: float,
                     rho_d: float, rng: np.random.Generator) -> PilotBook:
    if scenario.pilot_scheme == "random":
        return assign_random(scenario.n_users, scenario.tau, rng)
    if scenario.pilot_scheme == "orthogonal-bound":
        return assign_random(scenario.n_users, scenario.tau, rng, orthogonal_bound=True)
    evaluator = full_power_evaluator(beta, scenario.tau, rho_p, rho_d)
    return greedy_assign(beta, scenario.tau, evaluator, rng, scenario.greedy)


def run_single_drop(scenario: Scenario, drop_index: int) -> DropResult:
    """Run the full per-drop pipeline; both systems share geometry, large-scale
    fading, and the pilot book."""
    rng_geo, rng_shadow, rng_pilot, rng_small = drop_rngs(scenario.seed, drop_index)
    drop = NetworkDrop(
        place_uniform(scenario.n_aps, scenario.extent, rng_geo),
        place_uniform(scenario.n_users, scenario.extent, rng_geo),
        scenario.extent)
    beta = large_scale(drop, scenario.path_loss, scenario.shadowing, rng_shadow)
    rho_d = normalized_snr(scenario.radio.ap_power, scenario.radio)
    rho_p = normalized_snr(scenario.radio.pilot_power, scenario.radio)
    book = build_pilot_book(scenario, beta, rho_p, rho_d, rng_pilot)
    stats = gamma(beta, book, rho_p, scenario.tau)
    result = DropResult(drop_index, drop, beta, book, stats, rho_d, rho_p)

    if scenario.system in ("cellfree", "both"):
        if scenario.power_scheme == "maxmin":
            alloc, t_star = solve_maxmin(beta, stats, book, rho_d, scenario.solve)
            result.maxmin_sinr = t_star
        else:
            alloc = full_power_allocation(stats)
        result.cellfree_alloc = alloc
        result.cellfree = rate_cf(beta, stats, book, alloc, rho_d)

    if scenario.system in ("smallcell", "both"):
        assignment = assign_aps(beta, rng_small)
        mu = estimate_variance_mu(beta, book, rho_p, scenario.tau, assignment,
                                  sqrt_variant=scenario.mu_sqrt_variant)
        assignment = replace(assignment, mu=mu)
        result.smallcell = rate_sc(beta, assignment, rho_d)
        result.smallcell_serving = assignment.serving_ap
    return result


def _collect(scenario: Scenario, result: DropResult):
    records, minima = [], []
    for tag, report in (("cellfree", result.cellfree), ("smallcell", result.smallcell)):
        if report is None:
            continue
        for user, rate in enumerate(report.rates):
            records.append(SampleRecord(
                result.drop_index, user, tag, float(rate),
                throughput(float(rate), scenario.bandwidth, scenario.tau,
                           scenario.coherence_samples)))
        minima.append((result.drop_index, tag, float(report.rates.min())))
    return records, minima


def _drop_worker(args):
    scenario, drop_index = args
    try:
        result = run_single_drop(scenario, drop_index)
    except (SolverFailure, np.linalg.LinAlgError) as exc:
        return drop_index, None, f"{type(exc).__name__}: {exc}"
    return drop_index, _collect(scenario, result), None


def run_drops(scenario: Scenario, threads: int = 1) -> SampleSet:
    """Run all drops of a scenario; deterministic given the scenario seed.

    Failed drops (solver non-convergence, covariance factorization failure)
    are recorded with their index and excluded from the samples. Results are
    gathered in drop order, so the output does not depend on `threads`.
    """
    jobs = [(scenario, idx) for idx in range(scenario.n_drops)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_drop_worker, jobs, chunksize=1))
    else:
        outcomes = [_drop_worker(job) for job in jobs]
    outcomes.sort(key=lambda item: item[0])

    sample_set = SampleSet()
    for drop_index, payload, error in outcomes:
        if error is not None:
            sample_set.failures.append((drop_index, error))
            continue
        records, minima = payload
        sample_set.records.extend(records)
        sample_set.min_rates.extend(minima)
    return sample_set


def write_samples_csv(sample_set: SampleSet, path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["drop", "user", "system", "rate", "throughput"])
        for rec in sorted(sample_set.records, key=lambda r: (r.drop, r.system, r.user)):
            writer.writerow([rec.drop, rec.user, rec.system,
                             repr(rec.rate), repr(rec.throughput)])


def write_cdf_csv(pairs, path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["value", "probability"])
        for value, prob in pairs:
            writer.writerow([repr(float(value)), repr(float(prob))])


def summarize(sample_set: SampleSet) -> dict:
    """Median, 5th percentile, and mean of each metric, per system."""
    summary: dict = {"systems": {}, "n_failed_drops": len(sample_set.failures),
                     "failed_drops": [idx for idx, _ in sample_set.failures]}
    for system in sample_set.systems():
        metrics = {}
        for name, values in (("rate", sample_set.rates(system)),
                             ("throughput", sample_set.throughputs(system)),
                             ("min_rate", sample_set.min_rate_values(system))):
            metrics[name] = {
                "mean": float(values.mean()),
                "median": percentile(values, 0.5),
                "p05": percentile(values, 0.05),
            }
        metrics["n_records"] = int(sample_set.rates(system).size)
        summary["systems"][system] = metrics
    return summary


def write_summary_json(sample_set: SampleSet, path) -> dict:
    summary = summarize(sample_set)
    with open(path, "w") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return summary
