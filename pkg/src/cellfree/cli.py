"""Command-line front end: JSON config plus flag overrides, experiment dispatch."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import experiment, linkmodel, maxmin, pilots, propagation
from .experiment import PILOT_SCHEMES, POWER_SCHEMES, SYSTEMS, Scenario
from .maxmin import SolveOptions
from .pilots import GreedyOptions
from .propagation import SHADOWING_MODES, PathLossParams, RadioConfig, ShadowingParams

log = logging.getLogger("cellfree")


class ConfigError(ValueError):
    """A config file or flag override violated the schema."""


@dataclass(frozen=True)
class _Key:
    kind: str                    # int | float | str | bool
    default: object
    help: str
    choices: tuple = ()
    optional: bool = False       # value may be null/none


CONFIG_SCHEMA: dict[str, _Key] = {
    "n_aps": _Key("int", 60, "number of APs (M)"),
    "n_users": _Key("int", 20, "number of users (K)"),
    "tau": _Key("int", 10, "uplink training length in samples"),
    "coherence_samples": _Key("int", 200, "coherence interval T in samples"),
    "bandwidth_hz": _Key("float", 20e6, "spectral bandwidth B"),
    "extent_m": _Key("float", 1000.0, "side length D of the wrapped square"),
    "n_drops": _Key("int", 100, "number of random network drops"),
    "seed": _Key("int", 1, "master seed; drops derive sub-seeds by counter"),
    "pilot_scheme": _Key("str", "greedy", "pilot assignment", PILOT_SCHEMES),
    "power_scheme": _Key("str", "maxmin", "downlink power control", POWER_SCHEMES),
    "system": _Key("str", "cellfree", "which system(s) to evaluate", SYSTEMS),
    "shadowing_mode": _Key("str", "iid", "shadow fading model", SHADOWING_MODES),
    "sigma_sh_db": _Key("float", 8.0, "shadow-fading standard deviation"),
    "rho1": _Key("float", 0.5, "AP-side share of shadowing cross-correlation"),
    "d_decorr_m": _Key("float", 100.0, "shadowing decorrelation distance"),
    "ap_power_w": _Key("float", 0.2, "AP radiated power"),
    "pilot_power_w": _Key("float", 0.1, "pilot transmit power"),
    "noise_figure_db": _Key("float", 9.0, "receiver noise figure"),
    "noise_temperature_k": _Key("float", 290.0, "reference noise temperature"),
    "carrier_frequency_mhz": _Key("float", 1900.0, "carrier frequency"),
    "ap_height_m": _Key("float", 15.0, "AP antenna height"),
    "user_height_m": _Key("float", 1.65, "user antenna height"),
    "d0_m": _Key("float", 10.0, "near path-loss breakpoint"),
    "d1_m": _Key("float", 50.0, "far path-loss breakpoint"),
    "fixed_loss_db": _Key("float", None, "path-loss anchor; null = COST231-Hata",
                          optional=True),
    "greedy_max_iters": _Key("int", None, "greedy pilot iterations; null = 10K",
                             optional=True),
    "greedy_tol": _Key("float", 1e-4, "greedy min-rate improvement threshold"),
    "bisection_tol": _Key("float", 1e-3, "relative tolerance on the max-min SINR"),
    "feas_tol": _Key("float", 1e-7, "accepted feasibility violation"),
    "max_bisection_iters": _Key("int", 50, "bisection iteration budget"),
    "solver": _Key("str", "CLARABEL", "cvxpy cone solver name"),
    "solver_max_iters": _Key("int", 200, "inner solver iteration budget"),
    "mc_samples": _Key("int", 1_000_000, "samples for the Monte-Carlo validation"),
    "mu_sqrt_variant": _Key("bool", False,
                            "alternative small-cell estimator normalization"),
}


@dataclass
class ExperimentConfig:
    """The fully resolved flat configuration."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def scenario(self, trace_path: str | None = None) -> Scenario:
        v = self.values
        return Scenario(
            n_aps=v["n_aps"], n_users=v["n_users"], tau=v["tau"],
            coherence_samples=v["coherence_samples"], extent=v["extent_m"],
            n_drops=v["n_drops"], seed=v["seed"],
            pilot_scheme=v["pilot_scheme"], power_scheme=v["power_scheme"],
            system=v["system"],
            radio=RadioConfig(ap_power=v["ap_power_w"], pilot_power=v["pilot_power_w"],
                              bandwidth=v["bandwidth_hz"],
                              noise_figure=v["noise_figure_db"],
                              noise_temperature=v["noise_temperature_k"]),
            path_loss=PathLossParams(d0=v["d0_m"], d1=v["d1_m"],
                                     carrier_frequency=v["carrier_frequency_mhz"],
                                     ap_height=v["ap_height_m"],
                                     user_height=v["user_height_m"],
                                     fixed_loss_db=v["fixed_loss_db"]),
            shadowing=ShadowingParams(sigma_sh=v["sigma_sh_db"], rho1=v["rho1"],
                                      d_decorr=v["d_decorr_m"],
                                      mode=v["shadowing_mode"]),
            greedy=GreedyOptions(max_iters=v["greedy_max_iters"], tol=v["greedy_tol"]),
            solve=SolveOptions(bisection_tol=v["bisection_tol"],
                               feas_tol=v["feas_tol"],
                               max_bisection_iters=v["max_bisection_iters"],
                               solver=v["solver"],
                               solver_max_iters=v["solver_max_iters"],
                               trace_path=trace_path),
            mu_sqrt_variant=v["mu_sqrt_variant"],
        )


def _coerce(key: str, raw, entry: _Key):
    if raw is None:
        if entry.optional:
            return None
        raise ConfigError(f"{key}: null is not allowed")
    if isinstance(raw, str) and entry.kind != "str":
        raw = _from_text(key, raw, entry)
        if raw is None:
            return None
    if entry.kind == "int":
        if isinstance(raw, bool) or not isinstance(raw, (int, np.integer)):
            raise ConfigError(f"{key}: expected an integer, got {raw!r}")
        return int(raw)
    if entry.kind == "float":
        if isinstance(raw, bool) or not isinstance(raw, (int, float, np.floating)):
            raise ConfigError(f"{key}: expected a number, got {raw!r}")
        return float(raw)
    if entry.kind == "bool":
        if not isinstance(raw, bool):
            raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
        return raw
    if entry.choices and raw not in entry.choices:
        raise ConfigError(f"{key}: {raw!r} is not one of {entry.choices}")
    return str(raw)


def _from_text(key: str, text: str, entry: _Key):
    """Flag values arrive as strings; convert them to the schema type."""
    lowered = text.strip().lower()
    if entry.optional and lowered in ("none", "null"):
        return None
    try:
        if entry.kind == "int":
            return int(text)
        if entry.kind == "float":
            return float(text)
        if entry.kind == "bool":
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {entry.kind}") from None
    return text


def parse_config(path: str | None, overrides: dict | None = None) -> ExperimentConfig:
    """Resolve defaults <- config file <- flag overrides, validating every key."""
    values = {key: entry.default for key, entry in CONFIG_SCHEMA.items()}
    if path is not None:
        with open(path) as handle:
            try:
                data = json.load(handle)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must contain a JSON object")
        for key, raw in data.items():
            if key not in CONFIG_SCHEMA:
                raise ConfigError(f"unknown config key: {key}")
            values[key] = _coerce(key, raw, CONFIG_SCHEMA[key])
    for key, raw in (overrides or {}).items():
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown config key: {key}")
        values[key] = _coerce(key, raw, CONFIG_SCHEMA[key])

    _cross_validate(values)
    return ExperimentConfig(values)


def _cross_validate(v: dict) -> None:
    if not v["tau"] < v["coherence_samples"]:
        raise ConfigError("tau: must be < coherence_samples (tau < T)")
    if v["pilot_scheme"] == "orthogonal-bound" and v["tau"] < v["n_users"]:
        raise ConfigError("pilot_scheme: orthogonal-bound requires tau >= n_users")
    if v["system"] in ("smallcell", "both") and v["n_aps"] < v["n_users"]:
        raise ConfigError("system: small-cell evaluation requires n_aps >= n_users")
    for key in ("n_aps", "n_users", "n_drops", "max_bisection_iters",
                "solver_max_iters", "mc_samples"):
        if v[key] < 1:
            raise ConfigError(f"{key}: must be >= 1")
    for key in ("bandwidth_hz", "extent_m", "sigma_sh_db", "d_decorr_m",
                "ap_power_w", "pilot_power_w", "noise_figure_db",
                "noise_temperature_k", "carrier_frequency_mhz", "ap_height_m",
                "user_height_m", "d0_m", "d1_m", "greedy_tol", "bisection_tol",
                "feas_tol"):
        if key == "sigma_sh_db":
            if v[key] < 0:
                raise ConfigError(f"{key}: must be >= 0")
        elif v[key] <= 0:
            raise ConfigError(f"{key}: must be positive")
    if not 0.0 <= v["rho1"] <= 1.0:
        raise ConfigError("rho1: must lie in [0, 1]")
    if not v["d0_m"] < v["d1_m"]:
        raise ConfigError("d0_m: must be < d1_m")
    if v["greedy_max_iters"] is not None and v["greedy_max_iters"] < 1:
        raise ConfigError("greedy_max_iters: must be >= 1 or null")


def _echo_config(config: ExperimentConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config.json", "w") as handle:
        json.dump(config.values, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _cmd_simulate(config: ExperimentConfig, out_dir: Path, threads: int) -> int:
    scenario = config.scenario()
    log.info("simulate: %d drops, system=%s, pilots=%s, power=%s",
             scenario.n_drops, scenario.system, scenario.pilot_scheme,
             scenario.power_scheme)
    sample_set = experiment.run_drops(scenario, threads=threads)
    experiment.write_samples_csv(sample_set, out_dir / "samples.csv")
    for system in sample_set.systems():
        for metric, values in (("rate", sample_set.rates(system)),
                               ("throughput", sample_set.throughputs(system)),
                               ("min_rate", sample_set.min_rate_values(system))):
            experiment.write_cdf_csv(experiment.empirical_cdf(values),
                                     out_dir / f"cdf_{system}_{metric}.csv")
    summary = experiment.write_summary_json(sample_set, out_dir / "summary.json")
    for system, metrics in summary["systems"].items():
        log.info("%s: median rate %.4f bit/s/Hz, 95%%-likely throughput %.4g bit/s",
                 system, metrics["rate"]["median"], metrics["throughput"]["p05"])
    if sample_set.failures:
        log.error("%d drop(s) failed: %s", len(sample_set.failures),
                  summary["failed_drops"])
        return 1
    return 0


def _cmd_rate(config: ExperimentConfig, out_dir: Path | None) -> int:
    result = experiment.run_single_drop(config.scenario(), 0)
    for tag, report in (("cellfree", result.cellfree), ("smallcell", result.smallcell)):
        if report is None:
            continue
        print(f"# {tag} per-user rates (drop 0)")
        for user, (sinr, rate) in enumerate(zip(report.sinr, report.rates)):
            print(f"{tag} user={user} sinr={sinr!r} rate={rate!r}")
        print(f"{tag} min_rate={report.rates.min()!r}")
    if out_dir is not None:
        if result.cellfree is not None:
            linkmodel.save_rate_csv(result.cellfree, out_dir / "rate_cellfree.csv")
        if result.smallcell is not None:
            linkmodel.save_rate_csv(result.smallcell, out_dir / "rate_smallcell.csv")
        propagation.save_beta_csv(result.beta, out_dir / "beta.csv")
        pilots.save_pilot_csv(result.book, out_dir / "pilots.csv")
    return 0


def _cmd_power(config: ExperimentConfig, out_dir: Path | None) -> int:
    trace_path = str(out_dir / "maxmin_trace.jsonl") if out_dir is not None else None
    scenario = replace(config.scenario(trace_path=trace_path),
                       power_scheme="maxmin", system="cellfree")
    result = experiment.run_single_drop(scenario, 0)
    report = result.cellfree
    print(f"maxmin target_sinr={result.maxmin_sinr!r}")
    print(f"maxmin min_sinr={report.sinr.min()!r} max_sinr={report.sinr.max()!r}")
    print(f"maxmin min_rate={report.rates.min()!r}")
    load = linkmodel.power_load(result.stats, result.cellfree_alloc)
    print(f"per_ap_load max={load.max()!r}")
    if out_dir is not None:
        np.savetxt(out_dir / "allocation.csv", result.cellfree_alloc.eta,
                   delimiter=",", fmt="%.17g")
    return 0


def _cmd_pilots(config: ExperimentConfig, out_dir: Path | None) -> int:
    scenario = config.scenario()
    rho_d = propagation.normalized_snr(scenario.radio.ap_power, scenario.radio)
    rho_p = propagation.normalized_snr(scenario.radio.pilot_power, scenario.radio)
    rng_geo, rng_shadow, rng_pilot, _ = experiment.drop_rngs(scenario.seed, 0)
    drop = experiment.NetworkDrop(
        experiment.place_uniform(scenario.n_aps, scenario.extent, rng_geo),
        experiment.place_uniform(scenario.n_users, scenario.extent, rng_geo),
        scenario.extent)
    beta = propagation.large_scale(drop, scenario.path_loss, scenario.shadowing,
                                   rng_shadow)
    evaluator = linkmodel.full_power_evaluator(beta, scenario.tau, rho_p, rho_d)
    random_book = pilots.assign_random(scenario.n_users, scenario.tau,
                                       np.random.default_rng(scenario.seed))
    greedy_book = pilots.greedy_assign(beta, scenario.tau, evaluator, rng_pilot,
                                       scenario.greedy)
    for tag, book in (("random", random_book), ("greedy", greedy_book)):
        rates = evaluator(book)
        contamination = sum(pilots.contamination_objective(beta, book, k)
                            for k in range(scenario.n_users))
        print(f"{tag} min_rate={float(rates.min())!r} "
              f"total_contamination={float(contamination)!r}")
        if out_dir is not None:
            pilots.save_pilot_csv(book, out_dir / f"pilots_{tag}.csv")
    return 0


def _cmd_validate(config: ExperimentConfig) -> int:
    """Cross-checks: Monte-Carlo vs the closed form, and the max-min solver vs
    known optima and a grid-search oracle."""
    checks: list[tuple[str, bool, str]] = []
    mc_samples = config["mc_samples"]
    rng = np.random.default_rng(config["seed"])

    # Single-link fixture: beta=1, gamma=0.5, full power -> SINR exactly 0.25.
    beta = np.array([[1.0]])
    book = pilots.assign_random(1, 1, rng)
    stats = linkmodel.gamma(beta, book, rho_p=1.0, tau=1)
    alloc = linkmodel.full_power_allocation(stats)
    closed = linkmodel.rate_cf(beta, stats, book, alloc, rho_d=1.0).sinr[0]
    mc = linkmodel.mc_effective_sinr(beta, book, alloc, 1.0, 1.0, mc_samples, rng)[0]
    rel = abs(mc - closed) / closed
    checks.append(("single-link closed form vs Monte-Carlo",
                   rel <= 0.02, f"closed={closed:.6f} mc={mc:.6f} rel={rel:.4f}"))

    # Random small instance, shared pilots included.
    beta = 10.0 ** rng.uniform(-1, 1, size=(6, 3))
    book = pilots.assign_random(3, 2, rng)
    stats = linkmodel.gamma(beta, book, rho_p=2.0, tau=2)
    alloc = linkmodel.full_power_allocation(stats)
    closed_v = linkmodel.rate_cf(beta, stats, book, alloc, rho_d=3.0).sinr
    mc_v = linkmodel.mc_effective_sinr(beta, book, alloc, 2.0, 3.0, mc_samples, rng)
    rel = float(np.max(np.abs(mc_v - closed_v) / closed_v))
    checks.append(("random instance closed form vs Monte-Carlo",
                   rel <= 0.02, f"max_rel={rel:.4f}"))

    # Max-min fixture: the single-link optimum equals the full-power SINR 0.25.
    beta = np.array([[1.0]])
    book = pilots.assign_random(1, 1, np.random.default_rng(0))
    stats = linkmodel.gamma(beta, book, rho_p=1.0, tau=1)
    _, t_star = maxmin.solve_maxmin(beta, stats, book, rho_d=1.0)
    checks.append(("single-link max-min optimum",
                   abs(t_star - 0.25) <= 0.25 * 0.01, f"t*={t_star:.6f}"))

    # Two-AP/two-user instance against a dense grid search.
    rng_grid = np.random.default_rng(7)
    beta = 10.0 ** rng_grid.uniform(-1, 1, size=(2, 2))
    book = pilots.assign_random(2, 2, rng_grid, orthogonal_bound=True)
    stats = linkmodel.gamma(beta, book, rho_p=1.0, tau=2)
    _, t_star = maxmin.solve_maxmin(beta, stats, book, rho_d=1.0)
    t_grid = _grid_search_maxmin(beta, stats.gamma, book.gram_sq, 1.0, points=50)
    rel = abs(t_star - t_grid) / t_grid
    checks.append(("max-min vs grid search", rel <= 0.02,
                   f"t*={t_star:.6f} grid={t_grid:.6f} rel={rel:.4f}"))

    failed = 0
    for name, passed, detail in checks:
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
        failed += 0 if passed else 1
    return 1 if failed else 0


def _grid_search_maxmin(beta, gamma_mat, gram_sq, rho_d, points=50) -> float:
    """Brute-force max-min SINR for M=K=2 over a lattice of per-AP power splits."""
    fractions = np.linspace(0.0, 1.0, points)
    totals = np.linspace(0.0, 1.0, points)
    grid_u1, grid_a1, grid_u2, grid_a2 = np.meshgrid(
        totals, fractions, totals, fractions, indexing="ij")
    best = 0.0
    chunk = 200_000
    flat = [g.ravel() for g in (grid_u1, grid_a1, grid_u2, grid_a2)]
    n = flat[0].size
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        u1, a1, u2, a2 = (f[start:stop] for f in flat)
        eta = np.empty((stop - start, 2, 2))
        eta[:, 0, 0] = u1 * a1 / gamma_mat[0, 0]
        eta[:, 0, 1] = u1 * (1 - a1) / gamma_mat[0, 1]
        eta[:, 1, 0] = u2 * a2 / gamma_mat[1, 0]
        eta[:, 1, 1] = u2 * (1 - a2) / gamma_mat[1, 1]
        sinr = _batched_sinr(beta, gamma_mat, gram_sq, eta, rho_d)
        best = max(best, float(sinr.min(axis=1).max()))
    return best


def _batched_sinr(beta, gamma_mat, gram_sq, eta, rho_d):
    """Closed-form SINR evaluated for a batch of allocations, shape (n, M, K)."""
    sqrt_eta = np.sqrt(eta)
    desired = (sqrt_eta * gamma_mat).sum(axis=1)                      # (n, K)
    weights = sqrt_eta * gamma_mat / beta                             # (n, M, K)
    cross = np.einsum("nmk,nmj->nkj", weights, np.broadcast_to(
        beta, eta.shape))                                             # cross[n, k', k]
    contamination = ((cross ** 2) * gram_sq).sum(axis=1) - desired ** 2
    contamination = np.maximum(contamination, 0.0)
    load = (eta * gamma_mat).sum(axis=2)                              # (n, M)
    leakage = np.einsum("nm,mk->nk", load, beta)
    return rho_d * desired ** 2 / (rho_d * contamination + rho_d * leakage + 1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellfree",
        description="Cell-free massive MIMO downlink simulator and optimizer")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("simulate", "run all drops and write samples/CDFs/summary"),
                       ("rate", "single drop: print the per-user rate report"),
                       ("power", "single drop: run max-min power control"),
                       ("pilots", "single drop: compare random vs greedy pilots"),
                       ("validate", "run the Monte-Carlo and solver cross-checks")):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", default=None, help="JSON config file")
        cmd.add_argument("--out", default=None, help="output directory")
        cmd.add_argument("--threads", default=str(os.cpu_count() or 1),
                         help="parallel drop workers")
        for key, entry in CONFIG_SCHEMA.items():
            cmd.add_argument(f"--{key}", default=None, metavar="VALUE",
                             help=f"{entry.help} (default {entry.default})")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    overrides = {key: getattr(args, key) for key in CONFIG_SCHEMA
                 if getattr(args, key) is not None}
    try:
        config = parse_config(args.config, overrides)
        threads = int(args.threads)
        out_dir = Path(args.out) if args.out is not None else None
        if args.command == "simulate" and out_dir is None:
            out_dir = Path("out")
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            _echo_config(config, out_dir)
        if args.command == "simulate":
            return _cmd_simulate(config, out_dir, threads)
        if args.command == "rate":
            return _cmd_rate(config, out_dir)
        if args.command == "power":
            return _cmd_power(config, out_dir)
        if args.command == "pilots":
            return _cmd_pilots(config, out_dir)
        if args.command == "validate":
            return _cmd_validate(config)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    except maxmin.SolverFailure as exc:
        log.error("max-min solver failed: %s (bracket [%s, %s], iteration %s)",
                  exc, exc.t_low, exc.t_high, exc.iteration)
        return 1
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
