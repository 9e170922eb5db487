"""Channel-estimate statistics, the closed-form conjugate-beamforming downlink
rate, and a Monte-Carlo estimator that validates the closed form from first
principles."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .pilots import PilotBook
from .propagation import beta_matrix

POWER_TOL = 1e-9  # slack on the per-AP average power constraint


@dataclass
class LinkStats:
    """Mean-square magnitudes of the MMSE channel estimates, gamma_mk."""

    gamma: np.ndarray  # (M, K)

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.gamma.ndim != 2:
            raise ValueError("gamma must be a 2-D matrix")
        if np.any(self.gamma <= 0) or not np.all(np.isfinite(self.gamma)):
            raise ValueError("gamma entries must be strictly positive and finite")


@dataclass
class PowerAllocation:
    """Power-control coefficients eta_mk; each AP must satisfy
    sum_k eta_mk gamma_mk <= 1 (within POWER_TOL)."""

    eta: np.ndarray  # (M, K), non-negative

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=float)
        if self.eta.ndim != 2:
            raise ValueError("eta must be a 2-D matrix")
        if np.any(self.eta < 0):
            raise ValueError("eta entries must be non-negative")


@dataclass
class RateReport:
    """Per-user achievable rates (bits/s/Hz) and the matching effective SINRs."""

    rates: np.ndarray  # (K,)
    sinr: np.ndarray   # (K,)

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=float)
        self.sinr = np.asarray(self.sinr, dtype=float)
        if np.any(self.sinr < 0) or np.any(self.rates < 0):
            raise ValueError("rates and SINRs must be non-negative")
        if np.max(np.abs(self.rates - np.log2(1.0 + self.sinr))) > 1e-9:
            raise ValueError("rates must equal log2(1 + sinr)")


def gamma(beta, book: PilotBook, rho_p: float, tau: int) -> LinkStats:
    """Estimate energies gamma_mk = tau rho_p beta_mk^2 /
    (tau rho_p sum_k' beta_mk' |phi_k^H phi_k'|^2 + 1)."""
    if rho_p <= 0:
        raise ValueError("rho_p must be positive")
    if tau < 1:
        raise ValueError("tau must be >= 1")
    b = beta_matrix(beta)
    gsq = book.gram_sq  # gsq[k, k'] = |phi_k^H phi_k'|^2, symmetric
    denom = tau * rho_p * (b @ gsq.T) + 1.0
    return LinkStats(tau * rho_p * b ** 2 / denom)


def full_power_allocation(stats: LinkStats) -> PowerAllocation:
    """Equal per-user coefficients at each AP, meeting the power constraint with
    equality: eta_mk = 1 / sum_k' gamma_mk'."""
    g = stats.gamma
    per_ap = 1.0 / g.sum(axis=1)
    return PowerAllocation(np.repeat(per_ap[:, None], g.shape[1], axis=1))


def power_load(stats: LinkStats, alloc: PowerAllocation) -> np.ndarray:
    """Per-AP average power usage sum_k eta_mk gamma_mk, as a fraction of the cap."""
    return (alloc.eta * stats.gamma).sum(axis=1)


def effective_sinr(beta: np.ndarray, gamma_mat: np.ndarray, gram_sq: np.ndarray,
                   eta: np.ndarray, rho_d: float) -> np.ndarray:
    """Closed-form effective downlink SINR per user under conjugate beamforming.

    Numerator: coherent beamforming gain rho_d (sum_m sqrt(eta) gamma)^2.
    Denominator: pilot-contamination beamforming interference, the total
    transmit power scaled by beta (including the user's own estimation error),
    and unit noise.
    """
    sqrt_eta = np.sqrt(eta)
    desired = (sqrt_eta * gamma_mat).sum(axis=0)                 # (K,)
    weights = sqrt_eta * gamma_mat / beta                        # (M, K)
    cross = weights.T @ beta                                     # cross[k', k]
    contamination = ((cross ** 2) * gram_sq).sum(axis=0) - desired ** 2
    contamination = np.maximum(contamination, 0.0)               # cancel roundoff
    load = (eta * gamma_mat).sum(axis=1)                         # (M,)
    leakage = (beta * load[:, None]).sum(axis=0)                 # (K,)
    return rho_d * desired ** 2 / (rho_d * contamination + rho_d * leakage + 1.0)


def rate_cf(beta, stats: LinkStats, book: PilotBook, alloc: PowerAllocation,
            rho_d: float) -> RateReport:
    """Closed-form cell-free achievable rate per user, log2(1 + SINR)."""
    b = beta_matrix(beta)
    load = power_load(stats, alloc)
    if np.any(load > 1.0 + POWER_TOL):
        raise ValueError("per-AP power constraint violated")
    sinr = effective_sinr(b, stats.gamma, book.gram_sq, alloc.eta, rho_d)
    return RateReport(np.log2(1.0 + sinr), sinr)


def full_power_evaluator(beta, tau: int, rho_p: float,
                         rho_d: float) -> Callable[[PilotBook], np.ndarray]:
    """Rate evaluator under full power, used to rank users in greedy assignment."""
    b = beta_matrix(beta)

    def evaluate(book: PilotBook) -> np.ndarray:
        stats = gamma(b, book, rho_p, tau)
        return rate_cf(b, stats, book, full_power_allocation(stats), rho_d).rates

    return evaluate


def mc_effective_sinr(beta, book: PilotBook, alloc: PowerAllocation,
                      rho_p: float, rho_d: float, n_samples: int,
                      rng: np.random.Generator, batch_size: int = 20000) -> np.ndarray:
    """Monte-Carlo effective SINR from the full uplink-training / downlink chain.

    Each sample draws small-scale channels and pilot noise, forms the pilot
    projections and MMSE estimates, and accumulates the conjugate-beamformed
    signal coefficients A[k, k'] = sum_m sqrt(eta_mk') g_mk ghat*_mk'. The
    deterministic desired-signal factor is the sample mean of A[k, k]; the
    effective-noise variance follows from the received-signal decomposition,
    with the independent unit-power data symbols and unit receiver noise
    averaged out exactly:

        Var(EN_k) = rho_d (sum_k' E|A[k, k']|^2 - |E A[k, k]|^2) + 1.

    Returns |DS_k|^2 / Var(EN_k) per user.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    b = beta_matrix(beta)
    m, k = b.shape
    tau = book.tau
    seq = book.sequences
    denom = tau * rho_p * (b @ book.gram_sq.T) + 1.0
    est_coef = np.sqrt(tau * rho_p) * b / denom      # ghat = est_coef * ytilde
    sqrt_eta = np.sqrt(alloc.eta)
    sqrt_beta = np.sqrt(b)

    acc_diag = np.zeros(k, dtype=complex)
    acc_sq = np.zeros((k, k))
    done = 0
    while done < n_samples:
        n = min(batch_size, n_samples - done)
        h = (rng.standard_normal((n, m, k)) + 1j * rng.standard_normal((n, m, k))) / np.sqrt(2.0)
        g = sqrt_beta * h
        noise = (rng.standard_normal((n, m, tau))
                 + 1j * rng.standard_normal((n, m, tau))) / np.sqrt(2.0)
        received = np.sqrt(tau * rho_p) * (g @ seq.T) + noise   # (n, M, tau)
        projected = received @ seq.conj()                       # (n, M, K)
        ghat = est_coef * projected
        coeffs = np.einsum("smk,smj->skj", g, sqrt_eta * ghat.conj())
        acc_diag += np.einsum("skk->k", coeffs)
        acc_sq += (np.abs(coeffs) ** 2).sum(axis=0)
        done += n

    mean_diag = acc_diag / n_samples
    mean_sq = acc_sq / n_samples
    signal = rho_d * np.abs(mean_diag) ** 2
    noise_var = rho_d * (mean_sq.sum(axis=1) - np.abs(mean_diag) ** 2) + 1.0
    return signal / noise_var


def save_rate_csv(report: RateReport, path) -> None:
    """Write a rate report as CSV: user index, SINR, rate."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["user", "sinr", "rate"])
        for idx, (snr, rate) in enumerate(zip(report.sinr, report.rates)):
            writer.writerow([idx, repr(float(snr)), repr(float(rate))])
