"""Small-cell baseline: greedy user-to-AP pairing and the per-user ergodic rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .linkmodel import RateReport
from .pilots import PilotBook
from .propagation import beta_matrix

LOG2_E = np.log2(np.e)


@dataclass
class SmallCellAssignment:
    """Dedicated serving AP per user plus the channel-estimate variances."""

    serving_ap: np.ndarray        # (K,) AP index per user, injective
    mu: np.ndarray | None = None  # (K,) estimate variances, filled separately

    def __post_init__(self):
        self.serving_ap = np.asarray(self.serving_ap, dtype=int)
        if len(set(self.serving_ap.tolist())) != self.serving_ap.size:
            raise ValueError("no AP may serve two users")
        if self.mu is not None:
            self.mu = np.asarray(self.mu, dtype=float)
            if np.any(self.mu <= 0):
                raise ValueError("mu values must be positive")


def assign_aps(beta, rng: np.random.Generator) -> SmallCellAssignment:
    """Greedy AP selection in a uniformly random user order.

    Each user picks the still-available AP with the largest average received
    power; the chosen AP then becomes unavailable.
    """
    b = beta_matrix(beta)
    m, k = b.shape
    if m < k:
        raise ValueError("small-cell assignment requires at least as many APs as users")
    serving = np.full(k, -1, dtype=int)
    available = np.ones(m, dtype=bool)
    for user in rng.permutation(k):
        candidates = np.where(available, b[:, user], -np.inf)
        choice = int(np.argmax(candidates))
        serving[user] = choice
        available[choice] = False
    return SmallCellAssignment(serving)


def estimate_variance_mu(beta, book: PilotBook, rho_p: float, tau: int,
                         assignment: SmallCellAssignment,
                         sqrt_variant: bool = False) -> np.ndarray:
    """Variances mu of the users' estimates of their serving-AP channels.

    Every serving AP transmits its user's pilot, so user k's estimate is
    contaminated by the other serving APs in proportion to the pilot
    cross-talk. With sqrt_variant=True the numerator uses sqrt(tau rho_p)
    instead of tau rho_p; the default keeps the MMSE normalization that also
    produces the cell-free gamma (see README, "small-cell estimator variant").
    """
    if rho_p <= 0:
        raise ValueError("rho_p must be positive")
    if tau < 1:
        raise ValueError("tau must be >= 1")
    b = beta_matrix(beta)
    selected = b[assignment.serving_ap, :]            # selected[k', k] = beta_{m_k' k}
    gsq = book.gram_sq
    denom = tau * rho_p * np.einsum("kj,jk->k", gsq, selected) + 1.0
    own = np.diag(selected)
    scale = np.sqrt(tau * rho_p) if sqrt_variant else tau * rho_p
    return scale * own ** 2 / denom


def _scaled_exp1(z: np.ndarray) -> np.ndarray:
    """exp(z) * E1(z), switching to the asymptotic series where exp overflows."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    direct = z <= 500.0
    out[direct] = np.exp(z[direct]) * special.exp1(z[direct])
    if np.any(~direct):
        tail = z[~direct]
        term = np.ones_like(tail)
        total = np.ones_like(tail)
        for n in range(1, 16):
            term = term * (-n / tail)
            total += term
        with np.errstate(divide="ignore"):
            out[~direct] = total / tail
    return out


def ergodic_log_rate(c) -> np.ndarray:
    """E{log2(1 + c X)} for X ~ Exp(1): log2(e) * exp(1/c) E1(1/c)."""
    c = np.asarray(c, dtype=float)
    out = np.zeros_like(c)
    positive = c > 0
    with np.errstate(divide="ignore"):
        out[positive] = LOG2_E * _scaled_exp1(1.0 / c[positive])
    return out


def rate_sc(beta, assignment: SmallCellAssignment, rho_d: float,
            method: str = "closed_form", n_samples: int = 10 ** 6,
            rng: np.random.Generator | None = None) -> RateReport:
    """Small-cell per-user ergodic rate at full AP power.

    The useful power rho_d |ghat|^2 is exponential with mean rho_d mu; the
    denominator collects the own-link estimation error, interference from the
    other serving APs, and unit noise. The closed form evaluates the
    exponential-integral identity; method="mc" averages over sampled fades.
    """
    if assignment.mu is None:
        raise ValueError("assignment.mu must be set (run estimate_variance_mu)")
    b = beta_matrix(beta)
    selected = b[assignment.serving_ap, :]
    own = np.diag(selected)
    interference = selected.sum(axis=0) - own
    denom = rho_d * np.maximum(own - assignment.mu, 0.0) + rho_d * interference + 1.0
    c = rho_d * assignment.mu / denom
    if method == "closed_form":
        rates = ergodic_log_rate(c)
    elif method == "mc":
        if rng is None:
            raise ValueError("method='mc' requires an rng")
        rates = np.zeros_like(c)
        done = 0
        chunk = 200_000
        while done < n_samples:
            n = min(chunk, n_samples - done)
            draws = rng.exponential(1.0, size=(n, c.size))
            rates += np.log2(1.0 + c * draws).sum(axis=0)
            done += n
        rates /= n_samples
    else:
        raise ValueError("method must be 'closed_form' or 'mc'")
    return RateReport(rates, np.expm1(rates * np.log(2.0)))
