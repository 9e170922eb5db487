"""Shared fixtures: random instance builders and the heavyweight experiment
runs that several acceptance criteria reuse."""

import numpy as np
import pytest

from cellfree import Scenario, ShadowingParams, assign_random
from cellfree.experiment import run_drops

THREADS = 2


def random_instance(rng, m=None, k=None, tau=None, orthogonal=False):
    """A small random link instance: beta, pilot book, rho_p, rho_d."""
    m = m if m is not None else int(rng.integers(1, 21))
    k = k if k is not None else int(rng.integers(1, 5))
    tau = tau if tau is not None else int(rng.integers(1, 3))
    beta = 10.0 ** rng.uniform(-1.0, 1.0, size=(m, k))
    if orthogonal:
        tau = max(tau, k)
        book = assign_random(k, tau, rng, orthogonal_bound=True)
    else:
        book = assign_random(k, tau, rng)
    rho_p = float(10.0 ** rng.uniform(-0.3, 0.7))
    rho_d = float(10.0 ** rng.uniform(-0.3, 0.7))
    return beta, book, rho_p, rho_d, tau


@pytest.fixture(scope="session")
def fig3_class_runs():
    """M=60, K=20, tau=10, i.i.d. shadowing, random pilots: full-power and
    max-min cell-free runs on identical drops (shared seed)."""
    base = dict(n_aps=60, n_users=20, tau=10, n_drops=100, seed=202,
                system="cellfree", pilot_scheme="random",
                shadowing=ShadowingParams(mode="iid"))
    full = run_drops(Scenario(**base, power_scheme="full"), threads=THREADS)
    maxmin = run_drops(Scenario(**base, power_scheme="maxmin"), threads=THREADS)
    assert not full.failures and not maxmin.failures
    return full, maxmin


@pytest.fixture(scope="session")
def fig5_iid_run():
    """M=60, K=20, tau=10, greedy pilots, max-min cell-free plus the
    full-power small-cell baseline, i.i.d. shadowing."""
    scenario = Scenario(n_aps=60, n_users=20, tau=10, n_drops=100, seed=202,
                        system="both", power_scheme="maxmin",
                        pilot_scheme="greedy",
                        shadowing=ShadowingParams(mode="iid"))
    sample_set = run_drops(scenario, threads=THREADS)
    assert not sample_set.failures
    return sample_set


@pytest.fixture(scope="session")
def fig5_correlated_run():
    """Same scenario under correlated shadowing (d_decorr=100 m, rho1=0.5)."""
    scenario = Scenario(n_aps=60, n_users=20, tau=10, n_drops=100, seed=202,
                        system="both", power_scheme="maxmin",
                        pilot_scheme="greedy",
                        shadowing=ShadowingParams(mode="correlated", rho1=0.5,
                                                  d_decorr=100.0))
    sample_set = run_drops(scenario, threads=THREADS)
    assert not sample_set.failures
    return sample_set
