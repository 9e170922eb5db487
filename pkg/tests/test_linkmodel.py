import numpy as np
import pytest

from cellfree import (PowerAllocation, assign_random, full_power_allocation,
                      gamma, mc_effective_sinr, rate_cf)
from cellfree.linkmodel import power_load, save_rate_csv
from conftest import random_instance


def single_link():
    beta = np.array([[1.0]])
    book = assign_random(1, 1, np.random.default_rng(0))
    stats = gamma(beta, book, rho_p=1.0, tau=1)
    return beta, book, stats


def test_gamma_orthogonal_plugin():
    beta = np.ones((1, 1))
    book = assign_random(1, 1, np.random.default_rng(0))
    stats = gamma(beta, book, rho_p=1.0, tau=1)
    assert stats.gamma[0, 0] == pytest.approx(0.5)


def test_gamma_shared_pilot_plugin():
    beta = np.ones((1, 2))
    book = assign_random(2, 1, np.random.default_rng(0))  # tau=1 forces sharing
    stats = gamma(beta, book, rho_p=1.0, tau=1)
    np.testing.assert_allclose(stats.gamma, 1.0 / 3.0)


def test_gamma_perfect_estimation_limit():
    rng = np.random.default_rng(1)
    beta = 10.0 ** rng.uniform(-1, 1, size=(4, 3))
    book = assign_random(3, 3, rng, orthogonal_bound=True)
    stats = gamma(beta, book, rho_p=1e12, tau=3)
    np.testing.assert_allclose(stats.gamma, beta, rtol=1e-9)


def test_gamma_never_exceeds_beta():
    rng = np.random.default_rng(2)
    for _ in range(20):
        beta, book, rho_p, _, tau = random_instance(rng)
        stats = gamma(beta, book, rho_p, tau)
        assert np.all(stats.gamma <= beta + 1e-15)
        assert np.all(stats.gamma > 0)


def test_gamma_rejects_bad_arguments():
    beta, book, _ = single_link()
    with pytest.raises(ValueError):
        gamma(beta, book, rho_p=0.0, tau=1)
    with pytest.raises(ValueError):
        gamma(beta, book, rho_p=1.0, tau=0)


def test_full_power_single_link():
    _, _, stats = single_link()
    alloc = full_power_allocation(stats)
    assert alloc.eta[0, 0] == pytest.approx(2.0)
    assert power_load(stats, alloc)[0] == pytest.approx(1.0)


def test_full_power_two_equal_users():
    from cellfree.linkmodel import LinkStats
    stats = LinkStats(np.full((1, 2), 0.25))
    alloc = full_power_allocation(stats)
    np.testing.assert_allclose(alloc.eta, 2.0)


def test_full_power_meets_constraint_with_equality():
    rng = np.random.default_rng(3)
    beta, book, rho_p, _, tau = random_instance(rng, m=8, k=4)
    stats = gamma(beta, book, rho_p, tau)
    load = power_load(stats, full_power_allocation(stats))
    np.testing.assert_allclose(load, 1.0, atol=1e-12)


def test_rate_cf_single_link_worked_case():
    beta, book, stats = single_link()
    report = rate_cf(beta, stats, book, full_power_allocation(stats), rho_d=1.0)
    assert report.sinr[0] == pytest.approx(0.25)
    assert report.rates[0] == pytest.approx(0.3219, abs=1e-4)


def test_rate_cf_rejects_overdriven_allocation():
    beta, book, stats = single_link()
    with pytest.raises(ValueError):
        rate_cf(beta, stats, book, PowerAllocation(np.array([[2.5]])), rho_d=1.0)


def test_rate_cf_scaling_eta_down_decreases_sinr():
    rng = np.random.default_rng(4)
    beta, book, rho_p, rho_d, tau = random_instance(rng, m=6, k=3)
    stats = gamma(beta, book, rho_p, tau)
    alloc = full_power_allocation(stats)
    base = rate_cf(beta, stats, book, alloc, rho_d).sinr
    for c in (0.9, 0.5, 0.1):
        scaled = rate_cf(beta, stats, book, PowerAllocation(c * alloc.eta),
                         rho_d).sinr
        assert np.all(scaled < base)


def test_rate_cf_permutation_equivariance():
    rng = np.random.default_rng(5)
    beta, book, rho_p, rho_d, tau = random_instance(rng, m=5, k=4)
    stats = gamma(beta, book, rho_p, tau)
    alloc = full_power_allocation(stats)
    base = rate_cf(beta, stats, book, alloc, rho_d)
    perm = np.random.default_rng(6).permutation(4)
    from cellfree.pilots import PilotBook
    from cellfree.linkmodel import LinkStats
    book_p = PilotBook(book.sequences[:, perm])
    stats_p = LinkStats(stats.gamma[:, perm])
    alloc_p = PowerAllocation(alloc.eta[:, perm])
    report_p = rate_cf(beta[:, perm], stats_p, book_p, alloc_p, rho_d)
    np.testing.assert_allclose(report_p.sinr, base.sinr[perm], rtol=1e-12)


def test_interferer_gain_hurts_shared_pilot_user():
    # raising beta of a pilot-sharing interferer weakly decreases user 0's
    # SINR with eta held fixed (evaluated through the unconstrained kernel)
    from cellfree.linkmodel import effective_sinr
    beta = np.array([[1.0, 0.5], [0.8, 0.7]])
    book = assign_random(2, 1, np.random.default_rng(0))  # shared pilot
    rho_p, rho_d, tau = 1.0, 1.0, 1
    stats = gamma(beta, book, rho_p, tau)
    eta = full_power_allocation(stats).eta
    base = effective_sinr(beta, stats.gamma, book.gram_sq, eta, rho_d)[0]
    for factor in (1.5, 2.0, 5.0):
        bumped = beta.copy()
        bumped[:, 1] *= factor
        stats_b = gamma(bumped, book, rho_p, tau)
        sinr_b = effective_sinr(bumped, stats_b.gamma, book.gram_sq, eta, rho_d)[0]
        assert sinr_b <= base + 1e-12


def test_mc_single_link_matches_closed_form():
    beta, book, stats = single_link()
    alloc = full_power_allocation(stats)
    mc = mc_effective_sinr(beta, book, alloc, 1.0, 1.0, 1_000_000,
                           np.random.default_rng(7))
    assert mc[0] == pytest.approx(0.25, rel=0.01)


def test_mc_estimate_energy_matches_gamma():
    rng = np.random.default_rng(8)
    beta = 10.0 ** rng.uniform(-0.5, 0.5, size=(2, 2))
    book = assign_random(2, 2, rng)
    tau, rho_p = 2, 1.5
    stats = gamma(beta, book, rho_p, tau)
    # direct estimate of E|ghat|^2 through the same estimator chain
    gen = np.random.default_rng(9)
    n = 1_000_000
    seq = book.sequences
    denom = tau * rho_p * (beta @ book.gram_sq.T) + 1.0
    coef = np.sqrt(tau * rho_p) * beta / denom
    total = np.zeros_like(beta)
    done = 0
    while done < n:
        batch = min(100_000, n - done)
        h = (gen.standard_normal((batch, 2, 2))
             + 1j * gen.standard_normal((batch, 2, 2))) / np.sqrt(2)
        g = np.sqrt(beta) * h
        w = (gen.standard_normal((batch, 2, 2))
             + 1j * gen.standard_normal((batch, 2, 2))) / np.sqrt(2)
        y = np.sqrt(tau * rho_p) * (g @ seq.T) + w
        ghat = coef * (y @ seq.conj())
        total += (np.abs(ghat) ** 2).sum(axis=0)
        done += batch
    np.testing.assert_allclose(total / n, stats.gamma, rtol=0.01)


def test_mc_zero_allocation_gives_zero_sinr():
    beta, book, stats = single_link()
    mc = mc_effective_sinr(beta, book, PowerAllocation(np.zeros((1, 1))),
                           1.0, 1.0, 10_000, np.random.default_rng(10))
    assert mc[0] == 0.0


def test_mc_matches_closed_form_on_random_instance():
    rng = np.random.default_rng(11)
    beta, book, rho_p, rho_d, tau = random_instance(rng, m=6, k=3, tau=2)
    stats = gamma(beta, book, rho_p, tau)
    alloc = full_power_allocation(stats)
    closed = rate_cf(beta, stats, book, alloc, rho_d).sinr
    mc = mc_effective_sinr(beta, book, alloc, rho_p, rho_d, 200_000,
                           np.random.default_rng(12))
    np.testing.assert_allclose(mc, closed, rtol=0.05)


def test_mc_rejects_zero_samples():
    beta, book, stats = single_link()
    with pytest.raises(ValueError):
        mc_effective_sinr(beta, book, full_power_allocation(stats), 1.0, 1.0, 0,
                          np.random.default_rng(0))


def test_rate_csv_round_trip(tmp_path):
    beta, book, stats = single_link()
    report = rate_cf(beta, stats, book, full_power_allocation(stats), 1.0)
    path = tmp_path / "rates.csv"
    save_rate_csv(report, path)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "user,sinr,rate"
    assert float(rows[1].split(",")[1]) == pytest.approx(0.25)
