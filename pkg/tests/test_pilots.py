import numpy as np
import pytest

from cellfree import (GreedyOptions, PilotBook, assign_random,
                      contamination_matrix, contamination_objective,
                      full_power_allocation, gamma, greedy_assign,
                      orthonormal_base, rate_cf, smallest_eigenvector)
from cellfree.linkmodel import full_power_evaluator
from cellfree.pilots import load_pilot_csv, save_pilot_csv


def power_iteration_min_eig(hermitian, iters=20_000, seed=0):
    """Independent smallest-eigenvalue oracle: shifted power iteration.

    Uses the Gershgorin bound sigma >= lambda_max, iterates on sigma I - H
    (whose dominant eigenvector is H's smallest), and reports the Rayleigh
    quotient. No library eigensolver involved.
    """
    h = np.asarray(hermitian, dtype=complex)
    n = h.shape[0]
    sigma = float(np.abs(h).sum(axis=1).max())
    shifted = sigma * np.eye(n) - h
    rng = np.random.default_rng(seed)
    vec = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    vec /= np.linalg.norm(vec)
    for _ in range(iters):
        vec = shifted @ vec
        vec /= np.linalg.norm(vec)
    quotient = float((vec.conj() @ h @ vec).real)
    return quotient, sigma


def test_orthonormal_base_gram_identity():
    base = orthonormal_base(3)
    np.testing.assert_allclose(base.conj().T @ base, np.eye(3), atol=1e-14)


def test_orthonormal_base_tau_one():
    base = orthonormal_base(1)
    assert base.shape == (1, 1)
    assert abs(abs(base[0, 0]) - 1.0) < 1e-14


def test_orthonormal_base_rotation_invariance():
    # any unitary rotation of the base still satisfies the postcondition
    base = orthonormal_base(4)
    rng = np.random.default_rng(0)
    raw = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    q, _ = np.linalg.qr(raw)
    rotated = q @ base
    np.testing.assert_allclose(rotated.conj().T @ rotated, np.eye(4), atol=1e-12)


def test_orthonormal_base_rejects_zero():
    with pytest.raises(ValueError):
        orthonormal_base(0)


def test_assign_random_orthogonal_bound_gram_identity():
    book = assign_random(4, 6, np.random.default_rng(0), orthogonal_bound=True)
    np.testing.assert_allclose(book.gram, np.eye(4), atol=1e-14)


def test_assign_random_bound_requires_enough_pilots():
    with pytest.raises(ValueError):
        assign_random(5, 4, np.random.default_rng(0), orthogonal_bound=True)


def test_assign_random_tau_one_forces_collision():
    book = assign_random(5, 1, np.random.default_rng(0))
    np.testing.assert_allclose(np.abs(book.gram), np.ones((5, 5)), atol=1e-14)


def test_assign_random_uniform_frequencies():
    # oracle: uniform multinomial, each of the 10 base indices at rate 0.1
    rng = np.random.default_rng(1)
    counts = np.zeros((2, 10))
    draws = 10_000
    for _ in range(draws):
        book = assign_random(2, 10, rng)
        for user in range(2):
            idx = int(np.argmax(np.abs(book.sequences[:, user])))
            counts[user, idx] += 1
    freq = counts / draws
    assert np.all(np.abs(freq - 0.1) < 0.01)


def test_pilot_book_validates_unit_norm():
    with pytest.raises(ValueError):
        PilotBook(np.array([[0.5], [0.5]], dtype=complex))


def test_contamination_matrix_single_interferer():
    # K=2, phi_2 = e1, column sums of beta give the rank-1 weight
    beta = np.array([[2.0, 3.0], [1.0, 4.0]])
    seq = np.zeros((3, 2), dtype=complex)
    seq[1, 0] = 1.0  # user 0 on e2
    seq[0, 1] = 1.0  # user 1 on e1
    book = PilotBook(seq)
    mat = contamination_matrix(beta, book, 0)
    expected = np.zeros((3, 3), dtype=complex)
    expected[0, 0] = 7.0  # sum_m beta_m1 = 3 + 4
    np.testing.assert_allclose(mat, expected, atol=1e-14)


def test_contamination_matrix_single_user_is_zero():
    beta = np.array([[1.0], [2.0]])
    book = assign_random(1, 2, np.random.default_rng(0))
    np.testing.assert_allclose(contamination_matrix(beta, book, 0),
                               np.zeros((2, 2)), atol=1e-14)


def test_contamination_matrix_psd():
    rng = np.random.default_rng(2)
    beta = 10.0 ** rng.uniform(-1, 1, size=(6, 5))
    book = assign_random(5, 3, rng)
    mat = contamination_matrix(beta, book, 2)
    for _ in range(100):
        x = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        assert (x.conj() @ mat @ x).real >= -1e-12


def test_smallest_eigenvector_diagonal():
    vec = smallest_eigenvector(np.diag([3.0, 1.0, 2.0]))
    assert abs(abs(vec[1]) - 1.0) < 1e-12
    assert np.linalg.norm(vec) == pytest.approx(1.0)


def test_smallest_eigenvector_rank_one_null_space():
    e1 = np.zeros((3, 1), dtype=complex)
    e1[0] = 1.0
    mat = 5.0 * (e1 @ e1.conj().T)
    vec = smallest_eigenvector(mat)
    assert abs(vec[0]) < 1e-10                       # orthogonal to e1
    assert (vec.conj() @ mat @ vec).real < 1e-10     # quotient 0


def test_smallest_eigenvector_matches_power_iteration_oracle():
    rng = np.random.default_rng(3)
    for trial in range(5):
        raw = rng.standard_normal((10, 10)) + 1j * rng.standard_normal((10, 10))
        h = 0.5 * (raw + raw.conj().T)
        vec = smallest_eigenvector(h)
        quotient = float((vec.conj() @ h @ vec).real)
        oracle, sigma = power_iteration_min_eig(h, seed=trial)
        assert abs(quotient - oracle) <= 1e-8 * (1.0 + sigma)


def test_smallest_eigenvector_rejects_non_hermitian():
    with pytest.raises(ValueError):
        smallest_eigenvector(np.array([[1.0, 2.0], [0.0, 1.0]]))


def _evaluator(beta, tau, rho_p=1.0, rho_d=1.0):
    return full_power_evaluator(beta, tau, rho_p, rho_d)


def test_greedy_orthogonal_start_is_fixed_point():
    rng = np.random.default_rng(4)
    beta = 10.0 ** rng.uniform(-1, 1, size=(8, 3))
    initial = assign_random(3, 4, rng, orthogonal_bound=True)
    evaluator = _evaluator(beta, 4)
    initial_rates = evaluator(initial)
    book = greedy_assign(beta, 4, evaluator, rng, initial=initial)
    for k in range(3):
        assert contamination_objective(beta, book, k) < 1e-12
    assert evaluator(book).min() == pytest.approx(initial_rates.min(), rel=1e-12)


def test_greedy_shared_pair_becomes_orthogonal_after_one_update():
    beta = np.array([[1.0, 1.0], [2.0, 0.5]])
    seq = np.zeros((2, 2), dtype=complex)
    seq[0, 0] = 1.0
    seq[0, 1] = 1.0  # both users share e1
    book = PilotBook(seq)
    worst = 0
    vec = smallest_eigenvector(contamination_matrix(beta, book, worst))
    updated = book.replace_column(worst, vec)
    assert contamination_objective(beta, updated, worst) < 1e-12


def test_greedy_update_beats_random_search_oracle():
    # oracle: exhaustive minimization of the contamination quadratic over
    # 1e5 random unit vectors
    rng = np.random.default_rng(5)
    beta = 10.0 ** rng.uniform(-1, 1, size=(20, 8))
    book = assign_random(8, 4, rng)
    evaluator = _evaluator(beta, 4)
    worst = int(np.argmin(evaluator(book)))
    pre = contamination_objective(beta, book, worst)

    vec = smallest_eigenvector(contamination_matrix(beta, book, worst))
    updated_obj = contamination_objective(
        beta, book.replace_column(worst, vec), worst)
    assert updated_obj <= pre + 1e-12

    candidates = (rng.standard_normal((100_000, 4))
                  + 1j * rng.standard_normal((100_000, 4)))
    candidates /= np.linalg.norm(candidates, axis=1, keepdims=True)
    weights = beta.sum(axis=0).copy()
    weights[worst] = 0.0
    inner = np.abs(candidates.conj() @ book.sequences) ** 2
    random_min = float((inner * weights).sum(axis=1).min())
    assert updated_obj <= random_min + 1e-12 * max(1.0, random_min)


def test_greedy_never_worse_than_initial_min_rate():
    rng = np.random.default_rng(6)
    for trial in range(5):
        gen = np.random.default_rng(100 + trial)
        beta = 10.0 ** gen.uniform(-1, 1, size=(12, 6))
        evaluator = _evaluator(beta, 3)
        initial = assign_random(6, 3, np.random.default_rng(trial))
        best = greedy_assign(beta, 3, evaluator, rng, initial=initial)
        assert evaluator(best).min() >= evaluator(initial).min() - 1e-12


def test_greedy_returned_book_satisfies_invariants():
    rng = np.random.default_rng(7)
    beta = 10.0 ** rng.uniform(-1, 1, size=(10, 5))
    book = greedy_assign(beta, 2, _evaluator(beta, 2), rng,
                         GreedyOptions(max_iters=30))
    norms = np.sum(np.abs(book.sequences) ** 2, axis=0)
    np.testing.assert_allclose(norms, 1.0, atol=1e-12)
    np.testing.assert_allclose(book.gram, book.sequences.conj().T @ book.sequences)
    assert np.all(np.abs(book.gram) <= 1.0 + 1e-12)


def test_orthogonal_bound_zeroes_contamination_term(tmp_path):
    # with Gram = identity the pilot-contamination interference term vanishes
    rng = np.random.default_rng(8)
    beta = 10.0 ** rng.uniform(-1, 1, size=(6, 3))
    book = assign_random(3, 3, rng, orthogonal_bound=True)
    stats = gamma(beta, book, 1.0, 3)
    report = rate_cf(beta, stats, book, full_power_allocation(stats), 1.0)
    off = book.gram_sq - np.diag(np.diag(book.gram_sq))
    assert np.all(off == 0.0)
    assert np.all(report.sinr > 0)


def test_pilot_csv_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    beta = 10.0 ** rng.uniform(-1, 1, size=(10, 5))
    book = greedy_assign(beta, 3, _evaluator(beta, 3), rng)
    path = tmp_path / "book.csv"
    save_pilot_csv(book, path)
    back = load_pilot_csv(path)
    np.testing.assert_allclose(back.sequences, book.sequences, atol=1e-15)
