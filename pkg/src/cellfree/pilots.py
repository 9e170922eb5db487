"""Pilot books, random/greedy pilot assignment, and the smallest-eigenvector kernel."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .propagation import beta_matrix


@dataclass
class PilotBook:
    """Unit-norm pilot sequences for all users plus their Gram matrix.

    Column k of `sequences` is user k's pilot. `gram[i, j]` is the inner
    product phi_i^H phi_j, so the diagonal is 1 and off-diagonal magnitudes
    quantify pilot contamination.
    """

    sequences: np.ndarray                 # (tau, K) complex, unit-norm columns
    gram: np.ndarray = field(init=False)  # (K, K) complex Hermitian

    def __post_init__(self):
        seq = np.asarray(self.sequences, dtype=complex)
        if seq.ndim != 2 or seq.shape[0] < 1 or seq.shape[1] < 1:
            raise ValueError("sequences must be a non-empty (tau, K) matrix")
        norms = np.sum(np.abs(seq) ** 2, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("pilot columns must have unit norm")
        self.sequences = seq
        self.gram = seq.conj().T @ seq

    @property
    def tau(self) -> int:
        return self.sequences.shape[0]

    @property
    def n_users(self) -> int:
        return self.sequences.shape[1]

    @property
    def gram_sq(self) -> np.ndarray:
        """Elementwise |gram|^2, the pilot cross-talk powers."""
        return np.abs(self.gram) ** 2

    def replace_column(self, k: int, phi: np.ndarray) -> "PilotBook":
        seq = self.sequences.copy()
        seq[:, k] = phi
        return PilotBook(seq)


def orthonormal_base(tau: int) -> np.ndarray:
    """The canonical orthonormal pilot base: tau columns of the identity."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    return np.eye(int(tau), dtype=complex)


def assign_random(n_users: int, tau: int, rng: np.random.Generator,
                  orthogonal_bound: bool = False) -> PilotBook:
    """Assign each user a pilot drawn uniformly from the orthonormal base.

    With orthogonal_bound=True (requires tau >= n_users) the users get
    distinct base sequences instead, eliminating pilot contamination.
    """
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    base = orthonormal_base(tau)
    if orthogonal_bound:
        if tau < n_users:
            raise ValueError("orthogonal-bound assignment requires tau >= n_users")
        cols = np.arange(n_users)
    else:
        cols = rng.integers(0, tau, size=n_users)
    return PilotBook(base[:, cols])


def contamination_matrix(beta, book: PilotBook, k: int) -> np.ndarray:
    """The (tau, tau) Hermitian PSD matrix whose Rayleigh quotient at phi_k is
    user k's pilot contamination summed over all APs."""
    b = beta_matrix(beta)
    weights = b.sum(axis=0).astype(float).copy()
    weights[k] = 0.0
    seq = book.sequences
    mat = (seq * weights) @ seq.conj().T
    return 0.5 * (mat + mat.conj().T)


def contamination_objective(beta, book: PilotBook, k: int) -> float:
    """User k's pilot contamination: sum over APs and other users of
    beta_mk' |phi_k^H phi_k'|^2."""
    b = beta_matrix(beta)
    weights = b.sum(axis=0).astype(float).copy()
    weights[k] = 0.0
    return float(weights @ book.gram_sq[k, :])


def smallest_eigenvector(hermitian: np.ndarray, herm_tol: float = 1e-10) -> np.ndarray:
    """Unit eigenvector of the smallest eigenvalue of a Hermitian matrix."""
    mat = np.asarray(hermitian, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("input must be a square matrix")
    if np.max(np.abs(mat - mat.conj().T)) > herm_tol:
        raise ValueError("matrix is not Hermitian within tolerance")
    _, vecs = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    vec = vecs[:, 0]
    return vec / np.linalg.norm(vec)


@dataclass
class GreedyOptions:
    max_iters: int | None = None  # None -> 10 * K
    tol: float = 1e-4             # min-rate improvement threshold, bits/s/Hz


def greedy_assign(beta, tau: int, link_evaluator: Callable[[PilotBook], np.ndarray],
                  rng: np.random.Generator, opts: GreedyOptions | None = None,
                  initial: PilotBook | None = None) -> PilotBook:
    """Iteratively reassign the worst user's pilot to minimize its contamination.

    Starting from a random assignment, each iteration finds the user with the
    lowest rate (ties break to the lowest index), replaces its pilot with the
    smallest eigenvector of its contamination matrix, and re-evaluates. Stops
    once an iteration fails to improve the minimum rate by `tol`, or after
    `max_iters` iterations. Returns the best book seen by minimum rate; the
    per-user eigen-update can lower the global minimum even while shrinking
    that user's own contamination, hence best-seen rather than last.
    """
    opts = opts or GreedyOptions()
    b = beta_matrix(beta)
    n_users = b.shape[1]
    max_iters = opts.max_iters if opts.max_iters is not None else 10 * n_users
    book = initial if initial is not None else assign_random(n_users, tau, rng)
    rates = np.asarray(link_evaluator(book))
    best_book, best_min = book, float(rates.min())
    for _ in range(max_iters):
        worst = int(np.argmin(rates))
        vec = smallest_eigenvector(contamination_matrix(b, book, worst))
        new_book = book.replace_column(worst, vec)
        new_rates = np.asarray(link_evaluator(new_book))
        improvement = float(new_rates.min() - rates.min())
        book, rates = new_book, new_rates
        if float(rates.min()) > best_min:
            best_book, best_min = book, float(rates.min())
        if improvement < opts.tol:
            break
    return best_book


def save_pilot_csv(book: PilotBook, path) -> None:
    """Write a pilot book as CSV: tau rows, columns alternating re/im per user."""
    tau, n_users = book.sequences.shape
    flat = np.empty((tau, 2 * n_users))
    flat[:, 0::2] = book.sequences.real
    flat[:, 1::2] = book.sequences.imag
    np.savetxt(path, flat, delimiter=",", fmt="%.17g")


def load_pilot_csv(path) -> PilotBook:
    """Read a pilot book written by :func:`save_pilot_csv`."""
    flat = np.atleast_2d(np.loadtxt(path, delimiter=","))
    return PilotBook(flat[:, 0::2] + 1j * flat[:, 1::2])
