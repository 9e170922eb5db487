"""Max-min power control: bisection on the target SINR over second-order-cone
feasibility subproblems.

The quasi-concave max-min program is solved by bisecting the worst-user SINR
target t; every step asks whether some power allocation reaches SINR t for all
users simultaneously. The feasibility test is cast as a slack-maximization SOC
program in rescaled variables, which is always solvable, so "infeasible" is an
operational statement about the best achievable constraint violation rather
than a dual certificate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from .linkmodel import LinkStats, PowerAllocation, effective_sinr
from .pilots import PilotBook
from .propagation import beta_matrix


class SolverFailure(RuntimeError):
    """The inner cone solver did not converge; carries the bisection bracket."""

    def __init__(self, message: str, t_low: float | None = None,
                 t_high: float | None = None, iteration: int | None = None):
        super().__init__(message)
        self.t_low = t_low
        self.t_high = t_high
        self.iteration = iteration


@dataclass
class SolveOptions:
    bisection_tol: float = 1e-3       # relative tolerance on the SINR target
    feas_tol: float = 1e-7            # accepted constraint violation
    max_bisection_iters: int = 50
    solver: str = "CLARABEL"          # any cvxpy SOCP-capable solver
    solver_max_iters: int = 200
    trace_path: str | None = None     # JSON-lines bisection trace, if set

    def __post_init__(self):
        if self.bisection_tol <= 0 or self.feas_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_bisection_iters < 1 or self.solver_max_iters < 1:
            raise ValueError("iteration budgets must be >= 1")


@dataclass
class FeasibilityInstance:
    """One fixed-target feasibility question: can every user reach SINR t?"""

    gamma: np.ndarray      # (M, K)
    beta: np.ndarray       # (M, K)
    gram_sq: np.ndarray    # (K, K), |phi_k'^H phi_k|^2
    rho_d: float
    target_sinr: float

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.gram_sq = np.asarray(self.gram_sq, dtype=float)
        if self.target_sinr < 0:
            raise ValueError("target_sinr must be >= 0")
        if self.gamma.shape != self.beta.shape:
            raise ValueError("gamma and beta must have matching shapes")
        k = self.gamma.shape[1]
        if self.gram_sq.shape != (k, k):
            raise ValueError("gram_sq must be K x K")
        if np.max(np.abs(self.gram_sq - self.gram_sq.T)) > 1e-9:
            raise ValueError("gram_sq must be symmetric")
        if np.any(self.gram_sq < -1e-12) or np.any(self.gram_sq > 1.0 + 1e-9):
            raise ValueError("gram_sq entries must lie in [0, 1]")
        if np.max(np.abs(np.diag(self.gram_sq) - 1.0)) > 1e-9:
            raise ValueError("gram_sq must have unit diagonal")


def sinr_upper_bound(gamma_mat: np.ndarray, rho_d: float) -> float:
    """A valid bisection bracket: min_k rho_d (sum_m sqrt(gamma_mk))^2.

    Sketch: the per-AP power constraint with theta_m <= 1 forces the amplitude
    coefficients to satisfy varsigma_mk <= gamma_mk^(-1/2), so the coherent
    desired-signal sum for user k is at most sum_m sqrt(gamma_mk), while the
    receiver-noise term keeps the denominator at least 1/rho_d. No user, and a
    fortiori no max-min point, can therefore exceed rho_d (sum_m sqrt(gamma))^2.
    """
    g = np.asarray(gamma_mat, dtype=float)
    return float(rho_d * (np.sqrt(g).sum(axis=0) ** 2).min())


class _FeasibilityModel:
    """Slack form of the feasibility test, rescaled so all variables are O(1).

    Works in x_mk = sqrt(gamma_mk) varsigma_mk, the per-AP amplitude fraction
    AP m spends on user k (so eta = x^2 / gamma and the per-AP constraint is
    ||x_m||_2 <= theta_m <= 1). All SINR cones are divided by the noise
    amplitude 1/sqrt(rho_d), leaving a constant 1 in every cone. The scalar
    slack s is the margin of the tightest SINR cone; the target is reachable
    exactly when the maximized s is non-negative (up to feas_tol).
    """

    def __init__(self, gamma_mat: np.ndarray, beta: np.ndarray,
                 gram_sq: np.ndarray, rho_d: float, opts: SolveOptions):
        self._gamma = np.asarray(gamma_mat, dtype=float)
        self._beta = np.asarray(beta, dtype=float)
        self._rho_d = float(rho_d)
        self._opts = opts
        m, k = self._gamma.shape

        self._sg = np.sqrt(rho_d * self._gamma)          # scaled sqrt(gamma)
        self._sb = np.sqrt(rho_d * self._beta)           # scaled sqrt(beta)
        gram_weight = np.sqrt(np.clip(np.asarray(gram_sq, dtype=float), 0.0, None))
        np.fill_diagonal(gram_weight, 0.0)               # own pilot is not contamination
        self._gram_weight = gram_weight
        self._gram_sq = np.asarray(gram_sq, dtype=float)
        self._cross_coef = self._sg / self._beta         # for the varrho bounds

        self._x = cp.Variable((m, k), nonneg=True)
        self._theta = cp.Variable(m, nonneg=True)
        self._varrho = cp.Variable((k, k), nonneg=True)
        self._slack = cp.Variable()
        self._sqrt_t = cp.Parameter(nonneg=True)

        desired = cp.sum(cp.multiply(self._sg, self._x), axis=0)
        theta_mat = cp.reshape(self._theta, (m, 1), order="C") @ np.ones((1, k))
        cone_stack = cp.vstack([
            cp.multiply(gram_weight, self._varrho),      # contamination slacks
            cp.multiply(self._sb, theta_mat),            # transmit-power leakage
            np.ones((1, k)),                             # unit receiver noise
        ])
        off_diag = 1.0 - np.eye(k)
        cross = cp.multiply(self._cross_coef, self._x).T @ self._beta
        constraints = [
            cp.SOC(desired - self._slack, self._sqrt_t * cone_stack, axis=0),
            cp.SOC(self._theta, self._x, axis=1),
            cp.multiply(off_diag, cross) <= self._varrho,
            self._theta <= 1.0,
        ]
        self._problem = cp.Problem(cp.Maximize(self._slack), constraints)

    def _solver_kwargs(self, tight: bool) -> dict:
        if self._opts.solver.upper() == "CLARABEL":
            # single-threaded: deterministic and avoids thread oversubscription
            kwargs = {"max_iter": self._opts.solver_max_iters, "max_threads": 1}
            if tight:
                kwargs.update(max_iter=4 * self._opts.solver_max_iters,
                              tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
            return kwargs
        if self._opts.solver.upper() == "SCS":
            return {"eps": 1e-9 if tight else 1e-6,
                    "max_iters": (4 if tight else 1) * 2500}
        return {}

    def _violation(self, t: float, x: np.ndarray, theta: np.ndarray,
                   varrho: np.ndarray) -> float:
        desired = (self._sg * x).sum(axis=0)
        cone = np.sqrt(
            ((self._gram_weight * varrho) ** 2).sum(axis=0)
            + ((self._sb * theta[:, None]) ** 2).sum(axis=0)
            + 1.0)
        v_cone = (math.sqrt(t) * cone - desired).max()
        v_power = (np.sqrt((x ** 2).sum(axis=1)) - theta).max()
        v_cap = (theta - 1.0).max()
        cross = (self._cross_coef * x).T @ self._beta
        np.fill_diagonal(cross, -np.inf)
        v_cross = (cross - varrho).max()
        v_sign = max((-x).max(), (-theta).max(), (-varrho).max())
        return float(max(v_cone, v_power, v_cap, v_cross, v_sign))

    def solve(self, t: float) -> dict:
        """Decide feasibility of SINR target t.

        Returns an info dict with `feasible`, the candidate `eta`, its exact
        closed-form `achieved_min_sinr`, and the measured `violation`. The
        decision is operational: feasible when the best point violates every
        constraint by at most feas_tol and its closed-form min SINR reaches
        t - 10 feas_tol; clearly infeasible above 10x feas_tol; the band in
        between is retried with tighter solver settings (on a fresh solver
        instance) and then treated as feasible-boundary.
        """
        if t < 0:
            raise ValueError("target SINR must be >= 0")
        feas_tol = self._opts.feas_tol
        result = self._attempt(t, tight=False)
        if result is None or (feas_tol < result["violation"] <= 10 * feas_tol):
            clone = _FeasibilityModel(self._gamma, self._beta, self._gram_sq,
                                      self._rho_d, self._opts)
            tightened = clone._attempt(t, tight=True)
            if tightened is not None and (result is None
                                          or tightened["violation"] <= result["violation"]):
                result = tightened
        if result is None:
            raise SolverFailure(
                f"feasibility solver failed to converge at target {t:.6g}")
        result["feasible"] = (result["violation"] <= 10 * feas_tol
                              and result["achieved_min_sinr"] >= t - 10 * feas_tol)
        return result

    def _attempt(self, t: float, tight: bool):
        self._sqrt_t.value = math.sqrt(t)
        try:
            self._problem.solve(solver=self._opts.solver, verbose=False,
                                **self._solver_kwargs(tight))
        except Exception:  # solver bindings raise plain Exception on numeric trouble
            return None
        if self._problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            return None
        if self._x.value is None or self._theta.value is None:
            return None
        x = np.asarray(self._x.value, dtype=float)
        theta = np.asarray(self._theta.value, dtype=float)
        varrho = np.asarray(self._varrho.value, dtype=float)
        violation = self._violation(t, x, theta, varrho)
        # Extract the candidate allocation, renormalized so the per-AP power
        # constraint holds exactly even when the solver point sits on it.
        x = np.clip(x, 0.0, None)
        row_norm = np.sqrt((x ** 2).sum(axis=1))
        x /= max(1.0, row_norm.max())
        eta = x ** 2 / self._gamma
        achieved = effective_sinr(self._beta, self._gamma, self._gram_sq,
                                  eta, self._rho_d).min()
        return {
            "eta": eta,
            "violation": violation,
            "slack": float(self._slack.value),
            "achieved_min_sinr": float(achieved),
            "status": self._problem.status,
        }


def feasible(instance: FeasibilityInstance,
             opts: SolveOptions | None = None) -> PowerAllocation | None:
    """Decide one feasibility question; returns the allocation or None."""
    opts = opts or SolveOptions()
    model = _FeasibilityModel(instance.gamma, instance.beta, instance.gram_sq,
                              instance.rho_d, opts)
    info = model.solve(instance.target_sinr)
    return PowerAllocation(info["eta"]) if info["feasible"] else None


def solve_maxmin(beta, stats: LinkStats, book: PilotBook, rho_d: float,
                 opts: SolveOptions | None = None) -> tuple[PowerAllocation, float]:
    """Maximize the minimum per-user SINR under per-AP power constraints.

    Bisects the SINR target between the full-power operating point (a known
    feasible target, so the result can never fall below it) and the
    amplitude-sum upper bound, keeping the allocation of the last feasible
    step. A feasible step additionally raises t_low to the exact closed-form
    min SINR of the step's allocation: that target is witness-certified
    feasible, so the bracket stays valid while shrinking faster than plain
    halving. Returns (allocation, t_low); the closed-form min SINR under the
    returned allocation is at least t_low - 10 * feas_tol.
    """
    opts = opts or SolveOptions()
    b = beta_matrix(beta)
    gram_sq = book.gram_sq
    g = stats.gamma

    eta_full = np.repeat((1.0 / g.sum(axis=1))[:, None], g.shape[1], axis=1)
    t_low = float(effective_sinr(b, g, gram_sq, eta_full, rho_d).min())
    best_eta = eta_full
    t_high = max(sinr_upper_bound(g, rho_d), t_low)

    model = _FeasibilityModel(g, b, gram_sq, rho_d, opts)
    trace = open(opts.trace_path, "w") if opts.trace_path else None
    try:
        for iteration in range(opts.max_bisection_iters):
            if t_high - t_low <= opts.bisection_tol * (1.0 + t_low):
                break
            t_mid = 0.5 * (t_low + t_high)
            try:
                info = model.solve(t_mid)
            except SolverFailure as exc:
                raise SolverFailure(str(exc), t_low=t_low, t_high=t_high,
                                    iteration=iteration) from exc
            achieved = info["achieved_min_sinr"]
            if info["feasible"]:
                t_low, best_eta = t_mid, info["eta"]
            else:
                t_high = t_mid
            if achieved > t_low and achieved < t_high:
                t_low, best_eta = achieved, info["eta"]
            if trace is not None:
                trace.write(json.dumps({
                    "iteration": iteration,
                    "t_mid": t_mid,
                    "feasible": info["feasible"],
                    "t_low": t_low,
                    "t_high": t_high,
                    "violation": info["violation"],
                    "slack": info["slack"],
                    "achieved_min_sinr": achieved,
                }, sort_keys=True) + "\n")
    finally:
        if trace is not None:
            trace.close()
    return PowerAllocation(best_eta), t_low
