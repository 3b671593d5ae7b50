"""Dense convex QP solver: primal active-set with a feasible-start phase 1.

Solves  min  1/2 z^T H z + g^T z   s.t.  A z <= b
with H symmetric positive definite.  The working-set subproblems are solved
through a Schur complement on the prefactored Hessian, so each iteration
costs O(d^2 * n_active).  Ties in the ratio test and multiplier selection are
broken by lowest constraint index to keep runs reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

FEAS_TOL = 1e-8
MULT_TOL = 1e-10


class Infeasible(Exception):
    """No point satisfies the constraints within tolerance."""


class MaxIterations(Exception):
    """Active-set iteration cap reached."""


class IllConditioned(Exception):
    """Hessian factorization failed."""


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    A_ineq: np.ndarray  # (c, d); pass shape (0, d) for unconstrained
    b_ineq: np.ndarray  # (c,)

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        d = len(self.g)
        if self.A_ineq is None or np.size(self.A_ineq) == 0:
            self.A_ineq = np.zeros((0, d))
            self.b_ineq = np.zeros(0)
        else:
            self.A_ineq = np.atleast_2d(np.asarray(self.A_ineq, dtype=float))
            self.b_ineq = np.atleast_1d(np.asarray(self.b_ineq, dtype=float))
        scale = max(1.0, np.abs(self.H).max())
        if np.abs(self.H - self.H.T).max() > 1e-10 * scale:
            raise ValueError("Hessian must be symmetric")

    @property
    def dim(self) -> int:
        return len(self.g)

    @property
    def n_constraints(self) -> int:
        return self.A_ineq.shape[0]

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.H @ z + self.g @ z)


@dataclass
class QpSolution:
    z: np.ndarray
    active_set: list[int]
    iterations: int
    kkt_residual: float
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective_trace: list[float] = field(default_factory=list)


class ActiveSetSolver:
    """One instance per thread; holds the iteration workspace."""

    def __init__(self, max_iter_factor: int = 50):
        self.max_iter_factor = max_iter_factor

    # -- equality-constrained subproblem -----------------------------------

    def _eqp_step(self, cho_H, grad, A_w):
        """Step p minimizing the QP on the working-set manifold, and its
        multipliers.  Returns (p, mu)."""
        Hinv_grad = cho_solve(cho_H, grad)
        if A_w.shape[0] == 0:
            return -Hinv_grad, np.zeros(0)
        Hinv_At = cho_solve(cho_H, A_w.T)
        S = A_w @ Hinv_At
        try:
            cho_S = cho_factor(S)
        except LinAlgError:
            # Dependent working set; signal with None so the caller can prune.
            return None, None
        mu = cho_solve(cho_S, -(A_w @ Hinv_grad))
        p = -(Hinv_grad + Hinv_At @ mu)
        return p, mu

    def _is_dependent(self, A_w: np.ndarray, a_new: np.ndarray) -> bool:
        if A_w.shape[0] == 0:
            return False
        coef, res, *_ = np.linalg.lstsq(A_w.T, a_new, rcond=None)
        return np.linalg.norm(A_w.T @ coef - a_new) < 1e-10 * max(1.0, np.linalg.norm(a_new))

    # -- main loop ----------------------------------------------------------

    def _active_set_loop(self, problem: QpProblem, z: np.ndarray, cho_H) -> QpSolution:
        A, b = problem.A_ineq, problem.b_ineq
        d, c = problem.dim, problem.n_constraints
        max_iter = self.max_iter_factor * (d + c)

        slack = b - A @ z if c else np.zeros(0)
        work = [int(i) for i in np.flatnonzero(slack <= FEAS_TOL)]
        # Prune to a linearly independent working set (lowest index first).
        pruned: list[int] = []
        for i in work:
            if not self._is_dependent(A[pruned], A[i]) and len(pruned) < d:
                pruned.append(i)
        work = pruned

        trace = [problem.objective(z)]
        for it in range(1, max_iter + 1):
            grad = problem.H @ z + problem.g
            A_w = A[work] if work else np.zeros((0, d))
            p, mu = self._eqp_step(cho_H, grad, A_w)
            if p is None:
                # Degenerate working set: drop the row with the smallest
                # multiplier estimate (least-squares), ties by lowest index.
                mu_ls, *_ = np.linalg.lstsq(A_w.T, -grad, rcond=None)
                work.pop(int(np.argmin(mu_ls)))
                continue

            # Zero-step test scaled by the magnitudes entering the EQP solve;
            # p is a near-cancellation of grad and A_w^T mu at the optimum.
            p_tol = 1e-11 * (
                1.0
                + np.abs(z).max()
                + np.abs(grad).max()
                + (np.abs(mu).max() if mu.size else 0.0)
            )
            if np.abs(p).max() <= p_tol:
                if mu.size == 0 or mu.min() >= -MULT_TOL:
                    return self._finalize(problem, z, work, mu, it, trace)
                work.pop(int(np.argmin(mu)))
                continue

            # Ratio test against constraints outside the working set.
            alpha, blocking = 1.0, -1
            if c:
                Ap = A @ p
                open_rows = np.ones(c, dtype=bool)
                open_rows[work] = False
                open_rows &= Ap > 1e-12
                if open_rows.any():
                    slack = np.maximum(0.0, b - A @ z)
                    ratios = np.full(c, np.inf)
                    ratios[open_rows] = slack[open_rows] / Ap[open_rows]
                    i_best = int(np.argmin(ratios))  # ties: lowest index
                    if ratios[i_best] < alpha:
                        alpha, blocking = float(ratios[i_best]), i_best
            z = z + alpha * p
            trace.append(problem.objective(z))
            if blocking >= 0:
                if work and self._is_dependent(A[work], A[blocking]):
                    mu_ls, *_ = np.linalg.lstsq(
                        A[work].T, -(problem.H @ z + problem.g), rcond=None
                    )
                    work.pop(int(np.argmin(mu_ls)))
                work.append(blocking)
        raise MaxIterations(f"no convergence in {max_iter} iterations")

    def _finalize(self, problem, z, work, mu, iterations, trace) -> QpSolution:
        c = problem.n_constraints
        multipliers = np.zeros(c)
        for idx, j in enumerate(work):
            multipliers[j] = mu[idx] if idx < len(mu) else 0.0
        stationarity = problem.H @ z + problem.g
        if work:
            stationarity = stationarity + problem.A_ineq[work].T @ np.asarray(mu)
        viol = 0.0
        if c:
            viol = max(0.0, float((problem.A_ineq @ z - problem.b_ineq).max()))
        kkt = max(float(np.abs(stationarity).max()), viol)
        return QpSolution(
            z=z,
            active_set=sorted(work),
            iterations=iterations,
            kkt_residual=kkt,
            multipliers=multipliers,
            objective_trace=trace,
        )

    # -- phase 1 -------------------------------------------------------------

    def _phase1(self, problem: QpProblem, z0: np.ndarray) -> np.ndarray:
        """Minimize constraint violation from z0; big-M on a shared slack."""
        A, b = problem.A_ineq, problem.b_ineq
        d, c = problem.dim, problem.n_constraints
        viol0 = max(0.0, float((A @ z0 - b).max()))
        big_m = 1e3 * (1.0 + viol0 + np.abs(z0).max())
        for _ in range(3):
            H1 = np.eye(d + 1)
            g1 = np.concatenate([-z0, [big_m]])
            A1 = np.zeros((c + 1, d + 1))
            A1[:c, :d] = A
            A1[:c, d] = -1.0
            A1[c, d] = -1.0  # t >= 0
            b1 = np.concatenate([b, [0.0]])
            sub = QpProblem(H1, g1, A1, b1)
            zt = np.concatenate([z0, [viol0 + 1.0]])
            cho_H1 = cho_factor(H1)
            sol = self._active_set_loop(sub, zt, cho_H1)
            t_star = sol.z[d]
            if t_star <= FEAS_TOL:
                return sol.z[:d]
            big_m *= 1e3
        raise Infeasible(f"phase 1 residual violation {t_star:.3e}")

    # -- public entry ---------------------------------------------------------

    def solve(self, problem: QpProblem, warm_start: np.ndarray | None = None) -> QpSolution:
        try:
            cho_H = cho_factor(problem.H)
        except LinAlgError as exc:
            raise IllConditioned(str(exc)) from exc

        z_uc = cho_solve(cho_H, -problem.g)
        c = problem.n_constraints
        if c == 0 or (problem.A_ineq @ z_uc - problem.b_ineq).max() <= FEAS_TOL:
            return self._finalize(problem, z_uc, [], np.zeros(0), 0, [problem.objective(z_uc)])

        if warm_start is not None:
            z0 = np.asarray(warm_start, dtype=float)
            if (problem.A_ineq @ z0 - problem.b_ineq).max() > FEAS_TOL:
                z0 = self._phase1(problem, z0)
        else:
            z0 = self._phase1(problem, np.zeros(problem.dim))
        return self._active_set_loop(problem, z0, cho_H)


def solve_qp(problem: QpProblem, warm_start: np.ndarray | None = None) -> QpSolution:
    """One-shot convenience wrapper around ActiveSetSolver."""
    return ActiveSetSolver().solve(problem, warm_start)
