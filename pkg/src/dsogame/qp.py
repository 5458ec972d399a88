"""Dense convex QP solver with multipliers.

Solves ``min 1/2 x'Qx + q'x  s.t.  A_eq x = b_eq,  A_in x <= b_in`` by a
primal active-set method.  Inequality rows with a single nonzero are treated
as variable bounds: a bound in the working set fixes its variable, so the
equality-constrained subproblems only involve free variables.

Q only needs to be positive semidefinite.  Diagonal entries of all-zero
rows/columns of Q get a regularization of ``REG_EPS``; this selects the
minimum-norm point among tied optima.  Reported objectives and KKT residuals
always use the unregularized Q.

A feasible starting point comes from a zero-objective LP solved by HiGHS
(``scipy.optimize.linprog``), or from a previous solution of a program with the
same constraints (``warm``).
"""
from __future__ import annotations

import enum
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linprog

from .model import SolverConfig

__all__ = [
    "REG_EPS",
    "MAX_ITER",
    "QpStatus",
    "QuadraticProgram",
    "QpSolution",
    "KktResiduals",
    "DimensionMismatch",
    "solve_qp",
    "qp_kkt_residuals",
]

REG_EPS = 1e-9
MAX_ITER = 10_000
_LU_CACHE_SIZE = 256


class DimensionMismatch(ValueError):
    pass


class QpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    ITER_LIMIT = "IterLimit"


def _rows(pairs: Sequence[tuple[Sequence[float], float]], n: int) -> tuple[np.ndarray, np.ndarray]:
    if not pairs:
        return np.zeros((0, n)), np.zeros(0)
    A = np.array([np.asarray(r, dtype=float) for r, _ in pairs])
    if A.ndim != 2 or A.shape[1] != n:
        raise DimensionMismatch(f"constraint rows must have length {n}")
    return A, np.array([float(b) for _, b in pairs])


@dataclass(frozen=True, eq=False)
class QuadraticProgram:
    """``min 1/2 x'Qx + q'x`` subject to ``A_eq x = b_eq`` and ``A_in x <= b_in``."""

    Q: np.ndarray
    q: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_in: np.ndarray
    b_in: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        n = Q.shape[0]
        if Q.shape != (n, n):
            raise DimensionMismatch("Q must be square")
        q = np.asarray(self.q, dtype=float).reshape(-1)
        if q.shape != (n,):
            raise DimensionMismatch(f"q must have length {n}")
        A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        A_in = np.asarray(self.A_in, dtype=float).reshape(-1, n)
        b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        b_in = np.asarray(self.b_in, dtype=float).reshape(-1)
        if b_eq.shape[0] != A_eq.shape[0] or b_in.shape[0] != A_in.shape[0]:
            raise DimensionMismatch("rhs length does not match row count")
        if self.names and len(self.names) != n:
            raise DimensionMismatch("names must label every variable")
        for k, v in dict(Q=Q, q=q, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in).items():
            object.__setattr__(self, k, v)

    @classmethod
    def from_pairs(cls, Q, q, eq=(), ineq=(), names=()) -> "QuadraticProgram":
        """Build from ``(row, rhs)`` pairs; inequalities read ``row @ x <= rhs``."""
        n = len(q)
        A_eq, b_eq = _rows(eq, n)
        A_in, b_in = _rows(ineq, n)
        return cls(Q, q, A_eq, b_eq, A_in, b_in, tuple(names))

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def with_linear(self, q: np.ndarray) -> "QuadraticProgram":
        """Same program with a new linear cost, sharing the prepared structure."""
        qp = QuadraticProgram(self.Q, q, self.A_eq, self.b_eq, self.A_in, self.b_in, self.names)
        qp.__dict__["_prep"] = self._prep
        return qp

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.Q @ x + self.q @ x)

    def check(self) -> None:
        """Raise ValueError unless Q is symmetric positive semidefinite."""
        if not np.allclose(self.Q, self.Q.T, rtol=0, atol=1e-12):
            raise ValueError("Q is not symmetric")
        self._prep  # noqa: B018  (factorization check happens here)

    @cached_property
    def _prep(self) -> "_Prepared":
        return _Prepared(self)


class _Prepared:
    """Constraint classification, regularized Hessian and factorization cache."""

    def __init__(self, p: QuadraticProgram):
        n = p.n
        Q = 0.5 * (p.Q + p.Q.T)
        zero = np.all(Q == 0, axis=0)
        H = Q + np.diag(np.where(zero, REG_EPS, 0.0))
        try:
            L = np.linalg.cholesky(H)
            scale = max(1.0, float(np.max(np.diag(H)))) if n else 1.0
            if n and float(np.min(np.diag(L))) ** 2 <= 1e-12 * scale:
                raise np.linalg.LinAlgError("numerically singular")
        except np.linalg.LinAlgError:
            # singular PSD with nonzero diagonal: regularize every variable
            H = Q + REG_EPS * np.eye(n)
            try:
                np.linalg.cholesky(H)
            except np.linalg.LinAlgError:
                raise ValueError("Q is not positive semidefinite") from None
        self.H = H
        self.n = n

        nnz = np.count_nonzero(p.A_in, axis=1)
        bmask = nnz == 1
        self.gen_rows = np.flatnonzero(~bmask)
        self.bnd_rows = np.flatnonzero(bmask)
        self.A_gen = p.A_in[self.gen_rows]
        self.b_gen = p.b_in[self.gen_rows]
        Ab = p.A_in[self.bnd_rows]
        self.bnd_var = np.argmax(Ab != 0, axis=1) if len(self.bnd_rows) else np.zeros(0, dtype=int)
        self.bnd_coef = Ab[np.arange(len(self.bnd_rows)), self.bnd_var] if len(self.bnd_rows) else np.zeros(0)
        self.bnd_rhs = p.b_in[self.bnd_rows]
        self.bnd_val = self.bnd_rhs / self.bnd_coef if len(self.bnd_rows) else np.zeros(0)

        # independent equality rows
        self.eq_keep = np.arange(p.A_eq.shape[0])
        if p.A_eq.shape[0]:
            _, R, piv = sla.qr(p.A_eq.T, mode="economic", pivoting=True)
            d = np.abs(np.diag(R))
            rank = int(np.sum(d > 1e-10 * max(1.0, d.max() if d.size else 1.0)))
            self.eq_keep = np.sort(piv[:rank])
        self.A_e = p.A_eq[self.eq_keep]
        self.b_e = p.b_eq[self.eq_keep]
        self._lu: OrderedDict = OrderedDict()

    def kkt_factor(self, free: np.ndarray, fixed_vars: np.ndarray, W: tuple[int, ...]):
        key = (free.tobytes(), W)
        lu = self._lu.get(key)
        if lu is not None:
            self._lu.move_to_end(key)
            return lu
        E = np.vstack([self.A_e, self.A_gen[list(W)]]) if W else self.A_e
        EF = E[:, free]
        nf, m = len(free), E.shape[0]
        K = np.zeros((nf + m, nf + m))
        K[:nf, :nf] = self.H[np.ix_(free, free)]
        K[:nf, nf:] = EF.T
        K[nf:, :nf] = EF
        lu = (sla.lu_factor(K, check_finite=False), E)
        self._lu[key] = lu
        if len(self._lu) > _LU_CACHE_SIZE:
            self._lu.popitem(last=False)
        return lu


@dataclass(frozen=True, eq=False)
class QpSolution:
    x: np.ndarray
    mu_eq: np.ndarray
    mu_ineq: np.ndarray
    objective: float
    status: QpStatus
    iterations: int = 0
    # warm-start state: general inequality rows and bound rows in the working set
    working_set: tuple[tuple[int, ...], tuple[int, ...]] = field(default=((), ()), repr=False)

    @property
    def ok(self) -> bool:
        return self.status is QpStatus.OPTIMAL


@dataclass(frozen=True)
class KktResiduals:
    stationarity_inf: float
    primal_inf: float
    dual_inf: float
    comp_inf: float

    def within(self, feas_tol: float, comp_tol: float) -> bool:
        return (self.stationarity_inf <= feas_tol and self.primal_inf <= feas_tol
                and self.dual_inf <= feas_tol and self.comp_inf <= comp_tol)

    def worst(self) -> float:
        return max(self.stationarity_inf, self.primal_inf, self.dual_inf, self.comp_inf)

    def to_dict(self) -> dict:
        return {
            "stationarity_inf": self.stationarity_inf,
            "primal_inf": self.primal_inf,
            "dual_inf": self.dual_inf,
            "comp_inf": self.comp_inf,
        }


def _max0(v: np.ndarray) -> float:
    return float(np.max(v)) if v.size else 0.0


def qp_kkt_residuals(p: QuadraticProgram, s: QpSolution) -> KktResiduals:
    """Max-norm residuals of stationarity, primal and dual feasibility, complementarity."""
    x = np.asarray(s.x, dtype=float)
    if x.shape != (p.n,) or s.mu_eq.shape != (p.A_eq.shape[0],) or s.mu_ineq.shape != (p.A_in.shape[0],):
        raise DimensionMismatch("solution does not match program dimensions")
    grad = p.Q @ x + p.q + p.A_eq.T @ s.mu_eq + p.A_in.T @ s.mu_ineq
    r_eq = p.A_eq @ x - p.b_eq
    r_in = p.A_in @ x - p.b_in
    return KktResiduals(
        stationarity_inf=_max0(np.abs(grad)),
        primal_inf=max(_max0(np.abs(r_eq)), _max0(r_in), 0.0),
        dual_inf=max(_max0(-s.mu_ineq), 0.0) + 0.0,
        comp_inf=_max0(np.abs(s.mu_ineq * r_in)),
    )


def _phase1(p: QuadraticProgram) -> np.ndarray | None:
    res = linprog(
        np.zeros(p.n),
        A_ub=p.A_in if p.A_in.shape[0] else None, b_ub=p.b_in if p.A_in.shape[0] else None,
        A_eq=p.A_eq if p.A_eq.shape[0] else None, b_eq=p.b_eq if p.A_eq.shape[0] else None,
        bounds=[(None, None)] * p.n, method="highs",
    )
    if res.status != 0:
        return None
    return np.asarray(res.x, dtype=float)


def _feasible(p: QuadraticProgram, x: np.ndarray, tol: float) -> bool:
    r_eq = p.A_eq @ x - p.b_eq
    r_in = p.A_in @ x - p.b_in
    return max(_max0(np.abs(r_eq)), _max0(r_in)) <= tol


def _active_set(pr: _Prepared, q: np.ndarray, x: np.ndarray, W: list[int], fixed: dict[int, int],
                drop_tol: float, max_iter: int):
    """Primal active-set iterations from a feasible ``x``.

    ``W`` lists general inequality rows held active; ``fixed`` maps a variable
    to the bound row holding it.  Returns (x, lam_eq, lam_W, mu_bnd, W, fixed,
    iterations, converged).
    """
    n = pr.n
    x = x.copy()
    nb = len(pr.bnd_rows)
    n_e = pr.A_e.shape[0]
    for it in range(1, max_iter + 1):
        fixed_mask = np.zeros(n, dtype=bool)
        fixed_vars = np.fromiter(fixed.keys(), dtype=int, count=len(fixed))
        fixed_mask[fixed_vars] = True
        free = np.flatnonzero(~fixed_mask)
        Wt = tuple(W)
        (lu, E) = pr.kkt_factor(free, fixed_vars, Wt)
        b_E = np.concatenate([pr.b_e, pr.b_gen[list(W)]]) if W else pr.b_e
        xw = x.copy()
        if fixed:
            xw[fixed_vars] = pr.bnd_val[np.fromiter(fixed.values(), dtype=int, count=len(fixed))]
        xX = np.where(fixed_mask, xw, 0.0)
        rhs = np.concatenate([-(q[free] + pr.H[free] @ xX), b_E - E @ xX])
        sol = sla.lu_solve(lu, rhs, check_finite=False)
        xw[free] = sol[: len(free)]
        lam = sol[len(free):]
        p_step = xw - x

        # ratio test
        alpha, block_gen, block_bnd = 1.0, -1, -1
        pnorm = float(np.max(np.abs(p_step))) if n else 0.0
        xscale = 1.0 + (float(np.max(np.abs(x))) if n else 0.0)
        if pnorm > 1e-12 * xscale:
            # round-off in a null step must not pass as a blocking direction
            thresh = max(1e-12 * pnorm, 1e-13 * xscale)
            if pr.A_gen.shape[0]:
                Ap = pr.A_gen @ p_step
                cand = Ap > thresh
                if W:
                    cand[list(W)] = False
                if cand.any():
                    slack = np.maximum(pr.b_gen - pr.A_gen @ x, 0.0)
                    ratios = np.full(Ap.shape, np.inf)
                    ratios[cand] = slack[cand] / Ap[cand]
                    k = int(np.argmin(ratios))
                    if ratios[k] < alpha:
                        alpha, block_gen = float(ratios[k]), k
            if nb:
                Ap = pr.bnd_coef * p_step[pr.bnd_var]
                cand = (Ap > thresh) & ~fixed_mask[pr.bnd_var]
                if cand.any():
                    slack = np.maximum(pr.bnd_rhs - pr.bnd_coef * x[pr.bnd_var], 0.0)
                    ratios = np.full(Ap.shape, np.inf)
                    ratios[cand] = slack[cand] / Ap[cand]
                    k = int(np.argmin(ratios))
                    if ratios[k] < alpha:
                        alpha, block_bnd, block_gen = float(ratios[k]), k, -1
        if block_gen >= 0 or block_bnd >= 0:
            x = x + alpha * p_step
            if block_bnd >= 0:
                v = int(pr.bnd_var[block_bnd])
                x[v] = pr.bnd_val[block_bnd]
                fixed[v] = block_bnd
            else:
                W.append(block_gen)
            continue

        x = xw
        lam_eq, lam_W = lam[:n_e], lam[n_e:]
        # bound multipliers from the residual gradient of fixed variables
        mu_b = {}
        if fixed:
            g = pr.H @ x + q + E.T @ lam
            for v, j in fixed.items():
                mu_b[v] = -g[v] / pr.bnd_coef[j]
        worst, drop = -drop_tol, None
        for i, m in enumerate(lam_W):
            if m < worst:
                worst, drop = m, ("gen", i)
        for v, m in mu_b.items():
            if m < worst:
                worst, drop = m, ("bnd", v)
        if drop is None:
            return x, lam_eq, lam_W, mu_b, W, fixed, it, True
        if drop[0] == "gen":
            W.pop(drop[1])
        else:
            del fixed[drop[1]]
    return x, None, None, None, W, fixed, max_iter, False


def solve_qp(p: QuadraticProgram, cfg: SolverConfig | None = None, warm: QpSolution | None = None,
             max_iter: int = MAX_ITER) -> QpSolution:
    """Solve ``p`` and return the primal solution with multipliers.

    With ``warm`` (a solution of a program with the same constraints) the
    search starts from its point and working set.  Status is Optimal only when
    the KKT residuals meet ``cfg.feas_tol`` / ``cfg.comp_tol``.
    """
    cfg = cfg or SolverConfig()
    pr = p._prep
    n = p.n
    m_eq, m_in = p.A_eq.shape[0], p.A_in.shape[0]
    drop_tol = cfg.feas_tol  # stop once dual feasibility meets the certificate tolerance

    start = None
    if warm is not None and warm.x.shape == (n,) and _feasible(p, warm.x, 1e-9):
        start = (warm.x, list(warm.working_set[0]), {int(pr.bnd_var[j]): j for j in warm.working_set[1]})
    if start is None:
        x0 = _phase1(p)
        if x0 is None:
            return QpSolution(np.full(n, np.nan), np.zeros(m_eq), np.zeros(m_in), np.nan, QpStatus.INFEASIBLE)
        start = (x0, [], {})
    if m_eq and len(pr.eq_keep) < m_eq and not _feasible(p, start[0], cfg.feas_tol):
        return QpSolution(np.full(n, np.nan), np.zeros(m_eq), np.zeros(m_in), np.nan, QpStatus.INFEASIBLE)

    x, lam_eq, lam_W, mu_b, W, fixed, iters, ok = _active_set(pr, p.q, start[0], start[1], start[2], drop_tol, max_iter)
    if not ok:
        return QpSolution(x, np.zeros(m_eq), np.zeros(m_in), p.objective(x), QpStatus.ITER_LIMIT, iters,
                          (tuple(W), tuple(fixed.values())))
    mu_eq = np.zeros(m_eq)
    mu_eq[pr.eq_keep] = lam_eq
    mu_in = np.zeros(m_in)
    if W:
        mu_in[pr.gen_rows[W]] = lam_W
    for v, j in fixed.items():
        mu_in[pr.bnd_rows[j]] = mu_b[v]
    sol = QpSolution(x, mu_eq, mu_in, p.objective(x), QpStatus.OPTIMAL, iters, (tuple(W), tuple(fixed.values())))
    res = qp_kkt_residuals(p, sol)
    if not res.within(cfg.feas_tol, cfg.comp_tol):
        if warm is not None:
            return solve_qp(p, cfg, None, max_iter)
        return QpSolution(x, mu_eq, mu_in, sol.objective, QpStatus.ITER_LIMIT, iters, sol.working_set)
    return sol
