"""Leader price search against certified follower best responses.

The DSO's problem is solved as a nested search: each candidate price
schedule is evaluated by solving every VPP's dispatch QP, and a multi-start
coordinate pattern search moves the 2T hourly prices inside the price box.
Follower optimality is certified by KKT residuals of each QP solution, so a
returned point is feasible for the single-level problem in which the
followers are replaced by their KKT conditions.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dispatch import DispatchSolution, build_vpp_qp, solve_vpp_dispatch
from .model import ContractPrices, PriceSchedule, Scenario
from .qp import KktResiduals, qp_kkt_residuals
from .settlement import SettlementResult, big_m_check, dso_profit, net_position, sign_split

__all__ = [
    "EquilibriumResult",
    "BudgetExhausted",
    "MpecReport",
    "project_prices",
    "evaluate_leader",
    "solve_stackelberg",
    "complementarity_report",
    "START_FRAC",
    "STOP_FRAC",
]

logger = logging.getLogger(__name__)

START_FRAC = 0.25  # initial step, fraction of the hourly price spread
STOP_FRAC = 1e-4
_TIE = 1e-12


class BudgetExhausted(Exception):
    """Raised by ``solve_stackelberg(strict=True)``; carries the best-so-far result."""

    def __init__(self, result: "EquilibriumResult"):
        self.result = result
        super().__init__(f"evaluation budget exhausted after {result.evaluations_used} follower solves")


@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    prices: PriceSchedule
    dispatches: tuple[DispatchSolution, ...]
    settlement: SettlementResult
    leader_objective: float
    evaluations_used: int
    restarts_best: int
    follower_certificates: tuple[KktResiduals, ...]
    converged: bool
    restart_objectives: tuple[float, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "prices": self.prices.to_dict(),
            "leader_objective": self.leader_objective,
            "evaluations_used": self.evaluations_used,
            "restarts_best": self.restarts_best,
            "converged": self.converged,
            "restart_objectives": [None if np.isnan(f) else f for f in self.restart_objectives],
            "settlement": self.settlement.to_dict(),
            "dispatches": [d.to_dict() for d in self.dispatches],
            "follower_certificates": [c.to_dict() for c in self.follower_certificates],
        }


def project_prices(raw: PriceSchedule, contract: ContractPrices) -> PriceSchedule:
    """Clamp both price series into [ces, cep] hour by hour."""
    lo, hi = np.asarray(contract.ces), np.asarray(contract.cep)
    return PriceSchedule(es=np.clip(raw.es, lo, hi), ep=np.clip(raw.ep, lo, hi))


def evaluate_leader(prices: PriceSchedule, s: Scenario,
                    warm: Sequence[DispatchSolution] | None = None
                    ) -> tuple[float, list[DispatchSolution], SettlementResult]:
    """DSO profit when every VPP best-responds to ``prices``."""
    warm = warm or [None] * s.J
    dispatches = [solve_vpp_dispatch(v, prices, s.contract, s.solver, warm=w, dt=s.dt)
                  for v, w in zip(s.vpps, warm)]
    st = dso_profit(prices, dispatches, s.contract)
    return st.dso_profit, dispatches, st


class _Search:
    """Budgeted, memoized leader evaluations over the price vector [ep, es]."""

    def __init__(self, s: Scenario):
        self.s = s
        T = s.horizon
        self.lo = np.concatenate([s.contract.ces, s.contract.ces]).astype(float)
        self.hi = np.concatenate([s.contract.cep, s.contract.cep]).astype(float)
        self.ref = PriceSchedule.from_contract(s.contract).as_vector()
        self.span = self.hi - self.lo
        self.T = T
        self.used = 0  # follower solves
        self.cost = max(s.J, 1)  # follower solves per leader evaluation
        self.cache: dict[bytes, float] = {}
        self.warm: list[DispatchSolution] | None = None
        self.best = None  # (f, dist, restart, vector, dispatches, settlement)

    def dist(self, v: np.ndarray) -> float:
        return float(np.sum(np.abs(v - self.ref)))

    @staticmethod
    def better(f1: float, d1: float, f0: float, d0: float) -> bool:
        scale = _TIE * (1.0 + abs(f0))
        return f1 > f0 + scale or (abs(f1 - f0) <= scale and d1 < d0 - 1e-15)

    def __call__(self, v: np.ndarray, restart: int) -> float:
        key = v.tobytes()
        if key in self.cache:
            return self.cache[key]
        self.used += self.cost
        prices = PriceSchedule.from_vector(v)
        f, disp, st = evaluate_leader(prices, self.s, self.warm)
        self.warm = disp
        self.cache[key] = f
        d = self.dist(v)
        if self.best is None or self.better(f, d, self.best[0], self.best[1]):
            self.best = (f, d, restart, v.copy(), disp, st)
        return f

    def pattern(self, v: np.ndarray, f: float, budget: int, restart: int) -> tuple[np.ndarray, float, bool]:
        """Coordinate search with step halving; returns (point, value, converged)."""
        stop = self.used + budget
        frac = START_FRAC
        d = self.dist(v)
        while frac >= STOP_FRAC:
            improved = False
            for k in range(2 * self.T):
                step = frac * self.span[k]
                if step <= 0:
                    continue
                for sgn in (1.0, -1.0):
                    moved = False
                    while True:
                        c = v.copy()
                        c[k] = min(max(v[k] + sgn * step, self.lo[k]), self.hi[k])
                        if c[k] == v[k]:
                            break
                        if self.used + self.cost > stop and c.tobytes() not in self.cache:
                            return v, f, False
                        fc = self(c, restart)
                        dc = self.dist(c)
                        if not self.better(fc, dc, f, d):
                            break
                        v, f, d, moved = c, fc, dc, True
                    if moved:
                        improved = True
                        break
            if not improved:
                frac *= 0.5
        return v, f, True


def _starts(S: _Search, n: int, seed: int) -> list[np.ndarray]:
    T = S.T
    cep = np.asarray(S.s.contract.cep, dtype=float)
    ces = np.asarray(S.s.contract.ces, dtype=float)
    pts = [S.ref.copy(), np.concatenate([cep, cep]), np.concatenate([ces, ces])]
    rng = np.random.default_rng(seed)
    while len(pts) < n:
        pts.append(S.lo + rng.random(2 * T) * S.span)
    return pts


def solve_stackelberg(s: Scenario, strict: bool = False) -> EquilibriumResult:
    """Best leader prices found by a multi-start coordinate pattern search.

    Starting points are the contract prices, the all-high and all-low box
    corners, then seeded uniform draws, ``max(restarts, 3)`` in total.  The
    budget (``solver.eval_budget`` follower solves; one leader evaluation
    costs J of them) is shared evenly among the starts still to run.  Ties in profit go
    to the point nearer the contract prices in L1 norm.
    """
    S = _Search(s)
    n_starts = max(s.solver.restarts, 3)
    starts = _starts(S, n_starts, s.solver.seed)
    budget = s.solver.eval_budget
    values = []
    for r, v in enumerate(starts):
        if S.used + S.cost > budget:
            values.append(None)
            continue
        values.append(S(v, r))

    converged_by_restart = [False] * n_starts
    finals: list[float] = []
    for r, v in enumerate(starts):
        if values[r] is None:
            finals.append(float("nan"))
            continue
        share = (budget - S.used) // (n_starts - r)
        _, f, conv = S.pattern(v, values[r], share, r)
        converged_by_restart[r] = conv
        finals.append(f)
        logger.debug("restart %d: %.6f (%s)", r, f, "converged" if conv else "budget")

    f, d, r_best, v, disp, st = S.best
    prices = PriceSchedule.from_vector(v)
    result = EquilibriumResult(
        prices=prices, dispatches=tuple(disp), settlement=st, leader_objective=st.dso_profit,
        evaluations_used=S.used, restarts_best=r_best,
        follower_certificates=tuple(x.residuals for x in disp),
        converged=converged_by_restart[r_best], restart_objectives=tuple(finals),
    )
    if strict and not result.converged:
        raise BudgetExhausted(result)
    return result


@dataclass(frozen=True)
class MpecReport:
    """Feasibility of an equilibrium point for the single-level reformulation."""

    follower: dict
    follower_kkt_inf: float
    comp_inf: float
    balance_inf: float
    big_m_feasible: bool
    big_m_violations: tuple
    settlement_inf: float
    price_box_slack: float

    def ok(self, feas_tol: float = 1e-6, comp_tol: float = 1e-6) -> bool:
        return (self.follower_kkt_inf <= feas_tol and self.comp_inf <= comp_tol
                and self.balance_inf <= feas_tol and self.big_m_feasible
                and self.settlement_inf <= feas_tol and self.price_box_slack >= -feas_tol)

    def to_dict(self) -> dict:
        return {
            "follower": {k: v.to_dict() for k, v in self.follower.items()},
            "follower_kkt_inf": self.follower_kkt_inf,
            "comp_inf": self.comp_inf,
            "balance_inf": self.balance_inf,
            "big_m_feasible": self.big_m_feasible,
            "big_m_violations": [list(v) for v in self.big_m_violations],
            "settlement_inf": self.settlement_inf,
            "price_box_slack": self.price_box_slack,
        }


def _dispatch_vector(d: DispatchSolution) -> np.ndarray:
    return np.concatenate([d.p_buy[:, None], d.p_sell[:, None], d.p_mt, d.p_bs, d.p_wt], axis=1).reshape(-1)


def complementarity_report(result: EquilibriumResult, s: Scenario) -> MpecReport:
    """Recompute every block of the single-level problem from the stored numbers."""
    from dataclasses import replace

    follower = {}
    kkt_inf = comp_inf = bal_inf = 0.0
    for v, d in zip(s.vpps, result.dispatches):
        qp = build_vpp_qp(v, result.prices, s.contract, s.horizon, s.dt)
        x = _dispatch_vector(d)
        res = qp_kkt_residuals(qp, replace(d.certificate, x=x))
        follower[v.id] = res
        kkt_inf = max(kkt_inf, res.stationarity_inf, res.primal_inf, res.dual_inf)
        comp_inf = max(comp_inf, res.comp_inf)
        supply = (d.p_mt.sum(axis=1) + d.p_bs.sum(axis=1) + d.p_wt.sum(axis=1)) * s.dt
        bal = d.p_buy - d.p_sell + supply - np.asarray(v.demand) * s.dt
        bal_inf = max(bal_inf, float(np.max(np.abs(bal))))

    p = net_position(result.dispatches)
    buy, sell, z = sign_split(p)
    st = result.settlement
    settle_inf = float(max(np.max(np.abs(p - st.p_dso)), np.max(np.abs(buy - st.p_dso_buy)),
                           np.max(np.abs(sell - st.p_dso_sell)),
                           abs(dso_profit(result.prices, result.dispatches, s.contract).dso_profit - result.leader_objective)))
    bm = big_m_check(st.p_dso, st.p_dso_buy, st.p_dso_sell, st.z1, st.z2, s.big_m)
    lo, hi = np.asarray(s.contract.ces), np.asarray(s.contract.cep)
    pr = result.prices
    box = float(min(np.min(pr.es - lo), np.min(hi - pr.es), np.min(pr.ep - lo), np.min(hi - pr.ep)))
    return MpecReport(
        follower=follower, follower_kkt_inf=kkt_inf, comp_inf=comp_inf, balance_inf=bal_inf,
        big_m_feasible=bm.feasible, big_m_violations=tuple(bm.violations()),
        settlement_inf=settle_inf, price_box_slack=box,
    )
