"""Per-VPP economic dispatch for given trading prices.

Variable layout, repeated for every hour t:
``p_buy, p_sell, p_mt[0..], p_bs[0..], p_wt[0..]``.  SoC is not a variable;
the SoC bounds are written on running sums of battery power.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .model import ContractPrices, PriceSchedule, Scenario, SolverConfig, VppConfig
from .qp import KktResiduals, QpSolution, QpStatus, QuadraticProgram, qp_kkt_residuals, solve_qp

__all__ = [
    "ModelError",
    "InfeasibleDispatch",
    "SolverFailure",
    "VarLayout",
    "DispatchSolution",
    "build_vpp_qp",
    "solve_vpp_dispatch",
    "mode1_dispatch",
    "production_cost",
    "soc_trajectory",
]


class ModelError(ValueError):
    pass


class SolverFailure(RuntimeError):
    """The QP solver could not certify an optimum."""


class InfeasibleDispatch(Exception):
    def __init__(self, vpp_id: str, hour: int | None, detail: str = ""):
        self.vpp_id = vpp_id
        self.hour = hour
        where = f" at hour {hour + 1}" if hour is not None else ""
        super().__init__(f"dispatch of {vpp_id} infeasible{where}{': ' + detail if detail else ''}")


@dataclass(frozen=True)
class VarLayout:
    T: int
    n_mt: int
    n_bs: int
    n_wt: int

    @property
    def block(self) -> int:
        return 2 + self.n_mt + self.n_bs + self.n_wt

    @property
    def n(self) -> int:
        return self.T * self.block

    def buy(self, t: int) -> int:
        return t * self.block

    def sell(self, t: int) -> int:
        return t * self.block + 1

    def mt(self, t: int, i: int) -> int:
        return t * self.block + 2 + i

    def bs(self, t: int, i: int) -> int:
        return t * self.block + 2 + self.n_mt + i

    def wt(self, t: int, i: int) -> int:
        return t * self.block + 2 + self.n_mt + self.n_bs + i

    def names(self) -> tuple[str, ...]:
        out = []
        for t in range(self.T):
            out += [f"p_buy[{t}]", f"p_sell[{t}]"]
            out += [f"p_mt{i}[{t}]" for i in range(self.n_mt)]
            out += [f"p_bs{i}[{t}]" for i in range(self.n_bs)]
            out += [f"p_wt{i}[{t}]" for i in range(self.n_wt)]
        return tuple(out)


def _layout(v: VppConfig, T: int) -> VarLayout:
    return VarLayout(T, len(v.turbines), len(v.batteries), len(v.winds))


@lru_cache(maxsize=256)
def _structure(v: VppConfig, T: int, dt: float) -> QuadraticProgram:
    """Constraints and quadratic cost of a VPP; the linear cost is left at zero."""
    if len(v.demand) != T:
        raise ModelError(f"{v.id}: demand has {len(v.demand)} entries, horizon is {T}")
    for i, w in enumerate(v.winds):
        if len(w.availability) != T:
            raise ModelError(f"{v.id}: wind unit {i} has {len(w.availability)} entries, horizon is {T}")
    L = _layout(v, T)
    n = L.n
    Q = np.zeros((n, n))
    rows: list[np.ndarray] = []
    rhs: list[float] = []

    def bound(k: int, lo: float, hi: float) -> None:
        r = np.zeros(n)
        r[k] = -1.0
        rows.append(r)
        rhs.append(-lo)
        r = np.zeros(n)
        r[k] = 1.0
        rows.append(r)
        rhs.append(hi)

    for t in range(T):
        bound(L.buy(t), 0.0, v.trade_cap_buy)
        bound(L.sell(t), 0.0, v.trade_cap_sell)
        for i, mt in enumerate(v.turbines):
            bound(L.mt(t, i), 0.0, mt.p_max)
            Q[L.mt(t, i), L.mt(t, i)] = 2.0 * mt.a * dt * dt
        for i, bs in enumerate(v.batteries):
            bound(L.bs(t, i), -bs.p_max, bs.p_max)
            Q[L.bs(t, i), L.bs(t, i)] = 2.0 * bs.e * dt * dt
        for i, w in enumerate(v.winds):
            bound(L.wt(t, i), 0.0, w.availability[t])

    for i, mt in enumerate(v.turbines):
        for t in range(T - 1):
            r = np.zeros(n)
            r[L.mt(t + 1, i)] = 1.0
            r[L.mt(t, i)] = -1.0
            rows.append(r)
            rhs.append(mt.ramp_up * dt)
            rows.append(-r)
            rhs.append(-mt.ramp_down * dt)

    # SoC_t = soc0 - dt/E * sum_{tau<=t} p_bs, rows scaled by E/dt
    eq_rows: list[np.ndarray] = []
    eq_rhs: list[float] = []
    for i, bs in enumerate(v.batteries):
        run = np.zeros(n)
        for t in range(T - 1):
            run[L.bs(t, i)] = 1.0
            rows.append(run.copy())
            rhs.append((bs.soc0 - bs.soc_min) * bs.e_max / dt)
            rows.append(-run)
            rhs.append((bs.soc_max - bs.soc0) * bs.e_max / dt)

    for t in range(T):
        r = np.zeros(n)
        r[L.buy(t)] = 1.0
        r[L.sell(t)] = -1.0
        for i in range(L.n_mt):
            r[L.mt(t, i)] = dt
        for i in range(L.n_bs):
            r[L.bs(t, i)] = dt
        for i in range(L.n_wt):
            r[L.wt(t, i)] = dt
        eq_rows.append(r)
        eq_rhs.append(v.demand[t] * dt)
    for i in range(L.n_bs):
        r = np.zeros(n)
        for t in range(T):
            r[L.bs(t, i)] = 1.0
        eq_rows.append(r)
        eq_rhs.append(0.0)

    A_in = np.array(rows) if rows else np.zeros((0, n))
    A_eq = np.array(eq_rows) if eq_rows else np.zeros((0, n))
    qp = QuadraticProgram(Q, np.zeros(n), A_eq, np.array(eq_rhs), A_in, np.array(rhs), L.names())
    qp._prep  # noqa: B018  (prepare once, shared by every price vector)
    return qp


def _linear_cost(v: VppConfig, prices: PriceSchedule, T: int, dt: float) -> np.ndarray:
    L = _layout(v, T)
    q = np.zeros(L.n)
    es = np.asarray(prices.es, dtype=float)
    ep = np.asarray(prices.ep, dtype=float)
    if es.shape != (T,) or ep.shape != (T,):
        raise ModelError(f"price series must have length {T}")
    blk = L.block
    q[0::blk] = ep
    q[1::blk] = -es
    for i, mt in enumerate(v.turbines):
        q[2 + i::blk] = mt.b * dt
    return q


def build_vpp_qp(v: VppConfig, prices: PriceSchedule, contract: ContractPrices, T: int,
                 dt: float = 1.0) -> QuadraticProgram:
    """Dispatch QP of one VPP; the per-hour MT constant ``c`` is not included.

    ``contract`` is accepted for interface symmetry; the follower only sees
    ``prices``.
    """
    base = _structure(v, T, dt)
    return base.with_linear(_linear_cost(v, prices, T, dt))


def production_cost(v: VppConfig, p_mt: np.ndarray, p_bs: np.ndarray, dt: float = 1.0) -> float:
    """MT fuel cost (charged every hour, including ``c``) plus battery degradation."""
    total = 0.0
    T = p_mt.shape[0] if p_mt.size else p_bs.shape[0] if p_bs.size else len(v.demand)
    for i, mt in enumerate(v.turbines):
        e = p_mt[:, i] * dt
        total += float(np.sum(mt.a * e * e + mt.b * e)) + mt.c * T
    for i, bs in enumerate(v.batteries):
        e = p_bs[:, i] * dt
        total += float(np.sum(bs.e * e * e))
    return total


def soc_trajectory(v: VppConfig, p_bs: np.ndarray, dt: float = 1.0) -> np.ndarray:
    """SoC fractions at hour boundaries, shape (T+1, n_bs); row 0 is the initial SoC."""
    T = p_bs.shape[0]
    out = np.zeros((T + 1, len(v.batteries)))
    for i, bs in enumerate(v.batteries):
        out[0, i] = bs.soc0
        out[1:, i] = bs.soc0 - np.cumsum(p_bs[:, i]) * dt / bs.e_max
    return out


@dataclass(frozen=True, eq=False)
class DispatchSolution:
    vpp_id: str
    prices: PriceSchedule
    p_buy: np.ndarray
    p_sell: np.ndarray
    p_mt: np.ndarray  # (T, n_mt)
    p_bs: np.ndarray  # (T, n_bs)
    p_wt: np.ndarray  # (T, n_wt)
    soc: np.ndarray  # (T+1, n_bs)
    cost: float
    production_cost: float
    trade_cost: float
    certificate: QpSolution
    residuals: KktResiduals
    raw: QpSolution = field(repr=False)

    @property
    def T(self) -> int:
        return self.p_buy.shape[0]

    def to_dict(self) -> dict:
        return {
            "vpp_id": self.vpp_id,
            "p_buy": self.p_buy.tolist(),
            "p_sell": self.p_sell.tolist(),
            "p_mt": self.p_mt.tolist(),
            "p_bs": self.p_bs.tolist(),
            "p_wt": self.p_wt.tolist(),
            "soc": self.soc.tolist(),
            "cost": self.cost,
            "production_cost": self.production_cost,
            "trade_cost": self.trade_cost,
            "kkt": self.residuals.to_dict(),
        }


def _infeasible_hour(v: VppConfig, T: int) -> int | None:
    for t in range(T):
        hi = v.trade_cap_buy + sum(m.p_max for m in v.turbines) + sum(b.p_max for b in v.batteries)
        hi += sum(w.availability[t] for w in v.winds)
        lo = -v.trade_cap_sell - sum(b.p_max for b in v.batteries)
        if not lo <= v.demand[t] <= hi:
            return t
    return None


def _tie_break(L: VarLayout, x: np.ndarray, prices: PriceSchedule) -> np.ndarray:
    """Remove cost-neutral wash trades (ep == es) and spill wind instead of selling it at zero."""
    x = x.copy()
    blk = L.block
    for t in range(L.T):
        b, s = t * blk, t * blk + 1
        if prices.ep[t] == prices.es[t]:
            m = min(x[b], x[s])
            if m > 0:
                x[b] -= m
                x[s] -= m
        if prices.es[t] == 0.0 and x[s] > 0:
            for i in range(L.n_wt):
                k = L.wt(t, i)
                m = min(x[s], x[k])
                x[s] -= m
                x[k] -= m
    return x


def solve_vpp_dispatch(v: VppConfig, prices: PriceSchedule, contract: ContractPrices,
                       cfg: SolverConfig | None = None, warm: DispatchSolution | None = None,
                       dt: float = 1.0) -> DispatchSolution:
    """Cost-minimizing dispatch of one VPP facing ``prices``.

    ``warm`` is a previous dispatch of the same VPP; its working set seeds the
    solver.  Raises InfeasibleDispatch when no dispatch satisfies the
    constraints, and SolverFailure when the solver cannot certify optimality.
    """
    cfg = cfg or SolverConfig()
    T = len(v.demand)
    L = _layout(v, T)
    qp = build_vpp_qp(v, prices, contract, T, dt)
    sol = solve_qp(qp, cfg, warm=warm.raw if warm is not None else None)
    if sol.status is QpStatus.INFEASIBLE:
        raise InfeasibleDispatch(v.id, _infeasible_hour(v, T))
    if sol.status is not QpStatus.OPTIMAL:
        raise SolverFailure(f"dispatch of {v.id}: solver returned {sol.status.value}")

    x = _tie_break(L, sol.x, prices)
    cert = replace(sol, x=x, objective=qp.objective(x))
    res = qp_kkt_residuals(qp, cert)
    X = x.reshape(T, L.block)
    p_buy = X[:, 0].copy()
    p_sell = X[:, 1].copy()
    p_mt = X[:, 2:2 + L.n_mt].copy()
    p_bs = X[:, 2 + L.n_mt:2 + L.n_mt + L.n_bs].copy()
    p_wt = X[:, 2 + L.n_mt + L.n_bs:].copy()
    prod = production_cost(v, p_mt, p_bs, dt)
    trade = float(np.sum(prices.ep * p_buy) - np.sum(prices.es * p_sell))
    return DispatchSolution(
        vpp_id=v.id, prices=prices, p_buy=p_buy, p_sell=p_sell, p_mt=p_mt, p_bs=p_bs, p_wt=p_wt,
        soc=soc_trajectory(v, p_bs, dt), cost=trade + prod, production_cost=prod, trade_cost=trade,
        certificate=cert, residuals=res, raw=sol,
    )


def mode1_dispatch(s: Scenario) -> list[DispatchSolution]:
    """Every VPP trading directly with the wholesale market at contract prices."""
    prices = PriceSchedule.from_contract(s.contract)
    return [solve_vpp_dispatch(v, prices, s.contract, s.solver, dt=s.dt) for v in s.vpps]
