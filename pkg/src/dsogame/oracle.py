"""Brute-force references for desk-scale instances.

``brute_force_dispatch`` enumerates device outputs on a power grid and
settles the trade volumes in closed form; it never calls the QP solver.
``brute_force_equilibrium`` sweeps a full price lattice through
``evaluate_leader``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .bilevel import evaluate_leader
from .model import ContractPrices, PriceSchedule, Scenario, VppConfig

__all__ = [
    "GridSpec",
    "GridTooLarge",
    "OracleDispatch",
    "OracleEquilibrium",
    "MAX_DISPATCH_POINTS",
    "MAX_LATTICE_POINTS",
    "brute_force_dispatch",
    "brute_force_equilibrium",
    "lattice_bound",
]

MAX_DISPATCH_POINTS = 10**8
MAX_LATTICE_POINTS = 10**6
_CHUNK = 1 << 20


class GridTooLarge(Exception):
    pass


@dataclass(frozen=True)
class GridSpec:
    price_points: int = 21
    power_step: float = 0.01

    def __post_init__(self):
        if self.price_points < 2:
            raise ValueError("price_points must be >= 2")
        if not self.power_step > 0:
            raise ValueError("power_step must be > 0")


@dataclass(frozen=True, eq=False)
class OracleDispatch:
    feasible: bool
    cost: float
    slope: float  # cost change bound per MW of grid offset; |oracle - optimum| <= slope * step
    points: int
    p_buy: np.ndarray | None = None
    p_sell: np.ndarray | None = None
    p_mt: np.ndarray | None = None
    p_bs: np.ndarray | None = None
    p_wt: np.ndarray | None = None

    def bound(self, step: float) -> float:
        return self.slope * step


def _axis(lo: float, hi: float, step: float) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    pts = np.arange(lo, hi, step)
    return np.unique(np.append(pts, hi))


def brute_force_dispatch(v: VppConfig, prices: PriceSchedule, contract: ContractPrices, g: GridSpec,
                         dt: float = 1.0) -> OracleDispatch:
    """Cheapest dispatch over the device-output grid.

    Battery power in the last hour is fixed by the cyclic SoC condition, so it
    is not enumerated.  Trades are continuous and chosen optimally per hour.
    """
    T = len(v.demand)
    ep = np.asarray(prices.ep, dtype=float)
    es = np.asarray(prices.es, dtype=float)
    trade_slope = np.maximum(np.abs(ep), np.abs(es)) * dt

    axes: list[np.ndarray] = []
    owners: list[tuple[str, int, int]] = []
    slope = 0.0
    for i, mt in enumerate(v.turbines):
        for t in range(T):
            axes.append(_axis(0.0, mt.p_max, g.power_step))
            owners.append(("mt", i, t))
            slope += 2 * mt.a * mt.p_max * dt * dt + abs(mt.b) * dt + trade_slope[t]
    for i, bs in enumerate(v.batteries):
        for t in range(T - 1):
            axes.append(_axis(-bs.p_max, bs.p_max, g.power_step))
            owners.append(("bs", i, t))
            slope += 2 * (2 * bs.e * bs.p_max * dt * dt) + trade_slope[t] + trade_slope[T - 1]
    for i, w in enumerate(v.winds):
        for t in range(T):
            axes.append(_axis(0.0, w.availability[t], g.power_step))
            owners.append(("wt", i, t))
            slope += trade_slope[t]

    sizes = [len(a) for a in axes]
    total = int(np.prod(sizes, dtype=object)) if sizes else 1
    if total > MAX_DISPATCH_POINTS:
        raise GridTooLarge(f"{total} grid points exceed {MAX_DISPATCH_POINTS}")

    n_mt, n_bs, n_wt = len(v.turbines), len(v.batteries), len(v.winds)
    demand = np.asarray(v.demand, dtype=float)
    const = float(sum(mt.c for mt in v.turbines) * T)
    best_cost, best = np.inf, None

    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total))
        N = idx.size
        coords = np.unravel_index(idx, sizes) if sizes else ()
        mt = np.zeros((N, T, n_mt))
        bs = np.zeros((N, T, n_bs))
        wt = np.zeros((N, T, n_wt))
        for (kind, i, t), a, c in zip(owners, axes, coords):
            {"mt": mt, "bs": bs, "wt": wt}[kind][:, t, i] = a[c]
        ok = np.ones(N, dtype=bool)
        cost = np.full(N, const, dtype=float)
        for i, m in enumerate(v.turbines):
            if T > 1:
                d = np.diff(mt[:, :, i], axis=1)
                ok &= np.all((d >= m.ramp_down * dt - 1e-12) & (d <= m.ramp_up * dt + 1e-12), axis=1)
            e = mt[:, :, i] * dt
            cost += np.sum(m.a * e * e + m.b * e, axis=1)
        for i, b in enumerate(v.batteries):
            bs[:, T - 1, i] = -np.sum(bs[:, : T - 1, i], axis=1)
            ok &= np.abs(bs[:, T - 1, i]) <= b.p_max + 1e-12
            soc = b.soc0 - np.cumsum(bs[:, :, i], axis=1) * dt / b.e_max
            ok &= np.all((soc >= b.soc_min - 1e-12) & (soc <= b.soc_max + 1e-12), axis=1)
            e = bs[:, :, i] * dt
            cost += np.sum(b.e * e * e, axis=1)
        need = demand * dt - (mt.sum(axis=2) + bs.sum(axis=2) + wt.sum(axis=2)) * dt  # buy - sell
        ok &= np.all((need >= -v.trade_cap_sell - 1e-12) & (need <= v.trade_cap_buy + 1e-12), axis=1)
        # cheapest buy/sell pair realizing the requirement; wash trades only pay when ep < es
        wash = ep < es
        sell = np.where(wash, np.minimum(v.trade_cap_sell, v.trade_cap_buy - need), np.maximum(-need, 0.0))
        sell = np.maximum(sell, 0.0)
        buy = need + sell
        cost += np.sum(ep * buy - es * sell, axis=1)
        cost = np.where(ok, cost, np.inf)
        k = int(np.argmin(cost))
        if cost[k] < best_cost:
            best_cost = float(cost[k])
            best = (buy[k].copy(), sell[k].copy(), mt[k].copy(), bs[k].copy(), wt[k].copy())

    if best is None:
        return OracleDispatch(False, float("inf"), slope, total)
    b, s, m, bb, w = best
    return OracleDispatch(True, best_cost, slope, total, b, s, m, bb, w)


@dataclass(frozen=True, eq=False)
class OracleEquilibrium:
    prices: PriceSchedule
    profit: float
    evaluations: int
    spacing: np.ndarray  # lattice spacing per hour


def lattice_bound(s: Scenario, g: GridSpec) -> float:
    """Leader-value resolution of the price lattice.

    Half a lattice cell in every price, applied to the largest possible
    hourly trade volumes with quantities held fixed.
    """
    spread = np.asarray(s.contract.cep) - np.asarray(s.contract.ces)
    h = spread / (g.price_points - 1)
    vol = sum(v.trade_cap_buy + v.trade_cap_sell for v in s.vpps)
    return float(np.sum(0.5 * h * vol))


def brute_force_equilibrium(s: Scenario, g: GridSpec) -> OracleEquilibrium:
    """Maximum DSO profit over the full price lattice (box endpoints included).

    Ties go to the lattice point nearest the contract prices, then to the
    lexicographically smallest price vector, so the answer does not depend on
    enumeration order.
    """
    T = s.horizon
    if T > 2:
        raise GridTooLarge(f"horizon {T} > 2")
    n = g.price_points ** (2 * T)
    if n > MAX_LATTICE_POINTS:
        raise GridTooLarge(f"{n} lattice points exceed {MAX_LATTICE_POINTS}")
    cep = np.asarray(s.contract.cep, dtype=float)
    ces = np.asarray(s.contract.ces, dtype=float)
    grids = [np.linspace(ces[t], cep[t], g.price_points) for t in range(T)]
    ref = np.concatenate([cep, ces])
    best = None
    warm = None
    for combo in itertools.product(*(grids * 2)):
        v = np.array(combo)  # [ep_0..ep_T-1, es_0..es_T-1]
        prices = PriceSchedule(ep=v[:T], es=v[T:])
        f, warm, _ = evaluate_leader(prices, s, warm)
        key = (-round(f, 9), float(np.sum(np.abs(v - ref))), tuple(v))
        if best is None or key < best[0]:
            best = (key, prices, f)
    return OracleEquilibrium(best[1], best[2], n, (cep - ces) / (g.price_points - 1))
