"""DSO-side settlement: net position, sign split, big-M encoding check and profit."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import ContractPrices, PriceSchedule
from .qp import DimensionMismatch

__all__ = [
    "SettlementResult",
    "BigMReport",
    "BIG_M_ROWS",
    "net_position",
    "sign_split",
    "big_m_check",
    "dso_profit",
]


def _trades(dispatches) -> tuple[np.ndarray, np.ndarray]:
    if not dispatches:
        return np.zeros((0, 0)), np.zeros((0, 0))
    Ts = {len(d.p_buy) for d in dispatches} | {len(d.p_sell) for d in dispatches}
    if len(Ts) != 1:
        raise DimensionMismatch("dispatches do not share a horizon")
    buy = np.array([d.p_buy for d in dispatches], dtype=float)
    sell = np.array([d.p_sell for d in dispatches], dtype=float)
    return buy, sell


def net_position(dispatches: Sequence) -> np.ndarray:
    """Hourly net purchase of all VPPs from the DSO (negative: net sale)."""
    buy, sell = _trades(dispatches)
    return np.sum(buy - sell, axis=0)


def sign_split(p_dso: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Wholesale purchase, wholesale sale and indicator per hour.

    A zero net position counts as a (zero) purchase, so z = 1 there.
    """
    p = np.asarray(p_dso, dtype=float)
    pos = p >= 0
    buy = np.where(pos, p, 0.0)
    sell = np.where(pos, 0.0, -p)
    return buy + 0.0, sell + 0.0, pos.astype(int)


# Rows of the indicator encoding, each as lhs <= rhs written "expr, bound".
BIG_M_ROWS = (
    "-M(1-z1) <= P",
    "P <= M z1",
    "-M(1-z1) <= Pbuy - P",
    "Pbuy - P <= M(1-z1)",
    "-M z1 <= Pbuy",
    "Pbuy <= M z1",
    "-M(1-z2) <= P",
    "P <= M z2",
    "-M(1-z2) <= Psell",
    "Psell <= M(1-z2)",
    "-M z2 <= Psell + P",
    "Psell + P <= M z2",
    "z1 == z2",
)


@dataclass(frozen=True, eq=False)
class BigMReport:
    """Per-hour satisfaction of every encoding row; ``rows[t, k]`` refers to BIG_M_ROWS[k]."""

    rows: np.ndarray  # bool (T, 13)
    slack: np.ndarray  # (T, 12) rhs - lhs of the inequality rows

    @property
    def feasible_hours(self) -> np.ndarray:
        return np.all(self.rows, axis=1)

    @property
    def feasible(self) -> bool:
        return bool(np.all(self.rows))

    def violations(self) -> list[tuple[int, str]]:
        return [(int(t), BIG_M_ROWS[k]) for t, k in zip(*np.nonzero(~self.rows))]

    def max_violation(self) -> float:
        return float(max(0.0, -np.min(self.slack))) if self.slack.size else 0.0


def big_m_check(p_dso, p_dso_buy, p_dso_sell, z1, z2, M: float, tol: float = 0.0) -> BigMReport:
    """Evaluate the big-M indicator encoding of the sign split row by row.

    For |p_dso| <= M its feasible set coincides with :func:`sign_split` (up to
    the choice of z where p_dso is exactly zero).
    """
    if not M > 0:
        raise ValueError("M must be positive")
    P = np.atleast_1d(np.asarray(p_dso, dtype=float))
    B = np.broadcast_to(np.asarray(p_dso_buy, dtype=float), P.shape)
    S = np.broadcast_to(np.asarray(p_dso_sell, dtype=float), P.shape)
    Z1 = np.broadcast_to(np.asarray(z1, dtype=float), P.shape)
    Z2 = np.broadcast_to(np.asarray(z2, dtype=float), P.shape)
    slack = np.stack([
        P + M * (1 - Z1),
        M * Z1 - P,
        (B - P) + M * (1 - Z1),
        M * (1 - Z1) - (B - P),
        B + M * Z1,
        M * Z1 - B,
        P + M * (1 - Z2),
        M * Z2 - P,
        S + M * (1 - Z2),
        M * (1 - Z2) - S,
        (S + P) + M * Z2,
        M * Z2 - (S + P),
    ], axis=1)
    binary = np.isin(Z1, (0.0, 1.0)) & np.isin(Z2, (0.0, 1.0))
    rows = np.concatenate([slack >= -tol, ((Z1 == Z2) & binary)[:, None]], axis=1)
    return BigMReport(rows=rows, slack=slack)


@dataclass(frozen=True, eq=False)
class SettlementResult:
    p_dso: np.ndarray
    p_dso_buy: np.ndarray
    p_dso_sell: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    dso_profit: float
    wholesale_inflow: float
    hourly_profit: np.ndarray

    def to_dict(self) -> dict:
        return {
            "p_dso": self.p_dso.tolist(),
            "p_dso_buy": self.p_dso_buy.tolist(),
            "p_dso_sell": self.p_dso_sell.tolist(),
            "z1": self.z1.tolist(),
            "z2": self.z2.tolist(),
            "dso_profit": self.dso_profit,
            "wholesale_inflow": self.wholesale_inflow,
            "hourly_profit": self.hourly_profit.tolist(),
        }


def dso_profit(prices: PriceSchedule, dispatches: Sequence, contract: ContractPrices) -> SettlementResult:
    """DSO profit from internal trades and the netted wholesale position."""
    buy, sell = _trades(dispatches)
    T = len(contract.cep)
    if buy.size and buy.shape[1] != T:
        raise DimensionMismatch(f"dispatch horizon {buy.shape[1]} != contract horizon {T}")
    if len(prices.ep) != T or len(prices.es) != T:
        raise DimensionMismatch("price horizon does not match contract")
    tot_buy = buy.sum(axis=0) if buy.size else np.zeros(T)
    tot_sell = sell.sum(axis=0) if sell.size else np.zeros(T)
    p = tot_buy - tot_sell
    wb, ws, z = sign_split(p)
    cep, ces = np.asarray(contract.cep), np.asarray(contract.ces)
    hourly_inflow = cep * wb - ces * ws
    hourly = prices.ep * tot_buy - prices.es * tot_sell - hourly_inflow
    return SettlementResult(
        p_dso=p, p_dso_buy=wb, p_dso_sell=ws, z1=z, z2=z.copy(),
        dso_profit=float(np.sum(hourly)), wholesale_inflow=float(np.sum(hourly_inflow)),
        hourly_profit=hourly,
    )
