"""Stakeholder accounting across the two market modes, diff tables and CSV output."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dispatch import DispatchSolution
from .model import Scenario

__all__ = [
    "ScenarioMismatch",
    "ModeComparison",
    "DiffRow",
    "DIFF_TOL",
    "mode_comparison",
    "accounting_identity_check",
    "solution_diff",
    "comparison_csv",
    "parse_comparison_csv",
    "diff_csv",
    "prices_csv",
    "dispatch_csv",
    "COMPARISON_HEADER",
    "DIFF_HEADER",
    "PRICES_HEADER",
]

DIFF_TOL = 1e-6
COMPARISON_HEADER = ["stakeholder", "mode1_eur", "mode2_eur", "delta_eur", "delta_pct"]
DIFF_HEADER = ["hour", "buy_diff_mwh", "sell_diff_mwh", "mt_diff_mw", "wt_diff_mw", "soc_mode2_pct", "soc_mode1_pct"]
PRICES_HEADER = ["hour", "cep", "ces", "ep", "es"]
DSO_ROW = "DSO"
WHOLESALE_ROW = "wholesale_market"
PRODUCTION_ROW = "production_total"


class ScenarioMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ModeComparison:
    vpp_ids: tuple[str, ...]
    mode1_cost: tuple[float, ...]
    mode2_cost: tuple[float, ...]
    dso_profit: float
    wholesale_inflow_mode1: float
    wholesale_inflow_mode2: float
    production_mode1: float
    production_mode2: float

    @property
    def reduction(self) -> tuple[float, ...]:
        """Cost decrease C1 - C2 per VPP (positive means Mode 2 is cheaper)."""
        return tuple(a - b for a, b in zip(self.mode1_cost, self.mode2_cost))

    @property
    def reduction_pct(self) -> tuple[float, ...]:
        return tuple(100.0 * r / abs(c) if c != 0 else 0.0 for r, c in zip(self.reduction, self.mode1_cost))

    @property
    def identity_residual(self) -> float:
        return accounting_identity_check(self)

    def to_dict(self) -> dict:
        return {
            "vpp_ids": list(self.vpp_ids),
            "mode1_cost": list(self.mode1_cost),
            "mode2_cost": list(self.mode2_cost),
            "reduction": list(self.reduction),
            "reduction_pct": [round(p, 2) for p in self.reduction_pct],
            "dso_profit": self.dso_profit,
            "wholesale_inflow_mode1": self.wholesale_inflow_mode1,
            "wholesale_inflow_mode2": self.wholesale_inflow_mode2,
            "production_mode1": self.production_mode1,
            "production_mode2": self.production_mode2,
            "identity_residual": self.identity_residual,
        }


def mode_comparison(m1: Sequence[DispatchSolution], m2, s: Scenario) -> ModeComparison:
    """Compare direct wholesale trading (``m1``) with the DSO equilibrium ``m2``."""
    d2 = list(m2.dispatches)
    ids1 = tuple(d.vpp_id for d in m1)
    ids2 = tuple(d.vpp_id for d in d2)
    if ids1 != ids2 or ids1 != tuple(v.id for v in s.vpps):
        raise ScenarioMismatch(f"VPP sets differ: {ids1} vs {ids2}")
    if any(d.T != s.horizon for d in list(m1) + d2):
        raise ScenarioMismatch("horizon differs from scenario")
    cep, ces = np.asarray(s.contract.cep), np.asarray(s.contract.ces)
    w1 = sum(float(np.sum(cep * d.p_buy - ces * d.p_sell)) for d in m1)
    return ModeComparison(
        vpp_ids=ids1,
        mode1_cost=tuple(d.cost for d in m1),
        mode2_cost=tuple(d.cost for d in d2),
        dso_profit=m2.settlement.dso_profit,
        wholesale_inflow_mode1=w1,
        wholesale_inflow_mode2=m2.settlement.wholesale_inflow,
        production_mode1=sum(d.production_cost for d in m1),
        production_mode2=sum(d.production_cost for d in d2),
    )


def accounting_identity_check(mc: ModeComparison) -> float:
    """Residual of  W1 - W2 = D + sum(C1 - C2) + (Prod2 - Prod1).

    Zero up to rounding whenever costs split into trade and production terms;
    the production delta is what separates the wholesale loss from the sum of
    DSO profit and VPP savings.
    """
    lhs = mc.wholesale_inflow_mode1 - mc.wholesale_inflow_mode2
    rhs = mc.dso_profit + sum(mc.reduction) + (mc.production_mode2 - mc.production_mode1)
    return lhs - rhs


@dataclass(frozen=True)
class DiffRow:
    hour: int  # 1-based
    buy_diff: float
    sell_diff: float
    mt_diff: float
    wt_diff: float
    soc_mode2_pct: float | None
    soc_mode1_pct: float | None


def _soc_agg(d: DispatchSolution, e_max: np.ndarray) -> np.ndarray | None:
    if d.soc.shape[1] == 0:
        return None
    return (d.soc[1:] @ e_max) / e_max.sum()


def solution_diff(m1: Sequence[DispatchSolution], m2: Sequence[DispatchSolution],
                  s: Scenario | None = None) -> dict[str, list[DiffRow]]:
    """Hours in which the Mode-2 solution differs from Mode 1, per VPP.

    Diffs are Mode 2 minus Mode 1, summed over devices of a kind; SoC is the
    capacity-weighted battery SoC at the end of the hour.
    """
    out: dict[str, list[DiffRow]] = {}
    vpps = {v.id: v for v in s.vpps} if s is not None else {}
    for a, b in zip(m1, m2):
        if a.vpp_id != b.vpp_id:
            raise ScenarioMismatch(f"{a.vpp_id} vs {b.vpp_id}")
        if a.vpp_id in vpps:
            e_max = np.array([bs.e_max for bs in vpps[a.vpp_id].batteries], dtype=float)
        else:
            e_max = np.ones(a.soc.shape[1])
        soc1, soc2 = _soc_agg(a, e_max), _soc_agg(b, e_max)
        db = b.p_buy - a.p_buy
        ds = b.p_sell - a.p_sell
        dm = b.p_mt.sum(axis=1) - a.p_mt.sum(axis=1)
        dw = b.p_wt.sum(axis=1) - a.p_wt.sum(axis=1)
        dbs = np.abs(b.p_bs - a.p_bs).max(axis=1) if a.p_bs.size else np.zeros_like(db)
        dsoc = np.abs(soc2 - soc1) if soc1 is not None else np.zeros_like(db)
        rows = []
        for t in range(len(db)):
            if max(abs(db[t]), abs(ds[t]), abs(dm[t]), abs(dw[t]), dbs[t], dsoc[t]) <= DIFF_TOL:
                continue
            rows.append(DiffRow(
                hour=t + 1, buy_diff=float(db[t]), sell_diff=float(ds[t]), mt_diff=float(dm[t]), wt_diff=float(dw[t]),
                soc_mode2_pct=None if soc2 is None else float(100 * soc2[t]),
                soc_mode1_pct=None if soc1 is None else float(100 * soc1[t]),
            ))
        out[a.vpp_id] = rows
    return out


# --------------------------------------------------------------------------
# CSV

def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def _pct(delta: float, base: float) -> str:
    return "" if base == 0 else f"{100.0 * delta / abs(base):.2f}"


def comparison_csv(mc: ModeComparison) -> str:
    """``comparison.csv``: euro columns at full precision, percentages to 2 decimals."""
    rows: list[list] = [COMPARISON_HEADER]
    for vid, c1, c2 in zip(mc.vpp_ids, mc.mode1_cost, mc.mode2_cost):
        rows.append([vid, repr(c1), repr(c2), repr(c2 - c1), _pct(c2 - c1, c1)])
    rows.append([DSO_ROW, repr(0.0), repr(mc.dso_profit), repr(mc.dso_profit), ""])
    w1, w2 = mc.wholesale_inflow_mode1, mc.wholesale_inflow_mode2
    rows.append([WHOLESALE_ROW, repr(w1), repr(w2), repr(w2 - w1), _pct(w2 - w1, w1)])
    p1, p2 = mc.production_mode1, mc.production_mode2
    rows.append([PRODUCTION_ROW, repr(p1), repr(p2), repr(p2 - p1), _pct(p2 - p1, p1)])
    return _csv(rows)


def parse_comparison_csv(text: str) -> ModeComparison:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != COMPARISON_HEADER:
        raise ValueError("not a comparison.csv")
    ids, c1, c2 = [], [], []
    special = {}
    for r in rows[1:]:
        name, m1, m2 = r[0], float(r[1]), float(r[2])
        if name in (DSO_ROW, WHOLESALE_ROW, PRODUCTION_ROW):
            special[name] = (m1, m2)
        else:
            ids.append(name)
            c1.append(m1)
            c2.append(m2)
    return ModeComparison(
        vpp_ids=tuple(ids), mode1_cost=tuple(c1), mode2_cost=tuple(c2),
        dso_profit=special[DSO_ROW][1],
        wholesale_inflow_mode1=special[WHOLESALE_ROW][0], wholesale_inflow_mode2=special[WHOLESALE_ROW][1],
        production_mode1=special[PRODUCTION_ROW][0], production_mode2=special[PRODUCTION_ROW][1],
    )


def _opt(x: float | None) -> str:
    return "" if x is None else repr(x)


def diff_csv(rows: Sequence[DiffRow]) -> str:
    out: list[list] = [DIFF_HEADER]
    for r in rows:
        out.append([r.hour, repr(r.buy_diff), repr(r.sell_diff), repr(r.mt_diff), repr(r.wt_diff),
                    _opt(r.soc_mode2_pct), _opt(r.soc_mode1_pct)])
    return _csv(out)


def prices_csv(s: Scenario, ep: Sequence[float], es: Sequence[float]) -> str:
    out: list[list] = [PRICES_HEADER]
    for t in range(s.horizon):
        out.append([t + 1, repr(float(s.contract.cep[t])), repr(float(s.contract.ces[t])),
                    repr(float(ep[t])), repr(float(es[t]))])
    return _csv(out)


def dispatch_csv(d: DispatchSolution) -> str:
    """Hourly dispatch of one VPP; SoC columns are end-of-hour percentages."""
    n_mt, n_bs, n_wt = d.p_mt.shape[1], d.p_bs.shape[1], d.p_wt.shape[1]
    header = (["hour", "p_buy_mwh", "p_sell_mwh"] + [f"p_mt{i}_mw" for i in range(n_mt)]
              + [f"p_bs{i}_mw" for i in range(n_bs)] + [f"p_wt{i}_mw" for i in range(n_wt)]
              + [f"soc{i}_pct" for i in range(n_bs)])
    out: list[list] = [header]
    for t in range(d.T):
        out.append([t + 1, repr(float(d.p_buy[t])), repr(float(d.p_sell[t]))]
                   + [repr(float(x)) for x in d.p_mt[t]] + [repr(float(x)) for x in d.p_bs[t]]
                   + [repr(float(x)) for x in d.p_wt[t]] + [repr(float(100 * x)) for x in d.soc[t + 1]])
    return _csv(out)


def write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
