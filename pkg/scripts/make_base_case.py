"""Regenerate src/dsogame/data/base_case.json.

Device parameters are the three-VPP test system (caps 10 MWh, M = 30).
Hourly load, wind and contract-price profiles are synthetic shapes: morning
and evening load peaks, night-time wind, prices peaking at midday and in the
evening.  Prices are in EUR/MWh on the same scale as the MT marginal costs
(b + 2aP, roughly 0.5-2 EUR/MWh), so the quadratic costs shape the dispatch.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "dsogame" / "data" / "base_case.json"

h = np.arange(24)


def bump(center: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((h - center) / width) ** 2)


def series(x: np.ndarray) -> list[float]:
    return [round(float(v), 3) for v in x]


cep = 0.95 + 0.55 * bump(12.5, 2.0) + 0.5 * bump(20.0, 1.6) + 0.15 * bump(8.0, 1.5)
ces = 0.35 + 0.25 * bump(12.5, 2.0) + 0.3 * bump(20.0, 1.6)

demand = [
    3.5 + 3.0 * bump(10.0, 2.5) + 3.5 * bump(19.5, 2.0),
    3.0 + 2.5 * bump(12.0, 3.0) + 2.5 * bump(20.0, 2.0),
    4.0 + 2.0 * bump(9.0, 2.0) + 3.0 * bump(18.5, 2.5),
]
wind = [
    1.2 + 1.0 * bump(3.0, 3.0) + 0.8 * bump(23.0, 2.0),
    0.8 + 3.2 * bump(4.0, 2.5) + 1.0 * bump(15.0, 2.5),
    0.5 + 4.5 * bump(3.5, 2.5) + 1.5 * bump(23.5, 2.0),
]

vpps = [
    dict(mt=(0.08, 0.90, 1.20, 6.0, -3.5, 3.5), bs=(0.6, 1.0)),
    dict(mt=(0.10, 0.60, 1.00, 5.0, -3.0, 3.0), bs=(0.6, 1.0)),
    dict(mt=(0.15, 0.50, 0.80, 4.0, -2.0, 2.0), bs=(1.2, 2.0)),
]

doc = {
    "name": "base_case",
    "notes": "Three-VPP test system; synthetic load/wind/price profiles; prices in EUR/MWh.",
    "horizon": 24,
    "dt": 1.0,
    "soc_unit": "percent",
    "big_m": 30.0,
    "contract": {"cep": series(cep), "ces": series(ces)},
    "solver": {"feas_tol": 1e-6, "comp_tol": 1e-6, "eval_budget": 5000, "seed": 0, "restarts": 8},
    "vpps": [],
}
for j, p in enumerate(vpps):
    a, b, c, pmax, rdown, rup = p["mt"]
    bs_p, e_max = p["bs"]
    doc["vpps"].append({
        "id": f"VPP{j + 1}",
        "trade_cap_buy": 10.0,
        "trade_cap_sell": 10.0,
        "demand": series(demand[j]),
        "turbines": [{"a": a, "b": b, "c": c, "p_max": pmax, "ramp_up": rup, "ramp_down": rdown}],
        "batteries": [{"e": 0.05, "p_max": bs_p, "e_max": e_max, "soc0": 40, "soc_min": 20, "soc_max": 90}],
        "winds": [{"availability": series(wind[j])}],
    })

if __name__ == "__main__":
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {OUT}")
