"""Domain types, scenario file ingestion and validation.

All configuration types are frozen dataclasses holding tuples, so a loaded
scenario can be shared freely between workers.  Series are indexed by hour,
position 0 being the first hour of the horizon.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

__all__ = [
    "ContractPrices",
    "PriceSchedule",
    "MicroTurbine",
    "Battery",
    "WindUnit",
    "VppConfig",
    "SolverConfig",
    "Scenario",
    "Violation",
    "ParseError",
    "ValidationError",
    "load_scenario",
    "read_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "write_scenario",
    "validate_scenario",
    "random_scenario",
    "bundled_scenario_path",
]


class ParseError(Exception):
    """Scenario file is missing, unreadable or not in the expected format."""


class ValidationError(Exception):
    """Scenario parsed but violates at least one invariant."""

    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        self.field = self.violations[0].field if self.violations else ""
        super().__init__("; ".join(str(v) for v in self.violations))


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str
    severity: str = "error"  # "error" or "advisory"

    def __str__(self) -> str:
        return f"{self.field}: {self.rule}" + (" (advisory)" if self.severity == "advisory" else "")


@dataclass(frozen=True)
class ContractPrices:
    """Wholesale purchase (cep) and sale (ces) prices per hour."""

    cep: tuple[float, ...]
    ces: tuple[float, ...]

    @property
    def horizon(self) -> int:
        return len(self.cep)

    def spread(self) -> np.ndarray:
        return np.asarray(self.cep) - np.asarray(self.ces)


@dataclass(frozen=True, eq=False)
class PriceSchedule:
    """Leader decision: VPP sale price ``es`` and purchase price ``ep`` per hour."""

    es: np.ndarray
    ep: np.ndarray

    def __post_init__(self):
        es = np.array(self.es, dtype=float)
        ep = np.array(self.ep, dtype=float)
        es.flags.writeable = False
        ep.flags.writeable = False
        object.__setattr__(self, "es", es)
        object.__setattr__(self, "ep", ep)

    @classmethod
    def from_contract(cls, contract: ContractPrices) -> "PriceSchedule":
        """Prices equal to the wholesale contract prices (the no-game setting)."""
        return cls(es=np.asarray(contract.ces), ep=np.asarray(contract.cep))

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "PriceSchedule":
        """Inverse of :meth:`as_vector`: first half ep, second half es."""
        T = len(v) // 2
        return cls(es=v[T:], ep=v[:T])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.ep, self.es])

    def in_box(self, contract: ContractPrices, tol: float = 0.0) -> bool:
        lo = np.asarray(contract.ces) - tol
        hi = np.asarray(contract.cep) + tol
        return bool(np.all((self.es >= lo) & (self.es <= hi) & (self.ep >= lo) & (self.ep <= hi)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PriceSchedule):
            return NotImplemented
        return np.array_equal(self.es, other.es) and np.array_equal(self.ep, other.ep)

    def to_dict(self) -> dict:
        return {"es": self.es.tolist(), "ep": self.ep.tolist()}


@dataclass(frozen=True)
class MicroTurbine:
    a: float
    b: float
    c: float
    p_max: float
    ramp_up: float
    ramp_down: float


@dataclass(frozen=True)
class Battery:
    """Battery storage; positive power is discharge, SoC held as a fraction."""

    e: float
    p_max: float
    e_max: float
    soc0: float
    soc_min: float
    soc_max: float


@dataclass(frozen=True)
class WindUnit:
    availability: tuple[float, ...]


@dataclass(frozen=True)
class VppConfig:
    id: str
    trade_cap_buy: float
    trade_cap_sell: float
    demand: tuple[float, ...]
    turbines: tuple[MicroTurbine, ...] = ()
    batteries: tuple[Battery, ...] = ()
    winds: tuple[WindUnit, ...] = ()

    @property
    def n_devices(self) -> int:
        return len(self.turbines) + len(self.batteries) + len(self.winds)


@dataclass(frozen=True)
class SolverConfig:
    feas_tol: float = 1e-6
    comp_tol: float = 1e-6
    eval_budget: int = 5000
    seed: int = 0
    restarts: int = 8


@dataclass(frozen=True)
class Scenario:
    horizon: int
    contract: ContractPrices
    vpps: tuple[VppConfig, ...]
    big_m: float
    solver: SolverConfig = field(default_factory=SolverConfig)
    dt: float = 1.0
    name: str = ""
    notes: str = ""

    @property
    def J(self) -> int:
        return len(self.vpps)

    def safe_big_m(self) -> float:
        """Smallest M that can never cut off a feasible net position."""
        if not self.vpps:
            return 0.0
        caps = [max(v.trade_cap_buy, v.trade_cap_sell) for v in self.vpps]
        return len(self.vpps) * max(caps)

    def replace_solver(self, **kw) -> "Scenario":
        from dataclasses import replace

        return replace(self, solver=replace(self.solver, **kw))


# --------------------------------------------------------------------------
# validation

def _check_series(out: list[Violation], path: str, series: Sequence[float], T: int,
                  nonneg: bool = True) -> None:
    if len(series) != T:
        out.append(Violation(path, f"length mismatch: {len(series)} != horizon {T}"))
    for i, x in enumerate(series):
        if not math.isfinite(x):
            out.append(Violation(f"{path}[{i}]", "must be finite"))
        elif nonneg and x < 0:
            out.append(Violation(f"{path}[{i}]", "must be >= 0"))


def validate_scenario(s: Scenario) -> list[Violation]:
    """Return every invariant violation of ``s``; an empty list means valid."""
    out: list[Violation] = []
    T = s.horizon
    if T < 1:
        out.append(Violation("horizon", "must be >= 1"))
    if s.dt != 1.0:
        out.append(Violation("dt", "must be 1.0 (hourly clearing)"))

    c = s.contract
    _check_series(out, "contract.cep", c.cep, T)
    _check_series(out, "contract.ces", c.ces, T)
    for t, (p, q) in enumerate(zip(c.cep, c.ces)):
        if p < q:
            out.append(Violation(f"contract.cep[{t}]", f"cep {p} < ces {q}"))

    sv = s.solver
    if not sv.feas_tol > 0:
        out.append(Violation("solver.feas_tol", "must be > 0"))
    if not sv.comp_tol > 0:
        out.append(Violation("solver.comp_tol", "must be > 0"))
    if sv.eval_budget < 1:
        out.append(Violation("solver.eval_budget", "must be >= 1"))
    if sv.restarts < 1:
        out.append(Violation("solver.restarts", "must be >= 1"))

    ids = [v.id for v in s.vpps]
    if len(set(ids)) != len(ids):
        out.append(Violation("vpps", "duplicate VPP id"))
    for j, v in enumerate(s.vpps):
        base = f"vpps[{j}]"
        if v.trade_cap_buy < 0:
            out.append(Violation(f"{base}.trade_cap_buy", "must be >= 0"))
        if v.trade_cap_sell < 0:
            out.append(Violation(f"{base}.trade_cap_sell", "must be >= 0"))
        _check_series(out, f"{base}.demand", v.demand, T)
        for i, mt in enumerate(v.turbines):
            p = f"{base}.turbines[{i}]"
            if not mt.a > 0:
                out.append(Violation(f"{p}.a", "must be > 0"))
            if not mt.p_max > 0:
                out.append(Violation(f"{p}.p_max", "must be > 0"))
            if mt.ramp_up < 0:
                out.append(Violation(f"{p}.ramp_up", "must be >= 0"))
            if mt.ramp_down > 0:
                out.append(Violation(f"{p}.ramp_down", "must be <= 0"))
        for i, bs in enumerate(v.batteries):
            p = f"{base}.batteries[{i}]"
            if not bs.e > 0:
                out.append(Violation(f"{p}.e", "must be > 0"))
            if not bs.p_max > 0:
                out.append(Violation(f"{p}.p_max", "must be > 0"))
            if not bs.e_max > 0:
                out.append(Violation(f"{p}.e_max", "must be > 0"))
            if not (0 <= bs.soc_min < bs.soc_max <= 1):
                out.append(Violation(f"{p}.soc_min", "need 0 <= soc_min < soc_max <= 1"))
            if not (bs.soc_min <= bs.soc0 <= bs.soc_max):
                out.append(Violation(f"{p}.soc0", "need soc_min <= soc0 <= soc_max"))
        for i, w in enumerate(v.winds):
            _check_series(out, f"{base}.winds[{i}].availability", w.availability, T)

    if not s.big_m > 0:
        out.append(Violation("big_m", "must be > 0"))
    elif s.big_m < s.safe_big_m():
        out.append(Violation("big_m", f"big_m below safe bound {s.safe_big_m()}", "advisory"))
    return out


# --------------------------------------------------------------------------
# file format

def _reject_constant(name: str):
    raise ValueError(f"non-finite number {name} not accepted")


def _num(d: dict, key: str, path: str) -> float:
    if key not in d:
        raise ParseError(f"missing key {path}.{key}" if path else f"missing key {key}")
    x = d[key]
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ParseError(f"{path}.{key}: expected a number")
    return float(x)


def _series(d: dict, key: str, path: str) -> tuple[float, ...]:
    if key not in d:
        raise ParseError(f"missing key {path}.{key}")
    xs = d[key]
    if not isinstance(xs, list) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in xs):
        raise ParseError(f"{path}.{key}: expected a list of numbers")
    return tuple(float(x) for x in xs)


def scenario_from_dict(d: dict) -> Scenario:
    """Build a Scenario from the decoded JSON object without validating it."""
    if not isinstance(d, dict):
        raise ParseError("scenario must be a JSON object")
    unit = d.get("soc_unit", "fraction")
    if unit not in ("fraction", "percent"):
        raise ParseError(f"soc_unit must be 'fraction' or 'percent', got {unit!r}")
    try:
        horizon = d["horizon"]
        if isinstance(horizon, bool) or not isinstance(horizon, int):
            raise ParseError("horizon: expected an integer")
        contract = d["contract"]
        cp = ContractPrices(cep=_series(contract, "cep", "contract"), ces=_series(contract, "ces", "contract"))
        sd = d.get("solver", {})
        defaults = SolverConfig()
        solver = SolverConfig(
            feas_tol=float(sd.get("feas_tol", defaults.feas_tol)),
            comp_tol=float(sd.get("comp_tol", defaults.comp_tol)),
            eval_budget=int(sd.get("eval_budget", defaults.eval_budget)),
            seed=int(sd.get("seed", defaults.seed)),
            restarts=int(sd.get("restarts", defaults.restarts)),
        )
        vpps = []
        for j, vd in enumerate(d["vpps"]):
            path = f"vpps[{j}]"
            scale = 0.01 if vd.get("soc_unit", unit) == "percent" else 1.0
            turbines = tuple(
                MicroTurbine(**{k: _num(m, k, f"{path}.turbines[{i}]")
                                for k in ("a", "b", "c", "p_max", "ramp_up", "ramp_down")})
                for i, m in enumerate(vd.get("turbines", []))
            )
            batteries = []
            for i, b in enumerate(vd.get("batteries", [])):
                bp = f"{path}.batteries[{i}]"
                batteries.append(Battery(
                    e=_num(b, "e", bp), p_max=_num(b, "p_max", bp), e_max=_num(b, "e_max", bp),
                    soc0=_num(b, "soc0", bp) * scale,
                    soc_min=_num(b, "soc_min", bp) * scale,
                    soc_max=_num(b, "soc_max", bp) * scale,
                ))
            winds = tuple(WindUnit(_series(w, "availability", f"{path}.winds[{i}]"))
                          for i, w in enumerate(vd.get("winds", [])))
            vpps.append(VppConfig(
                id=str(vd.get("id", f"VPP{j + 1}")),
                trade_cap_buy=_num(vd, "trade_cap_buy", path),
                trade_cap_sell=_num(vd, "trade_cap_sell", path),
                demand=_series(vd, "demand", path),
                turbines=turbines, batteries=tuple(batteries), winds=winds,
            ))
        return Scenario(
            horizon=horizon,
            dt=float(d.get("dt", 1.0)),
            contract=cp,
            vpps=tuple(vpps),
            big_m=_num(d, "big_m", ""),
            solver=solver,
            name=str(d.get("name", "")),
            notes=str(d.get("notes", "")),
        )
    except KeyError as exc:
        raise ParseError(f"missing key {exc.args[0]}") from None
    except (TypeError, ValueError, AttributeError) as exc:
        raise ParseError(str(exc)) from None


def scenario_to_dict(s: Scenario) -> dict:
    """JSON-ready dict with SoC as fractions; inverse of :func:`scenario_from_dict`."""
    return {
        "name": s.name,
        "notes": s.notes,
        "horizon": s.horizon,
        "dt": s.dt,
        "soc_unit": "fraction",
        "big_m": s.big_m,
        "contract": {"cep": list(s.contract.cep), "ces": list(s.contract.ces)},
        "solver": {
            "feas_tol": s.solver.feas_tol,
            "comp_tol": s.solver.comp_tol,
            "eval_budget": s.solver.eval_budget,
            "seed": s.solver.seed,
            "restarts": s.solver.restarts,
        },
        "vpps": [
            {
                "id": v.id,
                "trade_cap_buy": v.trade_cap_buy,
                "trade_cap_sell": v.trade_cap_sell,
                "demand": list(v.demand),
                "turbines": [vars(m) for m in v.turbines],
                "batteries": [vars(b) for b in v.batteries],
                "winds": [{"availability": list(w.availability)} for w in v.winds],
            }
            for v in s.vpps
        ],
    }


def write_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n", encoding="utf-8")


def read_scenario(path: str | Path) -> Scenario:
    """Read and parse a scenario file without validating it; raises ParseError."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    try:
        d = json.loads(text, parse_constant=_reject_constant)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return scenario_from_dict(d)


def load_scenario(path: str | Path) -> Scenario:
    """Read, parse and validate a scenario file.

    Raises ParseError for unreadable or malformed files and ValidationError
    when an invariant fails.  Advisory findings (such as a loose big-M) do
    not raise; use :func:`validate_scenario` to see them.
    """
    s = read_scenario(path)
    errors = [v for v in validate_scenario(s) if v.severity == "error"]
    if errors:
        raise ValidationError(errors)
    return s


def bundled_scenario_path(name: str = "base_case.json") -> Path:
    return Path(__file__).parent / "data" / name


# --------------------------------------------------------------------------
# synthetic scenarios

def random_scenario(seed: int, T: int = 24, J: int = 3, *, big_m: float | None = None,
                    solver: SolverConfig | None = None) -> Scenario:
    """Seeded random market instance that is always dispatch-feasible.

    Demand never exceeds the purchase cap, so buying alone covers every hour.
    """
    rng = np.random.default_rng(seed)
    hours = np.arange(T)
    base = 0.6 + 0.3 * rng.random(T)
    cep = np.round(0.9 + 0.6 * rng.random() + 0.4 * np.sin(2 * np.pi * (hours - 6) / 24) * base, 4)
    ces = np.round(cep * (0.3 + 0.4 * rng.random(T)), 4)
    vpps = []
    for j in range(J):
        cap = 10.0
        peak = rng.uniform(3.0, 8.0)
        demand = np.clip(peak * (0.6 + 0.4 * np.sin(2 * np.pi * (hours - rng.uniform(4, 12)) / 24))
                         + rng.normal(0, 0.3, T), 0.0, cap - 0.5)
        wind = np.clip(rng.uniform(0, 6) * (0.5 + 0.5 * np.cos(2 * np.pi * (hours - rng.uniform(0, 24)) / 24))
                       + rng.normal(0, 0.4, T), 0.0, None)
        mt = MicroTurbine(
            a=round(float(rng.uniform(0.05, 0.2)), 3), b=round(float(rng.uniform(0.4, 1.0)), 3),
            c=round(float(rng.uniform(0.5, 1.5)), 3), p_max=round(float(rng.uniform(3, 6)), 2),
            ramp_up=2.0, ramp_down=-2.0,
        )
        bs = Battery(e=0.05, p_max=round(float(rng.uniform(0.5, 1.5)), 2), e_max=round(float(rng.uniform(1, 3)), 2),
                     soc0=0.4, soc_min=0.2, soc_max=0.9)
        vpps.append(VppConfig(
            id=f"VPP{j + 1}", trade_cap_buy=cap, trade_cap_sell=cap,
            demand=tuple(float(x) for x in np.round(demand, 4)),
            turbines=(mt,), batteries=(bs,), winds=(WindUnit(tuple(float(x) for x in np.round(wind, 4))),),
        ))
    s = Scenario(
        horizon=T, contract=ContractPrices(tuple(float(x) for x in cep), tuple(float(x) for x in ces)),
        vpps=tuple(vpps), big_m=0.0, solver=solver or SolverConfig(seed=seed), name=f"random-{seed}",
    )
    from dataclasses import replace

    return replace(s, big_m=float(big_m if big_m is not None else s.safe_big_m()))
