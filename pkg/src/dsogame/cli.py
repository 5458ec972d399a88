"""Command-line entry point: ``dsogame {simulate,oracle,validate}``.

Exit codes: 0 ok, 1 check failed, 2 input invalid, 3 solver failed, 4 guard.
Diagnostics go to stderr as single-line JSON objects.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import report
from .bilevel import complementarity_report, solve_stackelberg
from .dispatch import InfeasibleDispatch, ModelError, SolverFailure, mode1_dispatch, solve_vpp_dispatch
from .model import (ParseError, PriceSchedule, Scenario, ValidationError, read_scenario,
                    validate_scenario)
from .oracle import GridSpec, GridTooLarge, brute_force_dispatch, brute_force_equilibrium, lattice_bound

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_SOLVER, EXIT_GUARD = 0, 1, 2, 3, 4
MODES = ("mode1", "mode2", "both")
CHECK_TOL = 1e-6  # fixed slack on oracle comparisons, independent of solver settings


@dataclass(frozen=True)
class RunRequest:
    scenario: Path
    mode: str = "both"
    out: Path = Path("out")
    budget: int | None = None
    seed: int | None = None
    restarts: int | None = None
    feas_tol: float | None = None
    comp_tol: float | None = None
    price_grid: int = 21
    power_step: float = 0.01

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    def apply(self, s: Scenario) -> Scenario:
        kw = {"eval_budget": self.budget, "seed": self.seed, "restarts": self.restarts,
              "feas_tol": self.feas_tol, "comp_tol": self.comp_tol}
        kw = {k: v for k, v in kw.items() if v is not None}
        return s.replace_solver(**kw) if kw else s


def _err(kind: str, **fields) -> None:
    sys.stderr.write(json.dumps({"error": kind, **fields}, sort_keys=True) + "\n")


def _load(req_path: Path) -> tuple[Scenario, str]:
    """Parse and validate; raises ParseError / ValidationError."""
    s = read_scenario(req_path)
    errors = [v for v in validate_scenario(s) if v.severity == "error"]
    if errors:
        raise ValidationError(errors)
    digest = hashlib.sha256(Path(req_path).read_bytes()).hexdigest()
    return s, digest


def _input_error(exc: Exception) -> int:
    if isinstance(exc, ValidationError):
        _err("ValidationError", violations=[str(v) for v in exc.violations])
    else:
        _err(type(exc).__name__, message=str(exc))
    return EXIT_INPUT


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def cmd_simulate(req: RunRequest) -> int:
    try:
        s, digest = _load(req.scenario)
    except (ParseError, ValidationError) as exc:
        return _input_error(exc)
    s = req.apply(s)
    try:
        out = Path(req.out)
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        _err("OutputError", message=str(exc))
        return EXIT_INPUT

    m1 = eq = None
    try:
        if req.mode in ("mode1", "both"):
            m1 = mode1_dispatch(s)
        if req.mode in ("mode2", "both"):
            eq = solve_stackelberg(s)
    except InfeasibleDispatch as exc:
        _err("InfeasibleDispatch", vpp=exc.vpp_id, hour=exc.hour, message=str(exc))
        return EXIT_SOLVER
    except (ModelError, SolverFailure) as exc:
        _err(type(exc).__name__, message=str(exc))
        return EXIT_SOLVER

    doc = {
        "scenario": {"name": s.name, "sha256": digest, "path_name": Path(req.scenario).name},
        "mode": req.mode,
        "solver": vars(s.solver),
    }
    failed = []
    if m1 is not None:
        doc["mode1"] = [d.to_dict() for d in m1]
        for d in m1:
            report.write_text(out / f"dispatch_mode1_{d.vpp_id}.csv", report.dispatch_csv(d))
            if not d.residuals.within(s.solver.feas_tol, s.solver.comp_tol):
                failed.append(("mode1", d.vpp_id))
    if eq is not None:
        doc["mode2"] = eq.to_dict()
        mpec = complementarity_report(eq, s)
        doc["mpec"] = mpec.to_dict()
        if not mpec.ok(s.solver.feas_tol, s.solver.comp_tol):
            failed.append(("mode2", "mpec"))
        for d in eq.dispatches:
            report.write_text(out / f"dispatch_mode2_{d.vpp_id}.csv", report.dispatch_csv(d))
        report.write_text(out / "prices.csv", report.prices_csv(s, eq.prices.ep, eq.prices.es))
    else:
        report.write_text(out / "prices.csv", report.prices_csv(s, s.contract.cep, s.contract.ces))
    if m1 is not None and eq is not None:
        mc = report.mode_comparison(m1, eq, s)
        doc["comparison"] = mc.to_dict()
        report.write_text(out / "comparison.csv", report.comparison_csv(mc))
        for vid, rows in report.solution_diff(m1, eq.dispatches, s).items():
            report.write_text(out / f"diff_{vid}.csv", report.diff_csv(rows))
    report.write_text(out / "result.json", _dump(doc))

    if failed:
        _err("CertificateFailed", failed=[list(f) for f in failed])
        return EXIT_SOLVER
    return EXIT_OK


def cmd_oracle(req: RunRequest) -> int:
    """Compare the QP and the price search against the grid oracles.

    Dispatch costs must agree within ``slope * power_step + 1e-6``; the
    searched leader profit must reach the lattice maximum minus the lattice
    resolution bound.
    """
    try:
        s, _ = _load(req.scenario)
        g = GridSpec(price_points=req.price_grid, power_step=req.power_step)
    except (ParseError, ValidationError, ValueError) as exc:
        return _input_error(exc)
    s = req.apply(s)
    lines, ok = [], True
    try:
        ref = brute_force_equilibrium(s, g)
        eq = solve_stackelberg(s)
        for label, prices in (("contract", PriceSchedule.from_contract(s.contract)), ("equilibrium", eq.prices)):
            for v in s.vpps:
                o = brute_force_dispatch(v, prices, s.contract, g, s.dt)
                try:
                    qp_cost = solve_vpp_dispatch(v, prices, s.contract, s.solver, dt=s.dt).cost
                except (InfeasibleDispatch, SolverFailure):
                    qp_cost = float("inf")
                bound = o.bound(g.power_step) + CHECK_TOL
                delta = qp_cost - o.cost if o.feasible else (0.0 if qp_cost == float("inf") else float("inf"))
                good = bool(abs(delta) <= bound)
                ok &= good
                lines.append({"check": "dispatch", "prices": label, "vpp": v.id, "qp": qp_cost,
                              "oracle": o.cost, "delta": delta, "bound": bound, "ok": good})
    except GridTooLarge as exc:
        _err("GridTooLarge", message=str(exc))
        return EXIT_GUARD
    except InfeasibleDispatch as exc:
        _err("InfeasibleDispatch", vpp=exc.vpp_id, hour=exc.hour, message=str(exc))
        return EXIT_SOLVER
    bound = lattice_bound(s, g) + CHECK_TOL
    delta = eq.leader_objective - ref.profit
    good = bool(delta >= -bound)
    ok &= good
    lines.append({"check": "leader", "search": eq.leader_objective, "oracle": ref.profit,
                  "delta": delta, "bound": bound, "ok": good,
                  "search_prices": eq.prices.to_dict(), "oracle_prices": ref.prices.to_dict()})
    for line in lines:
        print(json.dumps(line, sort_keys=True))
    return EXIT_OK if ok else EXIT_CHECK


def cmd_validate(path: Path) -> int:
    try:
        s = read_scenario(path)
    except ParseError as exc:
        return _input_error(exc)
    found = validate_scenario(s)
    for v in found:
        print(f"{v.severity}: {v}")
    return EXIT_CHECK if any(v.severity == "error" for v in found) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dsogame", description="DSO/VPP pricing game simulator.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--scenario", type=Path, required=True, help="scenario JSON file")
        p.add_argument("--budget", type=int, help="search budget in follower solves")
        p.add_argument("--seed", type=int)
        p.add_argument("--restarts", type=int)
        p.add_argument("--feas-tol", type=float)
        p.add_argument("--comp-tol", type=float)

    sim = sub.add_parser("simulate", help="run Mode 1 and/or the Mode 2 equilibrium and write reports")
    common(sim)
    sim.add_argument("--mode", choices=MODES, default="both")
    sim.add_argument("--out", type=Path, default=Path("out"))

    orc = sub.add_parser("oracle", help="check solvers against brute-force references (T <= 2)")
    common(orc)
    orc.add_argument("--price-grid", type=int, default=21, help="lattice points per price coordinate")
    orc.add_argument("--power-step", type=float, default=0.01, help="dispatch grid step in MW")

    val = sub.add_parser("validate", help="list scenario invariant violations")
    val.add_argument("--scenario", type=Path, required=True)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return cmd_validate(args.scenario)
    req = RunRequest(
        scenario=args.scenario, mode=getattr(args, "mode", "both"), out=getattr(args, "out", Path("out")),
        budget=args.budget, seed=args.seed, restarts=args.restarts,
        feas_tol=args.feas_tol, comp_tol=args.comp_tol,
        price_grid=getattr(args, "price_grid", 21), power_step=getattr(args, "power_step", 0.01),
    )
    return cmd_simulate(req) if args.command == "simulate" else cmd_oracle(req)


if __name__ == "__main__":
    sys.exit(main())
