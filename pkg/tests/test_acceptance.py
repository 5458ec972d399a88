"""Acceptance criteria 1-9, each reported as one PASS/FAIL line."""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, forced_pair, netting_instance, single_hour_vpp
from dsogame.bilevel import complementarity_report, evaluate_leader, solve_stackelberg
from dsogame.cli import main
from dsogame.dispatch import mode1_dispatch, solve_vpp_dispatch
from dsogame.model import PriceSchedule, bundled_scenario_path, load_scenario, random_scenario
from dsogame.oracle import GridSpec, brute_force_dispatch, brute_force_equilibrium, lattice_bound
from dsogame.report import mode_comparison
from test_settlement import big_m_mismatches, net_vectors

TOL = 1e-6
CORPUS_SEEDS = range(20)


def report(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def _run(s):
    t0 = time.perf_counter()
    m1 = mode1_dispatch(s)
    eq = solve_stackelberg(s)
    mc = mode_comparison(m1, eq, s)
    mpec = complementarity_report(eq, s)
    return {"s": s, "m1": m1, "eq": eq, "mc": mc, "mpec": mpec, "secs": time.perf_counter() - t0}


@pytest.fixture(scope="module")
def corpus():
    """Bundled case plus 20 seeded random scenarios (T=24, J=3, eval_budget=5000)."""
    runs = [_run(load_scenario(bundled_scenario_path()))]
    for seed in CORPUS_SEEDS:
        s = random_scenario(seed, T=24, J=3)
        assert s.solver.eval_budget == 5000
        runs.append(_run(s))
    return runs


def test_criterion_1_follower_rationality(corpus):
    worst = max(c2 - c1 for r in corpus for c1, c2 in zip(r["mc"].mode1_cost, r["mc"].mode2_cost))
    slowest = max(r["secs"] for r in corpus)
    report(1, worst <= 1e-6 and slowest <= 60.0,
           f"{len(corpus)} scenarios, max cost increase {worst:.3g}, slowest {slowest:.1f}s")


def test_criterion_2_dso_non_loss(corpus):
    low = min(r["eq"].leader_objective for r in corpus)
    b = corpus[0]["mc"]
    ok = low >= -1e-9 and b.dso_profit > 0 and b.wholesale_inflow_mode2 < b.wholesale_inflow_mode1
    report(2, ok, f"min profit {low:.4g}; bundled profit {b.dso_profit:.4f}, inflow "
                  f"{b.wholesale_inflow_mode2:.3f} < {b.wholesale_inflow_mode1:.3f}")


def test_criterion_3_accounting_identity(corpus):
    s = forced_pair()
    micro = mode_comparison(mode1_dispatch(s), solve_stackelberg(s), s)
    worst = max([abs(r["mc"].identity_residual) for r in corpus] + [abs(micro.identity_residual)])
    report(3, worst <= 1e-6, f"max |residual| {worst:.3g} EUR over {len(corpus) + 1} runs")


def test_criterion_4_follower_kkt(corpus):
    n = bad = 0
    worst = 0.0
    for r in corpus:
        for d in list(r["m1"]) + list(r["eq"].dispatches):
            n += 1
            worst = max(worst, d.residuals.worst())
            bad += not d.residuals.within(TOL, TOL)
        bad += not r["mpec"].ok(TOL, TOL)
    report(4, bad == 0, f"{n} dispatches, worst residual {worst:.3g}, failures {bad}")


def test_criterion_5_big_m_equivalence():
    rng = np.random.default_rng(5)
    vecs = net_vectors(1000, 30.0, 5)
    assert all(np.max(np.abs(v)) <= 30.0 for v in vecs)
    bad = sum(big_m_mismatches(v, 30.0, rng) for v in vecs)
    report(5, bad == 0, f"1000 vectors, {sum(len(v) for v in vecs)} hours, {bad} mismatches")


def test_criterion_6_lower_level_oracle():
    t0 = time.perf_counter()
    worst, bad = -np.inf, 0
    for seed in range(50):
        v, c, (es, ep) = single_hour_vpp(seed)
        pr = PriceSchedule(es=[es], ep=[ep])
        o = brute_force_dispatch(v, pr, c, GridSpec(power_step=0.01))
        q = solve_vpp_dispatch(v, pr, c)
        gap = abs(q.cost - o.cost) - (o.bound(0.01) + 1e-6)
        worst = max(worst, gap)
        bad += gap > 0
    secs = time.perf_counter() - t0
    report(6, bad == 0 and secs <= 300, f"50 instances, max gap over bound {worst:.3g}, {secs:.1f}s")


def test_criterion_7_bilevel_oracle():
    s = forced_pair()
    r = solve_stackelberg(s)
    micro_ok = abs(r.leader_objective - 0.9) <= 1e-6 and (r.prices.ep[0], r.prices.es[0]) == (1.2, 0.3)
    ref = brute_force_equilibrium(s, GridSpec(price_points=21))
    micro_ok &= r.leader_objective >= ref.profit - lattice_bound(s, GridSpec(price_points=21))
    cases = [(0, 1, 21), (1, 1, 21), (2, 1, 21), (3, 2, 9), (4, 2, 9)]
    worst = np.inf
    ok = micro_ok
    for seed, T, pts in cases:
        s = netting_instance(seed, T=T)
        g = GridSpec(price_points=pts)
        ref = brute_force_equilibrium(s, g)
        got = solve_stackelberg(s).leader_objective
        worst = min(worst, got - ref.profit)
        ok &= got >= ref.profit - lattice_bound(s, g)
    report(7, ok, f"micro profit {r.leader_objective:.9f} at ({r.prices.ep[0]}, {r.prices.es[0]}); "
                  f"5 instances, min(search - lattice best) {worst:.3g}")


def test_criterion_8_degenerate_prices():
    scen = [load_scenario(bundled_scenario_path())] + [random_scenario(k, T=24, J=3) for k in range(5)]
    cost_gap = profit_gap = 0.0
    for s in scen:
        m1 = mode1_dispatch(s)
        f, disp, _ = evaluate_leader(PriceSchedule.from_contract(s.contract), s)
        cost_gap = max(cost_gap, max(abs(a.cost - b.cost) for a, b in zip(m1, disp)))
        B = sum(d.p_buy for d in disp)
        S = sum(d.p_sell for d in disp)
        profit_gap = max(profit_gap, abs(f - float(np.sum(s.contract.spread() * np.minimum(B, S)))))
    report(8, cost_gap <= 1e-9 and profit_gap <= 1e-9,
           f"{len(scen)} scenarios, max cost gap {cost_gap:.3g}, max profit gap {profit_gap:.3g}")


def test_criterion_9_determinism(tmp_path):
    args = ["simulate", "--scenario", str(bundled_scenario_path()), "--mode", "both", "--seed", "0"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = [(tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names]
    ok = all(same) and sorted(p.name for p in (tmp_path / "b").iterdir()) == names and "result.json" in names
    report(9, ok, f"{len(names)} files compared, {len(names) - sum(same)} differ")
