from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import micro_mt
from dsogame.dispatch import (InfeasibleDispatch, ModelError, build_vpp_qp, mode1_dispatch, soc_trajectory,
                              solve_vpp_dispatch)
from dsogame.model import (Battery, ContractPrices, MicroTurbine, PriceSchedule, Scenario, VppConfig, WindUnit,
                           random_scenario)

TOL = 1e-6


def one_hour(cep=1.2, ces=0.3):
    return ContractPrices((cep,), (ces,))


def test_turbine_shares_load_with_purchase():
    d = solve_vpp_dispatch(micro_mt(5.0), PriceSchedule(es=[0.4], ep=[1.0]), one_hour())
    assert d.p_mt[0, 0] == pytest.approx(2.0, abs=1e-6)
    assert d.p_buy[0] == pytest.approx(3.0, abs=1e-6)
    assert d.cost == pytest.approx(5.6, abs=1e-6)
    assert d.residuals.within(TOL, TOL)


def test_free_wind_is_sold():
    v = replace(micro_mt(0.0), winds=(WindUnit((3.0,)),))
    d = solve_vpp_dispatch(v, PriceSchedule(es=[0.5], ep=[1.0]), one_hour())
    assert d.p_wt[0, 0] == pytest.approx(3.0, abs=1e-6)
    assert d.p_sell[0] == pytest.approx(3.0, abs=1e-6)
    assert d.cost == pytest.approx(-1.5 + 1.0, abs=1e-6)


def test_idle_vpp_pays_only_fixed_cost():
    T = 4
    mt = MicroTurbine(0.1, 0.6, 1.3, 5.0, 3.0, -3.0)
    v = VppConfig("Z", 0.0, 0.0, (0.0,) * T, turbines=(mt,), batteries=(Battery(0.05, 1.0, 2.0, 0.5, 0.2, 0.9),))
    c = ContractPrices((1.0,) * T, (0.5,) * T)
    d = solve_vpp_dispatch(v, PriceSchedule.from_contract(c), c)
    assert np.allclose(np.concatenate([d.p_buy, d.p_sell, d.p_mt.ravel(), d.p_bs.ravel()]), 0.0, atol=1e-9)
    assert d.cost == pytest.approx(T * 1.3, abs=1e-9)


def test_layout_counts_for_full_day():
    T = 24
    v = VppConfig("V", 10, 10, (1.0,) * T, turbines=(MicroTurbine(0.1, 0.6, 1.0, 5, 3, -3),),
                  batteries=(Battery(0.05, 0.6, 1.0, 0.4, 0.2, 0.9),), winds=(WindUnit((1.0,) * T),))
    c = ContractPrices((1.0,) * T, (0.5,) * T)
    qp = build_vpp_qp(v, PriceSchedule.from_contract(c), c, T)
    assert qp.n == T * 5
    assert qp.A_eq.shape[0] == T + 1  # balance rows plus the cyclic SoC row
    ramp = [r for r in qp.A_in if np.count_nonzero(r) == 2 and sorted(r[r != 0]) == [-1.0, 1.0]]
    assert len(ramp) == 2 * (T - 1)


def test_quadratic_diagonal_for_second_vpp(base_case):
    v = base_case.vpps[1]
    v1 = replace(v, demand=v.demand[:1], winds=tuple(WindUnit(w.availability[:1]) for w in v.winds))
    c = ContractPrices(base_case.contract.cep[:1], base_case.contract.ces[:1])
    qp = build_vpp_qp(v1, PriceSchedule.from_contract(c), c, 1)
    assert np.diag(qp.Q)[2:4] == pytest.approx([0.2, 0.1])


def test_series_length_mismatch():
    v = VppConfig("V", 10, 10, (1.0, 1.0), winds=(WindUnit((1.0,)),))
    c = ContractPrices((1.0, 1.0), (0.5, 0.5))
    with pytest.raises(ModelError):
        build_vpp_qp(v, PriceSchedule.from_contract(c), c, 2)


def test_unservable_demand_names_hour():
    v = VppConfig("V", 2.0, 2.0, (1.0, 9.0, 1.0), turbines=(MicroTurbine(0.1, 0.6, 1.0, 5, 5, -5),))
    c = ContractPrices((1.0,) * 3, (0.5,) * 3)
    with pytest.raises(InfeasibleDispatch) as ei:
        solve_vpp_dispatch(v, PriceSchedule.from_contract(c), c)
    assert ei.value.vpp_id == "V" and ei.value.hour == 1


def test_wash_trades_removed_at_equal_prices():
    v = VppConfig("W", 5, 5, (1.0,), winds=(WindUnit((3.0,)),))
    d = solve_vpp_dispatch(v, PriceSchedule(es=[0.7], ep=[0.7]), one_hour())
    assert min(d.p_buy[0], d.p_sell[0]) <= TOL
    assert d.residuals.within(TOL, TOL)


def test_wind_spilled_at_zero_sale_price():
    v = VppConfig("W", 5, 5, (1.0,), winds=(WindUnit((3.0,)),))
    d = solve_vpp_dispatch(v, PriceSchedule(es=[0.0], ep=[0.5]), ContractPrices((1.0,), (0.0,)))
    assert d.p_sell[0] <= TOL
    assert d.p_wt[0, 0] == pytest.approx(1.0, abs=1e-6)


def test_arbitrage_when_purchase_below_sale_price():
    # ep < es is inside the box; the follower buys and resells at the caps
    v = VppConfig("A", 2.0, 3.0, (0.0,))
    d = solve_vpp_dispatch(v, PriceSchedule(es=[0.9], ep=[0.5]), one_hour())
    assert d.p_buy[0] == pytest.approx(2.0, abs=1e-6)
    assert d.p_sell[0] == pytest.approx(2.0, abs=1e-6)


def test_mode1_equals_direct_calls_and_symmetry():
    s = random_scenario(11, T=6, J=2)
    v = s.vpps[0]
    twin = replace(v, id="TWIN")
    s2 = replace(s, vpps=(v, twin), big_m=2 * s.big_m)
    m1 = mode1_dispatch(s2)
    direct = solve_vpp_dispatch(v, PriceSchedule.from_contract(s.contract), s.contract, s.solver)
    assert abs(m1[0].cost - direct.cost) <= 1e-9
    assert np.array_equal(m1[0].p_mt, m1[1].p_mt) and m1[0].cost == m1[1].cost


def test_bundled_mode1_costs_positive(base_case):
    costs = [d.cost for d in mode1_dispatch(base_case)]
    assert all(c > 0 for c in costs)


def _prices(s: Scenario, seed: int) -> PriceSchedule:
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(s.contract.ces), np.asarray(s.contract.cep)
    return PriceSchedule(es=lo + rng.random(s.horizon) * (hi - lo), ep=lo + rng.random(s.horizon) * (hi - lo))


def check_invariants(v: VppConfig, d, dt=1.0):
    T = d.T
    supply = d.p_mt.sum(axis=1) + d.p_bs.sum(axis=1) + d.p_wt.sum(axis=1)
    assert np.max(np.abs(d.p_buy - d.p_sell + supply * dt - np.asarray(v.demand) * dt)) <= TOL
    for i, mt in enumerate(v.turbines):
        step = np.diff(d.p_mt[:, i])
        assert np.all(step >= mt.ramp_down * dt - TOL) and np.all(step <= mt.ramp_up * dt + TOL)
        assert np.all(d.p_mt[:, i] >= -TOL) and np.all(d.p_mt[:, i] <= mt.p_max + TOL)
    assert np.max(np.abs(soc_trajectory(v, d.p_bs, dt) - d.soc), initial=0.0) <= 1e-9
    for i, b in enumerate(v.batteries):
        assert np.all(d.soc[:, i] >= b.soc_min - TOL) and np.all(d.soc[:, i] <= b.soc_max + TOL)
        assert abs(d.soc[T, i] - b.soc0) <= TOL
        assert d.soc[0, i] == b.soc0
    assert np.all(d.p_buy >= -TOL) and np.all(d.p_buy <= v.trade_cap_buy + TOL)
    assert np.all(d.p_sell >= -TOL) and np.all(d.p_sell <= v.trade_cap_sell + TOL)
    trade = float(np.sum(d.prices.ep * d.p_buy - d.prices.es * d.p_sell))
    assert d.cost == pytest.approx(trade + d.production_cost, abs=1e-9)
    assert d.residuals.within(TOL, TOL)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), T=st.integers(1, 12))
def test_dispatch_invariants_and_rationality(seed, T):
    s = random_scenario(seed, T=T, J=1)
    v = s.vpps[0]
    pr = _prices(s, seed)
    d = solve_vpp_dispatch(v, pr, s.contract, s.solver)
    check_invariants(v, d)
    base = solve_vpp_dispatch(v, PriceSchedule.from_contract(s.contract), s.contract, s.solver)
    check_invariants(v, base)
    assert d.cost <= base.cost + TOL


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), T=st.integers(1, 8), hour=st.integers(0, 7), bump=st.floats(0.0, 0.3))
def test_cost_monotone_in_prices(seed, T, hour, bump):
    s = random_scenario(seed, T=T, J=1)
    v = s.vpps[0]
    pr = _prices(s, seed + 1)
    t = hour % T
    ep_up = pr.ep.copy()
    ep_up[t] += bump
    es_up = pr.es.copy()
    es_up[t] += bump
    c0 = solve_vpp_dispatch(v, pr, s.contract).cost
    assert solve_vpp_dispatch(v, PriceSchedule(es=pr.es, ep=ep_up), s.contract).cost >= c0 - TOL
    assert solve_vpp_dispatch(v, PriceSchedule(es=es_up, ep=pr.ep), s.contract).cost <= c0 + TOL


def test_warm_start_matches_cold(base_case):
    s = base_case
    pr = _prices(s, 3)
    for v in s.vpps:
        base = solve_vpp_dispatch(v, PriceSchedule.from_contract(s.contract), s.contract)
        warm = solve_vpp_dispatch(v, pr, s.contract, warm=base)
        cold = solve_vpp_dispatch(v, pr, s.contract)
        assert warm.cost == pytest.approx(cold.cost, abs=1e-7)
        check_invariants(v, warm)
