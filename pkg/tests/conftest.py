"""Shared scenario builders for the test suite."""
from __future__ import annotations

import numpy as np
import pytest

from dsogame.model import (Battery, ContractPrices, MicroTurbine, Scenario, SolverConfig, VppConfig, WindUnit,
                           bundled_scenario_path, load_scenario)


def forced_pair(cep: float = 1.2, ces: float = 0.3, **solver) -> Scenario:
    """One VPP that must buy 1 MWh and one holding 1 MW of wind and no demand."""
    buyer = VppConfig("BUYER", 5.0, 5.0, (1.0,))
    seller = VppConfig("SELLER", 5.0, 5.0, (0.0,), winds=(WindUnit((1.0,)),))
    return Scenario(horizon=1, contract=ContractPrices((cep,), (ces,)), vpps=(buyer, seller), big_m=10.0,
                    solver=SolverConfig(**solver))


def forced_buyer(cep: float = 1.2, ces: float = 0.8) -> Scenario:
    buyer = VppConfig("BUYER", 5.0, 5.0, (1.0,))
    return Scenario(horizon=1, contract=ContractPrices((cep,), (ces,)), vpps=(buyer,), big_m=5.0)


def empty_scenario(T: int = 2) -> Scenario:
    v = VppConfig("ZERO", 5.0, 5.0, (0.0,) * T)
    return Scenario(horizon=T, contract=ContractPrices((1.0,) * T, (0.5,) * T), vpps=(v,), big_m=5.0)


def micro_mt(demand: float = 5.0) -> VppConfig:
    """Single-hour VPP with one turbine (a=0.1, b=0.6, c=1, p_max=5)."""
    return VppConfig("MT", 10.0, 10.0, (demand,), turbines=(MicroTurbine(0.1, 0.6, 1.0, 5.0, 3.0, -3.0),))


def single_hour_vpp(seed: int) -> tuple[VppConfig, ContractPrices, np.ndarray]:
    """Seeded T=1 VPP with turbine, battery and wind plus an in-box price pair (ep, es)."""
    rng = np.random.default_rng(seed)
    cep = round(float(rng.uniform(0.8, 1.6)), 3)
    ces = round(float(cep * rng.uniform(0.2, 0.8)), 3)
    mt = MicroTurbine(round(float(rng.uniform(0.05, 0.3)), 3), round(float(rng.uniform(0.3, 1.2)), 3),
                      round(float(rng.uniform(0.5, 1.5)), 3), round(float(rng.uniform(1, 4)), 2), 2.0, -2.0)
    bs = Battery(0.05, 0.6, 1.0, 0.4, 0.2, 0.9)
    wind = WindUnit((round(float(rng.uniform(0, 3)), 2),))
    v = VppConfig(f"S{seed}", 6.0, 6.0, (round(float(rng.uniform(0, 5)), 2),),
                  turbines=(mt,), batteries=(bs,), winds=(wind,))
    prices = np.sort(rng.uniform(ces, cep, 2))  # es <= ep here; ep < es is covered elsewhere
    return v, ContractPrices((cep,), (ces,)), prices


def netting_instance(seed: int, T: int = 1) -> Scenario:
    """Seeded T <= 2 market with one net buyer and one wind-rich net seller."""
    rng = np.random.default_rng(seed)
    cep = tuple(round(float(x), 3) for x in rng.uniform(0.9, 1.5, T))
    ces = tuple(round(float(c * rng.uniform(0.2, 0.6)), 3) for c in cep)
    buyer = VppConfig(
        "B", 6.0, 6.0, tuple(round(float(x), 2) for x in rng.uniform(2, 5, T)),
        turbines=(MicroTurbine(round(float(rng.uniform(0.1, 0.4)), 3), round(float(rng.uniform(0.4, 1.0)), 3),
                               1.0, 3.0, 2.0, -2.0),),
    )
    seller = VppConfig(
        "S", 6.0, 6.0, tuple(round(float(x), 2) for x in rng.uniform(0, 1, T)),
        batteries=(Battery(0.05, 0.5, 1.0, 0.5, 0.2, 0.9),),
        winds=(WindUnit(tuple(round(float(x), 2) for x in rng.uniform(2, 4, T))),),
    )
    return Scenario(horizon=T, contract=ContractPrices(cep, ces), vpps=(buyer, seller), big_m=12.0,
                    solver=SolverConfig(seed=seed, eval_budget=2000))


@pytest.fixture(scope="session")
def base_case() -> Scenario:
    return load_scenario(bundled_scenario_path())


@pytest.fixture(scope="session")
def base_runs(base_case):
    """Mode-1 dispatch and default-budget equilibrium of the bundled case."""
    from dsogame.bilevel import solve_stackelberg
    from dsogame.dispatch import mode1_dispatch

    return mode1_dispatch(base_case), solve_stackelberg(base_case)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
