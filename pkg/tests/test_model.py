import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsogame.model import (ContractPrices, ParseError, PriceSchedule, ValidationError, bundled_scenario_path,
                           load_scenario, random_scenario, read_scenario, scenario_from_dict, scenario_to_dict,
                           validate_scenario, write_scenario)


def test_bundled_case_matches_parameter_table(base_case):
    s = base_case
    assert s.horizon == 24 and s.J == 3 and s.big_m == 30.0
    abc = [(v.turbines[0].a, v.turbines[0].b, v.turbines[0].c) for v in s.vpps]
    assert abc == [(0.08, 0.9, 1.2), (0.1, 0.6, 1.0), (0.15, 0.5, 0.8)]
    assert [v.turbines[0].p_max for v in s.vpps] == [6.0, 5.0, 4.0]
    assert [(v.turbines[0].ramp_down, v.turbines[0].ramp_up) for v in s.vpps] == [(-3.5, 3.5), (-3, 3), (-2, 2)]
    assert [v.batteries[0].p_max for v in s.vpps] == [0.6, 0.6, 1.2]
    assert [v.batteries[0].e_max for v in s.vpps] == [1.0, 1.0, 2.0]
    for v in s.vpps:
        b = v.batteries[0]
        assert (b.e, b.soc0, b.soc_min, b.soc_max) == pytest.approx((0.05, 0.4, 0.2, 0.9))
        assert (v.trade_cap_buy, v.trade_cap_sell) == (10.0, 10.0)
    assert validate_scenario(s) == []


def test_price_schedule_vector_roundtrip_and_readonly():
    p = PriceSchedule(es=[0.3, 0.4], ep=[1.0, 1.1])
    assert PriceSchedule.from_vector(p.as_vector()) == p
    with pytest.raises(ValueError):
        p.ep[0] = 2.0


def _raw(path):
    return json.loads(path.read_text())


def test_cep_below_ces_points_at_field(tmp_path):
    d = _raw(bundled_scenario_path())
    d["contract"]["ces"][5] = d["contract"]["cep"][5] + 0.1
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(d))
    with pytest.raises(ValidationError) as ei:
        load_scenario(p)
    assert ei.value.field == "contract.cep[5]"


def test_length_mismatch_reported(tmp_path):
    d = _raw(bundled_scenario_path())
    d["vpps"][0]["demand"] = d["vpps"][0]["demand"][:23]
    s = scenario_from_dict(d)
    v = validate_scenario(s)
    assert any(x.field == "vpps[0].demand" and "length mismatch" in x.rule for x in v)


def test_low_big_m_is_advisory_only(tmp_path):
    d = _raw(bundled_scenario_path())
    d["big_m"] = 5.0
    p = tmp_path / "m.json"
    p.write_text(json.dumps(d))
    s = load_scenario(p)  # does not raise
    assert [x.severity for x in validate_scenario(s)] == ["advisory"]


@pytest.mark.parametrize("text", ["{", "[1, 2]", '{"horizon": 1}', '{"horizon": NaN}'])
def test_malformed_files_raise_parse_error(tmp_path, text):
    p = tmp_path / "x.json"
    p.write_text(text)
    with pytest.raises(ParseError):
        read_scenario(p)


def test_nan_in_series_rejected(tmp_path):
    txt = bundled_scenario_path().read_text().replace('"cep": [\n      0.95', '"cep": [\n      NaN', 1)
    p = tmp_path / "nan.json"
    p.write_text(txt)
    with pytest.raises(ParseError):
        load_scenario(p)


def test_missing_file_is_parse_error(tmp_path):
    with pytest.raises(ParseError):
        load_scenario(tmp_path / "none.json")


def test_percent_and_fraction_soc_agree(base_case):
    d = scenario_to_dict(base_case)
    assert d["soc_unit"] == "fraction"
    assert scenario_from_dict(d) == base_case


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), T=st.integers(1, 24), J=st.integers(1, 4))
def test_random_scenarios_valid_and_roundtrip(tmp_path_factory, seed, T, J):
    s = random_scenario(seed, T=T, J=J)
    assert [v for v in validate_scenario(s) if v.severity == "error"] == []
    assert s.big_m >= s.safe_big_m()
    p = tmp_path_factory.mktemp("rt") / "s.json"
    write_scenario(s, p)
    assert load_scenario(p) == s


def test_random_scenario_is_seeded():
    assert random_scenario(3) == random_scenario(3)
    assert random_scenario(3) != random_scenario(4)


@given(st.lists(st.floats(0, 5, allow_nan=False), min_size=1, max_size=6))
def test_in_box_matches_elementwise_check(xs):
    cep = tuple(x + 1.0 for x in xs)
    ces = tuple(xs)
    c = ContractPrices(cep, ces)
    mid = PriceSchedule(es=np.asarray(ces) + 0.5, ep=np.asarray(cep) - 0.5)
    assert mid.in_box(c)
    out = PriceSchedule(es=np.asarray(ces) - 0.01, ep=np.asarray(cep))
    assert not out.in_box(c)
    assert math.isclose(float(np.min(c.spread())), 1.0)
