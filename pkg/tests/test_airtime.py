import pytest
from hypothesis import given
from hypothesis import strategies as st

from meterlink.airtime import (
    RadioParams,
    bitrate_bps,
    dr_to_params,
    max_app_payload,
    payload_symbols,
    sf_to_dr,
    symbol_duration,
    time_on_air,
    time_on_air_us,
)

from .oracles import toa_oracle_seconds


@pytest.mark.parametrize("sf,pl,ms", [(12, 64, 2793.472), (12, 13, 1155.072), (7, 0, 25.856),
                                      (7, 255, 399.616)])
def test_known_airtimes(sf, pl, ms):
    assert time_on_air(RadioParams(sf=sf), pl) == pytest.approx(ms, abs=1e-9)


def test_symbol_duration_ms():
    assert symbol_duration(RadioParams(sf=12)) == 32.768
    assert symbol_duration(RadioParams(sf=7, bw_hz=500_000)) == 0.256


def test_ldro_auto_threshold():
    assert RadioParams(sf=11).ldro_enabled
    assert RadioParams(sf=12).ldro_enabled
    assert not RadioParams(sf=10).ldro_enabled
    assert not RadioParams(sf=12, bw_hz=500_000).ldro_enabled


@given(sf=st.integers(7, 12), bw=st.sampled_from([125_000, 250_000, 500_000]),
       cr=st.integers(5, 8), pl=st.integers(0, 255), preamble=st.integers(0, 65),
       explicit=st.booleans(), crc=st.booleans(), ldro=st.sampled_from(["auto", "on", "off"]))
def test_matches_oracle_everywhere(sf, bw, cr, pl, preamble, explicit, crc, ldro):
    p = RadioParams(sf=sf, bw_hz=bw, cr_denominator=cr, preamble_symbols=preamble,
                    explicit_header=explicit, crc_on=crc, ldro=ldro)
    want = toa_oracle_seconds(sf, bw, cr, pl, preamble, explicit, crc,
                              None if ldro == "auto" else ldro == "on")
    assert time_on_air_us(p, pl) == want * 1_000_000


@given(sf=st.integers(7, 12), pl=st.integers(0, 254))
def test_monotone_in_payload(sf, pl):
    p = RadioParams(sf=sf)
    assert time_on_air_us(p, pl + 1) >= time_on_air_us(p, pl)


def test_minimum_payload_symbols_is_eight():
    assert payload_symbols(RadioParams(sf=12), 0) == 8


@pytest.mark.parametrize("kwargs", [{"sf": 6}, {"sf": 13}, {"bw_hz": 200_000},
                                    {"cr_denominator": 4}, {"preamble_symbols": -1},
                                    {"ldro": "maybe"}])
def test_invalid_params_rejected(kwargs):
    with pytest.raises(ValueError):
        RadioParams(**kwargs)


def test_payload_range_checked():
    with pytest.raises(ValueError):
        time_on_air_us(RadioParams(), 256)
    with pytest.raises(ValueError):
        time_on_air_us(RadioParams(), -1)


def test_data_rate_mapping():
    for dr in range(6):
        assert dr_to_params(dr).sf == 12 - dr
        assert sf_to_dr(12 - dr) == dr
        assert dr_to_params(dr).dr == dr
    with pytest.raises(ValueError):
        dr_to_params(6)


def test_max_payload_and_bitrate():
    assert [max_app_payload(dr) for dr in range(6)] == [51, 51, 51, 115, 242, 242]
    assert bitrate_bps(dr_to_params(5)) == pytest.approx(5468.75)
    assert bitrate_bps(dr_to_params(0)) == pytest.approx(292.97, abs=0.01)
