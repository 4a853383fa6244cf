"""The thirteen acceptance criteria, one test each, each printing PASS/FAIL."""

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binomtest

from meterlink.airtime import FRAME_OVERHEAD, RadioParams, dr_to_params, time_on_air_us
from meterlink.link_model import (
    DEMOD_FLOOR_DB,
    effective_antenna_gain,
    receive_decision,
    rssi,
    sensitivity_dbm,
    snr,
)
from meterlink.mac.session import abp_keys_for, abp_session, build_uplink
from meterlink.meter_codec import DATAGRAM_LEN, fragment, reassemble
from meterlink.net_server import read_log
from meterlink.planner import CapacityInputs, daily_data_table, node_capacity
from meterlink.regulation import channel_by_freq, wait_after
from meterlink.sim import node_stats_from_log, run, saturation_scenario
from meterlink.sim.stats import duty_violations, transmitter_records

from .oracles import duty_oracle_violations, toa_oracle_seconds
from .scenario_gen import random_scenario

PAYLOADS = (0, 13, 26, 51, 64, 96, 109, 255)


def wait_s(dr: int, frame_len: int) -> float:
    toa = Fraction(time_on_air_us(dr_to_params(dr), frame_len), 1_000_000)
    return float(wait_after(toa, Fraction(1, 100)))


def per_of(rows, eui: str) -> float:
    return node_stats_from_log(rows)[eui].per


def test_criterion_01_airtime_matches_oracle(criterion):
    mismatches = []
    cases = 0
    for sf in range(7, 13):
        for bw in (125_000, 250_000, 500_000):
            for cr in range(5, 9):
                for pl in PAYLOADS:
                    cases += 1
                    got = time_on_air_us(RadioParams(sf=sf, bw_hz=bw, cr_denominator=cr), pl)
                    want = toa_oracle_seconds(sf, bw, cr, pl) * 1_000_000
                    if got != want:
                        mismatches.append((sf, bw, cr, pl, got, want))
    assert criterion(1, cases == 576 and not mismatches,
                     f"{cases} cases, {len(mismatches)} mismatches")


def test_criterion_02_wait_time_anchors(criterion):
    w64, w13, w0 = wait_s(0, 64), wait_s(0, 13), wait_s(5, 0)
    ok = 255 <= w64 <= 292 and 103 <= w13 <= 126 and 2.0 <= w0 <= 3.3
    assert criterion(2, ok, f"DR0/64B {w64:.2f} s, DR0/13B {w13:.2f} s, DR5/0B {w0:.2f} s")


def test_criterion_03_daily_data_anchor(criterion):
    rows = {r["dr"]: r["bytes_per_day"] for r in daily_data_table(Fraction(1, 100))}
    monotone = all(rows[dr] >= rows[dr - 1] for dr in range(1, 6))
    ok = 495_000 <= rows[5] <= 605_000 and monotone
    assert criterion(3, ok, f"DR5 {rows[5]} B/day, monotone={monotone}")


def test_criterion_04_capacity_anchors(criterion):
    got = (node_capacity(CapacityInputs(R=1, channels=1)),
           node_capacity(CapacityInputs(R=240, channels=8)),
           node_capacity(CapacityInputs(R=24, channels=8)))
    assert criterion(4, got == (43200, 1440, 14400), f"{got}")


@settings(max_examples=300, deadline=None)
@given(payload=st.binary(min_size=0, max_size=242), dr=st.integers(3, 5))
def test_criterion_05_frame_overhead_property(payload, dr):
    session = abp_session(b"\x01" * 8, *abp_keys_for(b"\x01" * 8))
    frame = build_uplink(session, 10, payload, False, dr).to_bytes()
    assert len(frame) == len(payload) + FRAME_OVERHEAD


def test_criterion_05_frame_size_identities(criterion):
    session = abp_session(b"\x02" * 8, *abp_keys_for(b"\x02" * 8))
    sizes = {n: len(build_uplink(session, 10, bytes(n), False, 5).to_bytes()) for n in (96, 51, 0)}
    ok = sizes == {96: 109, 51: 64, 0: 13}
    assert criterion(5, ok, f"96->{sizes[96]}, 51->{sizes[51]}, overhead {sizes[0]}")


def test_criterion_06_fragmentation_round_trip(criterion):
    rng = random.Random(6)
    failures = 0
    for _ in range(10_000):
        datagram = rng.randbytes(DATAGRAM_LEN)
        parts = fragment(datagram)
        rng.shuffle(parts)
        if reassemble(parts) != datagram:
            failures += 1
    assert criterion(6, failures == 0, f"10000 datagrams, {failures} failures")


def test_criterion_07_duty_soundness(criterion):
    checked = 0
    problems = []
    for index in range(10):
        for seed in (1, 2, 3):
            result = run(random_scenario(index, seed))
            rows = read_log(result.log_lines)
            txs = [(who, channel_by_freq(freq).sub_band_id, start, toa)
                   for who, freq, start, toa in transmitter_records(rows)]
            duty = {c.sub_band_id: c.duty_cycle for c in
                    (channel_by_freq(f) for _, f, _, _ in transmitter_records(rows))}
            problems += duty_oracle_violations(txs, duty, 3_600_000_000)
            problems += duty_violations(rows)
            checked += 1
    assert criterion(7, not problems, f"{checked} runs, {len(problems)} window violations")


def test_criterion_08_class_c_misses_fewer_acks(preset_runs, criterion):
    misses = {}
    for cls in ("a", "c"):
        stats = node_stats_from_log(preset_runs(f"ack-contention-{cls}").rows)
        misses[cls] = sum(s.ack_missed for s in stats.values())
    ratio = misses["c"] / misses["a"] if misses["a"] else float("nan")
    ok = misses["c"] < misses["a"] and 0.3 <= ratio <= 0.7
    assert criterion(8, ok, f"misses A={misses['a']} C={misses['c']} ratio {ratio:.2f}")


def test_criterion_09_indoor_per_pattern(preset_runs, criterion):
    rows = preset_runs("indoor-sciencepark3").rows

    def per(pos, dr):
        return per_of(rows, f"1000{pos:06x}{dr:06x}")

    basement = all(per(p, dr) == 100 for p in (8, 9) for dr in range(6))
    same_floor = max(per(4, dr) for dr in range(6))
    ok = basement and same_floor <= 2 and per(1, 5) >= 40 and per(1, 0) <= 5
    assert criterion(9, ok, f"basement 100%={basement}, pos4 max {same_floor:.1f}%, "
                            f"pos1 DR5 {per(1, 5):.1f}% DR0 {per(1, 0):.1f}%")


def test_criterion_10_outdoor_coverage(preset_runs, criterion):
    rows = preset_runs("outdoor-hagenberg").rows

    def per(site, dr):
        return per_of(rows, f"2000{site:06x}{dr:06x}")

    site1 = max(per(1, dr) for dr in range(6))
    ok = site1 <= 5 and per(2, 5) >= 90 and per(2, 0) <= 20 and per(3, 0) <= 10
    assert criterion(10, ok, f"site1 max {site1:.1f}%, site2 DR5 {per(2, 5):.1f}% "
                             f"DR0 {per(2, 0):.1f}%, site3 DR0 {per(3, 0):.1f}%")


def test_criterion_11_gateway_saturation(criterion):
    distinct = run(saturation_scenario(9, distinct=True)).stats.gateways["gw-sat"]
    same = run(saturation_scenario(2, distinct=False)).stats.gateways["gw-sat"]
    ok = (distinct.received, distinct.saturated) == (8, 1) and same.received == 0
    assert criterion(11, ok, f"9 distinct -> {distinct.received} received "
                             f"({distinct.saturated} saturated); 2 colliding -> {same.received}")


@pytest.mark.parametrize("name", ["indoor-sciencepark3", "outdoor-hagenberg", "ack-contention-a",
                                  "ack-contention-c", "saturation"])
def test_criterion_12_determinism(name, preset_runs, criterion):
    from meterlink.sim import preset

    first = preset_runs(name).result.log_text
    second = run(preset(name)).log_text
    assert criterion(12, first == second, f"{name}: {len(first.splitlines())} rows identical")


def test_criterion_13_model_invariants(criterion):
    checks = {}
    loss = 120.0
    checks["rssi SF-invariant"] = len({rssi(14, 3, -3, loss) for _ in range(7, 13)}) == 1
    checks["+5 dB tx -> +5 dB rssi"] = rssi(19, 3, -3, loss) - rssi(14, 3, -3, loss) == 5
    checks["snr <= 12.5"] = all(snr(p)[1] <= 12.5 for p in range(-140, 0))
    gains = {g: effective_antenna_gain(g) for g in range(-10, 17)}
    checks["gain max at 3 dBi"] = max(gains, key=gains.get) == 3 and all(
        v < gains[3] for g, v in gains.items() if g != 3)

    # marginal link: a noisy receiver puts every SF near its demodulation floor
    p = -116.0
    true_snr, _ = snr(p, noise_figure_db=15.0)
    rng = random.Random(13)
    failures = {}
    for sf in range(7, 13):
        assert p >= sensitivity_dbm(sf)
        failures[sf] = sum(not receive_decision(p, true_snr, sf, rng) for _ in range(1000))
    monotone = True
    for sf in range(7, 12):
        base = max(failures[sf] / 1000, 1e-3)
        if binomtest(failures[sf + 1], 1000, base, alternative="greater").pvalue < 0.01:
            monotone = False
    checks["PER monotone in SF"] = monotone and failures[7] > failures[12]
    ok = all(checks.values())
    detail = ", ".join(f"{k}={'ok' if v else 'BAD'}" for k, v in checks.items())
    assert criterion(13, ok, f"{detail}; failures {failures} (floors {DEMOD_FLOOR_DB[7]}..)")
