import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from meterlink.mac import (
    AesPrimitive,
    Beacon,
    ClassConfig,
    DeviceState,
    DownlinkArrived,
    Frame,
    FrameError,
    HmacPrimitive,
    JoinAccept,
    JoinRequest,
    MType,
    UplinkEnded,
    UplinkStarted,
    abp_session,
    build_ack,
    build_uplink,
    class_a_step,
    class_a_windows,
    class_b_step,
    class_c_step,
    decrypt_payload,
    otaa_join,
    ping_slots,
    verify_mic,
)
from meterlink.mac.classes import BEACON_RESERVED_US, beacon_time_before, rx_window_length_us
from meterlink.mac.crypto import derive_session_keys
from meterlink.mac.session import (
    CounterExhausted,
    PayloadTooLarge,
    abp_keys_for,
    app_key_for,
    join_request_mic,
)

EUI = bytes.fromhex("0011223344556677")
RX2 = 869_525_000


def session():
    return abp_session(EUI, *abp_keys_for(EUI))


@given(payload=st.binary(max_size=51), fport=st.integers(1, 223), confirmed=st.booleans())
def test_frame_round_trip(payload, fport, confirmed):
    s = session()
    f = build_uplink(s, fport, payload, confirmed, 0)
    back = Frame.from_bytes(f.to_bytes())
    assert back == f
    assert len(f.to_bytes()) == len(f) == 13 + len(payload)
    assert back.confirmed == confirmed
    assert verify_mic(back, s.nwk_s_key)
    assert decrypt_payload(s, back) == payload


def test_payload_is_encrypted():
    f = build_uplink(session(), 10, b"A" * 32, False, 5)
    assert f.frm_payload != b"A" * 32


def test_every_single_bit_flip_breaks_the_mic():
    s = session()
    raw = build_uplink(s, 10, bytes(range(20)), True, 5).to_bytes()
    for i in range(len(raw) * 8):
        flipped = bytearray(raw)
        flipped[i // 8] ^= 1 << (i % 8)
        try:
            frame = Frame.from_bytes(bytes(flipped))
        except (FrameError, ValueError):
            continue
        assert not verify_mic(frame, s.nwk_s_key), f"bit {i}"


def test_frame_errors():
    with pytest.raises(FrameError):
        Frame.from_bytes(b"\x40" * 12)
    with pytest.raises(FrameError):
        Frame.from_bytes(JoinRequest(b"\x00" * 8, EUI, 1).to_bytes())


def test_limits_enforced():
    s = session()
    with pytest.raises(PayloadTooLarge):
        build_uplink(s, 10, bytes(52), False, 0)
    s.fcnt_up = 0x10000
    with pytest.raises(CounterExhausted):
        build_uplink(s, 10, b"", False, 5)


def test_counter_increments_per_frame():
    s = session()
    assert [build_uplink(s, 1, b"", False, 5).fcnt for _ in range(3)] == [0, 1, 2]


def test_ack_frame():
    s = session()
    ack = build_ack(s)
    assert ack.ack and ack.mtype == MType.UNCONFIRMED_DOWN and len(ack.to_bytes()) == 13
    assert verify_mic(Frame.from_bytes(ack.to_bytes()), s.nwk_s_key)


def test_join_messages_round_trip():
    req = JoinRequest(b"\x00" * 8, EUI, 0x1234, b"\x01\x02\x03\x04")
    assert len(req.to_bytes()) == 23
    assert JoinRequest.from_bytes(req.to_bytes()) == req
    acc = JoinAccept(7, 0x13, b"\x26\x01\x02\x03")
    raw = acc.to_bytes()
    assert len(raw) == 17
    assert JoinAccept.from_bytes(raw) == acc
    with pytest.raises(FrameError):
        JoinRequest.from_bytes(b"\x00" * 22)


def test_otaa_keys_depend_on_both_nonces():
    key = app_key_for(EUI)
    a = otaa_join(EUI, key, 1, random.Random(0), dev_nonce=5)
    b = otaa_join(EUI, key, 2, random.Random(0), dev_nonce=5)
    c = otaa_join(EUI, key, 1, random.Random(0), dev_nonce=6)
    assert a.nwk_s_key != b.nwk_s_key != c.nwk_s_key
    assert a.nwk_s_key != a.app_s_key
    assert a.dev_addr[0] >> 1 == 0x13
    assert derive_session_keys(key, 1, 0x13, 5) == (a.nwk_s_key, a.app_s_key)
    assert len(join_request_mic(key, b"body")) == 4


def test_aes_primitive_is_a_drop_in():
    pytest.importorskip("cryptography")
    prim = AesPrimitive()
    s = session()
    f = build_uplink(s, 10, b"meter", False, 5, prim=prim)
    assert verify_mic(f, s.nwk_s_key, prim)
    assert not verify_mic(f, s.nwk_s_key, HmacPrimitive())
    assert decrypt_payload(s, f, prim) == b"meter"


# -- receive windows ----------------------------------------------------------
def test_class_a_windows():
    cfg = ClassConfig()
    rx1, rx2 = class_a_windows(cfg, 10_000_000, 868_100_000, 5)
    assert (rx1.open_us, rx1.channel_hz, rx1.dr) == (11_000_000, 868_100_000, 5)
    assert (rx2.open_us, rx2.channel_hz, rx2.dr) == (12_000_000, RX2, 0)
    assert rx1.length_us == 30_000  # 8 SF7 symbols are shorter than the floor
    assert rx2.length_us == rx_window_length_us(0) == 8 * 32_768


def _after_uplink(step, cls):
    state = DeviceState(ClassConfig(device_class=cls), dev_addr=b"\x26\x00\x00\x01")
    state = step(state, UplinkStarted(0, 100_000, 868_100_000, 5)).state
    return step(state, UplinkEnded(100_000, 868_100_000, 5)).state


def test_class_a_only_hears_its_windows():
    st_ = _after_uplink(class_a_step, "A")
    assert class_a_step(st_, DownlinkArrived(1_100_000, 868_100_000, 5)).delivered
    assert class_a_step(st_, DownlinkArrived(2_100_000, RX2, 0)).delivered
    assert not class_a_step(st_, DownlinkArrived(2_100_000, 868_100_000, 5)).delivered
    assert not class_a_step(st_, DownlinkArrived(5_000_000, RX2, 0)).delivered


def test_class_c_listens_continuously_on_rx2():
    st_ = _after_uplink(class_c_step, "C")
    assert class_c_step(st_, DownlinkArrived(1_100_000, 868_100_000, 5)).delivered
    assert class_c_step(st_, DownlinkArrived(5_000_000, RX2, 0)).delivered
    assert not class_c_step(st_, DownlinkArrived(5_000_000, 868_100_000, 5)).delivered
    assert not class_c_step(st_, DownlinkArrived(50_000, RX2, 0)).delivered  # transmitting


def test_class_b_ping_slots_need_the_current_beacon():
    cfg = ClassConfig(device_class="B")
    addr = b"\x26\x00\x00\x01"
    state = DeviceState(cfg, dev_addr=addr)
    beacon = 128_000_000
    slot = ping_slots(cfg, addr, beacon)[3]
    arrive = DownlinkArrived(slot.open_us, slot.channel_hz, slot.dr)
    assert not class_b_step(state, arrive).delivered  # never synchronised
    locked = class_b_step(state, Beacon(beacon, True)).state
    assert class_b_step(locked, arrive).delivered
    lost = class_b_step(locked, Beacon(beacon + cfg.beacon_period_us, False)).state
    slot2 = ping_slots(cfg, addr, beacon + cfg.beacon_period_us)[0]
    assert not class_b_step(lost, DownlinkArrived(slot2.open_us, slot2.channel_hz, slot2.dr)).delivered


def test_ping_slot_layout():
    cfg = ClassConfig(device_class="B")
    slots = ping_slots(cfg, b"\x26\x00\x00\x02", 0)
    assert len(slots) == 16
    assert slots[0].open_us >= BEACON_RESERVED_US
    gaps = {b.open_us - a.open_us for a, b in zip(slots, slots[1:])}
    assert gaps == {256 * 30_000}
    assert slots[-1].open_us < cfg.beacon_period_us
    assert beacon_time_before(cfg, 300_000_000) == 256_000_000


def test_class_config_validation():
    with pytest.raises(ValueError):
        ClassConfig(device_class="D")
    with pytest.raises(ValueError):
        ClassConfig(rx1_delay_us=3_000_000)
    with pytest.raises(ValueError):
        ClassConfig(ping_slots_per_beacon=3)
