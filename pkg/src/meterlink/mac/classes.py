"""Class A/B/C receive behaviour as small state machines.

Each ``class_*_step`` takes the device state and one event and returns a
:class:`Step`.  Uplink-end events produce the receive windows the device
opens; downlink events report whether the device heard the frame.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

from ..airtime import dr_to_params, symbol_duration_us

SECOND_US = 1_000_000
RX2_FREQ_HZ = 869_525_000
BEACON_RESERVED_US = 2_120_000
PING_SLOT_US = 30_000
BEACON_WINDOW_SLOTS = 4096


@dataclass(frozen=True)
class ClassConfig:
    device_class: str = "A"
    rx1_delay_us: int = 1 * SECOND_US
    rx2_delay_us: int = 2 * SECOND_US
    rx2_channel_hz: int = RX2_FREQ_HZ
    rx2_dr: int = 0
    beacon_period_us: int = 128 * SECOND_US
    ping_slots_per_beacon: int = 16
    ping_dr: int = 0
    ping_channel_hz: int = RX2_FREQ_HZ

    def __post_init__(self):
        if self.device_class not in ("A", "B", "C"):
            raise ValueError(f"unknown device class {self.device_class!r}")
        if self.rx1_delay_us >= self.rx2_delay_us:
            raise ValueError("RX1 must open before RX2")
        n = self.ping_slots_per_beacon
        if n < 1 or BEACON_WINDOW_SLOTS % n:
            raise ValueError("ping_slots_per_beacon must be a power of two <= 4096")


@dataclass(frozen=True)
class RxWindow:
    kind: str  # rx1 | rx2 | ping
    open_us: int
    length_us: int
    channel_hz: int
    dr: int

    def accepts(self, t_us: int, channel_hz: int, dr: int) -> bool:
        return (self.open_us <= t_us < self.open_us + self.length_us
                and channel_hz == self.channel_hz and dr == self.dr)


def rx_window_length_us(dr: int, preamble_symbols: int = 8) -> int:
    """Time the receiver stays open waiting for a preamble."""
    return max(preamble_symbols * symbol_duration_us(dr_to_params(dr)), PING_SLOT_US)


def class_a_windows(cfg: ClassConfig, uplink_end_us: int, channel_hz: int, dr: int) -> list[RxWindow]:
    return [
        RxWindow("rx1", uplink_end_us + cfg.rx1_delay_us, rx_window_length_us(dr), channel_hz, dr),
        RxWindow("rx2", uplink_end_us + cfg.rx2_delay_us, rx_window_length_us(cfg.rx2_dr),
                 cfg.rx2_channel_hz, cfg.rx2_dr),
    ]


def ping_offset(dev_addr: bytes, beacon_time_us: int, ping_period: int) -> int:
    h = hashlib.sha256(beacon_time_us.to_bytes(8, "big") + dev_addr).digest()
    return int.from_bytes(h[:2], "little") % ping_period


def ping_slots(cfg: ClassConfig, dev_addr: bytes, beacon_time_us: int) -> list[RxWindow]:
    """Ping slots of one beacon period, at deterministic per-device offsets."""
    period = BEACON_WINDOW_SLOTS // cfg.ping_slots_per_beacon
    off = ping_offset(dev_addr, beacon_time_us, period)
    base = beacon_time_us + BEACON_RESERVED_US
    length = rx_window_length_us(cfg.ping_dr)
    return [RxWindow("ping", base + (off + k * period) * PING_SLOT_US, length,
                     cfg.ping_channel_hz, cfg.ping_dr)
            for k in range(cfg.ping_slots_per_beacon)]


def beacon_time_before(cfg: ClassConfig, t_us: int) -> int:
    return t_us - t_us % cfg.beacon_period_us


@dataclass(frozen=True)
class UplinkStarted:
    t_us: int
    end_us: int
    channel_hz: int
    dr: int


@dataclass(frozen=True)
class UplinkEnded:
    t_us: int
    channel_hz: int
    dr: int


@dataclass(frozen=True)
class DownlinkArrived:
    t_us: int
    channel_hz: int
    dr: int


@dataclass(frozen=True)
class Beacon:
    t_us: int
    received: bool = True


@dataclass(frozen=True)
class DeviceState:
    config: ClassConfig
    dev_addr: bytes = b"\x00\x00\x00\x00"
    windows: tuple[RxWindow, ...] = ()
    tx_start_us: int | None = None
    tx_end_us: int | None = None
    beacon_locked: bool = False
    last_beacon_us: int | None = None

    def transmitting(self, t_us: int) -> bool:
        return (self.tx_start_us is not None and self.tx_start_us <= t_us < self.tx_end_us)


@dataclass(frozen=True)
class Step:
    state: DeviceState
    windows: tuple[RxWindow, ...] = field(default=())
    delivered: bool | None = None


def _common(state: DeviceState, event) -> Step | None:
    if isinstance(event, UplinkStarted):
        return Step(replace(state, tx_start_us=event.t_us, tx_end_us=event.end_us))
    if isinstance(event, UplinkEnded):
        wins = tuple(class_a_windows(state.config, event.t_us, event.channel_hz, event.dr))
        return Step(replace(state, windows=wins), wins)
    return None


def _in_windows(windows, event: DownlinkArrived) -> bool:
    return any(w.accepts(event.t_us, event.channel_hz, event.dr) for w in windows)


def class_a_step(state: DeviceState, event) -> Step:
    step = _common(state, event)
    if step is not None:
        return step
    if isinstance(event, DownlinkArrived):
        ok = not state.transmitting(event.t_us) and _in_windows(state.windows, event)
        return Step(state, delivered=ok)
    if isinstance(event, Beacon):
        return Step(state)
    raise TypeError(f"unsupported event {event!r}")


def class_c_step(state: DeviceState, event) -> Step:
    step = _common(state, event)
    if step is not None:
        return step
    if isinstance(event, DownlinkArrived):
        if state.transmitting(event.t_us):
            return Step(state, delivered=False)
        cfg = state.config
        in_rx1 = [w for w in state.windows if w.kind == "rx1"
                  and w.open_us <= event.t_us < w.open_us + w.length_us]
        if in_rx1:
            return Step(state, delivered=_in_windows(in_rx1, event))
        ok = event.channel_hz == cfg.rx2_channel_hz and event.dr == cfg.rx2_dr
        return Step(state, delivered=ok)
    if isinstance(event, Beacon):
        return Step(state)
    raise TypeError(f"unsupported event {event!r}")


def class_b_step(state: DeviceState, event) -> Step:
    step = _common(state, event)
    if step is not None:
        return step
    if isinstance(event, Beacon):
        if event.received:
            return Step(replace(state, beacon_locked=True, last_beacon_us=event.t_us))
        # lost beacon: behave as class A until the next one is heard
        return Step(replace(state, beacon_locked=False))
    if isinstance(event, DownlinkArrived):
        if state.transmitting(event.t_us):
            return Step(state, delivered=False)
        if _in_windows(state.windows, event):
            return Step(state, delivered=True)
        if not state.beacon_locked or state.last_beacon_us is None:
            return Step(state, delivered=False)
        beacon = beacon_time_before(state.config, event.t_us)
        if beacon != state.last_beacon_us:
            return Step(state, delivered=False)
        slots = ping_slots(state.config, state.dev_addr, beacon)
        return Step(state, delivered=_in_windows(slots, event))
    raise TypeError(f"unsupported event {event!r}")


STEP_FOR_CLASS = {"A": class_a_step, "B": class_b_step, "C": class_c_step}
