"""EU868 channel plan, duty-cycle ledger and ERP limits.

The ledger enforces the per-transmission off-time rule: a transmission of
airtime ``T`` on a sub-band with duty ``d`` blocks that sub-band for
``T / d`` from its start.  Blocked intervals never overlap, which bounds the
airtime inside any sliding window of length ``W`` by ``d * W`` plus at most
one in-flight packet.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from fractions import Fraction

HOUR_US = 3_600_000_000


@dataclass(frozen=True)
class Channel:
    center_freq_hz: int
    bw_hz: int
    sub_band_id: str
    duty_cycle: Fraction
    max_erp_dbm: float
    mandatory: bool = False

    @property
    def freq_mhz(self) -> float:
        return self.center_freq_hz / 1e6

    def to_dict(self) -> dict:
        return {
            "center_freq_hz": self.center_freq_hz,
            "bw_hz": self.bw_hz,
            "sub_band_id": self.sub_band_id,
            "duty_cycle": str(self.duty_cycle),
            "max_erp_dbm": self.max_erp_dbm,
            "mandatory": self.mandatory,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Channel":
        return cls(
            center_freq_hz=int(d["center_freq_hz"]),
            bw_hz=int(d.get("bw_hz", 125_000)),
            sub_band_id=str(d["sub_band_id"]),
            duty_cycle=Fraction(str(d["duty_cycle"])),
            max_erp_dbm=float(d["max_erp_dbm"]),
            mandatory=bool(d.get("mandatory", False)),
        )


def _ch(freq_hz, sub_band, duty, erp, mandatory=False):
    return Channel(freq_hz, 125_000, sub_band, Fraction(duty), erp, mandatory)


def eu868_plan() -> list[Channel]:
    """The six regulated EU868 channels with their duty and ERP limits."""
    return [
        _ch(868_100_000, "g1", "1/100", 14, True),
        _ch(868_300_000, "g1", "1/100", 14, True),
        _ch(868_500_000, "g1", "1/100", 14, True),
        _ch(868_850_000, "g2", "1/1000", 14),
        _ch(869_050_000, "g2", "1/1000", 14),
        _ch(869_525_000, "g3", "1/10", 27),
    ]


def eu868_uplink_channels() -> list[Channel]:
    """The eight uplink channels of a joined device: 3 mandatory + 5 network-added."""
    mandatory = [c for c in eu868_plan() if c.mandatory]
    extra = [_ch(f, "g", "1/100", 14) for f in (867_100_000, 867_300_000, 867_500_000,
                                                  867_700_000, 867_900_000)]
    return mandatory + extra


def rx2_channel() -> Channel:
    return eu868_plan()[5]


def channel_by_freq(freq_hz: int, channels: list[Channel] | None = None) -> Channel:
    pool = channels if channels is not None else eu868_plan() + eu868_uplink_channels()[3:]
    for c in pool:
        if c.center_freq_hz == freq_hz:
            return c
    raise KeyError(f"no channel at {freq_hz} Hz")


def wait_after(toa, duty_cycle):
    """Mandatory silence after a transmission of ``toa`` at ``duty_cycle``.

    Returns the same numeric type as ``toa`` when it is an int (microseconds,
    rounded up) and a Fraction/float otherwise.
    """
    duty = Fraction(duty_cycle) if not isinstance(duty_cycle, float) else Fraction(str(duty_cycle))
    if not 0 < duty <= 1:
        raise ValueError(f"duty cycle must be in (0, 1], got {duty_cycle}")
    if toa < 0:
        raise ValueError("time on air must be non-negative")
    off = Fraction(toa) * (1 / duty - 1)
    if isinstance(toa, int):
        return -(-off.numerator // off.denominator)
    if isinstance(toa, float):
        return float(off)
    return off


class DutyCycleExceeded(ValueError):
    """A single transmission needs more airtime than the window allows."""


@dataclass(frozen=True)
class ErpViolation:
    channel_hz: int
    excess_db: float


def check_erp(tx_power_dbm: float, channel: Channel) -> ErpViolation | None:
    """None when ``tx_power_dbm`` is within the channel ERP limit."""
    if tx_power_dbm <= channel.max_erp_dbm:
        return None
    return ErpViolation(channel.center_freq_hz, tx_power_dbm - channel.max_erp_dbm)


@dataclass
class _Band:
    # parallel sorted lists of blocked intervals [start, stop)
    starts: list[int] = field(default_factory=list)
    stops: list[int] = field(default_factory=list)
    airtimes: list[int] = field(default_factory=list)


class DutyLedger:
    """Airtime bookkeeping for one transmitter (node or gateway).

    Times are integer microseconds.  ``per_channel=True`` keys the budget on
    the channel frequency instead of the sub-band.
    """

    def __init__(self, window_us: int = HOUR_US, per_channel: bool = False):
        self.window_us = window_us
        self.per_channel = per_channel
        self._bands: dict[object, _Band] = {}

    def key(self, channel: Channel):
        return channel.center_freq_hz if self.per_channel else channel.sub_band_id

    def _blocked_us(self, channel: Channel, toa_us: int) -> int:
        d = channel.duty_cycle
        if toa_us > d * self.window_us:
            raise DutyCycleExceeded(
                f"{toa_us} us exceeds the {float(d):.3%} budget of a {self.window_us} us window"
            )
        blocked = Fraction(toa_us) / d
        return -(-blocked.numerator // blocked.denominator)

    def earliest(self, channel: Channel, t: int, toa_us: int) -> int:
        """Smallest start >= t at which the transmission fits the budget."""
        span = self._blocked_us(channel, toa_us)
        band = self._bands.get(self.key(channel))
        if band is None:
            return t
        start = t
        i = bisect.bisect_right(band.starts, start) - 1
        if i >= 0 and band.stops[i] > start:
            start = band.stops[i]
        i += 1
        while i < len(band.starts) and band.starts[i] < start + span:
            start = max(start, band.stops[i])
            i += 1
        return start

    def admits(self, channel: Channel, t: int, toa_us: int) -> bool:
        return self.earliest(channel, t, toa_us) == t

    def record(self, channel: Channel, t: int, toa_us: int) -> None:
        if not self.admits(channel, t, toa_us):
            raise ValueError(f"transmission at {t} us violates the duty budget")
        span = self._blocked_us(channel, toa_us)
        band = self._bands.setdefault(self.key(channel), _Band())
        i = bisect.bisect_left(band.starts, t)
        band.starts.insert(i, t)
        band.stops.insert(i, t + span)
        band.airtimes.insert(i, toa_us)

    def try_reserve(self, channel: Channel, t: int, toa_us: int, record: bool = True) -> int:
        start = self.earliest(channel, t, toa_us)
        if record:
            self.record(channel, start, toa_us)
        return start

    def free_at(self, channel: Channel, t: int) -> int:
        """Instant from which the channel's budget is no longer blocked."""
        band = self._bands.get(self.key(channel))
        if band is None:
            return t
        i = bisect.bisect_right(band.starts, t) - 1
        if i >= 0 and band.stops[i] > t:
            return band.stops[i]
        return t

    def records(self):
        """Yield (key, start_us, airtime_us) in start order per key."""
        for k, band in self._bands.items():
            for s, a in zip(band.starts, band.airtimes):
                yield k, s, a

    def prune(self, before_us: int) -> None:
        """Drop records whose blocking ended before ``before_us``."""
        for band in self._bands.values():
            n = 0
            while n < len(band.stops) and band.stops[n] + self.window_us < before_us:
                n += 1
            if n:
                del band.starts[:n], band.stops[:n], band.airtimes[:n]


def window_violations(records, duty_by_key: dict, window_us: int = HOUR_US) -> list[tuple]:
    """Brute-force sliding-window audit of (key, start_us, airtime_us) records.

    Every window of length ``window_us`` that ends at a transmission end is
    checked: the airtime falling inside it may exceed ``duty * window`` by
    at most one packet.  Returns the offending (key, window_end, airtime).
    """
    by_key: dict = {}
    for k, s, a in records:
        by_key.setdefault(k, []).append((s, a))
    bad = []
    for k, txs in by_key.items():
        txs.sort()
        budget = Fraction(duty_by_key[k]) * window_us
        biggest = max(a for _, a in txs)
        for s_end, a_end in txs:
            w_end = s_end + a_end
            w_start = w_end - window_us
            inside = 0
            for s, a in txs:
                lo, hi = max(s, w_start), min(s + a, w_end)
                if hi > lo:
                    inside += hi - lo
            if inside > budget + biggest:
                bad.append((k, w_end, inside))
    return bad
