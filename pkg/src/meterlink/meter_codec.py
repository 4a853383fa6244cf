"""Smart-meter datagram codec and two-way fragmentation.

Datagram layout (96 bytes, big-endian)::

    meter_id    u64
    seq         u32
    timestamp   u32   unix seconds
    meter_type  u8    1 electricity, 2 gas, 3 water
    status      u8
    readings    19 x i32 scaled register values
    reserved    2 bytes, zero

A fragment is ``datagram_id u16 | index<<4 | count | 48 data bytes`` = 51
bytes, which is the largest application payload at DR0..DR2.
"""

from __future__ import annotations

import enum
import logging
import struct
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

DATAGRAM_LEN = 96
FRAGMENT_LEN = 51
FRAGMENT_DATA = 48
FRAGMENT_COUNT = 2
N_READINGS = 19

_LAYOUT = struct.Struct(">QIIBB19i2x")
_FRAG_HEAD = struct.Struct(">HB")

assert _LAYOUT.size == DATAGRAM_LEN
assert _FRAG_HEAD.size + FRAGMENT_DATA == FRAGMENT_LEN


class MeterType(enum.IntEnum):
    ELECTRICITY = 1
    GAS = 2
    WATER = 3


class CodecError(ValueError):
    pass


class FragmentFormatError(CodecError):
    pass


class FragmentIntegrityError(CodecError):
    pass


@dataclass(frozen=True)
class MeterDatagram:
    meter_id: int
    seq: int
    timestamp: int
    meter_type: int = MeterType.ELECTRICITY
    status_flags: int = 0
    readings: tuple[int, ...] = (0,) * N_READINGS

    def __post_init__(self):
        if len(self.readings) != N_READINGS:
            raise CodecError(f"expected {N_READINGS} readings, got {len(self.readings)}")


def encode(record: MeterDatagram) -> bytes:
    try:
        return _LAYOUT.pack(record.meter_id, record.seq, record.timestamp, int(record.meter_type),
                            record.status_flags, *record.readings)
    except struct.error as exc:
        raise CodecError(f"field out of range: {exc}") from None


def decode(raw: bytes) -> MeterDatagram:
    if len(raw) != DATAGRAM_LEN:
        raise CodecError(f"datagram must be {DATAGRAM_LEN} bytes, got {len(raw)}")
    if raw[-2:] != b"\x00\x00":
        raise CodecError("reserved bytes must be zero")
    meter_id, seq, ts, mtype, status, *readings = _LAYOUT.unpack(raw)
    return MeterDatagram(meter_id, seq, ts, mtype, status, tuple(readings))


@dataclass(frozen=True)
class Fragment:
    datagram_id: int
    index: int
    count: int
    data: bytes

    @property
    def header_byte(self) -> int:
        return (self.index << 4) | self.count

    def to_bytes(self) -> bytes:
        return _FRAG_HEAD.pack(self.datagram_id, self.header_byte) + self.data

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Fragment":
        if len(raw) != FRAGMENT_LEN:
            raise FragmentFormatError(f"fragment must be {FRAGMENT_LEN} bytes, got {len(raw)}")
        dg_id, head = _FRAG_HEAD.unpack_from(raw)
        index, count = head >> 4, head & 0x0F
        if count == 0 or index >= count:
            raise FragmentFormatError(f"bad fragment header 0x{head:02x}")
        return cls(dg_id, index, count, raw[_FRAG_HEAD.size:])


def fragment(datagram: bytes) -> list[Fragment]:
    if len(datagram) != DATAGRAM_LEN:
        raise CodecError(f"can only fragment {DATAGRAM_LEN}-byte datagrams, got {len(datagram)}")
    dg_id = int.from_bytes(datagram[8:12], "big") & 0xFFFF
    return [Fragment(dg_id, i, FRAGMENT_COUNT, datagram[i * FRAGMENT_DATA:(i + 1) * FRAGMENT_DATA])
            for i in range(FRAGMENT_COUNT)]


def reassemble(fragments) -> bytes | None:
    """Join fragments of one datagram; None while some index is still missing."""
    parts: dict[int, bytes] = {}
    ids, counts = set(), set()
    for f in fragments:
        ids.add(f.datagram_id)
        counts.add(f.count)
        if f.index in parts and parts[f.index] != f.data:
            raise FragmentIntegrityError(
                f"fragment {f.index} of datagram {f.datagram_id} arrived twice with different data")
        parts[f.index] = f.data
    if len(ids) > 1:
        raise FragmentFormatError(f"fragments of different datagrams mixed: {sorted(ids)}")
    if len(counts) > 1:
        raise FragmentFormatError(f"inconsistent fragment counts {sorted(counts)}")
    if not counts:
        return None
    (count,) = counts
    if len(parts) < count:
        return None
    return b"".join(parts[i] for i in range(count))


@dataclass
class ExpiredPartial:
    source: object
    datagram_id: int
    first_seen_us: int
    indices: tuple[int, ...]


@dataclass
class _Partial:
    first_seen_us: int
    fragments: list[Fragment] = field(default_factory=list)


class Reassembler:
    """Per-source reassembly buffers with expiry of stale partials."""

    def __init__(self, timeout_us: int = 600_000_000):
        self.timeout_us = timeout_us
        self._buffers: dict[tuple, _Partial] = {}
        self.expired: list[ExpiredPartial] = []

    def add(self, source, frag: Fragment, now_us: int) -> bytes | None:
        self.expire(now_us)
        key = (source, frag.datagram_id)
        buf = self._buffers.setdefault(key, _Partial(now_us))
        buf.fragments.append(frag)
        try:
            out = reassemble(buf.fragments)
        except CodecError:
            del self._buffers[key]
            raise
        if out is not None:
            del self._buffers[key]
        return out

    def expire(self, now_us: int) -> list[ExpiredPartial]:
        gone = []
        for key, buf in list(self._buffers.items()):
            if now_us - buf.first_seen_us > self.timeout_us:
                del self._buffers[key]
                gone.append(ExpiredPartial(key[0], key[1], buf.first_seen_us,
                                           tuple(sorted(f.index for f in buf.fragments))))
        if gone:
            log.debug("expired %d partial datagrams", len(gone))
        self.expired.extend(gone)
        return gone

    def pending(self) -> int:
        return len(self._buffers)


def payloads_for_dr(datagram: bytes, dr: int) -> list[bytes]:
    """Application payloads needed to carry one datagram at ``dr``."""
    if dr >= 3:
        return [datagram]
    return [f.to_bytes() for f in fragment(datagram)]
