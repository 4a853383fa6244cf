"""LoRaWAN 1.0 frame layouts.

Data frames always carry FPort, so the PHY payload is exactly 13 bytes
longer than the application payload, including for empty payloads.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from .crypto import KeyedPrimitive, frame_mic

FRAME_OVERHEAD = 13
FCTRL_ACK = 0x20
FCTRL_ADR = 0x80

UP, DOWN = 0, 1


class MType(enum.IntEnum):
    JOIN_REQUEST = 0
    JOIN_ACCEPT = 1
    UNCONFIRMED_UP = 2
    UNCONFIRMED_DOWN = 3
    CONFIRMED_UP = 4
    CONFIRMED_DOWN = 5

    @property
    def mhdr(self) -> int:
        return (self.value << 5) | 0x00  # major version LoRaWAN R1

    @property
    def uplink(self) -> bool:
        return self in (MType.JOIN_REQUEST, MType.UNCONFIRMED_UP, MType.CONFIRMED_UP)


class FrameError(ValueError):
    pass


@dataclass(frozen=True)
class Frame:
    mtype: MType
    dev_addr: bytes
    fctrl: int
    fcnt: int
    fport: int
    frm_payload: bytes
    mic: bytes = b"\x00\x00\x00\x00"

    @property
    def ack(self) -> bool:
        return bool(self.fctrl & FCTRL_ACK)

    @property
    def confirmed(self) -> bool:
        return self.mtype in (MType.CONFIRMED_UP, MType.CONFIRMED_DOWN)

    @property
    def direction(self) -> int:
        return UP if self.mtype.uplink else DOWN

    def header_and_payload(self) -> bytes:
        return (bytes([self.mtype.mhdr]) + self.dev_addr[::-1] + bytes([self.fctrl])
                + struct.pack("<H", self.fcnt) + bytes([self.fport]) + self.frm_payload)

    def to_bytes(self) -> bytes:
        return self.header_and_payload() + self.mic

    def __len__(self) -> int:
        return FRAME_OVERHEAD + len(self.frm_payload)

    def with_mic(self, nwk_s_key: bytes, prim: KeyedPrimitive | None = None) -> "Frame":
        mic = frame_mic(nwk_s_key, self.direction, self.dev_addr, self.fcnt,
                        self.header_and_payload(), prim)
        return Frame(self.mtype, self.dev_addr, self.fctrl, self.fcnt, self.fport,
                     self.frm_payload, mic)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Frame":
        if len(raw) < FRAME_OVERHEAD:
            raise FrameError(f"data frame needs at least {FRAME_OVERHEAD} bytes, got {len(raw)}")
        if raw[0] & 0x1F:
            raise FrameError(f"unsupported RFU/major bits in MHDR 0x{raw[0]:02x}")
        mtype = MType(raw[0] >> 5)
        if mtype in (MType.JOIN_REQUEST, MType.JOIN_ACCEPT):
            raise FrameError(f"{mtype.name} is not a data frame")
        dev_addr = raw[1:5][::-1]
        (fcnt,) = struct.unpack("<H", raw[6:8])
        return cls(mtype, dev_addr, raw[5], fcnt, raw[8], raw[9:-4], raw[-4:])


def verify_mic(frame: Frame, nwk_s_key: bytes, prim: KeyedPrimitive | None = None) -> bool:
    expected = frame_mic(nwk_s_key, frame.direction, frame.dev_addr, frame.fcnt,
                         frame.header_and_payload(), prim)
    return expected == frame.mic


@dataclass(frozen=True)
class JoinRequest:
    app_eui: bytes
    dev_eui: bytes
    dev_nonce: int
    mic: bytes = b"\x00\x00\x00\x00"

    def body(self) -> bytes:
        return (bytes([MType.JOIN_REQUEST.mhdr]) + self.app_eui[::-1] + self.dev_eui[::-1]
                + struct.pack("<H", self.dev_nonce))

    def to_bytes(self) -> bytes:
        return self.body() + self.mic

    @classmethod
    def from_bytes(cls, raw: bytes) -> "JoinRequest":
        if len(raw) != 23 or raw[0] >> 5 != MType.JOIN_REQUEST:
            raise FrameError("not a 23-byte join request")
        (nonce,) = struct.unpack("<H", raw[17:19])
        return cls(raw[1:9][::-1], raw[9:17][::-1], nonce, raw[19:23])


@dataclass(frozen=True)
class JoinAccept:
    join_nonce: int
    net_id: int
    dev_addr: bytes
    dl_settings: int = 0
    rx_delay: int = 1
    mic: bytes = b"\x00\x00\x00\x00"

    def body(self) -> bytes:
        return (bytes([MType.JOIN_ACCEPT.mhdr]) + self.join_nonce.to_bytes(3, "little")
                + self.net_id.to_bytes(3, "little") + self.dev_addr[::-1]
                + bytes([self.dl_settings, self.rx_delay]))

    def to_bytes(self) -> bytes:
        return self.body() + self.mic

    @classmethod
    def from_bytes(cls, raw: bytes) -> "JoinAccept":
        if len(raw) != 17 or raw[0] >> 5 != MType.JOIN_ACCEPT:
            raise FrameError("not a 17-byte join accept")
        return cls(int.from_bytes(raw[1:4], "little"), int.from_bytes(raw[4:7], "little"),
                   raw[7:11][::-1], raw[11], raw[12], raw[13:17])


JOIN_REQUEST_LEN = 23
JOIN_ACCEPT_LEN = 17
