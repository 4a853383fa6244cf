"""Device sessions: OTAA/ABP activation and uplink construction."""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field

from ..airtime import max_app_payload
from .crypto import KeyedPrimitive, crypt_payload, default_primitive, derive_session_keys
from .frames import FCTRL_ACK, UP, Frame, MType

FCNT_MAX = 0xFFFF
DEFAULT_NET_ID = 0x000013


class PayloadTooLarge(ValueError):
    pass


class CounterExhausted(RuntimeError):
    pass


@dataclass
class Session:
    dev_eui: bytes
    dev_addr: bytes
    nwk_s_key: bytes
    app_s_key: bytes
    activation: str  # "OTAA" | "ABP"
    fcnt_up: int = 0
    fcnt_down: int = 0
    dev_nonce: int | None = None
    app_key: bytes | None = field(default=None, repr=False)

    @property
    def dev_addr_int(self) -> int:
        return int.from_bytes(self.dev_addr, "big")


def abp_session(dev_eui: bytes, dev_addr: bytes, nwk_s_key: bytes, app_s_key: bytes) -> Session:
    return Session(dev_eui, dev_addr, nwk_s_key, app_s_key, "ABP")


def abp_keys_for(dev_eui: bytes) -> tuple[bytes, bytes, bytes]:
    """Provisioning-time (dev_addr, nwk_s_key, app_s_key), fixed per device."""
    h = hashlib.sha256(b"abp" + dev_eui).digest()
    dev_addr = bytes([0x26]) + h[:3]
    return dev_addr, h[3:19], hashlib.sha256(b"abp-app" + dev_eui).digest()[:16]


def app_key_for(dev_eui: bytes) -> bytes:
    return hashlib.sha256(b"appkey" + dev_eui).digest()[:16]


def otaa_join(dev_eui: bytes, app_key: bytes, join_nonce: int, rng: random.Random,
              net_id: int = DEFAULT_NET_ID, dev_nonce: int | None = None,
              prim: KeyedPrimitive | None = None) -> Session:
    """Complete an OTAA exchange and return the fresh session.

    ``join_nonce`` comes from the network's join accept; the device nonce is
    drawn from ``rng`` unless given.  Counters restart at zero.
    """
    if dev_nonce is None:
        dev_nonce = rng.getrandbits(16)
    nwk, app = derive_session_keys(app_key, join_nonce, net_id, dev_nonce, prim)
    # NwkID (7 bits of NetID) in the top of DevAddr, the rest from the network
    nwk_id = net_id & 0x7F
    addr = (nwk_id << 25) | rng.getrandbits(25)
    return Session(dev_eui, addr.to_bytes(4, "big"), nwk, app, "OTAA",
                   dev_nonce=dev_nonce, app_key=app_key)


def build_uplink(session: Session, fport: int, payload: bytes, confirmed: bool, dr: int,
                 ack: bool = False, prim: KeyedPrimitive | None = None) -> Frame:
    limit = max_app_payload(dr)
    if len(payload) > limit:
        raise PayloadTooLarge(f"{len(payload)} bytes exceed the DR{dr} limit of {limit}")
    if session.fcnt_up > FCNT_MAX:
        raise CounterExhausted("16-bit uplink counter exhausted; rejoin required")
    fcnt = session.fcnt_up
    session.fcnt_up += 1
    enc = crypt_payload(session.app_s_key, UP, session.dev_addr, fcnt, payload, prim)
    mtype = MType.CONFIRMED_UP if confirmed else MType.UNCONFIRMED_UP
    frame = Frame(mtype, session.dev_addr, FCTRL_ACK if ack else 0, fcnt, fport, enc)
    return frame.with_mic(session.nwk_s_key, prim)


def build_ack(session: Session, prim: KeyedPrimitive | None = None) -> Frame:
    """Empty unconfirmed downlink with the ACK bit set."""
    fcnt = session.fcnt_down & FCNT_MAX
    session.fcnt_down += 1
    frame = Frame(MType.UNCONFIRMED_DOWN, session.dev_addr, FCTRL_ACK, fcnt, 0, b"")
    return frame.with_mic(session.nwk_s_key, prim)


def decrypt_payload(session: Session, frame: Frame, prim: KeyedPrimitive | None = None) -> bytes:
    return crypt_payload(session.app_s_key, frame.direction, frame.dev_addr, frame.fcnt,
                         frame.frm_payload, prim)


def join_request_mic(app_key: bytes, body: bytes, prim: KeyedPrimitive | None = None) -> bytes:
    return (prim or default_primitive()).mac(app_key, body)[:4]

