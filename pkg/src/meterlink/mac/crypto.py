"""Keyed 128-bit primitives used for MICs, payload encryption and key derivation.

``HmacPrimitive`` is the default simulation-grade build (stdlib only).
``AesPrimitive`` follows the LoRaWAN 1.0 construction (AES-CMAC MIC, AES
counter-mode payload, AES-ECB key derivation) and needs ``cryptography``.
"""

from __future__ import annotations

import hashlib
import hmac
import struct
from typing import Protocol


class KeyedPrimitive(Protocol):
    def mac(self, key: bytes, msg: bytes) -> bytes: ...

    def block(self, key: bytes, block: bytes) -> bytes: ...


class HmacPrimitive:
    name = "hmac-sha256"

    def mac(self, key: bytes, msg: bytes) -> bytes:
        return hmac.new(key, msg, hashlib.sha256).digest()[:16]

    def block(self, key: bytes, block: bytes) -> bytes:
        return hmac.new(key, b"\x00" + block, hashlib.sha256).digest()[:16]


class AesPrimitive:
    name = "aes-128"

    def __init__(self):
        from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
        from cryptography.hazmat.primitives.cmac import CMAC

        self._cipher = lambda key: Cipher(algorithms.AES(key), modes.ECB())
        self._cmac = lambda key: CMAC(algorithms.AES(key))

    def mac(self, key: bytes, msg: bytes) -> bytes:
        c = self._cmac(key)
        c.update(msg)
        return c.finalize()

    def block(self, key: bytes, block: bytes) -> bytes:
        enc = self._cipher(key).encryptor()
        return enc.update(block) + enc.finalize()


_default: KeyedPrimitive = HmacPrimitive()


def default_primitive() -> KeyedPrimitive:
    return _default


def set_default_primitive(p: KeyedPrimitive) -> None:
    global _default
    _default = p


def _b0(direction: int, dev_addr: bytes, fcnt: int, msg_len: int) -> bytes:
    return (b"\x49" + bytes(4) + bytes([direction]) + dev_addr
            + struct.pack("<I", fcnt) + b"\x00" + bytes([msg_len]))


def frame_mic(nwk_s_key: bytes, direction: int, dev_addr: bytes, fcnt: int, msg: bytes,
              prim: KeyedPrimitive | None = None) -> bytes:
    prim = prim or _default
    return prim.mac(nwk_s_key, _b0(direction, dev_addr, fcnt, len(msg)) + msg)[:4]


def crypt_payload(app_s_key: bytes, direction: int, dev_addr: bytes, fcnt: int, payload: bytes,
                  prim: KeyedPrimitive | None = None) -> bytes:
    """Counter-mode keystream XOR; applying it twice restores the input."""
    prim = prim or _default
    out = bytearray()
    for i in range(0, len(payload), 16):
        a_i = (b"\x01" + bytes(4) + bytes([direction]) + dev_addr
               + struct.pack("<I", fcnt) + b"\x00" + bytes([i // 16 + 1]))
        s = prim.block(app_s_key, a_i)
        chunk = payload[i:i + 16]
        out.extend(x ^ y for x, y in zip(chunk, s))
    return bytes(out)


def derive_session_keys(app_key: bytes, join_nonce: int, net_id: int, dev_nonce: int,
                        prim: KeyedPrimitive | None = None) -> tuple[bytes, bytes]:
    prim = prim or _default
    tail = (join_nonce.to_bytes(3, "little") + net_id.to_bytes(3, "little")
            + dev_nonce.to_bytes(2, "little"))
    pad = bytes(16 - 1 - len(tail))
    nwk = prim.block(app_key, b"\x01" + tail + pad)
    app = prim.block(app_key, b"\x02" + tail + pad)
    return nwk, app
