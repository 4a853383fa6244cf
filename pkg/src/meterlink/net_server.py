"""Network server that deduplicates and authenticates uplinks.

It also hands meter fragments to reassembly, schedules ACKs within the gateway
duty budgets and writes the packet log."""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field

from .airtime import dr_to_params, time_on_air_us
from .mac.classes import (
    ClassConfig,
    beacon_time_before,
    class_a_windows,
    ping_slots,
)
from .mac.crypto import KeyedPrimitive
from .mac.frames import FRAME_OVERHEAD, Frame, FrameError, JoinRequest, verify_mic
from .mac.session import Session, decrypt_payload, join_request_mic, otaa_join
from .meter_codec import FRAGMENT_LEN, Fragment, Reassembler
from .regulation import DutyLedger, channel_by_freq, eu868_plan, eu868_uplink_channels

log = logging.getLogger(__name__)

DEDUP_WINDOW_US = 2_000_000
METER_FPORT = 10
ACK_FRAME_LEN = FRAME_OVERHEAD
JOIN_ACCEPT_LEN = 17

LOG_FIELDS = ("timestamp", "dev_eui", "dev_addr", "fcnt", "frequency_mhz", "dr", "sf",
              "rssi_dbm", "snr_db", "gateway_id", "crc_ok", "payload_hex", "duplicate_of",
              "status")


@dataclass(frozen=True)
class GatewayRecord:
    gateway_id: str
    receive_time_us: int
    frequency_hz: int
    sf: int
    rssi_dbm: float
    snr_db: float
    crc_ok: bool
    frame: bytes


@dataclass
class IngestResult:
    status: str  # accepted | duplicate | rejected
    reason: str | None = None
    duplicate_of: str | None = None
    frame: Frame | None = None
    session: Session | None = None
    datagram: bytes | None = None

    @property
    def accepted(self) -> bool:
        return self.status == "accepted"


@dataclass(frozen=True)
class PacketRecord:
    timestamp: int
    dev_eui: str | None
    dev_addr: str | None
    fcnt: int | None
    frequency_mhz: float | None
    dr: int | None
    sf: int | None
    rssi_dbm: int | None
    snr_db: float | None
    gateway_id: str | None
    crc_ok: bool
    payload_hex: str
    duplicate_of: str | None = None
    status: str = "accepted"

    def to_json(self) -> str:
        return json.dumps({k: getattr(self, k) for k in LOG_FIELDS}, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "PacketRecord":
        d = json.loads(line)
        missing = [k for k in LOG_FIELDS if k not in d]
        if missing:
            raise ValueError(f"log row missing fields {missing}")
        return cls(**{k: d[k] for k in LOG_FIELDS})


def append_log(record: PacketRecord, sink) -> None:
    """Append one JSON object per line; write errors propagate."""
    sink.write(record.to_json() + "\n")


def read_log(lines) -> list[PacketRecord]:
    return [PacketRecord.from_json(line) for line in lines if line.strip()]


def choose_downlink_gateway(copies: list[GatewayRecord]) -> str:
    if not copies:
        raise ValueError("no gateway copies to choose from")
    best = min(copies, key=lambda r: (-r.rssi_dbm, r.gateway_id))
    return best.gateway_id


@dataclass(frozen=True)
class UplinkInfo:
    dev_addr: bytes
    end_us: int
    channel_hz: int
    dr: int
    gateway_id: str
    fcnt: int = 0


@dataclass(frozen=True)
class PlannedDownlink:
    gateway_id: str
    start_us: int
    channel_hz: int
    dr: int
    toa_us: int
    window: str  # rx1 | rx2 | ping | rx2-continuous

    @property
    def end_us(self) -> int:
        return self.start_us + self.toa_us


@dataclass(frozen=True)
class Dropped:
    reason: str  # duty-exhausted | window-missed


@dataclass
class GatewayTx:
    """Transmit side of a gateway: a duty ledger and a single radio."""
    gateway_id: str
    ledger: DutyLedger = field(default_factory=DutyLedger)
    tx_power_dbm: float = 14.0
    busy: list[tuple[int, int]] = field(default_factory=list)

    def radio_free(self, start: int, end: int) -> bool:
        return all(end <= s or start >= e for s, e in self.busy)

    def can_send(self, channel, start: int, toa: int) -> bool:
        return self.radio_free(start, start + toa) and self.ledger.admits(channel, start, toa)

    def send(self, channel, start: int, toa: int) -> None:
        self.ledger.record(channel, start, toa)
        self.busy.append((start, start + toa))
        if len(self.busy) > 64:
            cutoff = start - 600_000_000
            self.busy = [b for b in self.busy if b[1] > cutoff]


@dataclass
class _DedupEntry:
    first_time_us: int
    gateway_id: str
    copies: list[GatewayRecord]


class NetworkServer:
    def __init__(self, prim: KeyedPrimitive | None = None, rng: random.Random | None = None,
                 reassembly_timeout_us: int = 600_000_000, net_id: int = 0x13):
        self.prim = prim
        self.rng = rng or random.Random(0)
        self.net_id = net_id
        self.sessions: dict[bytes, Session] = {}
        self.app_keys: dict[bytes, bytes] = {}
        self.classes: dict[bytes, ClassConfig] = {}
        self.gateways: dict[str, GatewayTx] = {}
        self.reassembler = Reassembler(reassembly_timeout_us)
        self.datagrams: list[tuple[bytes, bytes]] = []
        self._last_fcnt: dict[bytes, int] = {}
        self._dedup: dict[tuple, _DedupEntry] = {}
        self._join_nonce = 0
        self.counts = {"accepted": 0, "duplicate": 0, "rejected": 0}

    # registry -----------------------------------------------------------
    def add_gateway(self, gw: GatewayTx) -> None:
        self.gateways[gw.gateway_id] = gw

    def register_session(self, session: Session, cfg: ClassConfig | None = None) -> None:
        self.sessions[session.dev_addr] = session
        self._last_fcnt.pop(session.dev_addr, None)
        if cfg is not None:
            self.classes[session.dev_addr] = cfg

    def register_otaa(self, dev_eui: bytes, app_key: bytes) -> None:
        self.app_keys[dev_eui] = app_key

    # uplinks ------------------------------------------------------------
    def ingest(self, record: GatewayRecord) -> IngestResult:
        result = self._ingest(record)
        self.counts[result.status] += 1
        return result

    def _ingest(self, rec: GatewayRecord) -> IngestResult:
        if not rec.crc_ok:
            return IngestResult("rejected", "crc")
        try:
            frame = Frame.from_bytes(rec.frame)
        except (FrameError, ValueError):
            return IngestResult("rejected", "malformed")
        session = self.sessions.get(frame.dev_addr)
        if session is None:
            return IngestResult("rejected", "unknown-device", frame=frame)
        if not verify_mic(frame, session.nwk_s_key, self.prim):
            return IngestResult("rejected", "mic", frame=frame, session=session)
        key = (frame.dev_addr, frame.fcnt, frame.mic)
        entry = self._dedup.get(key)
        if entry is not None and rec.receive_time_us - entry.first_time_us <= DEDUP_WINDOW_US:
            entry.copies.append(rec)
            return IngestResult("duplicate", duplicate_of=entry.gateway_id, frame=frame,
                                session=session)
        last = self._last_fcnt.get(frame.dev_addr)
        if last is not None and frame.fcnt <= last:
            return IngestResult("rejected", "replay", frame=frame, session=session)
        self._last_fcnt[frame.dev_addr] = frame.fcnt
        self._prune_dedup(rec.receive_time_us)
        self._dedup[key] = _DedupEntry(rec.receive_time_us, rec.gateway_id, [rec])
        result = IngestResult("accepted", frame=frame, session=session)
        if frame.fport == METER_FPORT and len(frame.frm_payload) == FRAGMENT_LEN:
            plain = decrypt_payload(session, frame, self.prim)
            try:
                dg = self.reassembler.add(session.dev_eui, Fragment.from_bytes(plain),
                                          rec.receive_time_us)
            except ValueError as exc:
                log.warning("reassembly failed for %s: %s", session.dev_eui.hex(), exc)
                dg = None
            if dg is not None:
                self.datagrams.append((session.dev_eui, dg))
                result.datagram = dg
        elif frame.fport == METER_FPORT:
            plain = decrypt_payload(session, frame, self.prim)
            self.datagrams.append((session.dev_eui, plain))
            result.datagram = plain
        return result

    def _prune_dedup(self, now_us: int) -> None:
        if len(self._dedup) < 256:
            return
        for k in [k for k, e in self._dedup.items() if now_us - e.first_time_us > DEDUP_WINDOW_US]:
            del self._dedup[k]

    def copies_of(self, frame: Frame) -> list[GatewayRecord]:
        entry = self._dedup.get((frame.dev_addr, frame.fcnt, frame.mic))
        return list(entry.copies) if entry else []

    # joins --------------------------------------------------------------
    def handle_join(self, raw: bytes) -> Session | None:
        try:
            req = JoinRequest.from_bytes(raw)
        except FrameError:
            return None
        app_key = self.app_keys.get(req.dev_eui)
        if app_key is None or join_request_mic(app_key, req.body(), self.prim) != req.mic:
            return None
        self._join_nonce += 1
        session = otaa_join(req.dev_eui, app_key, self._join_nonce, self.rng, self.net_id,
                            dev_nonce=req.dev_nonce, prim=self.prim)
        old = [a for a, s in self.sessions.items() if s.dev_eui == req.dev_eui]
        for a in old:
            del self.sessions[a]
        self.register_session(session)
        return session

    # downlinks ----------------------------------------------------------
    def schedule_ack(self, uplink: UplinkInfo, device_class: ClassConfig,
                     deadline_us: int | None = None, frame_len: int = ACK_FRAME_LEN):
        """Plan the ACK (or join accept) for ``uplink`` or explain why it is dropped."""
        gw = self.gateways[uplink.gateway_id]
        wins = class_a_windows(device_class, uplink.end_us, uplink.channel_hz, uplink.dr)
        for w in wins:
            plan = self._try_at(gw, w.open_us, w.channel_hz, w.dr, frame_len, w.kind)
            if plan is not None:
                return plan
        kind = device_class.device_class
        if kind == "A":
            return Dropped("duty-exhausted")
        if deadline_us is None:
            deadline_us = uplink.end_us + 2 * device_class.beacon_period_us
        after = wins[1].open_us + 1
        if kind == "C":
            ch = channel_by_freq(device_class.rx2_channel_hz)
            toa = time_on_air_us(dr_to_params(device_class.rx2_dr), frame_len)
            t = self._earliest(gw, ch, after, toa)
            if t + toa <= deadline_us:
                gw.send(ch, t, toa)
                return PlannedDownlink(gw.gateway_id, t, ch.center_freq_hz, device_class.rx2_dr,
                                       toa, "rx2-continuous")
            return Dropped("window-missed")
        # class B: next ping slot the gateway is allowed to use
        beacon = beacon_time_before(device_class, after)
        while beacon < deadline_us:
            for slot in ping_slots(device_class, uplink.dev_addr, beacon):
                if slot.open_us < after:
                    continue
                toa = time_on_air_us(dr_to_params(slot.dr), frame_len)
                if slot.open_us + toa > deadline_us:
                    return Dropped("window-missed")
                plan = self._try_at(gw, slot.open_us, slot.channel_hz, slot.dr, frame_len, "ping")
                if plan is not None:
                    return plan
            beacon += device_class.beacon_period_us
        return Dropped("window-missed")

    def _try_at(self, gw: GatewayTx, t: int, channel_hz: int, dr: int, frame_len: int, kind: str):
        ch = channel_by_freq(channel_hz)
        toa = time_on_air_us(dr_to_params(dr), frame_len)
        if not gw.can_send(ch, t, toa):
            return None
        gw.send(ch, t, toa)
        return PlannedDownlink(gw.gateway_id, t, channel_hz, dr, toa, kind)

    @staticmethod
    def _earliest(gw: GatewayTx, ch, t: int, toa: int) -> int:
        while True:
            t2 = gw.ledger.earliest(ch, t, toa)
            clash = [e for s, e in gw.busy if s < t2 + toa and t2 < e]
            if not clash:
                return t2
            t = max(clash)


def known_channel_frequencies() -> list[int]:
    freqs = {c.center_freq_hz for c in eu868_plan()} | {c.center_freq_hz for c in eu868_uplink_channels()}
    return sorted(freqs)
