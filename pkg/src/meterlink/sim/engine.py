"""Deterministic discrete-event execution of a :class:`Scenario`.

Events are ordered by (time in integer microseconds, insertion sequence).
All randomness comes from ``random.Random`` streams seeded from the
scenario seed and a stream name, so a run is reproducible byte for byte.
"""

from __future__ import annotations

import heapq
import io
import logging
import random
from collections import deque
from dataclasses import dataclass, field, replace

from ..airtime import dr_to_params, time_on_air_us
from ..link_model import (
    Transmission,
    collide,
    draw_shadowing,
    effective_antenna_gain,
    path_loss,
    receive_decision,
    rssi as rssi_of,
    sensitivity_dbm,
    snr,
)
from ..mac.classes import (
    BEACON_WINDOW_SLOTS,
    PING_SLOT_US,
    STEP_FOR_CLASS,
    Beacon,
    ClassConfig,
    DeviceState,
    DownlinkArrived,
    UplinkEnded,
    UplinkStarted,
    rx_window_length_us,
)
from ..mac.crypto import KeyedPrimitive
from ..mac.frames import JoinRequest
from ..mac.session import (
    Session,
    abp_keys_for,
    abp_session,
    app_key_for,
    build_ack,
    build_uplink,
    join_request_mic,
)
from ..meter_codec import MeterDatagram, encode, payloads_for_dr
from ..net_server import (
    JOIN_ACCEPT_LEN,
    METER_FPORT,
    Dropped,
    GatewayRecord,
    GatewayTx,
    NetworkServer,
    PacketRecord,
    PlannedDownlink,
    UplinkInfo,
    append_log,
    choose_downlink_gateway,
)
from ..regulation import DutyLedger, eu868_uplink_channels
from .scenario import NodeConfig, Scenario
from .stats import GatewayStats, NodeStats, RunStats

log = logging.getLogger(__name__)

US = 1_000_000
EPOCH_S = 1_546_300_800  # timestamp base for generated meter readings
RAW_FPORT = 1
JOIN_DR = 0

# event kinds; the value only breaks ties that the sequence number already breaks
PERIOD, ATTEMPT, TX_END, DL_END, ACK_TIMEOUT, BEACON = range(6)


@dataclass
class _Pending:
    payload: bytes
    fport: int
    retries: int = 0
    acked: bool = False
    fcnt: int = -1


@dataclass
class _Node:
    cfg: NodeConfig
    eui: bytes
    rng: random.Random
    ledger: DutyLedger
    class_cfg: ClassConfig
    state: DeviceState
    session: Session | None = None
    queue: deque = field(default_factory=deque)
    pending: _Pending | None = None
    retry_ready: bool = False
    busy_until: int = 0
    attempt_at: int | None = None
    datagram_seq: int = 0
    start_us: int = 0
    stop_us: int = 0
    tx_count: int = 0


@dataclass
class _Tx:
    tx: Transmission
    node: _Node
    kind: str  # data | join
    dr: int
    confirmed: bool
    fport: int
    # per gateway: (rssi, true_snr, reported_snr, locked, outcome)
    links: dict = field(default_factory=dict)


@dataclass
class RunResult:
    log_lines: list[str]
    stats: RunStats

    @property
    def log_text(self) -> str:
        return "".join(line + "\n" for line in self.log_lines)


class Simulator:
    def __init__(self, scenario: Scenario, prim: KeyedPrimitive | None = None):
        scenario.validate()
        self.sc = scenario
        self.prim = prim
        seed = scenario.seed
        self._seed = seed
        self.link_rng = random.Random(f"{seed}:link")
        self.server = NetworkServer(prim=prim, rng=random.Random(f"{seed}:server"))
        self.env = scenario.environment
        self.window_us = round(scenario.duty_window_s * US)
        self.duration_us = round(scenario.duration_s * US)
        self.uplink_channels = {c.center_freq_hz: c for c in eu868_uplink_channels()}
        self.gateways = sorted(scenario.gateways, key=lambda g: g.id)
        self.gw_stats = {g.id: GatewayStats() for g in self.gateways}
        self.node_stats: dict[str, NodeStats] = {}
        self._active = {g.id: 0 for g in self.gateways}
        self._recent: list[_Tx] = []
        self._events: list = []
        self._seq = 0
        self._out = io.StringIO()
        self._shadow: dict[tuple, float] = {}
        for g in self.gateways:
            self.server.add_gateway(GatewayTx(
                g.id, DutyLedger(self.window_us, scenario.per_channel_duty), g.tx_power_dbm))
        self.nodes = [self._make_node(n) for n in scenario.nodes]

    # -- setup ----------------------------------------------------------
    def _make_node(self, cfg: NodeConfig) -> _Node:
        eui = bytes.fromhex(cfg.dev_eui)
        ccfg = ClassConfig(device_class=cfg.device_class, rx2_dr=self.sc.rx2_dr)
        node = _Node(cfg, eui, random.Random(f"{self._seed}:node:{cfg.dev_eui}"),
                     DutyLedger(self.window_us, self.sc.per_channel_duty), ccfg,
                     DeviceState(ccfg))
        node.start_us = round(cfg.start_s * US)
        stop = cfg.stop_s if cfg.stop_s is not None else self.sc.duration_s
        node.stop_us = min(round(stop * US), self.duration_us)
        self.node_stats[cfg.dev_eui] = NodeStats()
        if cfg.activation == "ABP":
            addr, nwk, app = abp_keys_for(eui)
            node.session = abp_session(eui, addr, nwk, app)
            node.state = replace(node.state, dev_addr=addr)
            # the server holds its own copy of the provisioned session
            self.server.register_session(abp_session(eui, addr, nwk, app), ccfg)
        else:
            self.server.register_otaa(eui, app_key_for(eui))
        return node

    def shadowing(self, node: _Node, gw_id: str) -> float:
        key = (node.cfg.shadow_key, gw_id)
        if key not in self._shadow:
            rng = random.Random(f"{self._seed}:shadow:{key[0]}:{gw_id}")
            self._shadow[key] = draw_shadowing(self.env, rng)
        return self._shadow[key]

    def _push(self, t: int, kind: int, data) -> None:
        heapq.heappush(self._events, (t, self._seq, kind, data))
        self._seq += 1

    def _emit(self, rec: PacketRecord) -> None:
        append_log(rec, self._out)

    # -- main loop ------------------------------------------------------
    def run(self) -> RunResult:
        for node in self.nodes:
            cfg = node.cfg
            period_us = round(cfg.send_period_s * US)
            phase = cfg.phase_s
            first = node.start_us + (round(phase * US) if phase is not None
                                     else node.rng.randrange(max(period_us, 1)))
            self._push(first, PERIOD, node)
        if any(n.cfg.device_class == "B" for n in self.nodes):
            self._push(0, BEACON, None)
        handlers = {PERIOD: self._on_period, ATTEMPT: self._on_attempt, TX_END: self._on_tx_end,
                    DL_END: self._on_dl_end, ACK_TIMEOUT: self._on_ack_timeout,
                    BEACON: self._on_beacon}
        while self._events:
            t, _, kind, data = heapq.heappop(self._events)
            self.now = t
            handlers[kind](data)
        lines = self._out.getvalue().splitlines()
        return RunResult(lines, self._collect_stats())

    def _collect_stats(self) -> RunStats:
        st = RunStats(nodes=self.node_stats, gateways=self.gw_stats,
                      server=dict(self.server.counts))
        st.server["reassembly_expired"] = len(self.server.reassembler.expired)
        st.datagrams_delivered = len(self.server.datagrams)
        return st

    # -- traffic --------------------------------------------------------
    def _on_period(self, node: _Node) -> None:
        cfg = node.cfg
        if self.now >= node.stop_us:
            return
        st = self.node_stats[cfg.dev_eui]
        if cfg.max_datagrams is None or st.datagrams_generated < cfg.max_datagrams:
            if node.queue or node.pending is not None:
                st.datagrams_skipped += 1
            else:
                st.datagrams_generated += 1
                for p in self._make_payloads(node):
                    node.queue.append(p)
        period = cfg.send_period_s * US
        jitter = self.sc.jitter if cfg.jitter is None else cfg.jitter
        nxt = self.now + round(period * (1 + jitter * (2 * node.rng.random() - 1)))
        self._push(max(nxt, self.now + 1), PERIOD, node)
        self._kick(node)

    def _make_payloads(self, node: _Node) -> list[tuple[bytes, int]]:
        cfg = node.cfg
        node.datagram_seq += 1
        if cfg.payload == "meter":
            readings = tuple(node.rng.randrange(0, 1 << 24) for _ in range(19))
            dg = MeterDatagram(int.from_bytes(node.eui, "big"), node.datagram_seq & 0xFFFFFFFF,
                               EPOCH_S + self.now // US, 1, 0, readings)
            return [(p, METER_FPORT) for p in payloads_for_dr(encode(dg), cfg.dr)]
        if "raw_hex" in cfg.payload:
            return [(bytes.fromhex(cfg.payload["raw_hex"]), RAW_FPORT)]
        return [(bytes(node.rng.getrandbits(8) for _ in range(cfg.payload["size"])), RAW_FPORT)]

    def _kick(self, node: _Node) -> None:
        t = max(self.now, node.busy_until)
        if node.attempt_at is not None and node.attempt_at <= t:
            return
        node.attempt_at = t
        self._push(t, ATTEMPT, node)

    def _channels_for(self, node: _Node):
        if node.cfg.channels:
            chans = [self.uplink_channels[f] for f in node.cfg.channels]
            if node.session is None:
                chans = [c for c in chans if c.mandatory]
            return chans
        if node.session is None:
            return [c for c in self.uplink_channels.values() if c.mandatory]
        return list(self.uplink_channels.values())

    def _on_attempt(self, node: _Node) -> None:
        if node.attempt_at != self.now:
            return  # superseded
        node.attempt_at = None
        if self.now < node.busy_until:
            self._kick(node)
            return
        if self.now >= node.stop_us:
            return
        if node.session is None:
            what = "join"
            length = 23
        elif node.pending is not None and node.retry_ready:
            what = "retry"
            length = 13 + len(node.pending.payload)
        elif node.queue and node.pending is None:
            what = "data"
            length = 13 + len(node.queue[0][0])
        else:
            return
        # joins go out at the most robust rate; data at the configured one
        dr = JOIN_DR if what == "join" else node.cfg.dr
        params = dr_to_params(dr)
        toa = time_on_air_us(params, length)
        chans = self._channels_for(node)
        earliest = {c.center_freq_hz: node.ledger.earliest(c, self.now, toa) for c in chans}
        t_min = min(earliest.values())
        if t_min > self.now:
            node.attempt_at = t_min
            self._push(t_min, ATTEMPT, node)
            return
        ch = node.rng.choice(sorted((c for c in chans if earliest[c.center_freq_hz] == self.now),
                                    key=lambda c: c.center_freq_hz))
        st = self.node_stats[node.cfg.dev_eui]
        if what == "join":
            dev_nonce = node.rng.getrandbits(16)
            body = JoinRequest(b"\x00" * 8, node.eui, dev_nonce)
            app_key = app_key_for(node.eui)
            raw = JoinRequest(body.app_eui, body.dev_eui, dev_nonce,
                              join_request_mic(app_key, body.body(), self.prim)).to_bytes()
            kind, confirmed, fport = "join", False, 0
            st.join_attempts += 1
        else:
            if what == "data":
                payload, fport = node.queue.popleft()
                node.pending = _Pending(payload, fport) if node.cfg.confirmed else None
            else:
                payload, fport = node.pending.payload, node.pending.fport
                node.pending.retries += 1
            node.retry_ready = False
            frame = build_uplink(node.session, fport, payload, node.cfg.confirmed, node.cfg.dr,
                                 prim=self.prim)
            if node.pending is not None:
                node.pending.fcnt = frame.fcnt
                node.pending.acked = False
            raw = frame.to_bytes()
            kind, confirmed = "data", node.cfg.confirmed
            st.sent += 1
            st.confirmed_sent += int(confirmed)
        node.ledger.record(ch, self.now, toa)
        tx = Transmission(node.cfg.dev_eui, ch.center_freq_hz, params.sf, self.now, toa,
                          node.cfg.tx_power_dbm, raw, self._seq)
        rec = _Tx(tx, node, kind, dr, confirmed, fport)
        node.state = STEP_FOR_CLASS[node.class_cfg.device_class](
            node.state, UplinkStarted(self.now, tx.end_us, ch.center_freq_hz, dr)).state
        # no new uplink until the receive windows have closed
        node.busy_until = tx.end_us + node.class_cfg.rx2_delay_us + rx_window_length_us(0)
        self._start_reception(rec)
        self._push(tx.end_us, TX_END, rec)
        node.tx_count += 1
        if node.tx_count % 256 == 0:
            node.ledger.prune(self.now - self.window_us)

    def _start_reception(self, rec: _Tx) -> None:
        tx, node = rec.tx, rec.node
        self._recent = [r for r in self._recent if r.tx.end_us > self.now - 30 * US]
        self._recent.append(rec)
        gain = effective_antenna_gain(node.cfg.gain_setting_dbi)
        for g in self.gateways:
            gs = self.gw_stats[g.id]
            gs.transmissions += 1
            loss = path_loss(self.env, node.cfg.position, g.position, node.cfg.obstacles_to(g.id),
                             self.shadowing(node, g.id))
            p = rssi_of(tx.tx_power_dbm, gain, g.rx_gain_db, loss)
            true_snr, rep_snr = snr(p, 125_000, self.env.noise_figure_db)
            if p < sensitivity_dbm(tx.sf):
                rec.links[g.id] = (p, true_snr, rep_snr, False, "below_threshold")
            elif self._active[g.id] >= g.demodulators:
                rec.links[g.id] = (p, true_snr, rep_snr, False, "saturated")
            else:
                self._active[g.id] += 1
                rec.links[g.id] = (p, true_snr, rep_snr, True, None)

    # -- reception ------------------------------------------------------
    def _on_tx_end(self, rec: _Tx) -> None:
        tx, node = rec.tx, rec.node
        records: list[GatewayRecord] = []
        for g in self.gateways:
            p, true_snr, rep_snr, locked, outcome = rec.links[g.id]
            gs = self.gw_stats[g.id]
            if locked:
                self._active[g.id] -= 1
                if any(collide(tx, o.tx) for o in self._recent if o is not rec):
                    outcome = "collided"
                    records.append(GatewayRecord(g.id, self.now, tx.channel_hz, tx.sf, p, rep_snr,
                                                 False, tx.frame))
                elif receive_decision(p, true_snr, tx.sf, self.link_rng):
                    outcome = "received"
                    records.append(GatewayRecord(g.id, self.now, tx.channel_hz, tx.sf, p, rep_snr,
                                                 True, tx.frame))
                    gs.channel_usage[tx.channel_hz] += 1
                else:
                    outcome = "below_threshold"
            setattr(gs, outcome, getattr(gs, outcome) + 1)
        node.state = STEP_FOR_CLASS[node.class_cfg.device_class](
            node.state, UplinkEnded(self.now, tx.channel_hz, rec.dr)).state
        if rec.kind == "join":
            self._finish_join(rec, records)
        else:
            self._finish_data(rec, records)

    def _row(self, rec: _Tx, status: str, gw: GatewayRecord | None = None,
             dup: str | None = None, with_addr: bool = True) -> PacketRecord:
        tx, node = rec.tx, rec.node
        frame_fcnt = int.from_bytes(tx.frame[6:8], "little") if rec.kind == "data" else None
        addr = tx.frame[1:5][::-1].hex() if rec.kind == "data" and with_addr else None
        return PacketRecord(
            timestamp=self.now, dev_eui=node.cfg.dev_eui, dev_addr=addr,
            fcnt=frame_fcnt if with_addr else None,
            frequency_mhz=tx.channel_hz / 1e6, dr=rec.dr, sf=tx.sf,
            rssi_dbm=None if gw is None else round(gw.rssi_dbm),
            snr_db=None if gw is None else round(gw.snr_db, 1),
            gateway_id=None if gw is None else gw.gateway_id,
            crc_ok=False if gw is None else gw.crc_ok,
            payload_hex=tx.frame.hex() if (gw is None or gw.crc_ok) else "",
            duplicate_of=dup, status=status)

    def _finish_data(self, rec: _Tx, records: list[GatewayRecord]) -> None:
        node = rec.node
        st = self.node_stats[node.cfg.dev_eui]
        accepted = None
        for r in records:
            res = self.server.ingest(r)
            if not r.crc_ok:
                self._emit(self._row(rec, "rejected:crc", r, with_addr=False))
                continue
            if res.accepted:
                accepted = (r, res)
                self._emit(self._row(rec, "accepted", r))
                st.received += 1
                st.rssi.append(round(r.rssi_dbm))
                st.snr.append(round(r.snr_db, 1))
            elif res.status == "duplicate":
                self._emit(self._row(rec, "duplicate", r, dup=res.duplicate_of))
            else:
                self._emit(self._row(rec, f"rejected:{res.reason}", r))
        if accepted is None:
            self._emit(self._row(rec, "lost"))
        if not rec.confirmed:
            node.pending = None
            self._kick(node)
            return
        deadline = self._ack_deadline(rec)
        pend = node.pending
        node.busy_until = max(node.busy_until, deadline)
        self._push(deadline, ACK_TIMEOUT, (node, pend))
        if accepted is None:
            self._ack_row(rec, "ack_missed:uplink-lost", None, b"")
            return
        frame = accepted[1].frame
        gw_id = choose_downlink_gateway(self.server.copies_of(frame))
        up = UplinkInfo(frame.dev_addr, self.now, rec.tx.channel_hz, rec.dr, gw_id, frame.fcnt)
        plan = self.server.schedule_ack(up, node.class_cfg, deadline)
        if isinstance(plan, Dropped):
            self._ack_row(rec, f"ack_missed:{plan.reason}", None, b"")
            return
        session = self.server.sessions[frame.dev_addr]
        ack = build_ack(session, self.prim).to_bytes()
        self.gw_stats[plan.gateway_id].downlinks += 1
        self._push(plan.end_us, DL_END, ("ack", rec, plan, ack))

    def _ack_deadline(self, rec: _Tx) -> int:
        cfg = rec.node.class_cfg
        rx2_close = (cfg.rx2_delay_us + rx_window_length_us(cfg.rx2_dr)
                     + time_on_air_us(dr_to_params(cfg.rx2_dr), JOIN_ACCEPT_LEN))
        wait = max(round(self.sc.retry_delay_s * US), rx2_close)
        if cfg.device_class == "B":
            # give the server at least one full ping period after RX2
            period = BEACON_WINDOW_SLOTS // cfg.ping_slots_per_beacon * PING_SLOT_US
            wait = max(wait, cfg.rx2_delay_us + period + rx2_close)
        return self.now + wait

    def _ack_row(self, rec: _Tx, status: str, plan: PlannedDownlink | None, frame: bytes,
                 p: float | None = None, s: float | None = None) -> None:
        node = rec.node
        st = self.node_stats[node.cfg.dev_eui]
        if status.startswith("ack_missed"):
            st.ack_missed += 1
        elif status == "ack_delivered":
            st.ack_delivered += 1
        self._emit(PacketRecord(
            timestamp=self.now, dev_eui=node.cfg.dev_eui,
            dev_addr=rec.tx.frame[1:5][::-1].hex() if rec.kind == "data" else None,
            fcnt=int.from_bytes(rec.tx.frame[6:8], "little") if rec.kind == "data" else None,
            frequency_mhz=None if plan is None else plan.channel_hz / 1e6,
            dr=None if plan is None else plan.dr,
            sf=None if plan is None else 12 - plan.dr,
            rssi_dbm=None if p is None else round(p),
            snr_db=None if s is None else round(s, 1),
            gateway_id=None if plan is None else plan.gateway_id,
            crc_ok=status in ("ack_delivered", "join_accept"),
            payload_hex=frame.hex(), duplicate_of=None, status=status))

    def _downlink_heard(self, node: _Node, plan: PlannedDownlink) -> tuple[bool, float, float]:
        g = next(g for g in self.gateways if g.id == plan.gateway_id)
        loss = path_loss(self.env, g.position, node.cfg.position, node.cfg.obstacles_to(g.id),
                         self.shadowing(node, g.id))
        gain = effective_antenna_gain(node.cfg.gain_setting_dbi)
        p = rssi_of(self.server.gateways[g.id].tx_power_dbm, g.rx_gain_db, gain, loss)
        true_snr, rep = snr(p, 125_000, self.env.noise_figure_db)
        ok = receive_decision(p, true_snr, 12 - plan.dr, self.link_rng)
        step = STEP_FOR_CLASS[node.class_cfg.device_class](
            node.state, DownlinkArrived(plan.start_us, plan.channel_hz, plan.dr))
        node.state = step.state
        return bool(step.delivered) and ok, p, rep

    def _on_dl_end(self, data) -> None:
        what, rec, plan, frame = data
        node = rec.node
        heard, p, s = self._downlink_heard(node, plan)
        if what == "ack":
            if heard and node.pending is not None and node.pending.fcnt == int.from_bytes(
                    rec.tx.frame[6:8], "little"):
                node.pending.acked = True
            self._ack_row(rec, "ack_delivered" if heard else "ack_missed:not-heard", plan, frame,
                          p if heard else None, s if heard else None)
            return
        session = data[3]
        if heard and node.session is None:
            node.session = Session(session.dev_eui, session.dev_addr, session.nwk_s_key,
                                   session.app_s_key, "OTAA", dev_nonce=session.dev_nonce)
            node.state = replace(node.state, dev_addr=session.dev_addr)
            self.server.classes[session.dev_addr] = node.class_cfg
            self.node_stats[node.cfg.dev_eui].joined = True
        self._ack_row(rec, "join_accept" if heard else "join_accept_missed", plan, b"\x20" * JOIN_ACCEPT_LEN,
                      p if heard else None, s if heard else None)
        self._kick(node)

    def _finish_join(self, rec: _Tx, records: list[GatewayRecord]) -> None:
        node = rec.node
        good = [r for r in records if r.crc_ok]
        if not good:
            self._emit(self._row(rec, "join_lost"))
            self._kick(node)
            return
        best = next(r for r in good if r.gateway_id == choose_downlink_gateway(good))
        self._emit(self._row(rec, "join", best))
        session = self.server.handle_join(rec.tx.frame)
        if session is None:
            self._kick(node)
            return
        up = UplinkInfo(session.dev_addr, self.now, rec.tx.channel_hz, rec.dr, best.gateway_id)
        plan = self.server.schedule_ack(up, ClassConfig(), frame_len=JOIN_ACCEPT_LEN)
        if isinstance(plan, Dropped):
            self._ack_row(rec, "join_accept_missed", None, b"")
            self._kick(node)
            return
        self.gw_stats[plan.gateway_id].downlinks += 1
        node.busy_until = max(node.busy_until, plan.end_us)
        self._push(plan.end_us, DL_END, ("join", rec, plan, session))

    def _on_ack_timeout(self, data) -> None:
        node, pend = data
        if node.pending is not pend or pend is None:
            return
        if pend.acked or pend.retries >= self.sc.retry_limit:
            node.pending = None
        else:
            node.retry_ready = True
        self._kick(node)

    def _on_beacon(self, _data) -> None:
        if self.now > self.duration_us:
            return
        for node in self.nodes:
            if node.class_cfg.device_class != "B":
                continue
            ok = self.link_rng.random() >= self.sc.beacon_loss_prob
            node.state = STEP_FOR_CLASS["B"](node.state, Beacon(self.now, ok)).state
        self._push(self.now + ClassConfig().beacon_period_us, BEACON, None)


def run(scenario: Scenario, prim: KeyedPrimitive | None = None) -> RunResult:
    return Simulator(scenario, prim).run()
