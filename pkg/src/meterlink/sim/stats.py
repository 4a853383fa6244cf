"""Run statistics, both accumulated live and recomputed from a packet log."""

from __future__ import annotations

import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from ..airtime import dr_to_params, time_on_air_us
from ..net_server import PacketRecord
from ..regulation import HOUR_US, channel_by_freq, window_violations

DATA_OUTCOMES = ("accepted", "lost")


def summarize(values) -> dict | None:
    vals = sorted(values)
    if not vals:
        return None
    if len(vals) == 1:
        q1 = med = q3 = vals[0]
    else:
        q1, med, q3 = statistics.quantiles(vals, n=4, method="inclusive")
    return {"n": len(vals), "min": vals[0], "q1": round(q1, 3), "median": round(med, 3),
            "mean": round(statistics.fmean(vals), 3), "q3": round(q3, 3), "max": vals[-1]}


@dataclass
class NodeStats:
    sent: int = 0
    received: int = 0
    confirmed_sent: int = 0
    ack_delivered: int = 0
    ack_missed: int = 0
    join_attempts: int = 0
    joined: bool = False
    datagrams_generated: int = 0
    datagrams_skipped: int = 0
    rssi: list[int] = field(default_factory=list)
    snr: list[float] = field(default_factory=list)

    @property
    def per(self) -> float | None:
        if not self.sent:
            return None
        return 100 * (self.sent - self.received) / self.sent

    def to_dict(self) -> dict:
        return {
            "sent": self.sent, "received": self.received,
            "per": None if self.per is None else round(self.per, 3),
            "confirmed_sent": self.confirmed_sent, "ack_delivered": self.ack_delivered,
            "ack_missed": self.ack_missed, "join_attempts": self.join_attempts,
            "joined": self.joined, "datagrams_generated": self.datagrams_generated,
            "datagrams_skipped": self.datagrams_skipped,
            "rssi": summarize(self.rssi), "snr": summarize(self.snr),
        }


@dataclass
class GatewayStats:
    transmissions: int = 0
    received: int = 0
    collided: int = 0
    below_threshold: int = 0
    saturated: int = 0
    downlinks: int = 0
    channel_usage: Counter = field(default_factory=Counter)

    def to_dict(self) -> dict:
        return {
            "transmissions": self.transmissions, "received": self.received,
            "collided": self.collided, "below_threshold": self.below_threshold,
            "saturated": self.saturated, "downlinks": self.downlinks,
            "channel_usage": {str(k): v for k, v in sorted(self.channel_usage.items())},
        }


@dataclass
class RunStats:
    nodes: dict[str, NodeStats] = field(default_factory=dict)
    gateways: dict[str, GatewayStats] = field(default_factory=dict)
    server: dict = field(default_factory=dict)
    datagrams_delivered: int = 0

    def to_dict(self) -> dict:
        return {
            "nodes": {k: v.to_dict() for k, v in sorted(self.nodes.items())},
            "gateways": {k: v.to_dict() for k, v in sorted(self.gateways.items())},
            "server": dict(self.server),
            "datagrams_delivered": self.datagrams_delivered,
        }

    def per(self, dev_eui: str) -> float | None:
        return self.nodes[dev_eui].per


def node_stats_from_log(rows: list[PacketRecord]) -> dict[str, NodeStats]:
    """Per-node PER/RSSI/SNR/ACK figures reconstructed from log rows alone."""
    out: dict[str, NodeStats] = defaultdict(NodeStats)
    for r in rows:
        if r.dev_eui is None:
            continue
        st = out[r.dev_eui]
        if r.status in DATA_OUTCOMES:
            st.sent += 1
            if r.payload_hex and _is_confirmed(r.payload_hex):
                st.confirmed_sent += 1
            if r.status == "accepted":
                st.received += 1
                st.rssi.append(r.rssi_dbm)
                st.snr.append(r.snr_db)
        elif r.status == "ack_delivered":
            st.ack_delivered += 1
        elif r.status.startswith("ack_missed"):
            st.ack_missed += 1
        elif r.status in ("join", "join_lost"):
            st.join_attempts += 1
        elif r.status == "join_accept":
            st.joined = True
    return dict(out)


def _is_confirmed(payload_hex: str) -> bool:
    return int(payload_hex[:2], 16) >> 5 == 4


def channel_histogram(rows: list[PacketRecord]) -> dict[float, int]:
    """Received (accepted) uplinks per channel frequency in MHz."""
    if not rows:
        raise ValueError("empty packet log")
    c = Counter(r.frequency_mhz for r in rows if r.status == "accepted")
    return dict(sorted(c.items()))


def transmitter_records(rows: list[PacketRecord]):
    """Reconstruct (transmitter, channel, start_us, airtime_us) from log rows."""
    seen = set()
    for r in rows:
        if r.frequency_mhz is None or not r.payload_hex:
            continue
        n_bytes = len(r.payload_hex) // 2
        toa = time_on_air_us(dr_to_params(r.dr), n_bytes)
        freq = round(r.frequency_mhz * 1e6)
        if r.status in ("accepted", "lost", "join", "join_lost"):
            key = (r.dev_eui, r.status, r.fcnt, r.timestamp)
            if key in seen:
                continue
            seen.add(key)
            yield ("node", r.dev_eui), freq, r.timestamp - toa, toa
        elif r.status.startswith(("ack_", "join_accept")) and r.gateway_id is not None:
            yield ("gateway", r.gateway_id), freq, r.timestamp - toa, toa


def duty_violations(rows: list[PacketRecord], window_us: int = HOUR_US,
                    per_channel: bool = False) -> list[tuple]:
    """Post-hoc sliding-window audit of every transmitter in a log."""
    by_tx = defaultdict(list)
    duty = {}
    for who, freq, start, toa in transmitter_records(rows):
        ch = channel_by_freq(freq)
        key = freq if per_channel else ch.sub_band_id
        duty[key] = ch.duty_cycle
        by_tx[who].append((key, start, toa))
    bad = []
    for who, recs in by_tx.items():
        for v in window_violations(recs, duty, window_us):
            bad.append((who, *v))
    return bad
