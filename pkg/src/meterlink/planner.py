"""Closed-form duty-cycle and gateway capacity planning tables."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction

from .airtime import FRAME_OVERHEAD, bitrate_bps, dr_to_params, max_app_payload, time_on_air_us
from .regulation import wait_after

DAY_S = 86_400


def _duty(duty) -> Fraction:
    d = Fraction(str(duty)) if isinstance(duty, float) else Fraction(duty)
    if not 0 <= d <= 1:
        raise ValueError(f"duty cycle must be within [0, 1], got {duty}")
    return d


def wait_time_table(duty=0.01, step: int = 8) -> list[dict]:
    d = _duty(duty)
    if d == 0:
        raise ValueError("wait time is unbounded at zero duty")
    rows = []
    for dr in range(6):
        limit = max_app_payload(dr)
        sizes = list(range(0, limit + 1, step))
        if sizes[-1] != limit:
            sizes.append(limit)
        for payload in sizes:
            toa = time_on_air_us(dr_to_params(dr), FRAME_OVERHEAD + payload)
            rows.append({
                "dr": dr,
                "payload_bytes": payload,
                "toa_ms": toa / 1000,
                "wait_s": float(wait_after(Fraction(toa, 1_000_000), d)),
            })
    return rows


def daily_data_table(duty=0.01, mode: str = "airtime") -> list[dict]:
    """Application bytes per day per data rate at full-size frames.

    ``mode="airtime"`` counts whole frames that fit the daily airtime budget;
    ``mode="bitrate"`` multiplies the raw PHY bitrate by the budget.
    """
    d = _duty(duty)
    budget_us = d * DAY_S * 1_000_000
    rows = []
    for dr in range(6):
        payload = max_app_payload(dr)
        params = dr_to_params(dr)
        if mode == "airtime":
            toa = time_on_air_us(params, FRAME_OVERHEAD + payload)
            packets = math.floor(budget_us / toa)
            total = payload * packets
        elif mode == "bitrate":
            packets = None
            total = math.floor(bitrate_bps(params) / 8 * float(d) * DAY_S)
        else:
            raise ValueError(f"unknown daily-data mode {mode!r}")
        rows.append({"dr": dr, "payload_bytes": payload, "packets_per_day": packets,
                     "bytes_per_day": total})
    return rows


@dataclass(frozen=True)
class CapacityInputs:
    R: float
    ER: float = 0
    channels: int = 1
    seconds_per_transaction: float = 2

    def __post_init__(self):
        if self.R < 0 or self.ER < 0:
            raise ValueError("packet counts must be non-negative")
        if self.channels < 1:
            raise ValueError("at least one channel is required")
        if self.seconds_per_transaction <= 0:
            raise ValueError("seconds_per_transaction must be positive")


def daily_transactions(inputs: CapacityInputs) -> Fraction:
    return inputs.channels * Fraction(DAY_S) / Fraction(str(inputs.seconds_per_transaction))


def node_capacity_exact(inputs: CapacityInputs) -> Fraction:
    # edge nodes need twice the airtime per response
    demand = Fraction(str(inputs.R)) + 2 * Fraction(str(inputs.ER))
    if demand == 0:
        raise ZeroDivisionError("R + 2*ER must be positive")
    return daily_transactions(inputs) / demand


def node_capacity(inputs: CapacityInputs) -> int:
    return math.floor(node_capacity_exact(inputs))


def to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if v is None else _fmt(v)) for k, v in r.items()})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3f}"
    return v
