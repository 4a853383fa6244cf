"""Seeded radio link model: path loss to RSSI/SNR, then reception and collisions.

The antenna term is an empirical fit to the measured gain sweep of the
Multitech end node, not a radiation pattern: the link is best at a 3 dBi
setting and degrades linearly on either side.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

THERMAL_NOISE_DBM_HZ = -174.0
SNR_REPORT_MIN = -25.0
SNR_REPORT_MAX = 12.5
LOGISTIC_SCALE_DB = 2.0

DEMOD_FLOOR_DB = {7: -7.5, 8: -10.0, 9: -12.5, 10: -15.0, 11: -17.5, 12: -20.0}


def sensitivity_dbm(sf: int) -> float:
    if sf not in DEMOD_FLOOR_DB:
        raise ValueError(f"spreading factor must be 7..12, got {sf}")
    return -(117 + 2.5 * (sf - 7))


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite position {self}")

    def distance(self, other: "Position") -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))


@dataclass(frozen=True)
class Obstacles:
    floors: int = 0
    walls: int = 0
    basement: bool = False


@dataclass(frozen=True)
class Environment:
    path_loss_exponent: float = 2.9
    reference_loss_db: float = 40.0
    floor_penetration_db: float = 15.0
    wall_penetration_db: float = 5.0
    basement_extra_db: float = 20.0
    shadowing_sigma_db: float = 2.0
    noise_figure_db: float = 6.0

    def __post_init__(self):
        for name in ("floor_penetration_db", "wall_penetration_db", "basement_extra_db",
                     "shadowing_sigma_db"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def outdoor(cls, **kw) -> "Environment":
        kw.setdefault("path_loss_exponent", 2.2)
        return cls(**kw)


@dataclass
class LinkSample:
    rssi_dbm: float
    snr_db: float
    received: bool
    collided: bool = False

    def __post_init__(self):
        if self.collided and self.received:
            raise ValueError("a collided packet cannot be received")


def path_loss(env: Environment, a: Position, b: Position, obstacles: Obstacles = Obstacles(),
              shadowing_db: float = 0.0) -> float:
    """Log-distance loss in dB; ``shadowing_db`` is the frozen per-link draw."""
    d = a.distance(b)
    if d <= 0:
        raise ValueError("path loss undefined at zero distance")
    loss = env.reference_loss_db + 10 * env.path_loss_exponent * math.log10(d)
    loss += obstacles.floors * env.floor_penetration_db
    loss += obstacles.walls * env.wall_penetration_db
    if obstacles.basement:
        loss += env.basement_extra_db
    return loss + shadowing_db


def draw_shadowing(env: Environment, rng: random.Random) -> float:
    return rng.gauss(0.0, env.shadowing_sigma_db) if env.shadowing_sigma_db > 0 else 0.0


def effective_antenna_gain(gain_setting_dbi: float) -> float:
    if not -128 <= gain_setting_dbi <= 127:
        raise ValueError(f"antenna gain setting {gain_setting_dbi} outside -128..127 dBi")
    return max(3 - abs(gain_setting_dbi - 3), -30.0)


def rssi(tx_power_dbm: float, tx_gain_db: float, rx_gain_db: float, loss_db: float) -> float:
    """Received power in dBm (unrounded; reports round to whole dBm)."""
    return tx_power_dbm + tx_gain_db + rx_gain_db - loss_db


def noise_floor_dbm(bw_hz: float, noise_figure_db: float = 6.0) -> float:
    if bw_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return THERMAL_NOISE_DBM_HZ + 10 * math.log10(bw_hz) + noise_figure_db


def snr(rssi_dbm: float, bw_hz: float = 125_000, noise_figure_db: float = 6.0) -> tuple[float, float]:
    """(true SNR, reported SNR clamped to the radio's reporting range)."""
    true_snr = rssi_dbm - noise_floor_dbm(bw_hz, noise_figure_db)
    return true_snr, min(max(true_snr, SNR_REPORT_MIN), SNR_REPORT_MAX)


def demod_margin(rng: random.Random) -> float:
    """Per-packet logistic margin around the demodulation floor."""
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return LOGISTIC_SCALE_DB * math.log(u / (1 - u))


def receive_decision(rssi_dbm: float, true_snr_db: float, sf: int, rng: random.Random) -> bool:
    # the margin is always drawn so the random stream does not depend on rssi
    margin = demod_margin(rng)
    if rssi_dbm < sensitivity_dbm(sf):
        return False
    return true_snr_db >= DEMOD_FLOOR_DB[sf] + margin


def receive_probability(rssi_dbm: float, true_snr_db: float, sf: int) -> float:
    """Closed-form counterpart of :func:`receive_decision`."""
    if rssi_dbm < sensitivity_dbm(sf):
        return 0.0
    z = (true_snr_db - DEMOD_FLOOR_DB[sf]) / LOGISTIC_SCALE_DB
    return 1 / (1 + math.exp(-z)) if z > -700 else 0.0


@dataclass(frozen=True)
class Transmission:
    source: str
    channel_hz: int
    sf: int
    start_us: int
    toa_us: int
    tx_power_dbm: float = 14.0
    frame: bytes = b""
    seq: int = field(default=0, compare=False)

    @property
    def end_us(self) -> int:
        return self.start_us + self.toa_us


def overlaps(a: Transmission, b: Transmission) -> bool:
    return a.start_us < b.end_us and b.start_us < a.end_us


def collide(a: Transmission, b: Transmission) -> bool:
    if a is b:
        return False
    return a.channel_hz == b.channel_hz and a.sf == b.sf and overlaps(a, b)
