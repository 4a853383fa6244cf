"""LoRa symbol timing and time-on-air.

All durations are computed as exact integer microseconds; the millisecond
helpers only divide at the end.  For every supported bandwidth the symbol
duration ``2**sf / bw`` is a whole number of microseconds, and the 0.25
symbol of the preamble sync word is handled by counting quarter symbols.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

SPREADING_FACTORS = range(7, 13)
BANDWIDTHS_HZ = (125_000, 250_000, 500_000)
CODING_RATES = range(5, 9)
MAX_PHY_PAYLOAD = 255

# LoRaWAN frame overhead: MHDR(1) + FHDR(7) + FPort(1) + MIC(4)
FRAME_OVERHEAD = 13

# application payload limit per data rate (EU868, no repeater)
_MAX_APP_PAYLOAD = {0: 51, 1: 51, 2: 51, 3: 115, 4: 242, 5: 242}

LDRO_SYMBOL_THRESHOLD_US = 16_000


@dataclass(frozen=True)
class RadioParams:
    sf: int = 7
    bw_hz: int = 125_000
    cr_denominator: int = 5
    preamble_symbols: int = 8
    explicit_header: bool = True
    ldro: str = "auto"  # "auto" | "on" | "off"
    crc_on: bool = True

    def __post_init__(self):
        if self.sf not in SPREADING_FACTORS:
            raise ValueError(f"spreading factor must be 7..12, got {self.sf}")
        if self.bw_hz not in BANDWIDTHS_HZ:
            raise ValueError(f"bandwidth must be one of {BANDWIDTHS_HZ}, got {self.bw_hz}")
        if self.cr_denominator not in CODING_RATES:
            raise ValueError(f"coding rate denominator must be 5..8, got {self.cr_denominator}")
        if self.preamble_symbols < 0:
            raise ValueError("preamble_symbols must be non-negative")
        if self.ldro not in ("auto", "on", "off"):
            raise ValueError(f"ldro must be auto, on or off, got {self.ldro!r}")

    @property
    def ldro_enabled(self) -> bool:
        if self.ldro == "auto":
            return symbol_duration_us(self) >= LDRO_SYMBOL_THRESHOLD_US
        return self.ldro == "on"

    @property
    def dr(self) -> int | None:
        """Data-rate index when these params match an EU868 DR, else None."""
        if self.bw_hz != 125_000:
            return None
        return 12 - self.sf


def symbol_duration_us(params: RadioParams) -> int:
    us = Fraction(2**params.sf * 1_000_000, params.bw_hz)
    assert us.denominator == 1
    return int(us)


def symbol_duration(params: RadioParams) -> float:
    """Symbol duration in milliseconds."""
    return symbol_duration_us(params) / 1000


def payload_symbols(params: RadioParams, phy_payload_len: int) -> int:
    de = 1 if params.ldro_enabled else 0
    ih = 0 if params.explicit_header else 1
    crc = 1 if params.crc_on else 0
    num = 8 * phy_payload_len - 4 * params.sf + 28 + 16 * crc - 20 * ih
    den = 4 * (params.sf - 2 * de)
    # ceil on integers, no float rounding
    blocks = -(-num // den)
    return 8 + max(blocks * params.cr_denominator, 0)


def time_on_air_us(params: RadioParams, phy_payload_len: int) -> int:
    if not 0 <= phy_payload_len <= MAX_PHY_PAYLOAD:
        raise ValueError(
            f"PHY payload of {phy_payload_len} bytes outside 0..{MAX_PHY_PAYLOAD}"
        )
    quarter_symbols = 4 * params.preamble_symbols + 17 + 4 * payload_symbols(params, phy_payload_len)
    # symbol durations are multiples of 4 us for every supported bandwidth
    return quarter_symbols * symbol_duration_us(params) // 4


def time_on_air(params: RadioParams, phy_payload_len: int) -> float:
    """Time on air in milliseconds."""
    return time_on_air_us(params, phy_payload_len) / 1000


def dr_to_params(dr: int) -> RadioParams:
    if dr not in range(6):
        raise ValueError(f"EU868 data rate must be 0..5, got {dr}")
    return RadioParams(sf=12 - dr)


def sf_to_dr(sf: int) -> int:
    if sf not in SPREADING_FACTORS:
        raise ValueError(f"spreading factor must be 7..12, got {sf}")
    return 12 - sf


def max_app_payload(dr: int) -> int:
    if dr not in _MAX_APP_PAYLOAD:
        raise ValueError(f"EU868 data rate must be 0..5, got {dr}")
    return _MAX_APP_PAYLOAD[dr]


def bitrate_bps(params: RadioParams) -> float:
    return params.sf * (4 / params.cr_denominator) * params.bw_hz / 2**params.sf


def symbols_to_us(params: RadioParams, n_symbols: float) -> int:
    return math.ceil(n_symbols * symbol_duration_us(params))
