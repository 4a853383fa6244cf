"""Built-in scenarios: the indoor and outdoor measurement campaigns plus two
synthetic stress cases (downlink contention and demodulator saturation).

Calibration constants live here as plain module-level values so that a
change to them shows up in review; nothing is fitted at run time.
"""

from __future__ import annotations

import math
from dataclasses import replace

from ..link_model import Environment, Obstacles, Position
from .scenario import GatewayConfig, NodeConfig, Scenario

FLOOR_HEIGHT_M = 3.5
HOUR_S = 3600.0

# Indoor building: log-distance exponent 2.9, floors 12 dB each, concrete
# walls 5 dB, basement slab 20 dB. With these the same-floor node sits near
# -83 dBm and the basement rows are below every sensitivity level.
INDOOR_ENV = Environment(path_loss_exponent=2.9, reference_loss_db=40.0, floor_penetration_db=12.0,
                         wall_penetration_db=5.0, basement_extra_db=20.0, shadowing_sigma_db=2.0)
INDOOR_GATEWAY_FLOOR = 2
INDOOR_SEND_PERIOD_S = 30.0

# position -> (distance m, floor, obstacles between node and gateway)
SCIENCEPARK3 = {
    1: (51.0, 6, Obstacles(floors=4)),
    2: (45.0, 4, Obstacles(floors=2)),
    3: (40.0, 2, Obstacles(walls=2)),
    4: (42.0, 2, Obstacles(walls=2)),
    5: (48.0, 0, Obstacles(floors=2)),
    6: (20.0, 2, Obstacles()),
    7: (26.0, -1, Obstacles(floors=3, basement=True)),
    8: (60.0, -1, Obstacles(floors=3, walls=2, basement=True)),
    9: (55.0, -1, Obstacles(floors=3, walls=2, basement=True)),
}

# Outdoor campus: rooftop gateway with no cable loss, steeper exponent for
# the cluttered street level.
OUTDOOR_ENV = Environment(path_loss_exponent=3.45, reference_loss_db=40.0, floor_penetration_db=0.0,
                          wall_penetration_db=5.0, basement_extra_db=0.0, shadowing_sigma_db=2.0)
OUTDOOR_GATEWAY_HEIGHT_M = 25.0
# short period so every data rate runs against the duty limit
OUTDOOR_SEND_PERIOD_S = 5.0

HAGENBERG = {
    1: (151.14, Obstacles()),
    2: (635.8, Obstacles(walls=1)),
    3: (845.0, Obstacles()),
}


def _eui(prefix: int, a: int, b: int) -> str:
    return f"{prefix:04x}{a:06x}{b:06x}"


def _at_distance(d: float, dz: float, bearing_deg: float) -> Position:
    horiz = math.sqrt(max(d * d - dz * dz, 0.0))
    rad = math.radians(bearing_deg)
    return Position(round(horiz * math.cos(rad), 3), round(horiz * math.sin(rad), 3), dz)


def indoor_building_scenario(preset: str = "sciencepark3", seed: int = 42) -> Scenario:
    """One node per (position, data rate), each active alone for one hour."""
    if preset != "sciencepark3":
        raise ValueError(f"unknown indoor preset {preset!r}")
    gw_z = INDOOR_GATEWAY_FLOOR * FLOOR_HEIGHT_M
    gw = GatewayConfig("gw-indoor", Position(0.0, 0.0, gw_z), rx_gain_db=-3.0)
    nodes = []
    slot = 0
    for pos, (dist, floor, obst) in SCIENCEPARK3.items():
        dz = (floor - INDOOR_GATEWAY_FLOOR) * FLOOR_HEIGHT_M
        where = _at_distance(dist, dz, 40.0 * pos)
        where = replace(where, z=where.z + gw_z)
        for dr in range(6):
            nodes.append(NodeConfig(
                dev_eui=_eui(0x1000, pos, dr), position=where, dr=dr,
                send_period_s=INDOOR_SEND_PERIOD_S, start_s=slot * HOUR_S,
                stop_s=(slot + 1) * HOUR_S, site=f"pos{pos}", obstacles={"*": obst}))
            slot += 1
    return Scenario(seed=seed, duration_s=slot * HOUR_S, gateways=[gw], nodes=nodes,
                    environment=INDOOR_ENV, name="indoor-sciencepark3")


def outdoor_scenario(preset: str = "hagenberg", seed: int = 42) -> Scenario:
    """Three sites, six data rates, OTAA join first, one hour per data rate."""
    if preset != "hagenberg":
        raise ValueError(f"unknown outdoor preset {preset!r}")
    gw = GatewayConfig("gw-roof", Position(0.0, 0.0, OUTDOOR_GATEWAY_HEIGHT_M), rx_gain_db=0.0)
    nodes = []
    slot = 0
    for site, (dist, obst) in HAGENBERG.items():
        where = _at_distance(dist, -OUTDOOR_GATEWAY_HEIGHT_M + 1.5, 110.0 * site)
        where = replace(where, z=where.z + OUTDOOR_GATEWAY_HEIGHT_M)
        for dr in range(6):
            nodes.append(NodeConfig(
                dev_eui=_eui(0x2000, site, dr), position=where, dr=dr, activation="OTAA",
                send_period_s=OUTDOOR_SEND_PERIOD_S, start_s=slot * HOUR_S,
                stop_s=(slot + 1) * HOUR_S, site=f"site{site}", obstacles={"*": obst}))
            slot += 1
    return Scenario(seed=seed, duration_s=slot * HOUR_S, gateways=[gw], nodes=nodes,
                    environment=OUTDOOR_ENV, name="outdoor-hagenberg")


# Downlink contention: confirmed DR5 traffic from many nearby nodes into one
# gateway whose downlink budget cannot acknowledge all of it.
CONTENTION_NODES = 16
CONTENTION_PERIOD_S = 40.0
CONTENTION_DURATION_S = 1800.0
CONTENTION_RETRY_DELAY_S = 3.0
# network-side RX2 at SF9, as many public EU868 networks configure it
CONTENTION_RX2_DR = 3


def ack_contention_scenario(device_class: str = "A", seed: int = 7) -> Scenario:
    gw = GatewayConfig("gw-ack", Position(0.0, 0.0, 3.0))
    nodes = [
        NodeConfig(dev_eui=_eui(0x3000, 0, i), position=_at_distance(30.0 + i, 0.0, 15.0 * i),
                   dr=5, send_period_s=CONTENTION_PERIOD_S, device_class=device_class,
                   confirmed=True, payload={"size": 20})
        for i in range(CONTENTION_NODES)
    ]
    return Scenario(seed=seed, duration_s=CONTENTION_DURATION_S, gateways=[gw], nodes=nodes,
                    environment=replace(INDOOR_ENV, shadowing_sigma_db=0.0),
                    name=f"ack-contention-{device_class.lower()}",
                    retry_delay_s=CONTENTION_RETRY_DELAY_S, rx2_dr=CONTENTION_RX2_DR)


def saturation_scenario(n_nodes: int = 9, distinct: bool = True, seed: int = 1) -> Scenario:
    """``n_nodes`` single uplinks that all start at the same instant.

    With ``distinct`` every packet differs in channel or spreading factor, so
    only the demodulator limit can drop one; otherwise all share DR5 on
    868.1 MHz and collide.
    """
    gw = GatewayConfig("gw-sat", Position(0.0, 0.0, 0.0))
    channels = [868_100_000, 868_300_000, 868_500_000, 867_100_000, 867_300_000,
                867_500_000, 867_700_000, 867_900_000]
    nodes = []
    for i in range(n_nodes):
        if distinct:
            ch, dr = channels[i % len(channels)], 5 - i // len(channels)
        else:
            ch, dr = channels[0], 5
        nodes.append(NodeConfig(
            dev_eui=_eui(0x4000, 0, i), position=Position(10.0, float(i), 0.0), dr=dr,
            send_period_s=600.0, phase_s=0.0, jitter=0.0, payload={"size": 10},
            channels=[ch], max_datagrams=1))
    return Scenario(seed=seed, duration_s=60.0, gateways=[gw], nodes=nodes,
                    environment=replace(INDOOR_ENV, shadowing_sigma_db=0.0),
                    name="saturation" if distinct else "collision")


PRESETS = {
    "indoor-sciencepark3": lambda seed=42: indoor_building_scenario("sciencepark3", seed),
    "outdoor-hagenberg": lambda seed=42: outdoor_scenario("hagenberg", seed),
    "ack-contention-a": lambda seed=7: ack_contention_scenario("A", seed),
    "ack-contention-c": lambda seed=7: ack_contention_scenario("C", seed),
    "saturation": lambda seed=1: saturation_scenario(9, True, seed),
}


def preset(name: str, seed: int | None = None) -> Scenario:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None
    return factory() if seed is None else factory(seed)
