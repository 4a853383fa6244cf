"""Discrete-event simulation of meters and gateways around a network server."""

from .engine import RunResult, Simulator, run
from .presets import (
    PRESETS,
    ack_contention_scenario,
    indoor_building_scenario,
    outdoor_scenario,
    preset,
    saturation_scenario,
)
from .scenario import GatewayConfig, NodeConfig, Scenario, ScenarioError
from .stats import RunStats, channel_histogram, duty_violations, node_stats_from_log

__all__ = [
    "GatewayConfig", "NodeConfig", "PRESETS", "RunResult", "RunStats", "Scenario",
    "ScenarioError", "Simulator", "ack_contention_scenario", "channel_histogram",
    "duty_violations", "indoor_building_scenario", "node_stats_from_log", "outdoor_scenario",
    "preset", "run", "saturation_scenario",
]
