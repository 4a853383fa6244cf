"""Smart-meter LoRaWAN toolkit.

Airtime and duty-cycle arithmetic sit at the bottom. On top of them a seeded
link model and the MAC layer feed a small network server, which the
discrete-event simulator drives."""

from .airtime import RadioParams, time_on_air, time_on_air_us
from .planner import CapacityInputs, daily_data_table, node_capacity, wait_time_table

__version__ = "0.1.0"

__all__ = [
    "CapacityInputs", "RadioParams", "daily_data_table", "node_capacity", "time_on_air",
    "time_on_air_us", "wait_time_table", "__version__",
]
