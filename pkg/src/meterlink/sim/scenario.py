"""Scenario description, JSON (de)serialization and validation."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema

from ..link_model import Environment, Obstacles, Position, effective_antenna_gain
from ..regulation import check_erp, eu868_uplink_channels

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["seed", "duration_s", "gateways", "nodes"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer"},
        "duration_s": {"type": "number", "exclusiveMinimum": 0},
        "environment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "number"} for k in (
                "path_loss_exponent", "reference_loss_db", "floor_penetration_db",
                "wall_penetration_db", "basement_extra_db", "shadowing_sigma_db",
                "noise_figure_db")},
        },
        "duty": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "window_s": {"type": "number", "exclusiveMinimum": 0},
                "per_channel": {"type": "boolean"},
            },
        },
        "retry_limit": {"type": "integer", "minimum": 0},
        "retry_delay_s": {"type": "number", "minimum": 0},
        "jitter": {"type": "number", "minimum": 0, "maximum": 0.5},
        "beacon_loss_prob": {"type": "number", "minimum": 0, "maximum": 1},
        "rx2_dr": {"type": "integer", "minimum": 0, "maximum": 5},
        "gateways": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "position"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string"},
                    "position": {"$ref": "#/$defs/position"},
                    "demodulators": {"type": "integer", "minimum": 1},
                    "rx_gain_db": {"type": "number"},
                    "tx_power_dbm": {"type": "number"},
                },
            },
        },
        "nodes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["dev_eui", "position", "dr", "send_period_s"],
                "additionalProperties": False,
                "properties": {
                    "dev_eui": {"type": "string", "pattern": "^[0-9a-fA-F]{16}$"},
                    "position": {"$ref": "#/$defs/position"},
                    "class": {"enum": ["A", "B", "C"]},
                    "activation": {"enum": ["OTAA", "ABP"]},
                    "dr": {"type": "integer", "minimum": 0, "maximum": 5},
                    "tx_power_dbm": {"type": "number"},
                    "gain_setting_dbi": {"type": "number", "minimum": -128, "maximum": 127},
                    "send_period_s": {"type": "number"},
                    "confirmed": {"type": "boolean"},
                    "payload": {
                        "oneOf": [
                            {"const": "meter"},
                            {"type": "object", "required": ["raw_hex"],
                             "additionalProperties": False,
                             "properties": {"raw_hex": {"type": "string",
                                                        "pattern": "^([0-9a-fA-F]{2})*$"}}},
                            {"type": "object", "required": ["size"],
                             "additionalProperties": False,
                             "properties": {"size": {"type": "integer", "minimum": 0}}},
                        ]
                    },
                    "start_s": {"type": "number", "minimum": 0},
                    "stop_s": {"type": "number", "minimum": 0},
                    "phase_s": {"type": "number", "minimum": 0},
                    "jitter": {"type": "number", "minimum": 0, "maximum": 0.5},
                    "site": {"type": "string"},
                    "channels": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
                    "max_datagrams": {"type": "integer", "minimum": 0},
                    "obstacles": {
                        "type": "object",
                        "additionalProperties": {"$ref": "#/$defs/obstacles"},
                    },
                },
            },
        },
    },
    "$defs": {
        "position": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 3},
        "obstacles": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "floors": {"type": "integer", "minimum": 0},
                "walls": {"type": "integer", "minimum": 0},
                "basement": {"type": "boolean"},
            },
        },
    },
}


class ScenarioError(ValueError):
    """Scenario failed validation; ``errors`` lists every (path, message)."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{p}: {m}" for p, m in errors))


@dataclass
class GatewayConfig:
    id: str
    position: Position
    demodulators: int = 8
    rx_gain_db: float = -3.0
    tx_power_dbm: float = 14.0


@dataclass
class NodeConfig:
    dev_eui: str
    position: Position
    dr: int
    send_period_s: float
    device_class: str = "A"
    activation: str = "ABP"
    tx_power_dbm: float = 14.0
    gain_setting_dbi: float = 3.0
    confirmed: bool = False
    payload: object = "meter"
    start_s: float = 0.0
    stop_s: float | None = None
    phase_s: float | None = None
    jitter: float | None = None
    site: str | None = None
    channels: list[int] | None = None
    max_datagrams: int | None = None
    obstacles: dict[str, Obstacles] = field(default_factory=dict)

    def obstacles_to(self, gateway_id: str) -> Obstacles:
        return self.obstacles.get(gateway_id, self.obstacles.get("*", Obstacles()))

    @property
    def shadow_key(self) -> str:
        return self.site or self.dev_eui


@dataclass
class Scenario:
    seed: int
    duration_s: float
    gateways: list[GatewayConfig]
    nodes: list[NodeConfig]
    environment: Environment = field(default_factory=Environment)
    name: str = "scenario"
    duty_window_s: float = 3600.0
    per_channel_duty: bool = False
    retry_limit: int = 2
    retry_delay_s: float = 3.0
    jitter: float = 0.05
    beacon_loss_prob: float = 0.0
    rx2_dr: int = 0

    # -- serialization --------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "duration_s": self.duration_s,
            "environment": asdict(self.environment),
            "duty": {"window_s": self.duty_window_s, "per_channel": self.per_channel_duty},
            "retry_limit": self.retry_limit,
            "retry_delay_s": self.retry_delay_s,
            "jitter": self.jitter,
            "beacon_loss_prob": self.beacon_loss_prob,
            "rx2_dr": self.rx2_dr,
            "gateways": [{"id": g.id, "position": _pos_list(g.position),
                          "demodulators": g.demodulators, "rx_gain_db": g.rx_gain_db,
                          "tx_power_dbm": g.tx_power_dbm} for g in self.gateways],
            "nodes": [_node_dict(n) for n in self.nodes],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        errors = schema_errors(d)
        if errors:
            raise ScenarioError(errors)
        duty = d.get("duty", {})
        sc = cls(
            seed=d["seed"],
            duration_s=d["duration_s"],
            name=d.get("name", "scenario"),
            environment=Environment(**d.get("environment", {})),
            duty_window_s=duty.get("window_s", 3600.0),
            per_channel_duty=duty.get("per_channel", False),
            retry_limit=d.get("retry_limit", 2),
            retry_delay_s=d.get("retry_delay_s", 3.0),
            jitter=d.get("jitter", 0.05),
            beacon_loss_prob=d.get("beacon_loss_prob", 0.0),
            rx2_dr=d.get("rx2_dr", 0),
            gateways=[GatewayConfig(g["id"], Position(*g["position"]), g.get("demodulators", 8),
                                    g.get("rx_gain_db", -3.0), g.get("tx_power_dbm", 14.0))
                      for g in d["gateways"]],
            nodes=[_node_from(n) for n in d["nodes"]],
        )
        sc.validate()
        return sc

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError([("$", f"not valid JSON: {exc}")]) from None
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    # -- semantic checks ------------------------------------------------
    def validate(self) -> None:
        errors = semantic_errors(self)
        if errors:
            raise ScenarioError(errors)


def _pos_list(p: Position) -> list[float]:
    return [p.x, p.y, p.z]


def _node_dict(n: NodeConfig) -> dict:
    d = {
        "dev_eui": n.dev_eui, "position": _pos_list(n.position), "class": n.device_class,
        "activation": n.activation, "dr": n.dr, "tx_power_dbm": n.tx_power_dbm,
        "gain_setting_dbi": n.gain_setting_dbi, "send_period_s": n.send_period_s,
        "confirmed": n.confirmed, "payload": n.payload, "start_s": n.start_s,
    }
    for k in ("stop_s", "phase_s", "jitter", "site", "channels", "max_datagrams"):
        v = getattr(n, k)
        if v is not None:
            d[k] = v
    if n.obstacles:
        d["obstacles"] = {gw: asdict(o) for gw, o in n.obstacles.items()}
    return d


def _node_from(n: dict) -> NodeConfig:
    return NodeConfig(
        dev_eui=n["dev_eui"].lower(),
        position=Position(*n["position"]),
        dr=n["dr"],
        send_period_s=n["send_period_s"],
        device_class=n.get("class", "A"),
        activation=n.get("activation", "ABP"),
        tx_power_dbm=n.get("tx_power_dbm", 14.0),
        gain_setting_dbi=n.get("gain_setting_dbi", 3.0),
        confirmed=n.get("confirmed", False),
        payload=n.get("payload", "meter"),
        start_s=n.get("start_s", 0.0),
        stop_s=n.get("stop_s"),
        phase_s=n.get("phase_s"),
        jitter=n.get("jitter"),
        site=n.get("site"),
        channels=n.get("channels"),
        max_datagrams=n.get("max_datagrams"),
        obstacles={gw: Obstacles(**o) for gw, o in n.get("obstacles", {}).items()},
    )


def schema_errors(d) -> list[tuple[str, str]]:
    v = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    out = []
    for e in sorted(v.iter_errors(d), key=lambda e: list(map(str, e.absolute_path))):
        path = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in e.absolute_path)
        out.append((path, e.message))
    return out


def semantic_errors(sc: Scenario) -> list[tuple[str, str]]:
    from ..airtime import max_app_payload

    errors = []
    gw_ids = [g.id for g in sc.gateways]
    if len(set(gw_ids)) != len(gw_ids):
        errors.append(("$.gateways", "gateway ids must be unique"))
    euis = [n.dev_eui for n in sc.nodes]
    if len(set(euis)) != len(euis):
        errors.append(("$.nodes", "dev_eui values must be unique"))
    uplink = {c.center_freq_hz: c for c in eu868_uplink_channels()}
    for i, n in enumerate(sc.nodes):
        p = f"$.nodes[{i}]"
        if not n.send_period_s > 0 or not math.isfinite(n.send_period_s):
            errors.append((f"{p}.send_period_s", "must be a positive finite number"))
        chans = n.channels or list(uplink)
        for j, f in enumerate(chans):
            if f not in uplink:
                errors.append((f"{p}.channels[{j}]", f"{f} Hz is not an EU868 uplink channel"))
                continue
            v = check_erp(n.tx_power_dbm, uplink[f])
            if v is not None:
                errors.append((f"{p}.tx_power_dbm",
                               f"exceeds {uplink[f].max_erp_dbm} dBm ERP on {f} Hz by {v.excess_db:g} dB"))
                break
        try:
            effective_antenna_gain(n.gain_setting_dbi)
        except ValueError as exc:
            errors.append((f"{p}.gain_setting_dbi", str(exc)))
        if isinstance(n.payload, dict) and "raw_hex" in n.payload:
            size = len(n.payload["raw_hex"]) // 2
        elif isinstance(n.payload, dict):
            size = n.payload["size"]
        else:
            size = None
        if size is not None and size > max_app_payload(n.dr):
            errors.append((f"{p}.payload", f"{size} bytes exceed DR{n.dr} limit {max_app_payload(n.dr)}"))
        if n.stop_s is not None and n.stop_s <= n.start_s:
            errors.append((f"{p}.stop_s", "must be after start_s"))
        if n.activation == "OTAA" and n.channels:
            mandatory = {c.center_freq_hz for c in eu868_uplink_channels() if c.mandatory}
            if not mandatory & set(n.channels):
                errors.append((f"{p}.channels", "OTAA nodes need a mandatory channel to join"))
        for gw in n.obstacles:
            if gw != "*" and gw not in gw_ids:
                errors.append((f"{p}.obstacles.{gw}", "unknown gateway id"))
        for g in sc.gateways:
            if n.position.distance(g.position) <= 0:
                errors.append((f"{p}.position", f"coincides with gateway {g.id}"))
    for i, g in enumerate(sc.gateways):
        if g.tx_power_dbm > 27:
            errors.append((f"$.gateways[{i}].tx_power_dbm", "exceeds the 27 dBm RX2 ERP limit"))
    return errors


def validate_dict(d: dict) -> list[tuple[str, str]]:
    """All problems with a scenario document, structural then semantic."""
    errors = schema_errors(d)
    if errors:
        return errors
    try:
        Scenario.from_dict(d)
    except ScenarioError as exc:
        return exc.errors
    except (TypeError, ValueError) as exc:
        return [("$", str(exc))]
    return []
