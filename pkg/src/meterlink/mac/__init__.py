"""LoRaWAN MAC: frames and sessions plus device-class receive logic."""

from .classes import (
    Beacon,
    ClassConfig,
    DeviceState,
    DownlinkArrived,
    RxWindow,
    Step,
    UplinkEnded,
    UplinkStarted,
    class_a_step,
    class_a_windows,
    class_b_step,
    class_c_step,
    ping_slots,
)
from .crypto import AesPrimitive, HmacPrimitive
from .frames import FRAME_OVERHEAD, Frame, FrameError, JoinAccept, JoinRequest, MType, verify_mic
from .session import (
    CounterExhausted,
    PayloadTooLarge,
    Session,
    abp_session,
    build_ack,
    build_uplink,
    decrypt_payload,
    otaa_join,
)

__all__ = [
    "AesPrimitive", "Beacon", "ClassConfig", "CounterExhausted", "DeviceState",
    "DownlinkArrived", "FRAME_OVERHEAD", "Frame", "FrameError", "HmacPrimitive", "JoinAccept",
    "JoinRequest", "MType", "PayloadTooLarge", "RxWindow", "Session", "Step", "UplinkEnded",
    "UplinkStarted", "abp_session", "build_ack", "build_uplink", "class_a_step",
    "class_a_windows", "class_b_step", "class_c_step", "decrypt_payload", "otaa_join",
    "ping_slots", "verify_mic",
]
