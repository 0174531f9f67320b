"""Wire protocol between the simulation service and teleoperation clients.

Frames are length-prefixed text: the ASCII decimal byte length of the
payload, a newline, then the payload.  A payload is the message type
optionally followed by one space and a JSON object.  Over WebSocket the
payload rides in a text message unchanged (the socket framing replaces
the length prefix).  See PROTOCOL.md at the repository root for the
normative description; the schemas here are the executable version.
"""

from __future__ import annotations

import base64
import json
from typing import Any

import numpy as np

from .errors import CrawlsimError

MAX_FRAME_BYTES = 8 * 1024 * 1024


class ProtocolError(CrawlsimError, ValueError):
    pass


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_bool(v) -> bool:
    return isinstance(v, bool)


def _is_str(v) -> bool:
    return isinstance(v, str)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


_POSE_KEYS = ("x", "y", "z", "roll", "pitch", "yaw")
_GS_KEYS = ("dx", "dy", "z", "flag_speed", "flag_z")


def _check_pose(v) -> bool:
    return (
        isinstance(v, dict)
        and sorted(v) == sorted(_POSE_KEYS)
        and all(_is_num(v[k]) for k in _POSE_KEYS)
    )


def _check_ground_speed(v) -> bool:
    return (
        isinstance(v, dict)
        and sorted(v) == sorted(_GS_KEYS)
        and all(_is_num(v[k]) for k in ("dx", "dy", "z"))
        and all(_is_bool(v[k]) for k in ("flag_speed", "flag_z"))
    )


# message type -> {field: (checker, required)}
SCHEMAS: dict[str, dict[str, tuple]] = {
    "reset": {"seed": (_is_int, False), "difficulty": (_is_str, False)},
    "cmd": {
        "v": (_is_num, True),
        "omega": (_is_num, True),
        "d_front": (_is_bool, True),
        "d_rear": (_is_bool, True),
        "low_gear": (_is_bool, True),
    },
    "record": {"on": (_is_bool, True)},
    "state": {
        "t": (_is_num, True),
        "pose": (_check_pose, True),
        "wheel_speeds": (
            lambda v: isinstance(v, list) and len(v) == 4 and all(_is_num(x) for x in v),
            True,
        ),
        "ground_speed": (_check_ground_speed, True),
        "contacts": (
            lambda v: isinstance(v, list) and all(_is_bool(x) for x in v),
            True,
        ),
        "status": (_is_str, True),
        "fsm": (lambda v: v is None or _is_str(v), False),
        "recording": (_is_bool, False),
    },
    "depth": {
        "width": (_is_int, True),
        "height": (_is_int, True),
        "data": (_is_str, True),
    },
    "map": {
        "width": (_is_int, True),
        "height": (_is_int, True),
        "resolution": (_is_num, True),
        "origin_x": (_is_num, True),
        "origin_y": (_is_num, True),
        "data": (_is_str, True),
    },
    "ack": {"for": (_is_str, True), "path": (_is_str, False)},
    "err": {"reason": (_is_str, True)},
}


def validate(msg_type: str, body: dict[str, Any]) -> None:
    schema = SCHEMAS.get(msg_type)
    if schema is None:
        raise ProtocolError(f"unknown message type {msg_type!r}")
    for key, (check, required) in schema.items():
        if key not in body:
            if required:
                raise ProtocolError(f"{msg_type}: missing field {key!r}")
            continue
        if not check(body[key]):
            raise ProtocolError(f"{msg_type}: invalid field {key!r}")
    extra = set(body) - set(schema)
    if extra:
        raise ProtocolError(f"{msg_type}: unexpected fields {sorted(extra)}")


def encode_payload(msg_type: str, body: dict[str, Any] | None = None) -> str:
    body = body or {}
    validate(msg_type, body)
    if body:
        return f"{msg_type} {json.dumps(body, separators=(',', ':'), sort_keys=True)}"
    return msg_type


def decode_payload(payload: str) -> tuple[str, dict[str, Any]]:
    msg_type, _, rest = payload.partition(" ")
    if rest:
        try:
            body = json.loads(rest)
        except json.JSONDecodeError as e:
            raise ProtocolError(f"bad JSON body: {e}") from None
        if not isinstance(body, dict):
            raise ProtocolError("message body must be a JSON object")
    else:
        body = {}
    validate(msg_type, body)
    return msg_type, body


def frame(payload: str) -> bytes:
    data = payload.encode("utf-8")
    return f"{len(data)}\n".encode("ascii") + data


def encode_frame(msg_type: str, body: dict[str, Any] | None = None) -> bytes:
    return frame(encode_payload(msg_type, body))


class FrameSplitter:
    """Incremental parser for length-prefixed frames from a byte stream."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[str]:
        self._buf.extend(data)
        out = []
        while True:
            nl = self._buf.find(b"\n")
            if nl < 0:
                if len(self._buf) > 20:
                    raise ProtocolError("missing length prefix")
                break
            try:
                length = int(self._buf[:nl])
            except ValueError:
                raise ProtocolError(f"bad length prefix {bytes(self._buf[:nl])!r}") from None
            if length < 0 or length > MAX_FRAME_BYTES:
                raise ProtocolError(f"unreasonable frame length {length}")
            if len(self._buf) < nl + 1 + length:
                break
            payload = bytes(self._buf[nl + 1 : nl + 1 + length]).decode("utf-8")
            del self._buf[: nl + 1 + length]
            out.append(payload)
        return out


def encode_u16_b64(values_mm: np.ndarray) -> str:
    """Row-major uint16 big-endian millimeters as base64 text."""
    arr = np.ascontiguousarray(values_mm, dtype=">u2")
    return base64.b64encode(arr.tobytes()).decode("ascii")


def decode_u16_b64(data: str, width: int, height: int) -> np.ndarray:
    raw = base64.b64decode(data.encode("ascii"), validate=True)
    if len(raw) != 2 * width * height:
        raise ProtocolError("depth payload size mismatch")
    return np.frombuffer(raw, dtype=">u2").reshape(height, width).astype(np.uint16)


def state_message(state, recording: bool, fsm_mode: str | None = None) -> str:
    body = {
        "t": state.t,
        "pose": {
            "x": state.x,
            "y": state.y,
            "z": state.z,
            "roll": state.roll,
            "pitch": state.pitch,
            "yaw": state.yaw,
        },
        "wheel_speeds": list(state.wheel_rim_speed),
        "ground_speed": {
            "dx": state.ground_speed.dx,
            "dy": state.ground_speed.dy,
            "z": state.ground_speed.z_clearance,
            "flag_speed": state.ground_speed.flag_speed,
            "flag_z": state.ground_speed.flag_z,
        },
        "contacts": [bool(c) for c in state.wheel_contact],
        "status": state.status.value,
        "fsm": fsm_mode,
        "recording": recording,
    }
    return encode_payload("state", body)


def depth_message(depth) -> str:
    mm = np.clip(np.rint(depth.data * 1000.0), 0, 65535).astype(np.uint16)
    return encode_payload(
        "depth",
        {"width": depth.width, "height": depth.height, "data": encode_u16_b64(mm)},
    )


def map_message(m) -> str:
    mm = np.clip(np.rint(m.heights * 1000.0), 0, 65535).astype(np.uint16)
    ny, nx = m.heights.shape
    return encode_payload(
        "map",
        {
            "width": nx,
            "height": ny,
            "resolution": m.resolution,
            "origin_x": m.origin[0],
            "origin_y": m.origin[1],
            "data": encode_u16_b64(mm),
        },
    )
