"""Wire schemas for the telemetry/control endpoint.

Messages are flat JSON objects: {"kind": ..., "seq": ..., <payload>}.
Field names are part of the protocol; parse/serialize round-trip exactly.
"""
from __future__ import annotations

import json
KINDS = ("state", "metrics", "control", "scenario_cmd", "param_update", "error")

_REQUIRED: dict[str, tuple[str, ...]] = {
    "state": ("t", "theta", "capsules", "d", "phi", "active", "robot_link", "agent_link", "seq"),
    "control": ("target_xyz", "agent_id"),
    "param_update": (),  # all fields optional: lambda1, lambda2, d_min
    "scenario_cmd": ("op",),
    "metrics": ("min_distance",),
    "error": ("code", "detail"),
}

_SCENARIO_OPS = ("start", "pause", "reset", "load")


class WireError(ValueError):
    """Message violates its kind's schema."""


def parse_message(text: str) -> dict:
    try:
        msg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WireError(f"not valid JSON: {exc}") from exc
    if not isinstance(msg, dict):
        raise WireError("message must be a JSON object")
    kind = msg.get("kind")
    if kind not in KINDS:
        raise WireError(f"unknown kind {kind!r}")
    missing = [f for f in _REQUIRED[kind] if f not in msg]
    if missing:
        raise WireError(f"{kind} message missing fields {missing}")
    if kind == "control":
        xyz = msg["target_xyz"]
        if not (isinstance(xyz, (list, tuple)) and len(xyz) == 3):
            raise WireError("control.target_xyz must be a 3-vector")
    if kind == "scenario_cmd":
        if msg["op"] not in _SCENARIO_OPS:
            raise WireError(f"scenario_cmd.op must be one of {_SCENARIO_OPS}")
        if msg["op"] == "load" and "scenario" not in msg:
            raise WireError("scenario_cmd load needs a scenario")
    if kind == "param_update":
        for key in ("lambda1", "lambda2", "d_min"):
            if key in msg and not isinstance(msg[key], (int, float)):
                raise WireError(f"param_update.{key} must be a number")
    return msg


def serialize_message(msg: dict) -> str:
    if msg.get("kind") not in KINDS:
        raise WireError(f"unknown kind {msg.get('kind')!r}")
    return json.dumps(msg, sort_keys=True, separators=(",", ":"))


def state_message(seq: int, t: float, theta, capsules, d, phi, active, robot_link, agent_link,
                  params: dict, param_ranges: dict) -> dict:
    return {
        "kind": "state",
        "seq": seq,
        "t": t,
        "theta": list(theta),
        "capsules": capsules,
        "d": d,
        "phi": phi,
        "active": bool(active),
        "robot_link": int(robot_link),
        "agent_link": int(agent_link),
        "params": params,
        "param_ranges": param_ranges,
    }


def metrics_message(seq: int, metrics: dict) -> dict:
    return {"kind": "metrics", "seq": seq, **metrics}


def error_message(seq: int, code: str, detail: str) -> dict:
    return {"kind": "error", "seq": seq, "code": code, "detail": detail}
