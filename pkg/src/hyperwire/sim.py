"""Simulated devices and a demo application speaking the wire protocol.

These are ordinary protocol clients: everything they do, real hardware
integrations would do the same way.
"""

from __future__ import annotations

import asyncio
import itertools
import json
import sys
import time
from typing import Callable

from .events import Event, EventModelError, parse_type
from .protocol import (
    ProtocolError,
    announce_caps,
    announce_reqs,
    canonical_json,
    event_msg,
    heartbeat,
    hello,
    read_frame,
    write_frame,
)
from .registry import HEARTBEAT_INTERVAL

__all__ = [
    "DEVICE_KINDS",
    "REQUIREMENT_KINDS",
    "SimError",
    "make_clock",
    "load_script",
    "run_device",
    "run_demo_app",
]


class SimError(Exception):
    """Script or handshake problem; maps to exit code 1 in the CLI."""


# Fixed capability sets, one per simulated device kind.
DEVICE_KINDS: dict[str, list[tuple[str, str]]] = {
    "gamepad": [
        ("dpad", "axis/2/unit_signed/absolute"),
        ("btn_a", "button/1/discrete/absolute"),
        ("btn_b", "button/1/discrete/absolute"),
        ("btn_x", "button/1/discrete/absolute"),
        ("btn_y", "button/1/discrete/absolute"),
    ],
    # four keys announced singly; pair casts combine them downstream
    "keyboard-arrows": [
        ("left", "button/1/discrete/absolute"),
        ("right", "button/1/discrete/absolute"),
        ("up", "button/1/discrete/absolute"),
        ("down", "button/1/discrete/absolute"),
    ],
    "phone-swipe": [
        ("swipe", "position/2/unit_signed/relative"),
    ],
    "joystick": [
        ("stick", "rotation/1/unit_signed/relative"),
        ("trigger", "trigger/1/discrete/absolute"),
    ],
}

REQUIREMENT_KINDS: dict[str, str] = {
    "rotation3d": "rotation/3/unit_signed/absolute",
    "motion3d": "axis/3/unit_signed/relative",
}


def make_clock(deterministic: bool) -> Callable[[], int]:
    """Timestamp source: wall ns, or a counting sequence for golden runs."""
    if deterministic:
        counter = itertools.count(1)
        return lambda: next(counter)
    return time.time_ns


def load_script(path: str):
    """Parse a script file: a step list, or {"steps": [...], "loop": bool}."""
    if path == "-":
        doc = json.load(sys.stdin)
    else:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    if isinstance(doc, dict):
        steps, loop = doc.get("steps", []), bool(doc.get("loop", False))
    else:
        steps, loop = doc, False
    if not isinstance(steps, list):
        raise SimError("script must be a list of steps")
    for i, s in enumerate(steps):
        if not isinstance(s, dict) or "capability_id" not in s or "payload" not in s:
            raise SimError(f"step {i} needs capability_id and payload")
        if not isinstance(s.get("delay_ms", 0), (int, float)) or s.get("delay_ms", 0) < 0:
            raise SimError(f"step {i} has a bad delay_ms")
    return steps, loop


async def _open(host: str, port: int, greeting: dict):
    reader, writer = await asyncio.open_connection(host, port)
    await write_frame(writer, greeting)
    reply = await read_frame(reader)
    if reply is None or reply["t"] != "WELCOME":
        writer.close()
        raise SimError(f"broker refused the handshake: {reply}")
    return reader, writer, reply["assigned_id"]


async def _heartbeats(writer):
    while True:
        await asyncio.sleep(HEARTBEAT_INTERVAL)
        await write_frame(writer, heartbeat())


async def _drain(reader, label: str):
    """Consume broker frames so errors surface; stops on EOF."""
    while True:
        try:
            m = await read_frame(reader)
        except ProtocolError as exc:
            print(f"{label}: bad frame from broker: {exc}", file=sys.stderr)
            return
        if m is None:
            return
        if m["t"] == "ERROR":
            print(f"{label}: broker error {m['code']}: {m.get('detail', '')}",
                  file=sys.stderr)


async def run_device(kind: str, host: str, port: int,
                     script: str | None = None,
                     deterministic_clock: bool = False,
                     name: str | None = None) -> int:
    """Announce a device kind's capabilities, then stream scripted events."""
    if kind not in DEVICE_KINDS:
        raise SimError(f"unknown device kind {kind!r}")
    caps = DEVICE_KINDS[kind]
    types = {cap_id: parse_type(t) for cap_id, t in caps}
    steps, loop_script = load_script(script) if script else ([], False)
    for i, s in enumerate(steps):  # fail fast, before connecting
        t = types.get(s["capability_id"])
        if t is None:
            raise SimError(f"step {i}: {kind} has no capability "
                           f"{s['capability_id']!r}")
        try:
            Event(s["capability_id"], t, 0, tuple(s["payload"]))
        except (EventModelError, TypeError) as exc:
            raise SimError(f"step {i}: payload does not fit {t}: {exc}") from exc

    clock = make_clock(deterministic_clock)
    reader, writer, _ = await _open(host, port, hello("device", name or kind))
    background = [asyncio.ensure_future(_heartbeats(writer)),
                  asyncio.ensure_future(_drain(reader, kind))]
    try:
        await write_frame(writer, announce_caps(
            [{"id": cap_id, "type": t} for cap_id, t in caps]))
        while True:
            for s in steps:
                await asyncio.sleep(s.get("delay_ms", 0) / 1000.0)
                await write_frame(writer, event_msg(
                    capability_id=s["capability_id"],
                    type=str(types[s["capability_id"]]),
                    ts_ns=clock(), payload=list(s["payload"])))
            if not loop_script or not steps:
                break
        # script finished (or empty): idle on heartbeats until the broker
        # goes away or we are interrupted
        await background[1]
        return 0
    finally:
        for task in background:
            task.cancel()
        writer.close()


async def run_demo_app(require: str, host: str, port: int) -> int:
    """Announce one requirement; print every delivered event as a JSON line."""
    if require not in REQUIREMENT_KINDS:
        raise SimError(f"unknown requirement {require!r}")
    reader, writer, _ = await _open(host, port, hello("app", "demo"))
    beats = asyncio.ensure_future(_heartbeats(writer))
    try:
        await write_frame(writer, announce_reqs(
            [{"id": require, "type": REQUIREMENT_KINDS[require],
              "label": require}]))
        while True:
            try:
                m = await read_frame(reader)
            except ProtocolError as exc:
                print(f"demo: bad frame from broker: {exc}", file=sys.stderr)
                return 1
            if m is None:
                return 0
            if m["t"] == "EVENT":
                sys.stdout.write(canonical_json(m).decode("utf-8") + "\n")
                sys.stdout.flush()
            elif m["t"] == "ERROR":
                print(f"demo: broker error {m['code']}: {m.get('detail', '')}",
                      file=sys.stderr)
    finally:
        beats.cancel()
        writer.close()
