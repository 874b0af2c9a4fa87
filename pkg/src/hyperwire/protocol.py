"""Length-prefixed JSON wire protocol.

Frame: 4-byte big-endian unsigned length N, then exactly N bytes of
UTF-8 JSON holding one message object. Encoding is canonical (sorted
keys, no insignificant whitespace, UTF-8, no NaN/Infinity) so equal
messages produce equal bytes. The decoder is total: any byte string
yields either a message or a ProtocolError with a stable code.
"""

from __future__ import annotations

import asyncio
import json
import math
import struct

from .events import EventModelError, parse_type

__all__ = [
    "MAX_FRAME",
    "PROTOCOL_VERSION",
    "ProtocolError",
    "canonical_json",
    "encode_frame",
    "decode_frame",
    "decode_body",
    "validate_message",
    "read_frame",
    "write_frame",
    "hello",
    "welcome",
    "announce_caps",
    "announce_reqs",
    "event_msg",
    "wiring_set",
    "heartbeat",
    "error_msg",
]

MAX_FRAME = 1_048_576
PROTOCOL_VERSION = 1

ROLES = ("device", "app", "ui")
DIRECTIONS = ("produces", "consumes")

# decode error codes: truncated overflow utf8 json schema unknown_type
# version trailing


class ProtocolError(Exception):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False).encode("utf-8")


def _reject_constant(name):
    raise ValueError(f"non-finite constant {name}")


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) \
        and math.isfinite(v)


def _need(m: dict, spec: dict):
    """Check fields against {name: (required, predicate)}; reject strays."""
    for key in m:
        if key not in spec and key not in ("t", "v"):
            raise ProtocolError("schema", f"unexpected field {key!r}")
    for key, (required, pred) in spec.items():
        if key not in m:
            if required:
                raise ProtocolError("schema", f"missing field {key!r}")
            continue
        if not pred(m[key]):
            raise ProtocolError("schema", f"bad field {key!r}")


def _valid_type_string(s) -> bool:
    if not isinstance(s, str):
        return False
    try:
        parse_type(s)
        return True
    except EventModelError:
        return False


def _valid_caps(v) -> bool:
    if not isinstance(v, list):
        return False
    for c in v:
        if not isinstance(c, dict) or set(c) - {"id", "type", "direction"}:
            return False
        if not isinstance(c.get("id"), str) or not c["id"]:
            return False
        if not _valid_type_string(c.get("type")):
            return False
        if c.get("direction", "produces") not in DIRECTIONS:
            return False
    return True


def _valid_reqs(v) -> bool:
    if not isinstance(v, list):
        return False
    for r in v:
        if not isinstance(r, dict) or set(r) - {"id", "type", "label"}:
            return False
        if not isinstance(r.get("id"), str) or not r["id"]:
            return False
        if not _valid_type_string(r.get("type")):
            return False
        if not isinstance(r.get("label", ""), str):
            return False
    return True


def _validate_event(m: dict):
    _need(m, {
        "capability_id": (False, lambda v: isinstance(v, str) and v),
        "requirement_id": (False, lambda v: isinstance(v, str) and v),
        "type": (True, _valid_type_string),
        "ts_ns": (True, lambda v: isinstance(v, int) and not isinstance(v, bool) and v >= 0),
        "payload": (True, lambda v: isinstance(v, list)),
    })
    if ("capability_id" in m) == ("requirement_id" in m):
        raise ProtocolError("schema", "exactly one of capability_id/requirement_id")
    t = parse_type(m["type"])
    payload = m["payload"]
    if t.kind.value == "text":
        if len(payload) != 1 or not isinstance(payload[0], str):
            raise ProtocolError("schema", "text payload must be one string")
        return
    if len(payload) != t.arity:
        raise ProtocolError("schema",
                            f"payload length {len(payload)} != arity {t.arity}")
    if not all(_is_num(v) for v in payload):
        raise ProtocolError("schema", "payload scalars must be finite numbers")


_SCHEMAS = {
    "HELLO": lambda m: _need(m, {
        "role": (True, lambda v: v in ROLES),
        "name": (False, lambda v: isinstance(v, str)),
    }),
    "WELCOME": lambda m: _need(m, {
        "assigned_id": (True, lambda v: isinstance(v, str) and v),
    }),
    "ANNOUNCE_CAPS": lambda m: _need(m, {"capabilities": (True, _valid_caps)}),
    "ANNOUNCE_REQS": lambda m: _need(m, {"requirements": (True, _valid_reqs)}),
    "EVENT": _validate_event,
    "WIRING_SET": lambda m: _need(m, {
        "requirement_id": (True, lambda v: isinstance(v, str) and v),
        "wiring": (True, lambda v: isinstance(v, dict)),
    }),
    "HEARTBEAT": lambda m: _need(m, {}),
    "ERROR": lambda m: _need(m, {
        "code": (True, lambda v: isinstance(v, str) and v),
        "detail": (False, lambda v: isinstance(v, str)),
    }),
}


def validate_message(m) -> dict:
    if not isinstance(m, dict):
        raise ProtocolError("schema", "message must be a JSON object")
    t = m.get("t")
    if not isinstance(t, str):
        raise ProtocolError("schema", "missing message type")
    v = m.get("v")
    if not isinstance(v, int) or isinstance(v, bool):
        raise ProtocolError("schema", "missing protocol version")
    if v != PROTOCOL_VERSION:
        raise ProtocolError("version", f"unsupported version {v}")
    checker = _SCHEMAS.get(t)
    if checker is None:
        raise ProtocolError("unknown_type", t)
    checker(m)
    return m


def encode_frame(m: dict) -> bytes:
    validate_message(m)
    body = canonical_json(m)
    if len(body) > MAX_FRAME:
        raise ProtocolError("overflow", f"{len(body)} byte body")
    return struct.pack("!I", len(body)) + body


def decode_body(body: bytes) -> dict:
    try:
        text = body.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProtocolError("utf8", str(exc)) from exc
    try:
        obj = json.loads(text, parse_constant=_reject_constant)
    except (ValueError, RecursionError) as exc:
        raise ProtocolError("json", str(exc)[:200]) from exc
    return validate_message(obj)


def decode_frame(buf: bytes) -> dict:
    """Decode one complete frame; rejects trailing bytes."""
    if len(buf) < 4:
        raise ProtocolError("truncated", "no length prefix")
    (n,) = struct.unpack("!I", buf[:4])
    if n > MAX_FRAME:
        raise ProtocolError("overflow", f"declared length {n}")
    if len(buf) < 4 + n:
        raise ProtocolError("truncated", f"want {n} body bytes, have {len(buf) - 4}")
    if len(buf) > 4 + n:
        raise ProtocolError("trailing", f"{len(buf) - 4 - n} bytes past frame end")
    return decode_body(buf[4:])


async def read_frame(reader: asyncio.StreamReader) -> dict | None:
    """Read one frame from a stream; None on clean EOF between frames."""
    try:
        prefix = await reader.readexactly(4)
    except asyncio.IncompleteReadError as exc:
        if not exc.partial:
            return None
        raise ProtocolError("truncated", "EOF inside length prefix") from exc
    (n,) = struct.unpack("!I", prefix)
    if n > MAX_FRAME:
        raise ProtocolError("overflow", f"declared length {n}")
    try:
        body = await reader.readexactly(n)
    except asyncio.IncompleteReadError as exc:
        raise ProtocolError("truncated", "EOF inside frame body") from exc
    return decode_body(body)


async def write_frame(writer: asyncio.StreamWriter, m: dict):
    writer.write(encode_frame(m))
    await writer.drain()


# -- constructors -------------------------------------------------------------

def _msg(t: str, **fields) -> dict:
    m = {"t": t, "v": PROTOCOL_VERSION}
    m.update(fields)
    return m


def hello(role: str, name: str = "") -> dict:
    return _msg("HELLO", role=role, name=name)


def welcome(assigned_id: str) -> dict:
    return _msg("WELCOME", assigned_id=assigned_id)


def announce_caps(capabilities: list[dict]) -> dict:
    return _msg("ANNOUNCE_CAPS", capabilities=capabilities)


def announce_reqs(requirements: list[dict]) -> dict:
    return _msg("ANNOUNCE_REQS", requirements=requirements)


def event_msg(*, capability_id: str | None = None,
              requirement_id: str | None = None,
              type: str, ts_ns: int, payload: list) -> dict:
    fields = {"type": type, "ts_ns": ts_ns, "payload": payload}
    if capability_id is not None:
        fields["capability_id"] = capability_id
    if requirement_id is not None:
        fields["requirement_id"] = requirement_id
    return _msg("EVENT", **fields)


def wiring_set(requirement_id: str, wiring: dict) -> dict:
    return _msg("WIRING_SET", requirement_id=requirement_id, wiring=wiring)


def heartbeat() -> dict:
    return _msg("HEARTBEAT")


def error_msg(code: str, detail: str = "") -> dict:
    return _msg("ERROR", code=code, detail=detail)
