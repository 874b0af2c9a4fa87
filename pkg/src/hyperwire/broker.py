"""Broker runtime: TCP sessions, liveness sweeps, and event fan-out.

One asyncio loop owns everything. The registry and router are plain
single-threaded objects; every mutation happens on the loop, so sessions,
HTTP handlers, and background tasks never race each other.
"""

from __future__ import annotations

import asyncio
import logging
import time
from typing import Callable

from .events import Event, EventModelError, EventType, parse_type
from .operators import OperatorSpec, standard_catalog
from .protocol import (
    ProtocolError,
    error_msg,
    event_msg,
    read_frame,
    welcome,
    write_frame,
)
from .registry import (
    Capability,
    Profile,
    ProfileError,
    Registry,
    Requirement,
    UnknownIdError,
)
from .router import Router
from .solver import Wiring, WiringError, wiring_from_json, wiring_to_json

__all__ = [
    "Broker",
    "Session",
    "Subscriber",
    "CLOSE",
    "HANDSHAKE_TIMEOUT",
    "SESSION_OUTBOX",
    "SUBSCRIBER_BACKLOG",
    "DIGEST_INTERVAL",
    "SAMPLE_INTERVAL",
]

log = logging.getLogger(__name__)

HANDSHAKE_TIMEOUT = 5.0
SESSION_OUTBOX = 256
SUBSCRIBER_BACKLOG = 64
DIGEST_INTERVAL = 1.0
SAMPLE_INTERVAL = 0.1

# Sentinel pushed into a queue to tell its consumer to shut down.
CLOSE = object()

# Frame-decode failures that leave the byte stream unusable; anything else
# consumed a whole frame, so the session can continue after an ERROR reply.
_FATAL_DECODE = ("truncated", "overflow")


class Session:
    """One connected peer: reader loop state plus a buffered writer."""

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self.reader = reader
        self.writer = writer
        self.role = ""
        self.peer_id = ""
        self.name = ""
        self.caps: dict[str, EventType] = {}  # devices: local id -> type
        self.outbox: asyncio.Queue = asyncio.Queue(SESSION_OUTBOX)
        self.dropped_out = 0
        self.closing = False
        self._pump_task: asyncio.Task | None = None

    def start_pump(self):
        self._pump_task = asyncio.get_running_loop().create_task(self._pump())

    async def _pump(self):
        while True:
            m = await self.outbox.get()
            if m is CLOSE:
                break
            try:
                await write_frame(self.writer, m)
            except (ConnectionError, OSError):
                break
        self.writer.close()

    def send(self, m: dict):
        if self.closing:
            return
        try:
            self.outbox.put_nowait(m)
        except asyncio.QueueFull:
            if m.get("t") == "EVENT":
                self.dropped_out += 1  # shed data frames for slow consumers
            else:
                self.close()  # a lost control frame means the peer is gone

    def close(self):
        if self.closing:
            return
        self.closing = True
        try:
            self.outbox.put_nowait(CLOSE)
        except asyncio.QueueFull:
            self.outbox.get_nowait()
            self.outbox.put_nowait(CLOSE)
        if self._pump_task is None:
            self.writer.close()


class Subscriber:
    """One push-feed consumer (the WebSocket endpoint drains the queue)."""

    __slots__ = ("queue", "samples", "dead")

    def __init__(self, samples: bool):
        self.queue: asyncio.Queue = asyncio.Queue(SUBSCRIBER_BACKLOG)
        self.samples = samples
        self.dead = False


class Broker:
    def __init__(self, profiles_dir: str | None = None,
                 clock: Callable[[], float] = time.monotonic,
                 catalog: list[OperatorSpec] | None = None,
                 sweep_interval: float = 0.5,
                 handshake_timeout: float = HANDSHAKE_TIMEOUT):
        self.catalog = list(catalog) if catalog is not None else standard_catalog()
        self.registry = Registry(clock=clock, profiles_dir=profiles_dir,
                                 catalog=self.catalog)
        self.router = Router(self.catalog)
        self.sweep_interval = sweep_interval
        self.handshake_timeout = handshake_timeout
        self.sessions: dict[str, Session] = {}
        self.slots: dict[tuple[str, str], str] = {}  # (app, req) -> wiring id
        self.subscribers: list[Subscriber] = []
        self.address: tuple[str, int] | None = None
        self._caps_of: dict[str, list[str]] = {}  # device -> global cap ids
        self._epoch = 0  # bumped on topology change; keys candidate cache
        self._cand_cache: dict[tuple[str, str], tuple[int, list[dict]]] = {}
        self._samples: dict[tuple[str, str], dict] = {}
        self._server: asyncio.Server | None = None
        self._tasks: list[asyncio.Task] = []
        self.registry.subscribe(self._on_registry_event)

    # -- lifecycle -------------------------------------------------------------

    async def start(self, host: str = "127.0.0.1", port: int = 4715):
        self._server = await asyncio.start_server(self._handle_conn, host, port)
        self.address = self._server.sockets[0].getsockname()[:2]
        loop = asyncio.get_running_loop()
        self._tasks = [
            loop.create_task(self._sweeper()),
            loop.create_task(self._digester()),
            loop.create_task(self._sampler()),
        ]

    async def stop(self):
        for t in self._tasks:
            t.cancel()
        await asyncio.gather(*self._tasks, return_exceptions=True)
        self._tasks = []
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        for s in list(self.sessions.values()):
            s.close()

    async def _sweeper(self):
        while True:
            await asyncio.sleep(self.sweep_interval)
            self.registry.sweep()

    async def _digester(self):
        while True:
            await asyncio.sleep(DIGEST_INTERVAL)
            if self.subscribers:
                self.publish({"kind": "counters", **self.router.stats()})

    async def _sampler(self):
        while True:
            await asyncio.sleep(SAMPLE_INTERVAL)
            if self._samples:
                pending, self._samples = self._samples, {}
                for m in pending.values():
                    self.publish(m, is_sample=True)

    # -- push feed ---------------------------------------------------------------

    def subscribe_ws(self, samples: bool = False) -> Subscriber:
        sub = Subscriber(samples)
        self.subscribers.append(sub)
        return sub

    def unsubscribe_ws(self, sub: Subscriber):
        if sub in self.subscribers:
            self.subscribers.remove(sub)

    def publish(self, msg: dict, is_sample: bool = False):
        for sub in list(self.subscribers):
            if sub.dead or (is_sample and not sub.samples):
                continue
            try:
                sub.queue.put_nowait(msg)
            except asyncio.QueueFull:
                # backlogged consumer: make room for the close marker
                sub.dead = True
                sub.queue.get_nowait()
                sub.queue.put_nowait(CLOSE)

    # -- registry reactions -----------------------------------------------------------

    def _on_registry_event(self, ev: dict):
        kind = ev["kind"]
        if kind in ("device_joined", "device_updated", "device_left",
                    "app_joined", "app_updated", "app_left"):
            self._epoch += 1
        if kind == "device_updated":
            d = self.registry.devices[ev["device_id"]]
            fresh = [f"{d.device_id}.{c.capability_id}" for c in d.capabilities
                     if c.direction == "produces"]
            gone = set(self._caps_of.get(d.device_id, ())) - set(fresh)
            self._caps_of[d.device_id] = fresh
            self._degrade(gone)
        elif kind == "device_left":
            self._degrade(self._caps_of.pop(ev["device_id"], ()))
            self._drop_session(ev["device_id"])
        elif kind == "app_left":
            app_id = ev["app_id"]
            wids = [wid for (a, _), wid in self.slots.items() if a == app_id]
            if wids:
                self.router.reconfigure(remove=wids)
            self.slots = {k: v for k, v in self.slots.items() if k[0] != app_id}
            self._drop_session(app_id)
        self.publish(ev)

    def _degrade(self, caps):
        hit = self.router.mark_degraded(caps)
        if hit:
            self.publish({"kind": "wiring_degraded", "wiring_ids": hit,
                          "version": self.router.version})

    def _drop_session(self, peer_id: str):
        s = self.sessions.pop(peer_id, None)
        if s is not None:
            s.close()

    # -- wiring control -------------------------------------------------------------

    def apply_wiring(self, app_id: str, requirement_id: str, w: Wiring) -> dict:
        """Swap one requirement's wiring atomically; persists the profile.

        Raises UnknownIdError for a missing app/requirement and WiringError
        when the wiring does not fit the requirement or the live devices.
        """
        req = self.registry.requirement_of(app_id, requirement_id)
        if w.requirement_id != requirement_id:
            raise WiringError("requirement_mismatch", "root",
                              f"wiring is for {w.requirement_id!r}")
        if w.derivation.root_type != req.event_type:
            raise WiringError("type_mismatch", "root",
                              f"wiring yields {w.derivation.root_type}, "
                              f"requirement wants {req.event_type}")
        old = self.slots.get((app_id, requirement_id))
        wids = self.router.reconfigure(
            add=[(w, app_id)],
            remove=[old] if old else [],
            capabilities=self.registry.live_capabilities())
        self.slots[(app_id, requirement_id)] = wids[0]
        self._persist_profile(app_id)
        self.publish({"kind": "wiring_applied", "app_id": app_id,
                      "requirement_id": requirement_id, "wiring_id": wids[0],
                      "version": self.router.version})
        return {"wiring_id": wids[0], "version": self.router.version}

    def _persist_profile(self, app_id: str):
        if self.registry.profiles_dir is None:
            return
        app = self.registry.apps[app_id]
        chosen = {req_id: self.router.wirings[wid].wiring
                  for (a, req_id), wid in self.slots.items() if a == app_id}
        now = time.time_ns()
        try:
            created = self.registry.load_profile(app.name).created_ns
        except ProfileError:
            created = now
        try:
            self.registry.save_profile(
                Profile(app.name, app.name, chosen, created, now))
        except ProfileError as exc:
            log.warning("profile for %r not saved: %s", app.name, exc)

    def _restore_profile(self, app_id: str):
        if self.registry.profiles_dir is None:
            return
        app = self.registry.apps[app_id]
        try:
            p = self.registry.load_profile(app.name)
        except ProfileError:
            return
        have = {r.requirement_id for r in app.requirements}
        for req_id in sorted(p.chosen):
            if req_id not in have:
                continue
            try:
                self.apply_wiring(app_id, req_id, p.chosen[req_id])
            except (WiringError, UnknownIdError) as exc:
                log.info("stored wiring for %r skipped: %s", req_id, exc)

    # -- snapshots ---------------------------------------------------------------------

    def _candidates(self, app_id: str, req_id: str) -> list[dict]:
        key = (app_id, req_id)
        hit = self._cand_cache.get(key)
        if hit is not None and hit[0] == self._epoch:
            return hit[1]
        try:
            found = [wiring_to_json(w)
                     for w in self.registry.candidate_wirings(app_id, req_id)]
        except UnknownIdError:
            found = []
        self._cand_cache[key] = (self._epoch, found)
        return found

    def snapshot(self) -> dict:
        stats = self.router.stats()
        wirings = {}
        for wid, aw in self.router.wirings.items():
            wirings[wid] = dict(stats["wirings"][wid])
            wirings[wid]["wiring"] = wiring_to_json(aw.wiring)
        return {
            "version": self.router.version,
            "unrouted_drops": stats["unrouted_drops"],
            "devices": [
                {"device_id": d.device_id, "name": d.name,
                 "capabilities": [
                     {"id": c.capability_id, "type": str(c.event_type),
                      "direction": c.direction} for c in d.capabilities]}
                for d in self.registry.devices.values()],
            "apps": [
                {"app_id": a.app_id, "name": a.name,
                 "requirements": [
                     {"id": r.requirement_id, "type": str(r.event_type),
                      "label": r.label} for r in a.requirements]}
                for a in self.registry.apps.values()],
            "wirings": wirings,
            "candidates": {
                a.app_id: {r.requirement_id:
                           self._candidates(a.app_id, r.requirement_id)
                           for r in a.requirements}
                for a in self.registry.apps.values()},
        }

    # -- TCP sessions ---------------------------------------------------------------

    async def _handle_conn(self, reader: asyncio.StreamReader,
                           writer: asyncio.StreamWriter):
        session = Session(reader, writer)
        try:
            if await self._handshake(session):
                await self._session_loop(session)
        except (ConnectionError, OSError):
            pass
        finally:
            await self._cleanup(session)

    async def _refuse(self, session: Session, m: dict):
        try:
            await asyncio.wait_for(write_frame(session.writer, m), 1.0)
        except (ConnectionError, OSError, asyncio.TimeoutError):
            pass

    async def _handshake(self, session: Session) -> bool:
        try:
            first = await asyncio.wait_for(read_frame(session.reader),
                                           self.handshake_timeout)
        except asyncio.TimeoutError:
            await self._refuse(session, error_msg("handshake", "no HELLO in time"))
            return False
        except ProtocolError as exc:
            await self._refuse(session, error_msg(exc.code, exc.detail))
            return False
        if first is None:
            return False
        if first["t"] != "HELLO":
            await self._refuse(session,
                               error_msg("handshake",
                                         f"expected HELLO, got {first['t']}"))
            return False
        role = first["role"]
        name = first.get("name", "")
        if role == "device":
            peer_id = self.registry.register_device(name, (), session)
        elif role == "app":
            peer_id = self.registry.register_app(name, (), session)
        else:
            peer_id = self.registry.register_ui()
        session.role, session.peer_id, session.name = role, peer_id, name
        self.sessions[peer_id] = session
        session.start_pump()
        session.send(welcome(peer_id))
        return True

    async def _session_loop(self, session: Session):
        while not session.closing:
            try:
                m = await read_frame(session.reader)
            except ProtocolError as exc:
                session.send(error_msg(exc.code, exc.detail))
                if exc.code in _FATAL_DECODE:
                    break
                continue
            if m is None:
                break
            self._touch(session)
            self._dispatch(session, m)

    def _touch(self, session: Session):
        if session.role == "ui":
            return
        try:
            self.registry.heartbeat(session.peer_id)
        except UnknownIdError:
            # swept for silence while the frame was in flight
            session.send(error_msg("handshake", "peer expired, reconnect"))
            session.close()

    def _dispatch(self, session: Session, m: dict):
        t = m["t"]
        if t == "HEARTBEAT":
            return  # _touch already counted it
        if t == "EVENT":
            self._handle_event(session, m)
        elif t == "ANNOUNCE_CAPS":
            self._handle_caps(session, m)
        elif t == "ANNOUNCE_REQS":
            self._handle_reqs(session, m)
        elif t == "WIRING_SET":
            self._handle_wiring_set(session, m)
        elif t == "ERROR":
            log.info("peer %s reports %s: %s",
                     session.peer_id, m["code"], m.get("detail", ""))
        else:
            session.send(error_msg("schema", f"unexpected {t} after handshake"))

    def _handle_caps(self, session: Session, m: dict):
        if session.role != "device":
            session.send(error_msg("schema", "only devices announce capabilities"))
            return
        caps = [Capability(c["id"], parse_type(c["type"]),
                           c.get("direction", "produces"))
                for c in m["capabilities"]]
        try:
            self.registry.set_device_capabilities(session.peer_id, caps)
        except (UnknownIdError, ValueError) as exc:
            session.send(error_msg("schema", str(exc)))
            return
        session.caps = {c.capability_id: c.event_type for c in caps
                        if c.direction == "produces"}

    def _handle_reqs(self, session: Session, m: dict):
        if session.role != "app":
            session.send(error_msg("schema", "only apps announce requirements"))
            return
        reqs = [Requirement(r["id"], parse_type(r["type"]), r.get("label", ""))
                for r in m["requirements"]]
        try:
            self.registry.set_app_requirements(session.peer_id, reqs)
        except (UnknownIdError, ValueError) as exc:
            session.send(error_msg("schema", str(exc)))
            return
        self._restore_profile(session.peer_id)

    def _handle_event(self, session: Session, m: dict):
        if session.role != "device":
            session.send(error_msg("schema", "only devices emit events"))
            return
        cap_id = m.get("capability_id")
        if cap_id is None:
            session.send(error_msg("schema", "device events carry capability_id"))
            return
        declared = parse_type(m["type"])
        if session.caps.get(cap_id) != declared:
            session.send(error_msg("schema",
                                   f"no announced capability {cap_id!r} "
                                   f"of type {m['type']}"))
            return
        source = f"{session.peer_id}.{cap_id}"
        try:
            ev = Event(source, declared, m["ts_ns"], tuple(m["payload"]))
        except EventModelError as exc:
            session.send(error_msg("schema", str(exc)))
            return
        _, deliveries = self.router.on_event(source, ev)
        for app_id, req_id, out in deliveries:
            frame = event_msg(requirement_id=req_id, type=str(out.event_type),
                              ts_ns=out.timestamp, payload=list(out.payload))
            target = self.sessions.get(app_id)
            if target is not None:
                target.send(frame)
            self._samples[(app_id, req_id)] = {
                "kind": "event_sample", "app_id": app_id,
                "requirement_id": req_id, "type": str(out.event_type),
                "ts_ns": out.timestamp, "payload": list(out.payload)}

    def _handle_wiring_set(self, session: Session, m: dict):
        if session.role != "app":
            session.send(error_msg("schema", "only apps set wirings"))
            return
        try:
            w = wiring_from_json(m["wiring"])
            self.apply_wiring(session.peer_id, m["requirement_id"], w)
        except WiringError as exc:
            session.send(error_msg("wiring", str(exc)))
        except UnknownIdError as exc:
            session.send(error_msg("wiring", str(exc)))

    async def _cleanup(self, session: Session):
        peer_id = session.peer_id
        if peer_id:
            # may already be gone if the sweeper got there first
            if peer_id in self.registry.devices:
                self.registry.unregister_device(peer_id, reason="disconnect")
            elif peer_id in self.registry.apps:
                self.registry.unregister_app(peer_id, reason="disconnect")
            self.sessions.pop(peer_id, None)
        session.close()
        try:
            await session.writer.wait_closed()
        except (ConnectionError, OSError):
            pass
