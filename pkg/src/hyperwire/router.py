"""Compiles wirings into executable dataflows and routes live events.

A compiled wiring shares one operator instance (and its state) between
structurally identical subtrees, so a split feeding two lanes runs once
per input event. Event processing walks instances in topological order
and forwards only each instance's final emission, so one device event
yields at most one delivery per wiring regardless of how many lanes it
touches on the way up.

Reconfiguration is all-or-nothing and atomic with respect to event
processing: every event observes exactly one table version.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from typing import Iterable

from .events import Event
from .operators import (
    OperatorKind,
    OperatorSpec,
    OperatorState,
    apply_cast,
    apply_merge,
    apply_split,
)
from .solver import Derivation, Wiring, validate

__all__ = ["ActiveWiring", "Router", "RouterError", "DEFAULT_QUEUE_LIMIT"]

log = logging.getLogger(__name__)

DEFAULT_QUEUE_LIMIT = 1024

ACTIVE = "active"
DEGRADED = "degraded"


class RouterError(Exception):
    pass


class _Instance:
    """One live operator with its private state and resolved input ports.

    A port is (producer, lane): the producer is a capability id string for
    leaves or another _Instance, and lane selects one of its outputs.
    """

    __slots__ = ("spec", "state", "input_ports")

    def __init__(self, spec: OperatorSpec, input_ports: tuple):
        self.spec = spec
        self.state = OperatorState(spec)
        self.input_ports = input_ports


class ActiveWiring:
    """A compiled wiring plus its runtime bookkeeping."""

    __slots__ = ("wiring_id", "wiring", "app_id", "requirement_id", "status",
                 "events_in", "events_out", "drops", "queue", "instances",
                 "root_port", "leaf_types")

    def __init__(self, wiring_id: str, wiring: Wiring, app_id: str,
                 catalog_by_id: dict[str, OperatorSpec],
                 queue_limit: int = DEFAULT_QUEUE_LIMIT):
        self.wiring_id = wiring_id
        self.wiring = wiring
        self.app_id = app_id
        self.requirement_id = wiring.requirement_id
        self.status = ACTIVE
        self.events_in = 0
        self.events_out = 0
        self.drops = 0
        self.queue: deque = deque(maxlen=queue_limit)
        self.instances: list[_Instance] = []
        self.leaf_types = {}
        self.root_port = self._build(wiring.derivation, catalog_by_id, {})

    def _build(self, d: Derivation, catalog_by_id: dict, interned: dict):
        if d.is_leaf:
            self.leaf_types[d.capability_id] = d.root_type
            return (d.capability_id, 0)
        child_ports = tuple(self._build(c, catalog_by_id, interned) for c in d.children)
        key = (d.op_id, child_ports)
        inst = interned.get(key)
        if inst is None:
            inst = _Instance(catalog_by_id[d.op_id], child_ports)
            interned[key] = inst
            self.instances.append(inst)  # children interned first: topo order
        return (inst, d.out_lane)

    def process(self, event: Event) -> Event | None:
        """Push one capability event through the instance graph.

        Returns the delivery for the requirement, or None when the event's
        capability does not appear in this wiring.
        """
        if event.source_id not in self.leaf_types:
            return None
        staged = {(event.source_id, 0): event}
        for inst in self.instances:
            dirty = [i for i, p in enumerate(inst.input_ports) if p in staged]
            if not dirty:
                continue
            kind = inst.spec.kind
            out = None
            if kind is OperatorKind.SPLIT:
                for i, part in enumerate(apply_split(inst.spec, staged[inst.input_ports[0]])):
                    staged[(inst, i)] = part
                continue
            for lane in dirty:
                e_in = staged[inst.input_ports[lane]]
                if kind is OperatorKind.MERGE:
                    out = apply_merge(inst.spec, inst.state, e_in, lane)
                else:
                    out = apply_cast(inst.spec, inst.state, e_in, lane)
            if out is not None:
                staged[(inst, 0)] = out
        final = staged.get(self.root_port)
        if final is None:
            return None
        assert final.event_type == self.wiring.derivation.root_type
        return Event(self.requirement_id, final.event_type,
                     final.timestamp, final.payload)

    def counters(self) -> dict:
        return {"events_in": self.events_in, "events_out": self.events_out,
                "drops": self.drops}


def compile(w: Wiring, capabilities, catalog: Iterable[OperatorSpec],
            app_id: str = "", wiring_id: str = "",
            queue_limit: int = DEFAULT_QUEUE_LIMIT) -> ActiveWiring:
    """Validate and instantiate one wiring; raises WiringError when invalid."""
    catalog = list(catalog)
    validate(w, capabilities, catalog)
    return ActiveWiring(wiring_id, w, app_id,
                        {s.op_id: s for s in catalog}, queue_limit)


class Router:
    """Owns the set of active wirings and the capability fan-out index."""

    def __init__(self, catalog: Iterable[OperatorSpec],
                 queue_limit: int = DEFAULT_QUEUE_LIMIT):
        self.catalog = list(catalog)
        self.queue_limit = queue_limit
        self.wirings: dict[str, ActiveWiring] = {}
        self.by_capability: dict[str, set[str]] = {}
        self.version = 0
        self.unrouted_drops = 0
        self._next = 0

    def reconfigure(self, add: Iterable[tuple[Wiring, str]] = (),
                    remove: Iterable[str] = (),
                    capabilities=()) -> list[str]:
        """Apply additions and removals as one atomic step.

        `add` holds (wiring, app_id) pairs; `capabilities` is the live
        (global id, type) view used for validation. Any failure leaves the
        table untouched. Returns the ids assigned to the additions.
        Untouched wirings keep their operator state.
        """
        add = list(add)
        remove = list(remove)
        for wid in remove:
            if wid not in self.wirings:
                raise RouterError(f"no active wiring {wid!r}")
        compiled = []
        for w, app_id in add:
            self._next += 1
            wid = f"w{self._next}"
            compiled.append(compile(w, capabilities, self.catalog,
                                    app_id=app_id, wiring_id=wid,
                                    queue_limit=self.queue_limit))
        # validation done; now mutate and republish the index in one step
        for wid in remove:
            del self.wirings[wid]
        for aw in compiled:
            self.wirings[aw.wiring_id] = aw
        index: dict[str, set[str]] = {}
        for aw in self.wirings.values():
            for cap in aw.wiring.derivation.leaves:
                index.setdefault(cap, set()).add(aw.wiring_id)
        self.by_capability = index
        self.version += 1
        return [aw.wiring_id for aw in compiled]

    def mark_degraded(self, dead_capabilities: Iterable[str]) -> list[str]:
        """Flag wirings that lost a capability leaf; they stop routing."""
        dead = set(dead_capabilities)
        hit = []
        for aw in self.wirings.values():
            if aw.status == ACTIVE and aw.wiring.derivation.leaves & dead:
                aw.status = DEGRADED
                hit.append(aw.wiring_id)
        if hit:
            self.version += 1
        return hit

    def enqueue(self, capability_id: str, event: Event) -> list[str]:
        """Stage one event into every subscribed wiring's bounded queue."""
        wids = sorted(self.by_capability.get(capability_id, ()))
        if not wids:
            self.unrouted_drops += 1
            return []
        touched = []
        for wid in wids:
            aw = self.wirings[wid]
            aw.events_in += 1
            if aw.status == DEGRADED:
                aw.drops += 1
                continue
            expect = aw.leaf_types.get(capability_id)
            if expect is None or event.event_type != expect:
                aw.drops += 1
                log.warning(json.dumps({
                    "what": "malformed_event", "wiring": wid,
                    "capability": capability_id,
                    "got": event.event_type.canonical(),
                    "want": expect.canonical() if expect else None}))
                continue
            if len(aw.queue) == aw.queue.maxlen:
                aw.drops += 1  # freshest wins: the oldest queued event goes
            aw.queue.append(event)
            touched.append(wid)
        return touched

    def drain(self, wiring_ids: Iterable[str]) -> list[tuple[str, str, Event]]:
        """Run queued events to completion; returns (app, requirement, event)."""
        deliveries = []
        for wid in wiring_ids:
            aw = self.wirings.get(wid)
            if aw is None:
                continue
            while aw.queue:
                out = aw.process(aw.queue.popleft())
                if out is not None:
                    aw.events_out += 1
                    deliveries.append((aw.app_id, aw.requirement_id, out))
        return deliveries

    def on_event(self, capability_id: str, event: Event) -> tuple[int, list]:
        """Route one event under exactly one table version."""
        version = self.version
        deliveries = self.drain(self.enqueue(capability_id, event))
        return version, deliveries

    def stats(self) -> dict:
        return {
            "version": self.version,
            "unrouted_drops": self.unrouted_drops,
            "wirings": {wid: dict(status=aw.status, app_id=aw.app_id,
                                  requirement_id=aw.requirement_id,
                                  **aw.counters())
                        for wid, aw in self.wirings.items()},
        }
