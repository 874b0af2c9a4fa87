"""Broker-side book of record: devices, apps, profiles, liveness.

All mutations go through one Registry instance owned by the broker's
event loop; observers get ordered change notifications. Wall time never
leaks in: the clock is injected so liveness is testable.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from .events import EventType
from .operators import OperatorSpec, standard_catalog
from .solver import (
    Wiring,
    build_graph,
    solve,
    wiring_from_json,
    wiring_to_json,
)

__all__ = [
    "Capability",
    "Requirement",
    "DeviceDescriptor",
    "AppDescriptor",
    "Profile",
    "Registry",
    "RegistryError",
    "UnknownIdError",
    "ProfileError",
    "HEARTBEAT_INTERVAL",
    "LIVENESS_TIMEOUT",
    "PROFILE_FORMAT_VERSION",
]

log = logging.getLogger(__name__)

HEARTBEAT_INTERVAL = 1.0
# A peer is considered gone after three missed heartbeats.
LIVENESS_TIMEOUT = 3.0

PROFILE_FORMAT_VERSION = "1"

_SAFE_ID = re.compile(r"^[A-Za-z0-9._-]+$")


class RegistryError(Exception):
    pass


class UnknownIdError(RegistryError):
    pass


class ProfileError(RegistryError):
    pass


@dataclass(frozen=True, slots=True)
class Capability:
    capability_id: str  # local to the device; global form is "<device_id>.<capability_id>"
    event_type: EventType
    direction: str = "produces"  # or "consumes"


@dataclass(frozen=True, slots=True)
class Requirement:
    requirement_id: str
    event_type: EventType
    label: str = ""


@dataclass(slots=True)
class DeviceDescriptor:
    device_id: str
    name: str
    capabilities: tuple[Capability, ...]
    session: Any = None
    last_heartbeat: float = 0.0


@dataclass(slots=True)
class AppDescriptor:
    app_id: str
    name: str
    requirements: tuple[Requirement, ...]
    session: Any = None
    last_heartbeat: float = 0.0


@dataclass(slots=True)
class Profile:
    """A user's saved wiring choice per requirement, for one app by name."""

    profile_id: str
    app_name: str
    chosen: dict[str, Wiring] = field(default_factory=dict)
    created_ns: int = 0
    modified_ns: int = 0


def _check_unique(ids: list[str], what: str):
    if len(set(ids)) != len(ids):
        raise RegistryError(f"duplicate {what} id")
    for i in ids:
        if not i or "." in i or "/" in i:
            raise RegistryError(f"bad {what} id {i!r}")


class Registry:
    """Single-owner mutable state; not thread-safe by design."""

    def __init__(self, clock: Callable[[], float] = time.monotonic,
                 profiles_dir: str | None = None,
                 catalog: list[OperatorSpec] | None = None):
        self.clock = clock
        self.profiles_dir = profiles_dir
        self.catalog = catalog if catalog is not None else standard_catalog()
        self.devices: dict[str, DeviceDescriptor] = {}
        self.apps: dict[str, AppDescriptor] = {}
        self._counters = {"d": 0, "a": 0, "u": 0}
        self._observers: list[Callable[[dict], None]] = []

    # -- observers -----------------------------------------------------------

    def subscribe(self, callback: Callable[[dict], None]):
        self._observers.append(callback)

    def _notify(self, event: dict):
        for cb in list(self._observers):
            try:
                cb(event)
            except Exception:
                log.exception("registry observer failed")

    def _allocate(self, prefix: str) -> str:
        self._counters[prefix] += 1
        return f"{prefix}{self._counters[prefix]}"

    # -- devices ---------------------------------------------------------------

    def register_device(self, name: str, capabilities: Iterable[Capability] = (),
                        session: Any = None) -> str:
        caps = tuple(capabilities)
        _check_unique([c.capability_id for c in caps], "capability")
        device_id = self._allocate("d")
        self.devices[device_id] = DeviceDescriptor(
            device_id, name, caps, session, self.clock())
        self._notify({"kind": "device_joined", "device_id": device_id, "name": name})
        return device_id

    def set_device_capabilities(self, device_id: str, capabilities: Iterable[Capability]):
        d = self.devices.get(device_id)
        if d is None:
            raise UnknownIdError(f"no device {device_id!r}")
        caps = tuple(capabilities)
        _check_unique([c.capability_id for c in caps], "capability")
        d.capabilities = caps
        self._notify({"kind": "device_updated", "device_id": device_id})

    def unregister_device(self, device_id: str, reason: str = "unregistered"):
        if device_id not in self.devices:
            raise UnknownIdError(f"no device {device_id!r}")
        del self.devices[device_id]
        self._notify({"kind": "device_left", "device_id": device_id, "reason": reason})

    # -- apps --------------------------------------------------------------------

    def register_app(self, name: str, requirements: Iterable[Requirement] = (),
                     session: Any = None) -> str:
        reqs = tuple(requirements)
        _check_unique([r.requirement_id for r in reqs], "requirement")
        app_id = self._allocate("a")
        self.apps[app_id] = AppDescriptor(app_id, name, reqs, session, self.clock())
        self._notify({"kind": "app_joined", "app_id": app_id, "name": name})
        return app_id

    def set_app_requirements(self, app_id: str, requirements: Iterable[Requirement]):
        a = self.apps.get(app_id)
        if a is None:
            raise UnknownIdError(f"no app {app_id!r}")
        reqs = tuple(requirements)
        _check_unique([r.requirement_id for r in reqs], "requirement")
        a.requirements = reqs
        self._notify({"kind": "app_updated", "app_id": app_id})

    def unregister_app(self, app_id: str, reason: str = "unregistered"):
        if app_id not in self.apps:
            raise UnknownIdError(f"no app {app_id!r}")
        del self.apps[app_id]
        self._notify({"kind": "app_left", "app_id": app_id, "reason": reason})

    def register_ui(self) -> str:
        return self._allocate("u")

    # -- liveness -----------------------------------------------------------------

    def heartbeat(self, peer_id: str):
        now = self.clock()
        if peer_id in self.devices:
            self.devices[peer_id].last_heartbeat = now
        elif peer_id in self.apps:
            self.apps[peer_id].last_heartbeat = now
        else:
            raise UnknownIdError(f"no peer {peer_id!r}")

    def sweep(self) -> list[str]:
        """Drop every peer whose last heartbeat is too old; returns their ids."""
        now = self.clock()
        dead = [d.device_id for d in self.devices.values()
                if now - d.last_heartbeat > LIVENESS_TIMEOUT]
        dead += [a.app_id for a in self.apps.values()
                 if now - a.last_heartbeat > LIVENESS_TIMEOUT]
        for peer_id in dead:
            if peer_id in self.devices:
                self.unregister_device(peer_id, reason="timeout")
            else:
                self.unregister_app(peer_id, reason="timeout")
        return dead

    # -- lookups ---------------------------------------------------------------------

    def live_capabilities(self) -> list[tuple[str, EventType]]:
        """(global capability id, type) for every producing capability."""
        out = []
        for d in self.devices.values():
            for c in d.capabilities:
                if c.direction == "produces":
                    out.append((f"{d.device_id}.{c.capability_id}", c.event_type))
        return out

    def requirement_of(self, app_id: str, requirement_id: str) -> Requirement:
        a = self.apps.get(app_id)
        if a is None:
            raise UnknownIdError(f"no app {app_id!r}")
        for r in a.requirements:
            if r.requirement_id == requirement_id:
                return r
        raise UnknownIdError(f"app {app_id!r} has no requirement {requirement_id!r}")

    def candidate_wirings(self, app_id: str, requirement_id: str,
                          max_depth: int = 3,
                          max_results: int = 128) -> list[Wiring]:
        """Ranked wiring choices for one requirement, from live devices.

        Depth 3 covers every split+cast+merge shape while keeping the
        choice list responsive; deeper searches mostly add chains of free
        reinterpreting casts around the same shapes. Whole cost classes
        are kept together, so raising max_results never splits a tie.
        """
        req = self.requirement_of(app_id, requirement_id)
        caps = self.live_capabilities()
        if not caps:
            return []
        g = build_graph(caps, self.catalog, req.event_type)
        return solve(g, max_depth=max_depth, max_results=max_results,
                     requirement_id=requirement_id, include_ties=True)

    # -- profiles ----------------------------------------------------------------------

    def _profile_path(self, profile_id: str) -> str:
        if self.profiles_dir is None:
            raise ProfileError("no profiles directory configured")
        if not _SAFE_ID.match(profile_id):
            raise ProfileError(f"bad profile id {profile_id!r}")
        return os.path.join(self.profiles_dir, f"{profile_id}.json")

    def _app_by_name(self, name: str) -> AppDescriptor | None:
        for a in self.apps.values():
            if a.name == name:
                return a
        return None

    def save_profile(self, p: Profile) -> str:
        """Validate against the registered app's requirements and persist."""
        app = self._app_by_name(p.app_name)
        if app is None:
            raise ProfileError(f"app {p.app_name!r} is not registered")
        reqs = {r.requirement_id: r for r in app.requirements}
        for req_id, w in p.chosen.items():
            r = reqs.get(req_id)
            if r is None:
                raise ProfileError(f"app {p.app_name!r} has no requirement {req_id!r}")
            if w.derivation.root_type != r.event_type:
                raise ProfileError(
                    f"wiring for {req_id!r} yields {w.derivation.root_type}, "
                    f"requirement wants {r.event_type}")
        path = self._profile_path(p.profile_id)
        doc = {
            "format_version": PROFILE_FORMAT_VERSION,
            "profile_id": p.profile_id,
            "app_name": p.app_name,
            "created_ns": p.created_ns,
            "modified_ns": p.modified_ns,
            "chosen": {req_id: wiring_to_json(w) for req_id, w in p.chosen.items()},
        }
        os.makedirs(self.profiles_dir, exist_ok=True)
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(doc, f, sort_keys=True, indent=1)
        os.replace(tmp, path)
        return path

    def load_profile(self, profile_id: str) -> Profile:
        """Parse a stored profile; app validation happens at apply time."""
        path = self._profile_path(profile_id)
        try:
            with open(path, encoding="utf-8") as f:
                doc = json.load(f)
        except FileNotFoundError:
            raise ProfileError(f"no profile {profile_id!r}") from None
        except (OSError, json.JSONDecodeError) as exc:
            raise ProfileError(f"unreadable profile {profile_id!r}: {exc}") from exc
        try:
            if doc["format_version"] != PROFILE_FORMAT_VERSION:
                raise ProfileError(
                    f"profile {profile_id!r} has format {doc['format_version']!r}")
            chosen = {req_id: wiring_from_json(w)
                      for req_id, w in doc["chosen"].items()}
            return Profile(doc["profile_id"], doc["app_name"], chosen,
                           int(doc["created_ns"]), int(doc["modified_ns"]))
        except ProfileError:
            raise
        except Exception as exc:
            raise ProfileError(f"malformed profile {profile_id!r}: {exc}") from exc
