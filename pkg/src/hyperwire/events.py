"""Interaction event taxonomy and runtime event values.

An :class:`EventType` describes one interaction signal as a point in the
kind x arity x domain x mode lattice; it is the vertex type of the wiring
hypergraph. An :class:`Event` is one timestamped value instance of such a
type flowing through a compiled wiring.

Both are immutable values and safe to share across execution contexts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

__all__ = [
    "Kind",
    "Domain",
    "Mode",
    "EventType",
    "Event",
    "EventModelError",
    "compatible",
    "clamp_to_domain",
    "components",
    "parse_type",
]


class EventModelError(ValueError):
    """Raised when an event type or payload violates its invariants."""


class Kind(Enum):
    BUTTON = "button"
    AXIS = "axis"
    POSITION = "position"
    ROTATION = "rotation"
    TEXT = "text"
    TRIGGER = "trigger"


class Domain(Enum):
    UNIT_SIGNED = "unit_signed"      # [-1, 1]
    UNIT_UNSIGNED = "unit_unsigned"  # [0, 1]
    DISCRETE = "discrete"            # integers
    UNBOUNDED = "unbounded"          # any real


class Mode(Enum):
    ABSOLUTE = "absolute"
    RELATIVE = "relative"


# Allowed arity range per kind. Position admits arity 1 as the component
# form produced by splitting a 2D/3D position.
_ARITY_RANGE = {
    Kind.BUTTON: (1, 1),
    Kind.AXIS: (1, 3),
    Kind.POSITION: (1, 3),
    Kind.ROTATION: (1, 3),
    Kind.TEXT: (1, 1),
    Kind.TRIGGER: (1, 1),
}

# Buttons and triggers are binary state signals.
_BINARY_KINDS = frozenset({Kind.BUTTON, Kind.TRIGGER})


class EventType:
    """Structured descriptor of an interaction signal.

    Two EventTypes are equal iff all four fields are equal; any other
    reconciliation must go through an explicit cast operator. Instances
    are interned (the type space is small and the solver hashes types in
    its innermost loops) and must be treated as immutable.
    """

    __slots__ = ("kind", "arity", "domain", "mode", "_hash")
    _pool: dict = {}

    def __new__(cls, kind: Kind, arity: int, domain: Domain, mode: Mode):
        key = (kind, arity, domain, mode)
        self = cls._pool.get(key)
        if self is not None:
            return self
        if not isinstance(kind, Kind) or not isinstance(domain, Domain) \
                or not isinstance(mode, Mode) or not isinstance(arity, int):
            raise EventModelError(f"bad event type fields {key!r}")
        lo, hi = _ARITY_RANGE[kind]
        if not lo <= arity <= hi:
            raise EventModelError(
                f"{kind.value} arity must be in [{lo},{hi}], got {arity}")
        if kind in _BINARY_KINDS and domain is not Domain.DISCRETE:
            raise EventModelError(f"{kind.value} must use the discrete domain")
        if kind is Kind.TEXT and domain is not Domain.DISCRETE:
            raise EventModelError("text must use the discrete domain")
        self = super().__new__(cls)
        self.kind = kind
        self.arity = arity
        self.domain = domain
        self.mode = mode
        self._hash = hash(key)
        cls._pool[key] = self
        return self

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, EventType):
            return NotImplemented
        return (self.kind is other.kind and self.arity == other.arity
                and self.domain is other.domain and self.mode is other.mode)

    def __hash__(self):
        return self._hash

    def __reduce__(self):
        return (EventType, (self.kind, self.arity, self.domain, self.mode))

    def canonical(self) -> str:
        """Canonical textual form: ``kind/arity/domain/mode``, lowercase."""
        return f"{self.kind.value}/{self.arity}/{self.domain.value}/{self.mode.value}"

    def __str__(self) -> str:
        return self.canonical()

    def __repr__(self) -> str:
        return f"EventType({self.canonical()})"

    def with_arity(self, arity: int) -> "EventType":
        return EventType(self.kind, arity, self.domain, self.mode)

    def zero(self):
        """The zero element of this type, used for unseen merge lanes."""
        if self.kind is Kind.TEXT:
            return ("",)
        z = 0 if self.domain is Domain.DISCRETE else 0.0
        return (z,) * self.arity


def parse_type(text: str) -> EventType:
    """Parse the canonical ``kind/arity/domain/mode`` form.

    Strict inverse of :meth:`EventType.canonical`.
    """
    parts = text.split("/")
    if len(parts) != 4:
        raise EventModelError(f"malformed type string: {text!r}")
    kind_s, arity_s, domain_s, mode_s = parts
    try:
        kind = Kind(kind_s)
        domain = Domain(domain_s)
        mode = Mode(mode_s)
        arity = int(arity_s)
    except ValueError as exc:
        raise EventModelError(f"malformed type string: {text!r}") from exc
    if arity_s != str(arity):
        raise EventModelError(f"malformed type string: {text!r}")
    return EventType(kind, arity, domain, mode)


def compatible(a: EventType, b: EventType) -> bool:
    """Direct-wiring predicate: true iff the types match exactly."""
    return a == b


def _in_domain(t: EventType, value) -> bool:
    if t.domain is Domain.DISCRETE:
        if not isinstance(value, int) or isinstance(value, bool):
            return False
        if t.kind in _BINARY_KINDS:
            return value in (0, 1)
        return True
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        return False
    if t.domain is Domain.UNIT_SIGNED:
        return -1.0 <= value <= 1.0
    if t.domain is Domain.UNIT_UNSIGNED:
        return 0.0 <= value <= 1.0
    return math.isfinite(value)


def clamp_to_domain(t: EventType, raw) -> tuple:
    """Clamp raw scalars into ``t``'s domain, returning an event payload.

    Discrete values are rounded to the nearest integer (ties away from
    zero); button/trigger values are additionally clamped to {0, 1}.
    """
    if t.kind is Kind.TEXT:
        if len(raw) != 1 or not isinstance(raw[0], str):
            raise EventModelError("text payload must be a single string")
        return (raw[0],)
    if len(raw) != t.arity:
        raise EventModelError(f"payload length {len(raw)} != arity {t.arity}")
    out = []
    for v in raw:
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise EventModelError(f"payload scalar {v!r} is not numeric")
        if t.domain is Domain.DISCRETE:
            i = int(math.floor(abs(v) + 0.5))
            i = i if v >= 0 else -i
            if t.kind in _BINARY_KINDS:
                i = min(1, max(0, i))
            out.append(i)
        elif t.domain is Domain.UNIT_SIGNED:
            out.append(min(1.0, max(-1.0, float(v))))
        elif t.domain is Domain.UNIT_UNSIGNED:
            out.append(min(1.0, max(0.0, float(v))))
        else:
            out.append(float(v))
    return tuple(out)


def components(t: EventType) -> list[EventType]:
    """Canonical split decomposition: arity copies of the arity-1 variant.

    Component order is x, y, z (index 0, 1, 2) and is part of the public
    contract.
    """
    if t.arity < 2:
        raise EventModelError(f"atomic type {t} cannot be decomposed")
    return [t.with_arity(1)] * t.arity


@dataclass(frozen=True, slots=True)
class Event:
    """One runtime value instance flowing through a compiled wiring."""

    source_id: str
    event_type: EventType
    timestamp: int  # monotonic nanoseconds
    payload: tuple

    def __post_init__(self):
        t = self.event_type
        if t.kind is Kind.TEXT:
            if len(self.payload) != 1 or not isinstance(self.payload[0], str):
                raise EventModelError("text payload must be a single string")
            return
        if len(self.payload) != t.arity:
            raise EventModelError(
                f"payload length {len(self.payload)} != arity {t.arity} for {t}"
            )
        for v in self.payload:
            if not _in_domain(t, v):
                raise EventModelError(f"scalar {v!r} outside domain of {t}")
