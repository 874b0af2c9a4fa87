"""Split, merge, and cast operators: the hyperedges of the wiring graph.

Each OperatorSpec declares typed endpoints; apply_* functions give the
runtime semantics. Specs are immutable and shared; OperatorState is owned
by exactly one compiled wiring and mutated only by its processing context.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .events import (
    Domain,
    Event,
    EventType,
    Kind,
    Mode,
    clamp_to_domain,
    components,
)

__all__ = [
    "OperatorKind",
    "OperatorSpec",
    "OperatorState",
    "OperatorError",
    "apply_split",
    "apply_merge",
    "apply_cast",
    "standard_catalog",
    "CAST_RULES",
]


class OperatorError(ValueError):
    """Raised on operator/event mismatches or malformed operator specs."""


class OperatorKind(Enum):
    SPLIT = "split"
    MERGE = "merge"
    CAST = "cast"


# Cast rule identifiers. A cast op_id has the form "cast:{rule}:{output
# canonical type}"; apply_cast dispatches on the rule segment.
CAST_RULES = (
    "button_pair_to_axis",
    "button_to_trigger",
    "unsigned_to_signed",
    "signed_to_unsigned",
    "relative_to_absolute",
    "axis_to_rotation",
    "rotation_to_axis",
    "position_to_axis",
)

# Rules that reinterpret the payload without changing values.
_REINTERPRETS = frozenset({"axis_to_rotation", "rotation_to_axis", "position_to_axis"})
_STATEFUL_RULES = frozenset({"button_pair_to_axis", "relative_to_absolute"})


@dataclass(frozen=True, slots=True)
class OperatorSpec:
    """One split/merge/cast rule with typed endpoints.

    params is a sorted tuple of (name, value) pairs so the spec stays
    hashable; use param() for lookup.
    """

    op_id: str
    kind: OperatorKind
    inputs: tuple[EventType, ...]
    outputs: tuple[EventType, ...]
    stateful: bool = False
    params: tuple[tuple[str, float], ...] = ()
    cost: int = 1

    def __post_init__(self):
        if self.cost < 0:
            raise OperatorError(f"{self.op_id}: cost must be non-negative")
        if self.kind is OperatorKind.SPLIT:
            if len(self.inputs) != 1:
                raise OperatorError(f"{self.op_id}: split takes exactly one input")
            if tuple(components(self.inputs[0])) != self.outputs:
                raise OperatorError(f"{self.op_id}: split outputs must be the components of its input")
        elif self.kind is OperatorKind.MERGE:
            if not 2 <= len(self.inputs) <= 3 or len(self.outputs) != 1:
                raise OperatorError(f"{self.op_id}: merge takes 2-3 inputs and one output")
            if self.inputs != tuple(components(self.outputs[0])):
                raise OperatorError(f"{self.op_id}: merge inputs must be the components of its output")
        elif self.kind is OperatorKind.CAST:
            if len(self.inputs) not in (1, 2) or len(self.outputs) != 1:
                raise OperatorError(f"{self.op_id}: cast takes 1-2 inputs and one output")
            if self.inputs == self.outputs:
                raise OperatorError(f"{self.op_id}: cast must change the type")

    def param(self, name: str, default: float = 0.0) -> float:
        for k, v in self.params:
            if k == name:
                return v
        return default

    def rule(self) -> str:
        """The rule segment of a cast op_id; raises for non-casts."""
        if self.kind is not OperatorKind.CAST:
            raise OperatorError(f"{self.op_id}: not a cast")
        parts = self.op_id.split(":", 2)
        if len(parts) != 3 or parts[0] != "cast" or parts[1] not in CAST_RULES:
            raise OperatorError(f"unknown cast id {self.op_id!r}")
        return parts[1]

    def to_json(self) -> dict:
        return {
            "op_id": self.op_id,
            "kind": self.kind.value,
            "inputs": [t.canonical() for t in self.inputs],
            "outputs": [t.canonical() for t in self.outputs],
            "stateful": self.stateful,
            "params": dict(self.params),
            "cost": self.cost,
        }


class OperatorState:
    """Mutable per-instance state: held input payloads and an accumulator.

    Held lanes start at the lane type's zero element (the eager-zero merge
    policy reads unseen lanes as zero). Integrator accumulators start at
    the domain midpoint for UnitUnsigned and zero otherwise.
    """

    __slots__ = ("held", "acc")

    def __init__(self, spec: OperatorSpec):
        self.held: list[tuple] = [t.zero() for t in spec.inputs]
        out = spec.outputs[0]
        init = 0.5 if out.domain is Domain.UNIT_UNSIGNED else 0.0
        self.acc: list[float] = [init] * out.arity


def _check_input(spec: OperatorSpec, e: Event, lane: int):
    if not 0 <= lane < len(spec.inputs):
        raise OperatorError(f"{spec.op_id}: lane {lane} out of range")
    if e.event_type != spec.inputs[lane]:
        raise OperatorError(
            f"{spec.op_id}: lane {lane} expects {spec.inputs[lane]}, got {e.event_type}"
        )


def apply_split(spec: OperatorSpec, e: Event) -> list[Event]:
    """Project a multi-component event onto its components, in x,y,z order."""
    if spec.kind is not OperatorKind.SPLIT:
        raise OperatorError(f"{spec.op_id}: not a split")
    _check_input(spec, e, 0)
    return [
        Event(spec.op_id, out_t, e.timestamp, (e.payload[i],))
        for i, out_t in enumerate(spec.outputs)
    ]


def apply_merge(spec: OperatorSpec, state: OperatorState, e: Event, lane: int) -> Event | None:
    """Update one held lane and emit the concatenation of all held lanes.

    Eager-zero policy: emits on every update; lanes never written read as
    the zero element. The emission carries the triggering event's timestamp.
    """
    if spec.kind is not OperatorKind.MERGE:
        raise OperatorError(f"{spec.op_id}: not a merge")
    _check_input(spec, e, lane)
    state.held[lane] = e.payload
    payload = tuple(v for held in state.held for v in held)
    return Event(spec.op_id, spec.outputs[0], e.timestamp, payload)


def apply_cast(spec: OperatorSpec, state: OperatorState, e: Event, lane: int = 0) -> Event | None:
    """Convert an event to the cast's output type per the rule in its op_id.

    Two-input casts (the button pair) hold both lanes and emit on every
    update, like a merge. Stateful casts mutate `state`.
    """
    if spec.kind is not OperatorKind.CAST:
        raise OperatorError(f"{spec.op_id}: not a cast")
    rule = spec.rule()
    _check_input(spec, e, lane)
    out_t = spec.outputs[0]

    if rule == "button_pair_to_axis":
        # inputs are (down, up); value = up - down in {-1, 0, 1}
        state.held[lane] = e.payload
        value = float(state.held[1][0] - state.held[0][0])
        return Event(spec.op_id, out_t, e.timestamp, (value,))

    if rule == "button_to_trigger":
        return Event(spec.op_id, out_t, e.timestamp, e.payload)

    if rule == "unsigned_to_signed":
        payload = tuple(2.0 * v - 1.0 for v in e.payload)
        return Event(spec.op_id, out_t, e.timestamp, payload)

    if rule == "signed_to_unsigned":
        payload = tuple((v + 1.0) / 2.0 for v in e.payload)
        return Event(spec.op_id, out_t, e.timestamp, payload)

    if rule == "relative_to_absolute":
        # acc += gain * delta, clamped into the output domain every step so
        # the accumulator can never drift outside it.
        gain = spec.param("gain", 0.01)
        stepped = [a + gain * d for a, d in zip(state.acc, e.payload)]
        clamped = clamp_to_domain(out_t, stepped)
        state.acc = list(clamped)
        return Event(spec.op_id, out_t, e.timestamp, clamped)

    # Remaining rules reinterpret the payload under a new kind.
    return Event(spec.op_id, out_t, e.timestamp, e.payload)


def _split_merge_specs() -> list[OperatorSpec]:
    specs = []
    for kind in (Kind.AXIS, Kind.POSITION, Kind.ROTATION):
        for arity in (2, 3):
            for domain in Domain:
                for mode in Mode:
                    whole = EventType(kind, arity, domain, mode)
                    parts = tuple(components(whole))
                    specs.append(OperatorSpec(
                        op_id=f"split:{whole.canonical()}",
                        kind=OperatorKind.SPLIT,
                        inputs=(whole,),
                        outputs=parts,
                    ))
                    specs.append(OperatorSpec(
                        op_id=f"merge:{whole.canonical()}",
                        kind=OperatorKind.MERGE,
                        inputs=parts,
                        outputs=(whole,),
                        stateful=True,
                    ))
    return specs


def _cast_specs() -> list[OperatorSpec]:
    specs = []
    button = EventType(Kind.BUTTON, 1, Domain.DISCRETE, Mode.ABSOLUTE)

    # Button pair to a signed 1-axis; emitted for both output modes so a
    # pair of keys can act as a state or as a stream of deltas.
    for mode in Mode:
        out = EventType(Kind.AXIS, 1, Domain.UNIT_SIGNED, mode)
        specs.append(OperatorSpec(
            op_id=f"cast:button_pair_to_axis:{out.canonical()}",
            kind=OperatorKind.CAST,
            inputs=(button, button),
            outputs=(out,),
            stateful=True,
        ))

    trigger = EventType(Kind.TRIGGER, 1, Domain.DISCRETE, Mode.ABSOLUTE)
    specs.append(OperatorSpec(
        op_id=f"cast:button_to_trigger:{trigger.canonical()}",
        kind=OperatorKind.CAST,
        inputs=(button,),
        outputs=(trigger,),
    ))

    # Per-component domain shifts between the two unit ranges.
    for kind in (Kind.AXIS, Kind.POSITION, Kind.ROTATION):
        for mode in Mode:
            unsigned = EventType(kind, 1, Domain.UNIT_UNSIGNED, mode)
            signed = EventType(kind, 1, Domain.UNIT_SIGNED, mode)
            specs.append(OperatorSpec(
                op_id=f"cast:unsigned_to_signed:{signed.canonical()}",
                kind=OperatorKind.CAST,
                inputs=(unsigned,),
                outputs=(signed,),
            ))
            specs.append(OperatorSpec(
                op_id=f"cast:signed_to_unsigned:{unsigned.canonical()}",
                kind=OperatorKind.CAST,
                inputs=(signed,),
                outputs=(unsigned,),
            ))

    # Delta integration, per kind and continuous domain, one component at a
    # time (integrate components, then merge).
    for kind in (Kind.AXIS, Kind.POSITION, Kind.ROTATION):
        for domain in (Domain.UNIT_SIGNED, Domain.UNIT_UNSIGNED, Domain.UNBOUNDED):
            rel = EventType(kind, 1, domain, Mode.RELATIVE)
            absolute = EventType(kind, 1, domain, Mode.ABSOLUTE)
            specs.append(OperatorSpec(
                op_id=f"cast:relative_to_absolute:{absolute.canonical()}",
                kind=OperatorKind.CAST,
                inputs=(rel,),
                outputs=(absolute,),
                stateful=True,
                params=(("gain", 0.01),),
            ))

    # Free reinterpretations between semantically overlapping kinds: same
    # arity, domain, and mode, so only the label changes.
    for arity in (1, 2, 3):
        for domain in Domain:
            for mode in Mode:
                axis = EventType(Kind.AXIS, arity, domain, mode)
                rot = EventType(Kind.ROTATION, arity, domain, mode)
                pos = EventType(Kind.POSITION, arity, domain, mode)
                specs.append(OperatorSpec(
                    op_id=f"cast:axis_to_rotation:{rot.canonical()}",
                    kind=OperatorKind.CAST,
                    inputs=(axis,), outputs=(rot,), cost=0,
                ))
                specs.append(OperatorSpec(
                    op_id=f"cast:rotation_to_axis:{axis.canonical()}",
                    kind=OperatorKind.CAST,
                    inputs=(rot,), outputs=(axis,), cost=0,
                ))
                specs.append(OperatorSpec(
                    op_id=f"cast:position_to_axis:{axis.canonical()}",
                    kind=OperatorKind.CAST,
                    inputs=(pos,), outputs=(axis,), cost=0,
                ))
    return specs


def standard_catalog() -> list[OperatorSpec]:
    """Every split and merge over multi-arity types, plus the fixed casts.

    Deterministically ordered by op_id; op_ids are unique.
    """
    specs = _split_merge_specs() + _cast_specs()
    specs.sort(key=lambda s: s.op_id)
    ids = [s.op_id for s in specs]
    if len(set(ids)) != len(ids):  # catalog construction bug, not user error
        raise OperatorError("duplicate op_id in standard catalog")
    return specs
