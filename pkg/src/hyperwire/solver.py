"""Wiring search over the event-type hypergraph.

Event types are the vertices; operator specs are the hyperedges. A token
marks a type that is reachable from the connected capabilities together
with the derivation tree that reached it. solve() propagates tokens from
the capability sources until every derivation of the requirement type
within the depth bound is enumerated, then ranks the results.

The propagation is organized best-first by (cost, structural order): a
derivation is expanded only after every cheaper one, and combinations are
formed against previously expanded derivations, so each distinct tree is
generated exactly once and the result ranking needs no post-hoc work.
Because a tree's cost is at least the cost of each of its subtrees, the
frontier can stop as soon as the pending minimum exceeds the cost of the
last result that can still make the cut; the enumerated set is identical
to running the propagation to its full fixpoint. solve_exhaustive() is an
independent recursive enumerator used as the equivalence oracle in tests.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from heapq import heappop, heappush
from typing import Iterable, Mapping, NamedTuple

from .events import EventType, parse_type
from .operators import OperatorKind, OperatorSpec

__all__ = [
    "Derivation",
    "Wiring",
    "Token",
    "Hypergraph",
    "WiringError",
    "BudgetExceeded",
    "DEVICE_WEIGHT",
    "DEFAULT_MAX_DEPTH",
    "build_graph",
    "solve",
    "solve_exhaustive",
    "validate",
    "wiring_cost",
    "rescore",
    "derivation_to_json",
    "derivation_from_json",
    "wiring_to_json",
    "wiring_from_json",
]

# Cost of touching one more device, relative to an operator cost of 1.
DEVICE_WEIGHT = 1

DEFAULT_MAX_DEPTH = 6


class WiringError(ValueError):
    """A wiring failed validation; carries the first failing node."""

    def __init__(self, code: str, path: str, detail: str):
        super().__init__(f"{code} at {path}: {detail}")
        self.code = code
        self.path = path
        self.detail = detail


class BudgetExceeded(RuntimeError):
    """The exhaustive enumerator hit its node budget."""


class Derivation:
    """One wiring tree: capability leaves combined by operator nodes.

    Immutable; equality and hashing are structural. Aggregates used by the
    solver (depth, the set of operator ids on any path, the distinct
    operator instances, the distinct capability leaves, and a total
    structural ordering key) are precomputed on construction, so sharing
    subtrees keeps the search cheap.
    """

    __slots__ = (
        "root_type", "op_id", "out_lane", "capability_id", "children",
        "depth", "ops", "instances", "leaves", "skey", "_hash",
    )

    def __init__(self, root_type: EventType, op_id: str | None, out_lane: int,
                 capability_id: str | None, children: tuple["Derivation", ...]):
        self.root_type = root_type
        self.op_id = op_id
        self.out_lane = out_lane
        self.capability_id = capability_id
        self.children = children
        if op_id is None:
            self.depth = 0
            self.ops = frozenset()
            self.instances = frozenset()
            self.leaves = frozenset((capability_id,))
            self.skey = (0, capability_id)
        else:
            self.depth = 1 + max(c.depth for c in children)
            self.ops = frozenset((op_id,)).union(*(c.ops for c in children))
            self.instances = frozenset(((op_id, children),)).union(
                *(c.instances for c in children))
            self.leaves = frozenset().union(*(c.leaves for c in children))
            self.skey = (1, op_id, out_lane, tuple(c.skey for c in children))
        # shallow hash: children contribute their cached hashes, so this is
        # O(child count) instead of rehashing the whole subtree
        if op_id is None:
            self._hash = hash((root_type, capability_id))
        else:
            self._hash = hash(
                (root_type, op_id, out_lane, tuple(c._hash for c in children)))

    @staticmethod
    def leaf(capability_id: str, root_type: EventType) -> "Derivation":
        return Derivation(root_type, None, 0, capability_id, ())

    @staticmethod
    def node(op_id: str, out_lane: int, root_type: EventType,
             children: tuple["Derivation", ...]) -> "Derivation":
        return Derivation(root_type, op_id, out_lane, None, children)

    @property
    def is_leaf(self) -> bool:
        return self.op_id is None

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Derivation):
            return NotImplemented
        return (self.root_type == other.root_type and self.skey == other.skey)

    def __repr__(self):
        if self.is_leaf:
            return f"Leaf({self.capability_id}:{self.root_type})"
        inner = ", ".join(repr(c) for c in self.children)
        lane = f".{self.out_lane}" if len(self.children) == 1 else ""
        return f"Node({self.op_id}{lane}, [{inner}])"


@dataclass(frozen=True, slots=True)
class Wiring:
    """A derivation bound to one application requirement, with its rank cost."""

    requirement_id: str
    derivation: Derivation
    cost: int


class Token(NamedTuple):
    """Solver marker: a type plus the derivation that reached it."""

    at: EventType
    derivation: Derivation


@dataclass(frozen=True, slots=True)
class Hypergraph:
    vertices: frozenset[EventType]
    edges: tuple[OperatorSpec, ...]
    sources: tuple[tuple[str, EventType], ...]
    target: EventType


def build_graph(capabilities: Iterable[tuple[str, EventType]],
                catalog: Iterable[OperatorSpec],
                requirement: EventType) -> Hypergraph:
    """Close the capability and requirement types under the catalog.

    Keeps exactly the catalog edges whose endpoint types all lie inside
    the closure. An unreachable requirement is legal; solve() just comes
    back empty.
    """
    sources = tuple(capabilities)
    catalog = tuple(catalog)
    closure = {t for _, t in sources}
    closure.add(requirement)
    pending = [op for op in catalog]
    changed = True
    while changed:
        changed = False
        rest = []
        for op in pending:
            if all(t in closure for t in op.inputs):
                for t in op.outputs:
                    if t not in closure:
                        closure.add(t)
                        changed = True
            else:
                rest.append(op)
        pending = rest
    edges = tuple(op for op in catalog if all(t in closure for t in op.inputs))
    return Hypergraph(frozenset(closure), edges, sources, requirement)


def wiring_cost(d: Derivation, costs: Mapping[str, int]) -> int:
    """Operator costs summed over distinct instances, plus one per device."""
    return (sum(costs[op_id] for op_id, _ in d.instances)
            + DEVICE_WEIGHT * len(d.leaves))


_FAR = 1 << 30


def solve(g: Hypergraph, max_depth: int = DEFAULT_MAX_DEPTH,
          max_results: int | None = None,
          requirement_id: str = "",
          include_ties: bool = False) -> list[Wiring]:
    """Enumerate wirings from the sources to the target.

    Returns every derivation of the target type within max_depth (and,
    when max_results is given, every one that survives the (cost,
    structural order) ranking), sorted by that ranking. Duplicate
    derivations are suppressed; an operator id may appear at most once on
    any root-to-leaf path, which bounds chains of free reinterpreting
    casts. Deterministic: identical inputs give identical output order.

    include_ties widens the truncation so a whole cost class is never cut
    in half: the list keeps every wiring tying the cost of the last one
    that made the max_results cut.
    """
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    if max_results is not None and max_results < 1:
        raise ValueError("max_results must be >= 1")

    costs = {op.op_id: op.cost for op in g.edges}
    consumers: dict[EventType, list[OperatorSpec]] = {}
    for op in g.edges:
        for t in dict.fromkeys(op.inputs):
            consumers.setdefault(t, []).append(op)

    # Fewest operator applications from each type to the target. A node of
    # type t at depth n can only appear inside a depth-bounded tree when
    # n + dist[t] <= max_depth (the chain of operators above it is at
    # least dist[t] long), so anything farther gets pruned exactly.
    dist: dict[EventType, int] = {g.target: 0}
    changed = True
    while changed:
        changed = False
        for op in g.edges:
            best = min((dist.get(t, _FAR) for t in op.outputs), default=_FAR)
            if best >= _FAR:
                continue
            for t in op.inputs:
                if best + 1 < dist.get(t, _FAR):
                    dist[t] = best + 1
                    changed = True

    settled: dict[EventType, list[Derivation]] = {}
    seen: set[Derivation] = set()
    heap: list[tuple[int, int, Derivation]] = []
    tick = itertools.count()  # heap tiebreak; pop order inside a cost
    results: list[Wiring] = []  # class does not affect the result set
    cutoff: int | None = None  # cost of the last result that can still place

    def push(d: Derivation):
        if d in seen:
            return
        c = wiring_cost(d, costs)
        if cutoff is not None and c > cutoff:
            return  # anything built on top would cost at least as much
        seen.add(d)
        heappush(heap, (c, next(tick), d))

    target = g.target
    for cap_id, t in g.sources:
        if dist.get(t, _FAR) <= max_depth:
            push(Derivation.leaf(cap_id, t))

    while heap:
        cost, _, d = heappop(heap)
        if cutoff is not None and cost > cutoff:
            break
        t = d.root_type

        if t == target:
            results.append(Wiring(requirement_id, d, cost))
            if max_results is not None and len(results) == max_results:
                cutoff = cost

        if d.depth >= max_depth:
            # Cannot be anyone's child: skip parent generation and keep it
            # out of the combination pools (the pool invariant).
            continue

        for op in consumers.get(t, ()):
            op_id = op.op_id
            if op_id in d.ops:
                continue  # would repeat the operator on a path through d
            inputs = op.inputs
            same = [i for i, ti in enumerate(inputs) if ti == t]
            # Combinations are generated at the expansion of their newest
            # child: the just-expanded derivation d fills the lanes in a
            # nonempty subset of the same-typed lanes, every other lane
            # draws from derivations expanded strictly earlier.
            for mask in range(1, 1 << len(same)):
                picked = {same[j] for j in range(len(same)) if mask >> j & 1}
                choices = []
                for i, ti in enumerate(inputs):
                    if i in picked:
                        choices.append((d,))
                    else:
                        choices.append(settled.get(ti, ()))
                if not all(choices):
                    continue
                # every child here has depth < max_depth (pool invariant),
                # so nd never exceeds max_depth
                for combo in itertools.product(*choices):
                    nd = 0
                    for c in combo:
                        if op_id in c.ops:
                            nd = -1
                            break
                        if c.depth > nd:
                            nd = c.depth
                    if nd < 0:
                        continue
                    nd += 1
                    for lane, out_t in enumerate(op.outputs):
                        if nd + dist.get(out_t, _FAR) > max_depth:
                            continue  # cannot reach the target in budget
                        push(Derivation.node(op_id, lane, out_t, combo))

        settled.setdefault(t, []).append(d)

    results.sort(key=lambda w: (w.cost, w.derivation.skey))
    if max_results is not None and len(results) > max_results:
        if include_ties:
            bar = results[max_results - 1].cost
            hi = len(results)
            while hi > max_results and results[hi - 1].cost > bar:
                hi -= 1
            del results[hi:]
        else:
            del results[max_results:]
    return results


def solve_exhaustive(g: Hypergraph, max_depth: int,
                     node_budget: int = 500_000,
                     requirement_id: str = "") -> set[Wiring]:
    """Every well-typed derivation of the target, by backward recursion.

    Independent of solve(): expands the target type downward, trying every
    producing edge and every child combination. Small graphs only; raises
    BudgetExceeded past node_budget constructed nodes.
    """
    costs = {op.op_id: op.cost for op in g.edges}
    by_type: dict[EventType, list[str]] = {}
    for cap_id, t in g.sources:
        by_type.setdefault(t, []).append(cap_id)
    producers: dict[EventType, list[tuple[OperatorSpec, int]]] = {}
    for op in g.edges:
        for lane, t in enumerate(op.outputs):
            producers.setdefault(t, []).append((op, lane))

    spent = [0]
    memo: dict[tuple, list[Derivation]] = {}

    def expand(t: EventType, depth_left: int, banned: frozenset) -> list[Derivation]:
        key = (t, depth_left, banned)
        hit = memo.get(key)
        if hit is not None:
            return hit
        out = [Derivation.leaf(cap_id, t) for cap_id in by_type.get(t, ())]
        if depth_left >= 1:
            for op, lane in producers.get(t, ()):
                if op.op_id in banned:
                    continue
                child_banned = banned | {op.op_id}
                pools = [expand(ti, depth_left - 1, child_banned) for ti in op.inputs]
                for combo in itertools.product(*pools):
                    spent[0] += 1
                    if spent[0] > node_budget:
                        raise BudgetExceeded(f"over {node_budget} nodes")
                    out.append(Derivation.node(op.op_id, lane, t, combo))
        memo[key] = out
        return out

    trees = expand(g.target, max_depth, frozenset())
    return {Wiring(requirement_id, d, wiring_cost(d, costs)) for d in trees}


def validate(w: Wiring, capabilities, catalog: Iterable[OperatorSpec]) -> None:
    """Check a wiring against live capabilities and the catalog.

    Raises WiringError naming the first failing node by path; returns None
    when the wiring is executable as-is.
    """
    caps = dict(capabilities)
    ops = {s.op_id: s for s in catalog}

    def walk(d: Derivation, path: str):
        if d.is_leaf:
            have = caps.get(d.capability_id)
            if have is None:
                raise WiringError("missing_capability", path,
                                  f"capability {d.capability_id!r} is not available")
            if have != d.root_type:
                raise WiringError("type_mismatch", path,
                                  f"capability {d.capability_id!r} is {have}, wiring expects {d.root_type}")
            return
        spec = ops.get(d.op_id)
        if spec is None:
            raise WiringError("unknown_operator", path, f"no operator {d.op_id!r}")
        if len(d.children) != len(spec.inputs):
            raise WiringError("type_mismatch", path,
                              f"{d.op_id} takes {len(spec.inputs)} inputs, wiring has {len(d.children)}")
        if not 0 <= d.out_lane < len(spec.outputs):
            raise WiringError("type_mismatch", path,
                              f"{d.op_id} has no output lane {d.out_lane}")
        if d.root_type != spec.outputs[d.out_lane]:
            raise WiringError("type_mismatch", path,
                              f"{d.op_id} lane {d.out_lane} yields {spec.outputs[d.out_lane]}, wiring claims {d.root_type}")
        for i, (c, expect) in enumerate(zip(d.children, spec.inputs)):
            if c.root_type != expect:
                raise WiringError("type_mismatch", f"{path}.children[{i}]",
                                  f"{d.op_id} lane {i} expects {expect}, got {c.root_type}")
        for i, c in enumerate(d.children):
            walk(c, f"{path}.children[{i}]")

    walk(w.derivation, "root")


def rescore(w: Wiring, catalog: Iterable[OperatorSpec]) -> Wiring:
    """Recompute the cost field from the catalog (untrusted wiring input)."""
    costs = {s.op_id: s.cost for s in catalog}
    return Wiring(w.requirement_id, w.derivation,
                  wiring_cost(w.derivation, costs))


# --- canonical JSON form ----------------------------------------------------
# The interchange shape for profiles, the wire protocol, and the UI. Node
# objects always carry their type string; "lane" selects a split output.

def derivation_to_json(d: Derivation) -> dict:
    if d.is_leaf:
        return {"cap": d.capability_id, "type": d.root_type.canonical()}
    return {
        "op": d.op_id,
        "lane": d.out_lane,
        "type": d.root_type.canonical(),
        "children": [derivation_to_json(c) for c in d.children],
    }


def derivation_from_json(obj) -> Derivation:
    if not isinstance(obj, dict):
        raise WiringError("malformed", "root", "derivation node must be an object")
    try:
        t = parse_type(obj["type"])
    except Exception as exc:
        raise WiringError("malformed", "root", f"bad type field: {exc}") from exc
    if "cap" in obj:
        if not isinstance(obj["cap"], str):
            raise WiringError("malformed", "root", "cap must be a string")
        return Derivation.leaf(obj["cap"], t)
    op = obj.get("op")
    lane = obj.get("lane", 0)
    kids = obj.get("children")
    if not isinstance(op, str) or not isinstance(lane, int) or not isinstance(kids, list) or not kids:
        raise WiringError("malformed", "root", "operator node needs op, lane, children")
    children = tuple(derivation_from_json(k) for k in kids)
    return Derivation.node(op, lane, t, children)


def wiring_to_json(w: Wiring) -> dict:
    return {
        "requirement_id": w.requirement_id,
        "cost": w.cost,
        "root": derivation_to_json(w.derivation),
    }


def wiring_from_json(obj) -> Wiring:
    if not isinstance(obj, dict) or "root" not in obj:
        raise WiringError("malformed", "root", "wiring must be an object with a root")
    req = obj.get("requirement_id", "")
    cost = obj.get("cost", 0)
    if not isinstance(req, str) or not isinstance(cost, int) or isinstance(cost, bool):
        raise WiringError("malformed", "root", "bad requirement_id or cost")
    return Wiring(req, derivation_from_json(obj["root"]), cost)
