"""Hypergraph construction and the wiring search."""

import json
import random

import pytest

from helpers import random_instance
from hyperwire.events import Domain, EventType, Kind, Mode
from hyperwire.operators import OperatorKind, standard_catalog
from hyperwire.solver import (
    BudgetExceeded,
    Derivation,
    Token,
    Wiring,
    WiringError,
    build_graph,
    derivation_from_json,
    derivation_to_json,
    rescore,
    solve,
    solve_exhaustive,
    validate,
    wiring_cost,
    wiring_from_json,
    wiring_to_json,
)

CATALOG = standard_catalog()
BY_ID = {s.op_id: s for s in CATALOG}

AX1 = EventType(Kind.AXIS, 1, Domain.UNIT_SIGNED, Mode.ABSOLUTE)
AX2 = EventType(Kind.AXIS, 2, Domain.UNIT_SIGNED, Mode.ABSOLUTE)
AX3R = EventType(Kind.AXIS, 3, Domain.UNIT_SIGNED, Mode.RELATIVE)
ROT1R = EventType(Kind.ROTATION, 1, Domain.UNIT_SIGNED, Mode.RELATIVE)
ROT3 = EventType(Kind.ROTATION, 3, Domain.UNIT_SIGNED, Mode.ABSOLUTE)
BTN = EventType(Kind.BUTTON, 1, Domain.DISCRETE, Mode.ABSOLUTE)
POS2R = EventType(Kind.POSITION, 2, Domain.UNIT_SIGNED, Mode.RELATIVE)

GAMEPAD_STICK = [("d1.dpad", AX2), ("d2.stick", ROT1R)]
SWIPE_ARROWS = [("d1.swipe", POS2R),
                ("d2.left", BTN), ("d2.right", BTN),
                ("d2.up", BTN), ("d2.down", BTN)]


class TestBuildGraph:
    def test_closure_contains_merge_edge(self):
        g = build_graph(GAMEPAD_STICK, CATALOG, ROT3)
        assert "merge:rotation/3/unit_signed/absolute" in {e.op_id for e in g.edges}

    def test_edge_endpoints_inside_vertices(self):
        g = build_graph(SWIPE_ARROWS, CATALOG, AX3R)
        for e in g.edges:
            for t in e.inputs + e.outputs:
                assert t in g.vertices
        assert g.target in g.vertices

    def test_direct_match_target_is_source(self):
        g = build_graph([("c.r", ROT3)], CATALOG, ROT3)
        assert ("c.r", ROT3) in g.sources
        assert g.target == ROT3

    def test_empty_catalog(self):
        g = build_graph([("c.a", AX1)], [], AX1)
        assert g.edges == ()


class TestSolveBasics:
    def test_direct_wiring_first_at_device_cost(self):
        g = build_graph([("c.r", ROT3), ("c.a", AX2)], CATALOG, ROT3)
        ws = solve(g, max_depth=3)
        assert ws[0].derivation.is_leaf
        assert ws[0].derivation.capability_id == "c.r"
        assert ws[0].cost == 1  # zero operators, one device

    def test_unreachable_target_is_empty(self):
        # no operator consumes text, so rotation3d cannot be reached
        text = EventType(Kind.TEXT, 1, Domain.DISCRETE, Mode.ABSOLUTE)
        g = build_graph([("c.t", text)], CATALOG, ROT3)
        assert solve(g, max_depth=6) == []

    def test_single_button_reaches_rotation(self):
        # a lone button still satisfies rotation3d: the pair cast may read
        # the same capability on both lanes and one rot/1 can fill all
        # three merge lanes
        g = build_graph([("c.b", BTN)], CATALOG, ROT3)
        ws = solve(g, max_depth=3)
        assert ws and all(w.derivation.leaves == frozenset({"c.b"}) for w in ws)

    def test_depth_bound_respected(self):
        g = build_graph(GAMEPAD_STICK, CATALOG, ROT3)
        for w in solve(g, max_depth=3):
            assert w.derivation.depth <= 3

    def test_depth_zero_only_direct(self):
        g = build_graph([("c.r", ROT3), ("c.a", AX2)], CATALOG, ROT3)
        ws = solve(g, max_depth=0)
        assert [w.derivation.capability_id for w in ws] == ["c.r"]

    def test_preconditions(self):
        g = build_graph([("c.r", ROT3)], CATALOG, ROT3)
        with pytest.raises(ValueError):
            solve(g, max_depth=-1)
        with pytest.raises(ValueError):
            solve(g, max_results=0)

    def test_results_sorted_by_cost_then_structure(self):
        g = build_graph(GAMEPAD_STICK, CATALOG, ROT3)
        ws = solve(g, max_depth=3)
        keys = [(w.cost, w.derivation.skey) for w in ws]
        assert keys == sorted(keys)

    def test_cycle_guard_once_per_path(self):
        g = build_graph(GAMEPAD_STICK, CATALOG, ROT3)

        def paths_ok(d, seen_above):
            if d.is_leaf:
                return True
            if d.op_id in seen_above:
                return False
            below = seen_above | {d.op_id}
            return all(paths_ok(c, below) for c in d.children)

        for w in solve(g, max_depth=4, max_results=64):
            assert paths_ok(w.derivation, frozenset())


class TestPaperScenarios:
    def test_gamepad_stick_merge_wiring_is_found(self):
        g = build_graph(GAMEPAD_STICK, CATALOG, ROT3)
        ws = solve(g, max_depth=3)
        hits = [w for w in ws
                if w.derivation.op_id == "merge:rotation/3/unit_signed/absolute"
                and w.derivation.leaves == frozenset({"d1.dpad", "d2.stick"})]
        assert hits
        assert min(w.cost for w in hits) == 5  # split + integrate + merge + 2 devices

    def test_swipe_plus_arrows_wiring_is_found(self):
        g = build_graph(SWIPE_ARROWS, CATALOG, AX3R)
        ws = solve(g, max_depth=3)
        hits = [
            w for w in ws
            if w.derivation.op_id == "merge:axis/3/unit_signed/relative"
            and "d1.swipe" in w.derivation.leaves
            and len(w.derivation.leaves) == 3  # swipe + two distinct keys
            and any(c.op_id and c.op_id.startswith("cast:button_pair_to_axis")
                    for c in w.derivation.children)
        ]
        assert hits
        assert min(w.cost for w in hits) == 6  # split + pair + merge + 3 devices


class TestTruncation:
    def test_max_results_prefix(self):
        g = build_graph(GAMEPAD_STICK, CATALOG, ROT3)
        full = solve(g, max_depth=3)
        top = solve(g, max_depth=3, max_results=10)
        assert top == full[:10]

    def test_include_ties_completes_the_cost_class(self):
        g = build_graph(GAMEPAD_STICK, CATALOG, ROT3)
        full = solve(g, max_depth=3)
        tied = solve(g, max_depth=3, max_results=10, include_ties=True)
        bar = tied[9].cost
        assert tied == [w for w in full if w.cost <= bar]
        assert len(tied) >= 10

    def test_truncated_is_a_prefix_of_full(self):
        g = build_graph(SWIPE_ARROWS, CATALOG, AX3R)
        full = solve(g, max_depth=3)
        for k in (1, 7, 50):
            assert solve(g, max_depth=3, max_results=k) == full[:k]


class TestOracleEquivalence:
    def test_random_instances_match_exhaustive(self):
        # quick development sample; the acceptance suite runs >= 100
        rng = random.Random(404)
        checked = 0
        for _ in range(40):
            caps, ops, req = random_instance(rng, CATALOG)
            depth = rng.randint(0, 4)
            g = build_graph(caps, ops, req)
            try:
                oracle = solve_exhaustive(g, depth, node_budget=120_000)
            except BudgetExceeded:
                continue
            assert set(solve(g, max_depth=depth)) == oracle
            checked += 1
        assert checked >= 30

    def test_exhaustive_direct_match_depth_zero(self):
        g = build_graph([("c.r", ROT3)], CATALOG, ROT3)
        out = solve_exhaustive(g, 0)
        assert {w.derivation.capability_id for w in out} == {"c.r"}

    def test_exhaustive_contains_two_device_merge(self):
        g = build_graph(GAMEPAD_STICK, CATALOG, ROT3)
        out = solve_exhaustive(g, 3)
        assert any(
            w.derivation.op_id == "merge:rotation/3/unit_signed/absolute"
            and w.derivation.leaves == frozenset({"d1.dpad", "d2.stick"})
            for w in out)

    def test_budget_guard(self):
        g = build_graph(SWIPE_ARROWS, CATALOG, AX3R)
        with pytest.raises(BudgetExceeded):
            solve_exhaustive(g, 4, node_budget=50)


class TestDeterminismAndMonotonicity:
    def test_identical_runs_identical_output(self):
        g = build_graph(SWIPE_ARROWS, CATALOG, AX3R)
        a = solve(g, max_depth=3, max_results=200)
        b = solve(g, max_depth=3, max_results=200)
        assert a == b
        assert [w.derivation.skey for w in a] == [w.derivation.skey for w in b]

    def test_adding_a_capability_never_removes_wirings(self):
        g1 = build_graph(GAMEPAD_STICK, CATALOG, ROT3)
        with_extra = GAMEPAD_STICK + [("d3.knob", ROT1R)]
        g2 = build_graph(with_extra, CATALOG, ROT3)
        assert set(solve(g1, max_depth=3)) <= set(solve(g2, max_depth=3))


class TestSoundness:
    def test_every_result_validates(self):
        for caps, req in ((GAMEPAD_STICK, ROT3), (SWIPE_ARROWS, AX3R)):
            g = build_graph(caps, CATALOG, req)
            for w in solve(g, max_depth=3, max_results=300, include_ties=True):
                validate(w, caps, CATALOG)

    def test_missing_capability_detected(self):
        g = build_graph(GAMEPAD_STICK, CATALOG, ROT3)
        w = solve(g, max_depth=3)[0]
        with pytest.raises(WiringError) as err:
            validate(w, [("other.cap", AX2)], CATALOG)
        assert err.value.code == "missing_capability"

    def test_unknown_operator_detected(self):
        d = Derivation.node("cast:no_such_rule:x", 0, ROT3,
                            (Derivation.leaf("c.r", ROT3),))
        with pytest.raises(WiringError) as err:
            validate(Wiring("r", d, 0), [("c.r", ROT3)], CATALOG)
        assert err.value.code == "unknown_operator"

    def test_swapped_merge_lane_types_detected(self):
        # merge:axis/2 expects two axis/1 children; hand it a rotation child
        rot1 = EventType(Kind.ROTATION, 1, Domain.UNIT_SIGNED, Mode.ABSOLUTE)
        d = Derivation.node(
            "merge:axis/2/unit_signed/absolute", 0, AX2,
            (Derivation.leaf("c.a", AX1), Derivation.leaf("c.r", rot1)))
        with pytest.raises(WiringError) as err:
            validate(Wiring("r", d, 0), [("c.a", AX1), ("c.r", rot1)], CATALOG)
        assert err.value.code == "type_mismatch"
        assert "children[1]" in err.value.path


class TestCostModel:
    def test_shared_instance_counted_once(self):
        split = "split:axis/2/unit_signed/absolute"
        costs = {s.op_id: s.cost for s in CATALOG}
        dpad = Derivation.leaf("d1.dpad", AX2)
        x = Derivation.node(split, 0, AX1, (dpad,))
        y = Derivation.node(split, 1, AX1, (dpad,))
        both = Derivation.node("merge:axis/2/unit_signed/absolute", 0, AX2, (x, y))
        # one split instance feeding two lanes, one merge, one device
        assert wiring_cost(both, costs) == 1 + 1 + 1

    def test_distinct_leaves_each_cost_one(self):
        costs = {s.op_id: s.cost for s in CATALOG}
        a = Derivation.leaf("c.a", AX1)
        b = Derivation.leaf("c.b", AX1)
        two = Derivation.node("merge:axis/2/unit_signed/absolute", 0, AX2, (a, b))
        one = Derivation.node("merge:axis/2/unit_signed/absolute", 0, AX2, (a, a))
        assert wiring_cost(two, costs) == 3
        assert wiring_cost(one, costs) == 2

    def test_rescore_recomputes(self):
        g = build_graph(GAMEPAD_STICK, CATALOG, ROT3)
        w = solve(g, max_depth=3)[0]
        forged = Wiring(w.requirement_id, w.derivation, 999)
        assert rescore(forged, CATALOG).cost == w.cost


class TestTokenShape:
    def test_token_carries_its_type(self):
        d = Derivation.leaf("c.r", ROT3)
        tok = Token(d.root_type, d)
        assert tok.at == tok.derivation.root_type


class TestJsonForms:
    def test_round_trip(self):
        g = build_graph(SWIPE_ARROWS, CATALOG, AX3R)
        for w in solve(g, max_depth=3, max_results=40):
            doc = wiring_to_json(w)
            again = wiring_from_json(json.loads(json.dumps(doc)))
            assert again == w

    def test_leaf_shape(self):
        d = Derivation.leaf("d1.dpad", AX2)
        assert derivation_to_json(d) == {
            "cap": "d1.dpad", "type": "axis/2/unit_signed/absolute"}

    def test_malformed_inputs_rejected(self):
        for bad in (
            "nope",
            {"type": "axis/1/unit_signed/absolute"},
            {"cap": 3, "type": "axis/1/unit_signed/absolute"},
            {"op": "x", "lane": "no", "type": "axis/1/unit_signed/absolute",
             "children": [{"cap": "c", "type": "axis/1/unit_signed/absolute"}]},
            {"op": "x", "lane": 0, "type": "axis/1/unit_signed/absolute",
             "children": []},
            {"cap": "c", "type": "axis/9/unit_signed/absolute"},
        ):
            with pytest.raises(WiringError) as err:
                derivation_from_json(bad)
            assert err.value.code == "malformed"

    def test_wiring_doc_needs_root(self):
        with pytest.raises(WiringError):
            wiring_from_json({"requirement_id": "r", "cost": 1})
