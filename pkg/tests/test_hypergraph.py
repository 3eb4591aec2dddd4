"""Hierarchical graph construction: nesting, identity, edge placement."""

from __future__ import annotations

import pytest

import fixutil
from astgen import Call, Contract, Fn, Id, SDecl, SReturn, StateVar, build_unit
from ponzilens.errors import NoSpan, UnknownGraph
from ponzilens.hypergraph import (
    ROOT,
    GraphId,
    HypernodeGraph,
    NodeId,
    build,
    function_node_id,
    resolve_callee,
)
from ponzilens.ingest import load_ast
from ponzilens.model import Scope, VarRef, lower


def _graph(name: str, implicit_flow: bool = False):
    u = fixutil.load_unit(name)
    models = lower(u)
    return build(models, u.source_text, implicit_flow=implicit_flow), models


def _edge_strs(h: HypernodeGraph) -> set[tuple[str, str, tuple[str, ...]]]:
    return {
        (str(a), str(b), h.edge_owner((a, b)).path) for a, b in h.all_edges()
    }


def test_three_level_nesting():
    h, _ = _graph("simple_ponzi")
    assert [str(g) for g in h.graphs()] == ["<root>", "SimplePonzi", "SimplePonzi.enter"]
    assert h.members(ROOT) == (GraphId(("SimplePonzi",)),)
    assert [str(m) for m in h.members(GraphId(("SimplePonzi",)))] == [
        "SimplePonzi.@external",
        "SimplePonzi.balance",
        "SimplePonzi.enter",
        "SimplePonzi.payoutIdx",
        "SimplePonzi.persons",
    ]
    assert [str(m) for m in h.members(GraphId(("SimplePonzi", "enter")))] == [
        "SimplePonzi.enter.amount",
        "SimplePonzi.enter.idx",
        "SimplePonzi.enter.msg.sender",
        "SimplePonzi.enter.msg.value",
        "SimplePonzi.enter.transactionAmount",
    ]


def test_external_sink_materializes_only_when_needed():
    h, _ = _graph("two_contracts")
    # Beta calls an unresolvable function, Alpha does not.
    assert NodeId(("Beta", "@external")) in h.members(GraphId(("Beta",)))
    assert NodeId(("Alpha", "@external")) not in h.members(GraphId(("Alpha",)))
    h2, _ = _graph("simple_ponzi")
    # Value transfers leave the unit, so they also target the sink.
    assert NodeId(("SimplePonzi", "@external")) in h2.members(GraphId(("SimplePonzi",)))
    h3, _ = _graph("hollow")
    assert all(n.path[-1] != "@external" for n in h3.nodes())


def test_state_node_shared_across_functions():
    h, _ = _graph("pool")
    pool_size = NodeId(("Pool", "poolSize"))
    touching = {
        str(e[0].path[1]) if len(e[0].path) > 1 else ""
        for e in h.all_edges()
        if pool_size in e
    }
    # deposit writes it, audit returns it, flush sends it: one shared node.
    assert pool_size in h.members(GraphId(("Pool",)))
    assert NodeId(("Pool", "deposit", "poolSize")) not in h.nodes()
    assert len([n for n in h.nodes() if n.path[-1] == "poolSize"]) == 1
    assert touching


def test_inherited_state_binds_to_declaring_contract():
    h, _ = _graph("inherit")
    assert _edge_strs(h) == {
        ("Base.reserve", "Child.drain.take", ()),
        ("Child.drain.take", "Base.reserve", ()),
        ("Base.put.msg.value", "Base.reserve", ("Base",)),
        ("Base.reserve", "Base.reserve", ("Base",)),
        ("Child.drain.take", "Child.@external", ("Child",)),
        ("Child.drain.target", "Child.@external", ("Child",)),
    }
    # No duplicate reserve node under Child.
    assert NodeId(("Child", "reserve")) not in h.nodes()


def test_edge_owner_is_lowest_common_graph():
    h, _ = _graph("caller")
    assert _edge_strs(h) == {
        ("Caller.counter", "Caller.counter", ("Caller",)),
        ("Caller.stash.v", "Caller.vault", ("Caller",)),
        ("Caller.take.msg.value", "Caller.stash", ("Caller",)),
    }


def test_call_argument_edge_targets_hypernode():
    h, _ = _graph("caller")
    arg_edge = (NodeId(("Caller", "take", "msg.value")), GraphId(("Caller", "stash")))
    assert arg_edge in h.all_edges()
    assert h.edge_owner(arg_edge) == GraphId(("Caller",))


def test_call_result_edge_leaves_hypernode():
    _, doc = build_unit(
        "ret",
        [
            Contract(
                "Ret",
                [
                    StateVar("uint", "seed"),
                    Fn("helper", [("uint", "x")], [SReturn(Id("x"))], returns=[("uint", "")]),
                    Fn("run", [], [SDecl("uint", "y", Call(Id("helper"), [Id("seed")]))]),
                ],
            )
        ],
    )
    u = load_ast(doc)
    h = build(lower(u), u.source_text)
    assert _edge_strs(h) == {
        ("Ret.seed", "Ret.helper", ("Ret",)),
        ("Ret.helper", "Ret.run.y", ("Ret",)),
        ("Ret.seed", "Ret.run.y", ("Ret",)),
    }


def test_unresolved_call_routes_to_sink_with_diagnostic():
    h, _ = _graph("two_contracts")
    assert h.diagnostics == ["unresolved callee 'mystery' in Beta.ping"]
    assert (NodeId(("Beta", "ping", "n")), NodeId(("Beta", "@external"))) in h.all_edges()


def test_cross_contract_isolation():
    h, _ = _graph("two_contracts")
    owners = {h.edge_owner(e).path for e in h.all_edges()}
    assert owners == {("Alpha",), ("Beta",)}


def test_defless_statements_still_materialize_nodes():
    # require(msg.sender == owner) defines nothing, yet both refs must
    # appear as nodes or taint sources would be dropped.
    h, _ = _graph("gated")
    assert NodeId(("Gated", "sweep", "msg.sender")) in h.nodes()
    assert NodeId(("Gated", "owner")) in h.members(GraphId(("Gated",)))


def test_implicit_flow_adds_guard_edges():
    plain, _ = _graph("simple_ponzi")
    guarded, _ = _graph("simple_ponzi", implicit_flow=True)
    extra = set(guarded.all_edges()) - set(plain.all_edges())
    # The loop condition reads balance; defs inside the body pick up the
    # guard edge only in implicit-flow mode.
    assert (
        NodeId(("SimplePonzi", "balance")),
        NodeId(("SimplePonzi", "enter", "transactionAmount")),
    ) in extra
    assert (
        NodeId(("SimplePonzi", "persons")),
        NodeId(("SimplePonzi", "payoutIdx")),
    ) in extra
    assert set(plain.all_edges()) <= set(guarded.all_edges())


def test_no_hypernode_to_hypernode_edges():
    h = HypernodeGraph()
    a = h.add_graph(GraphId(("A",)))
    b = h.add_graph(GraphId(("B",)))
    with pytest.raises(ValueError):
        h.add_edge(a, b)


def test_unregistered_parent_or_endpoint_raises():
    h = HypernodeGraph()
    with pytest.raises(UnknownGraph):
        h.add_graph(GraphId(("A", "f")))
    with pytest.raises(UnknownGraph):
        h.add_node(NodeId(("A", "x")))
    h.add_graph(GraphId(("A",)))
    n = h.add_node(NodeId(("A", "x")))
    with pytest.raises(UnknownGraph):
        h.add_edge(n, NodeId(("A", "ghost")))
    with pytest.raises(UnknownGraph):
        h.members(GraphId(("Z",)))
    with pytest.raises(UnknownGraph):
        h.edge_owner((n, n))


def test_graph_of_returns_members_and_edges():
    h, _ = _graph("caller")
    gid, members, edges = h.graph_of(GraphId(("Caller",)))
    assert gid == GraphId(("Caller",))
    assert GraphId(("Caller", "stash")) in members
    assert all(h.edge_owner(e) == gid for e in edges)


def test_rebuild_is_deterministic():
    h1, _ = _graph("simple_ponzi")
    h2, _ = _graph("simple_ponzi")
    assert h1.graphs() == h2.graphs()
    assert h1.nodes() == h2.nodes()
    assert h1.all_edges() == h2.all_edges()
    assert h1.span_map == h2.span_map


def test_source_slice_exact_and_nospan():
    h, _ = _graph("pool")
    text = h.source_slice(GraphId(("Pool", "deposit")))
    assert text.startswith("function deposit()")
    assert text.endswith("}")
    with pytest.raises(NoSpan):
        h.source_slice(NodeId(("Pool", "deposit", "msg.value")))


def test_function_node_id_resolution():
    _, models = _graph("inherit")
    by_name = {m.name: m for m in models}
    state = VarRef(scope=Scope.STATE, name="reserve")
    local = VarRef(scope=Scope.LOCAL, name="take")
    assert function_node_id(by_name, "Child", "drain", state) == NodeId(("Base", "reserve"))
    assert function_node_id(by_name, "Base", "put", state) == NodeId(("Base", "reserve"))
    assert function_node_id(by_name, "Child", "drain", local) == NodeId(("Child", "drain", "take"))


def test_resolve_callee_walks_bases():
    _, models = _graph("inherit")
    by_name = {m.name: m for m in models}
    assert resolve_callee(by_name, "Child", "put") == "Base"
    assert resolve_callee(by_name, "Base", "put") == "Base"
    assert resolve_callee(by_name, "Child", "missing") is None


def test_hollow_unit_builds_empty_graphs():
    h, models = _graph("hollow")
    assert {m.name for m in models} == {"Hollow", "Noop"}
    assert h.all_edges() == ()
    assert GraphId(("Noop", "nothing")) in h.graphs()
