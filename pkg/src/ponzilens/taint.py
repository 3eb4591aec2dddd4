"""Fixed-point taint propagation over the hypernode graph.

Taint starts at the builtin source nodes (msg.sender, msg.value) and flows
along every edge until nothing changes. Hypernode endpoints participate like
any other endpoint: a tainted hypernode means tainted data crossed into that
function through a call, and edges leaving the hypernode carry the taint
onward. Propagation only ever adds taint; nothing is removed, so the result
is the least fixed point regardless of edge visit order.

The recursion into nested graphs is run iteratively with an explicit work
stack, so deeply nested inputs cannot exhaust the interpreter stack.
"""

from __future__ import annotations

from dataclasses import dataclass

from .hypergraph import (
    EXTERNAL_SINK,
    Edge,
    Endpoint,
    GraphId,
    HypernodeGraph,
    NodeId,
    endpoint_key,
)

SOURCE_NAMES = ("msg.sender", "msg.value")


@dataclass(frozen=True)
class TaintSubgraph:
    """Result of one propagation run.

    tainted: every endpoint (basic node or hypernode) reached from the
    sources, sources included. taint_edges: every edge whose tail is
    tainted; by fixed-point closure their heads are tainted too. coverage:
    the graphs propagation touched, meaning graphs that own a traversed
    edge plus every hypernode that itself became tainted.
    """

    id: GraphId
    tainted: frozenset[Endpoint]
    taint_edges: frozenset[Edge]
    coverage: frozenset[GraphId]


def default_sources(h: HypernodeGraph) -> frozenset[NodeId]:
    """All builtin source nodes present in the graph."""
    return frozenset(n for n in h.nodes() if n.path[-1] in SOURCE_NAMES)


def tpa(h: HypernodeGraph, sources: frozenset[NodeId] | set[NodeId]) -> TaintSubgraph:
    """Propagate taint from `sources` to a least fixed point.

    Source ids not present in the graph are ignored. Output sets depend only
    on the graph's node/edge sets, not on edge insertion order.
    """
    present = {s for s in sources if h.has(s)}
    adjacency: dict[Endpoint, list[Endpoint]] = {}
    for a, b in h.all_edges():
        adjacency.setdefault(a, []).append(b)

    tainted: set[Endpoint] = set(present)
    stack: list[Endpoint] = sorted(present, key=endpoint_key)
    while stack:
        tail = stack.pop()
        for head in adjacency.get(tail, ()):
            if head not in tainted:
                tainted.add(head)
                stack.append(head)

    taint_edges = frozenset(e for e in h.all_edges() if e[0] in tainted)
    coverage = {ep for ep in tainted if isinstance(ep, GraphId)}
    coverage.update(h.edge_owner(e) for e in taint_edges)
    return TaintSubgraph(
        id=h.root,
        tainted=frozenset(tainted),
        taint_edges=taint_edges,
        coverage=frozenset(coverage),
    )


def tainted_state_vars(t: TaintSubgraph, h: HypernodeGraph) -> frozenset[NodeId]:
    """Tainted contract-level variable nodes, excluding the @external sink."""
    return frozenset(
        n
        for n in t.tainted
        if isinstance(n, NodeId) and len(n.path) == 2 and n.path[-1] != EXTERNAL_SINK
    )
