"""Program order over annotated trace steps, and resource balance over cuts.

Nodes are step indices (ghost steps included). Each step has at most one
program-order successor chain: the next step by the same thread, plus, for a
fork step, the first step of the thread it spawned. Fresh ids are never
reused (a thread can only empty its continuation by forking, and that child
or a younger descendant outlives it), so "next step by the same thread" is
unambiguous and the graph is a forest rooted at each initial thread's first
step.

A prefix here is a set of nodes that is downward closed (every predecessor of
a member is a member) and sibling closed at forks: a fork step's two
successors, the parent's next step and the child's first step, are both in or
both out. When the trace truncates one of the two (the other thread never
stepped again), the surviving successor must stay out as well; otherwise the
resources moved by the split would be counted on one side only.

For every such prefix, summing the pool state read just before each leaf step
(a node with no successor inside the prefix) gives a conserved quantity:
obligations minus credits equals that of the initial pool. Real steps either
move resources between the two sides of a fork or leave them alone, and ghost
steps mint or retire obligations and credits in equal numbers.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Optional

from .annotated import GA_ST_FORK, GA_ST_LOOP, AnnotatedTrace

_ENUMERATION_BOUND = 20


@dataclass(frozen=True)
class GraphNode:
    index: int
    tid: int
    rule: str


@dataclass(frozen=True)
class GraphEdge:
    src: int
    tid: int  # thread of the source step
    rule: str  # rule of the source step
    dst: int


@dataclass(frozen=True)
class PoGraph:
    nodes: tuple[GraphNode, ...]
    edges: tuple[GraphEdge, ...]

    def successors(self, i: int) -> tuple[int, ...]:
        return tuple(e.dst for e in self.edges if e.src == i)

    def predecessor(self, i: int) -> Optional[int]:
        for e in self.edges:
            if e.dst == i:
                return e.src
        return None


def build_graph(trace: AnnotatedTrace) -> PoGraph:
    steps = trace.steps
    nodes = tuple(GraphNode(i, st.tid, st.rule) for i, st in enumerate(steps))
    next_by_tid: dict[int, int] = {}
    thread_next: list[Optional[int]] = [None] * len(steps)
    for i in range(len(steps) - 1, -1, -1):
        thread_next[i] = next_by_tid.get(steps[i].tid)
        next_by_tid[steps[i].tid] = i
    edges: list[GraphEdge] = []
    for i, st in enumerate(steps):
        if thread_next[i] is not None:
            edges.append(GraphEdge(i, st.tid, st.rule, thread_next[i]))
        if st.rule == GA_ST_FORK:
            child = max(trace.pool_before(i).ids()) + 1
            first = next(
                (j for j in range(i + 1, len(steps)) if steps[j].tid == child), None
            )
            if first is not None:
                edges.append(GraphEdge(i, st.tid, st.rule, first))
    return PoGraph(nodes, tuple(edges))


def _successor_map(g: PoGraph) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {n.index: [] for n in g.nodes}
    for e in g.edges:
        out[e.src].append(e.dst)
    return out


def _rule_of(g: PoGraph, i: int) -> str:
    return g.nodes[i].rule


def leaves(g: PoGraph, prefix: Optional[Iterable[int]] = None) -> tuple[int, ...]:
    """Nodes of the prefix with no successor inside it (whole graph if None)."""
    members = set(prefix) if prefix is not None else {n.index for n in g.nodes}
    succ = _successor_map(g)
    return tuple(
        sorted(i for i in members if not any(j in members for j in succ[i]))
    )


def is_sibling_closed(g: PoGraph, prefix: Iterable[int]) -> bool:
    """Downward closed, and all-or-nothing at every fork step's successors.

    A fork whose trace never shows one of the two successors (the run stopped
    first) must keep the other successor out too: it counts as excluded.
    """
    members = set(prefix)
    known = {n.index for n in g.nodes}
    if not members <= known:
        return False
    for e in g.edges:
        if e.dst in members and e.src not in members:
            return False
    succ = _successor_map(g)
    for n in g.nodes:
        if n.rule != GA_ST_FORK or n.index not in members:
            continue
        inside = sum(1 for j in succ[n.index] if j in members)
        if inside == 0:
            continue
        if len(succ[n.index]) != 2 or inside != 2:
            return False
    return True


def max_loop_free_prefix(g: PoGraph) -> tuple[int, ...]:
    """The largest sibling-closed prefix in which busy-loop steps are leaves.

    Grown from the roots; a node enters when its predecessor entered and is
    not a busy-loop step, and a fork extends to both successors or neither.
    """
    succ = _successor_map(g)
    members: set[int] = set()
    for n in g.nodes:
        i = n.index
        pred = g.predecessor(i)
        if pred is None:
            members.add(i)
            continue
        if pred not in members or _rule_of(g, pred) == GA_ST_LOOP:
            continue
        if _rule_of(g, pred) == GA_ST_FORK:
            if len(succ[pred]) == 2 and all(
                _eligible(g, j, members) for j in succ[pred]
            ):
                members.add(i)
        else:
            members.add(i)
    assert is_sibling_closed(g, members)
    return tuple(sorted(members))


def _eligible(g: PoGraph, i: int, members: set[int]) -> bool:
    pred = g.predecessor(i)
    return pred is not None and pred in members and _rule_of(g, pred) != GA_ST_LOOP


@dataclass(frozen=True)
class LeafReading:
    step: int
    tid: int
    rule: str
    chunk: int
    credits: int


@dataclass(frozen=True)
class LeafBalanceReport:
    ok: bool
    baseline: int  # obligations minus credits in the initial pool
    obligation_sum: int
    credit_sum: int
    readings: tuple[LeafReading, ...]

    def describe(self) -> str:
        status = "balanced" if self.ok else "imbalanced"
        return (
            f"{status}: {self.obligation_sum} obligations vs {self.credit_sum} "
            f"credits over {len(self.readings)} leaves (baseline {self.baseline})"
        )


def check_leaf_balance(
    g: PoGraph, trace: AnnotatedTrace, prefix: Optional[Iterable[int]] = None
) -> LeafBalanceReport:
    """Read the pool just before each leaf step and compare resource sums.

    The prefix must be sibling closed; the whole node set is used if None.
    """
    members = tuple(prefix) if prefix is not None else tuple(n.index for n in g.nodes)
    if not is_sibling_closed(g, members):
        raise ValueError("prefix is not sibling closed")
    baseline = sum(t.chunk - t.credits for _, t in trace.initial.entries)
    readings = []
    for i in leaves(g, members):
        st = trace.steps[i]
        th = trace.pool_before(i).get(st.tid)
        readings.append(LeafReading(i, st.tid, st.rule, th.chunk, th.credits))
    obligation_sum = sum(r.chunk for r in readings)
    credit_sum = sum(r.credits for r in readings)
    ok = obligation_sum - credit_sum == baseline
    return LeafBalanceReport(ok, baseline, obligation_sum, credit_sum, tuple(readings))


@dataclass(frozen=True)
class SpinSupportReport:
    """Busy-wait leaves never owe an exit themselves, and whenever one spins,
    some other leaf still holds the obligation that will stop it."""

    ok: bool
    spinning: tuple[LeafReading, ...]
    obligated: tuple[LeafReading, ...]

    def describe(self) -> str:
        if not self.spinning:
            return "no busy-wait leaves; nothing to support"
        status = "supported" if self.ok else "unsupported"
        return (
            f"{len(self.spinning)} busy-wait leaves {status} by "
            f"{len(self.obligated)} obligation-holding leaves"
        )


def spin_support_report(
    g: PoGraph, trace: AnnotatedTrace, prefix: Optional[Iterable[int]] = None
) -> SpinSupportReport:
    report = check_leaf_balance(g, trace, prefix)
    spinning = tuple(r for r in report.readings if r.rule == GA_ST_LOOP)
    obligated = tuple(r for r in report.readings if r.chunk > 0)
    ok = all(r.chunk == 0 for r in spinning) and (not spinning or bool(obligated))
    return SpinSupportReport(ok, spinning, obligated)


def enumerate_closed_prefixes(g: PoGraph) -> list[tuple[int, ...]]:
    """Every sibling-closed prefix, the empty one included. Exponential; only
    for small graphs."""
    n = len(g.nodes)
    if n > _ENUMERATION_BOUND:
        raise ValueError(f"too many nodes to enumerate ({n} > {_ENUMERATION_BOUND})")
    out = []
    for mask in range(1 << n):
        members = tuple(i for i in range(n) if mask >> i & 1)
        if is_sibling_closed(g, members):
            out.append(members)
    return out


def sample_closed_prefixes(
    g: PoGraph, count: int, seed: int = 0
) -> list[tuple[int, ...]]:
    """Random sibling-closed prefixes, deterministic per seed.

    Nodes are visited in trace order (a topological order); each eligible
    node joins with a coin flip, except that a fork's two successors share
    one joint decision.
    """
    rng = random.Random(seed)
    succ = _successor_map(g)
    out = []
    for _ in range(count):
        members: set[int] = set()
        forced_out: set[int] = set()
        for node in g.nodes:
            i = node.index
            if i in forced_out:
                continue
            pred = g.predecessor(i)
            if pred is not None and pred not in members:
                continue
            if pred is not None and _rule_of(g, pred) == GA_ST_FORK:
                # joint decision, taken when the earlier sibling is visited
                pair = succ[pred]
                if i != min(pair):
                    continue  # handled below when min(pair) was visited
                if len(pair) == 2 and rng.random() < 0.7:
                    members.update(pair)
                else:
                    forced_out.update(pair)
                continue
            if rng.random() < 0.7:
                members.add(i)
        assert is_sibling_closed(g, members)
        out.append(tuple(sorted(members)))
    return out


def graph_to_json(g: PoGraph) -> dict:
    return {
        "nodes": [{"i": n.index, "tid": n.tid, "rule": n.rule} for n in g.nodes],
        "edges": [[e.src, e.tid, e.rule, e.dst] for e in g.edges],
    }


def to_dot(g: PoGraph) -> str:
    lines = ["digraph {"]
    for n in g.nodes:
        lines.append(f'  n{n.index} [label="{n.index}: {n.rule}@{n.tid}"];')
    for e in g.edges:
        lines.append(f'  n{e.src} -> n{e.dst} [label="{e.rule}"];')
    lines.append("}")
    return "\n".join(lines)
