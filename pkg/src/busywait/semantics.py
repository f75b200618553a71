"""Small-step semantics for thread pools, schedulers, and termination oracles.

Why the fair-divergence decision below is complete for this language: assign
every pool the weight "total AST nodes across all continuations". Every rule
except the busy-loop self-step strictly decreases that weight (seq drops a Seq
node, fork drops a Fork node, done removes a thread, exit empties the pool),
so any infinite reduction sequence eventually takes busy-loop steps only. A
fair sequence schedules every live thread forever, hence from some point on
every live thread must self-step, i.e. every head is a busy loop. Conversely
any reachable nonempty all-busy-loop pool admits a fair infinite suffix (cycle
through the threads). Fair divergence is therefore exactly reachability of a
nonempty pool whose every head is a busy loop, which a finite search decides:
the state space is finite because weights never grow.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .lang import BusyLoop, Command, Continuation, Exit, Fork, Seq, continuation_text

ST_LOOP = "st-loop"
ST_FORK = "st-fork"
ST_SEQ = "st-seq"
TP_EXIT = "tp-exit"
TP_DONE = "tp-done"

TERMINATES = "terminates"
FAIRLY_DIVERGES = "fairly-diverges"


class UnknownThreadError(KeyError):
    """A scheduler or caller named a thread id outside the pool domain."""


class SearchLimitError(RuntimeError):
    """State-space exploration exceeded its bounds; the verdict is inconclusive."""


@dataclass(frozen=True)
class ThreadPool:
    """Immutable map from thread id to continuation."""

    entries: tuple[tuple[int, Continuation], ...] = ()

    @staticmethod
    def from_dict(d: dict[int, Continuation]) -> "ThreadPool":
        return ThreadPool(tuple(sorted(d.items())))

    @staticmethod
    def initial(c: Command, tid: int = 0) -> "ThreadPool":
        return ThreadPool(((tid, (c,)),))

    def as_dict(self) -> dict[int, Continuation]:
        return dict(self.entries)

    def ids(self) -> tuple[int, ...]:
        return tuple(tid for tid, _ in self.entries)

    def get(self, tid: int) -> Continuation:
        for t, k in self.entries:
            if t == tid:
                return k
        raise UnknownThreadError(tid)

    def set(self, tid: int, k: Continuation) -> "ThreadPool":
        d = self.as_dict()
        d[tid] = k
        return ThreadPool.from_dict(d)

    def remove(self, tid: int) -> "ThreadPool":
        return ThreadPool(tuple((t, k) for t, k in self.entries if t != tid))

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, tid: int) -> bool:
        return any(t == tid for t, _ in self.entries)


def thread_step(k: Continuation) -> Optional[tuple[str, Continuation, tuple[Continuation, ...]]]:
    """One reduction of a single thread: (rule, new continuation, forked set).

    Absent for the done continuation and for exit heads; those are pool-level.
    """
    if not k:
        return None
    head, tail = k[0], k[1:]
    match head:
        case Exit():
            return None
        case BusyLoop():
            return (ST_LOOP, k, ())
        case Fork(body):
            return (ST_FORK, tail, ((body,),))
        case Seq(first, second):
            return (ST_SEQ, (first, second) + tail, ())
    raise TypeError(f"not a command: {head!r}")


def extend_pool(p: ThreadPool, forked: Iterable[Continuation]) -> ThreadPool:
    """Insert forked continuations at fresh ids (max id + 1; 0 for an empty pool)."""
    d = p.as_dict()
    next_id = max(d, default=-1) + 1
    for k in forked:
        d[next_id] = k
        next_id += 1
    return ThreadPool.from_dict(d)


def pool_step(p: ThreadPool, tid: int) -> tuple[str, ThreadPool]:
    """Reduce thread tid once. Total for every id in the domain."""
    k = p.get(tid)
    if not k:
        return (TP_DONE, p.remove(tid))
    if isinstance(k[0], Exit):
        return (TP_EXIT, ThreadPool())
    stepped = thread_step(k)
    assert stepped is not None
    rule, new_k, forked = stepped
    return (rule, extend_pool(p.set(tid, new_k), forked))


@dataclass(frozen=True)
class RoundRobin:
    """Cycles through live ids in increasing order; fair by construction."""


@dataclass(frozen=True)
class SeededRandom:
    seed: int = 0


@dataclass(frozen=True)
class Scripted:
    script: tuple[int, ...] = ()


Scheduler = Union[RoundRobin, SeededRandom, Scripted]


@dataclass(frozen=True)
class TraceStep:
    pool_before: ThreadPool
    tid: int
    rule: str


Trace = tuple[TraceStep, ...]


@dataclass(frozen=True)
class Terminated:
    steps: int


@dataclass(frozen=True)
class FuelExhausted:
    steps: int


@dataclass(frozen=True)
class CycleWitness:
    """A recurring (pool, cursor) state under round-robin scheduling."""

    start_step: int
    steps: tuple[tuple[int, str], ...]
    pool: ThreadPool

    def describe(self) -> str:
        body = ", ".join(f"{rule}@{tid}" for tid, rule in self.steps)
        return f"cycle from step {self.start_step}: [{body}]"


@dataclass(frozen=True)
class FairDivergence:
    witness: CycleWitness


Outcome = Union[Terminated, FuelExhausted, FairDivergence]


class _RoundRobinState:
    def __init__(self) -> None:
        self.cursor = -1

    def pick(self, ids: tuple[int, ...]) -> int:
        later = [t for t in ids if t > self.cursor]
        chosen = later[0] if later else ids[0]
        self.cursor = chosen
        return chosen


def run(p: ThreadPool, s: Scheduler, fuel: int) -> tuple[Outcome, Trace]:
    """Drive the pool until empty, fuel runs out, or (round-robin only) a
    state recurs, which under a fair deterministic schedule is divergence.

    Deterministic for fixed inputs. Random scheduling never reports
    divergence; it can only exhaust fuel.
    """
    trace: list[TraceStep] = []
    steps = 0
    rr = _RoundRobinState() if isinstance(s, RoundRobin) else None
    rng = random.Random(s.seed) if isinstance(s, SeededRandom) else None
    seen: dict[tuple[ThreadPool, int], int] = {}
    while True:
        if not len(p):
            return (Terminated(steps), tuple(trace))
        if rr is not None:
            state = (p, rr.cursor)
            if state in seen:
                start = seen[state]
                cycle = tuple((st.tid, st.rule) for st in trace[start:])
                return (FairDivergence(CycleWitness(start, cycle, p)), tuple(trace))
            seen[state] = steps
        if steps >= fuel:
            return (FuelExhausted(steps), tuple(trace))
        if rr is not None:
            tid = rr.pick(p.ids())
        elif rng is not None:
            tid = rng.choice(p.ids())
        else:
            assert isinstance(s, Scripted)
            if steps >= len(s.script):
                return (FuelExhausted(steps), tuple(trace))
            tid = s.script[steps]
            if tid not in p:
                raise UnknownThreadError(tid)
        rule, p_next = pool_step(p, tid)
        trace.append(TraceStep(p, tid, rule))
        p = p_next
        steps += 1


def _all_busy(p: ThreadPool) -> bool:
    return len(p) > 0 and all(k and isinstance(k[0], BusyLoop) for _, k in p.entries)


@dataclass(frozen=True)
class ExploreResult:
    verdict: str  # TERMINATES or FAIRLY_DIVERGES
    witness_schedule: Optional[tuple[int, ...]]
    witness_pool: Optional[ThreadPool]
    states_explored: int


def explore_fair_termination(c: Command, max_states: int = 100_000) -> ExploreResult:
    """Exhaustively explore all interleavings from a single-thread pool.

    Fairly diverges iff some reachable nonempty pool has busy-loop heads only
    (see module docstring for why that is exact). The witness schedule is the
    thread choice sequence reaching that pool.
    """
    start = ThreadPool.initial(c)
    parents: dict[ThreadPool, Optional[tuple[ThreadPool, int]]] = {start: None}
    frontier = [start]
    explored = 0
    while frontier:
        next_frontier: list[ThreadPool] = []
        for pool in frontier:
            explored += 1
            if _all_busy(pool):
                schedule: list[int] = []
                cur: Optional[ThreadPool] = pool
                while parents[cur] is not None:
                    prev, tid = parents[cur]  # type: ignore[misc]
                    schedule.append(tid)
                    cur = prev
                schedule.reverse()
                return ExploreResult(FAIRLY_DIVERGES, tuple(schedule), pool, explored)
            for tid in pool.ids():
                _, succ = pool_step(pool, tid)
                if succ not in parents:
                    if len(parents) >= max_states:
                        raise SearchLimitError(
                            f"state bound {max_states} exceeded; verdict inconclusive"
                        )
                    parents[succ] = (pool, tid)
                    next_frontier.append(succ)
        frontier = next_frontier
    return ExploreResult(TERMINATES, None, None, explored)


def _classify_line(c: Command) -> tuple[str, list[Command]]:
    """Walk one thread's own future: ('exit'|'loop'|'done', bodies forked on the way).

    Commands after the first exit or busy loop on the line are dead code and
    contribute nothing, matching the executable semantics where an exit kills
    the pool and a busy loop never completes.
    """
    forked: list[Command] = []
    stack = [c]
    while stack:
        cmd = stack.pop()
        match cmd:
            case Exit():
                return ("exit", forked)
            case BusyLoop():
                return ("loop", forked)
            case Fork(body):
                forked.append(body)
            case Seq(first, second):
                stack.append(second)
                stack.append(first)
    return ("done", forked)


def static_termination_oracle(c: Command) -> str:
    """Per-thread static unfolding, no interleaving.

    A thread loops if a busy loop precedes any exit on its own line; it exits
    if an exit comes first. Forked bodies reached before the line ends unfold
    as new threads. Fairly diverges iff some thread loops and no thread exits:
    with an exiting thread fairness forces the exit to fire and empty the pool,
    and with no exiting thread a looping thread spins forever under any fair
    schedule. This agrees with explore_fair_termination because an all-busy
    pool can be assembled exactly when every spawned thread's line loops
    (threads whose line exits keep a non-loop head until fired, and only the
    pool-emptying exit removes a thread that is not scheduled to completion).
    """
    fates = []
    worklist = [c]
    while worklist:
        body = worklist.pop()
        fate, forked = _classify_line(body)
        fates.append(fate)
        worklist.extend(forked)
    if "loop" in fates and "exit" not in fates:
        return FAIRLY_DIVERGES
    return TERMINATES


def pool_to_json(p: ThreadPool) -> dict[str, str]:
    return {str(tid): continuation_text(k) for tid, k in p.entries}


def trace_to_json(trace: Trace) -> list[dict]:
    return [
        {"step": i, "tid": st.tid, "rule": st.rule, "pool": pool_to_json(st.pool_before)}
        for i, st in enumerate(trace)
    ]
