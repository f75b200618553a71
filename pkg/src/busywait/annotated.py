"""Resource-annotated execution: proof-directed runs and trace replay.

Each thread carries a resource bundle alongside its continuation: one chunk of
pending exit obligations and a count of credits. Real steps mirror the plain
pool semantics with side conditions read off a compiled proof plan; ghost
steps move resources without touching any continuation. Rules:

  ga-st-loop   busy-loop self step; needs no obligations and at least one
               credit (possession is checked, not spent: the credit witnesses
               a pending exit elsewhere)
  ga-st-fork   pops a fork head; moves (child_obs, child_credits) from the
               parent bundle to the new thread
  ga-st-seq    restructures a sequence head; no resource motion
  ga-tp-exit   an exit head empties the whole pool and discharges every
               obligation in it
  ga-tp-done   removes a thread with an empty continuation; it must hold no
               obligations (leftover credits are allowed)
  gs-intro     ghost: mint one obligation and one credit together
  gs-cancel    ghost: retire one obligation against one credit

A checked proof compiles to a plan tree; running a program under the plan
schedules ghost steps from the proof's view shifts around the real steps, so
every trace this module produces replays cleanly under check_annotated_trace.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, replace
from typing import Optional, Union

from .lang import (
    BusyLoop,
    Command,
    Continuation,
    Exit,
    Fork,
    Seq,
    continuation_text,
    parse_continuation,
)
from .proof import (
    EXIT_RULE,
    FORK_RULE,
    FRAME_RULE,
    LOOP_RULE,
    SEQ_RULE,
    VIEW_SHIFT_RULE,
    ProofTree,
    check_proof,
)
from .resources import CancelStep, IntroStep, ViewShiftChain, canonicalize
from .semantics import (
    FuelExhausted,
    Outcome,
    RoundRobin,
    Scheduler,
    Scripted,
    SeededRandom,
    Terminated,
    ThreadPool,
    Trace,
    TraceStep,
    UnknownThreadError,
    _RoundRobinState,
)

GA_ST_LOOP = "ga-st-loop"
GA_ST_FORK = "ga-st-fork"
GA_ST_SEQ = "ga-st-seq"
GA_TP_EXIT = "ga-tp-exit"
GA_TP_DONE = "ga-tp-done"
GS_INTRO = "gs-intro"
GS_CANCEL = "gs-cancel"

REAL_RULES = (GA_ST_LOOP, GA_ST_FORK, GA_ST_SEQ, GA_TP_EXIT, GA_TP_DONE)
GHOST_RULES = (GS_INTRO, GS_CANCEL)


@dataclass(frozen=True)
class AnnotatedThread:
    cont: Continuation
    chunk: int
    credits: int


@dataclass(frozen=True)
class AnnotatedPool:
    """Immutable map from thread id to (continuation, resource bundle)."""

    entries: tuple[tuple[int, AnnotatedThread], ...] = ()

    @staticmethod
    def from_dict(d: dict[int, AnnotatedThread]) -> "AnnotatedPool":
        return AnnotatedPool(tuple(sorted(d.items())))

    def as_dict(self) -> dict[int, AnnotatedThread]:
        return dict(self.entries)

    def ids(self) -> tuple[int, ...]:
        return tuple(tid for tid, _ in self.entries)

    def get(self, tid: int) -> AnnotatedThread:
        for t, th in self.entries:
            if t == tid:
                return th
        raise UnknownThreadError(tid)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, tid: int) -> bool:
        return any(t == tid for t, _ in self.entries)


@dataclass(frozen=True)
class AnnotatedStep:
    kind: str  # "real" | "ghost"
    tid: int
    rule: str
    child_obs: Optional[int] = None
    child_credits: Optional[int] = None


@dataclass(frozen=True)
class AnnotatedTrace:
    initial: AnnotatedPool
    steps: tuple[AnnotatedStep, ...]
    pools: tuple[AnnotatedPool, ...]  # pool after each step

    def pool_before(self, i: int) -> AnnotatedPool:
        if not 0 <= i < len(self.steps):
            raise IndexError(i)
        return self.initial if i == 0 else self.pools[i - 1]


@dataclass(frozen=True)
class PlanNode:
    """One command's slice of a proof: ghost ops around a real step.

    pre_ghost ops fire when the command reaches the head of its thread,
    post_ghost ops when it leaves the continuation. Only fork and seq heads
    ever leave a live continuation, so exit and loop post ops never fire.
    """

    kind: str  # "exit" | "loop" | "fork" | "seq"
    pre_ghost: tuple[str, ...] = ()
    post_ghost: tuple[str, ...] = ()
    split: Optional[tuple[int, int]] = None
    child: Optional["PlanNode"] = None
    first: Optional["PlanNode"] = None
    second: Optional["PlanNode"] = None


def _chain_ops(chain: Optional[ViewShiftChain]) -> tuple[str, ...]:
    # weaken steps drop or rephrase assertions without moving resources, so
    # only intro and cancel survive compilation
    if chain is None:
        return ()
    ops = []
    for step in chain.steps:
        if isinstance(step, IntroStep):
            ops.append("intro")
        elif isinstance(step, CancelStep):
            ops.append("cancel")
    return tuple(ops)


def compile_plan(t: ProofTree) -> PlanNode:
    """Flatten a proof tree into per-command ghost schedules and fork splits."""
    if t.rule == EXIT_RULE:
        return PlanNode("exit")
    if t.rule == LOOP_RULE:
        return PlanNode("loop")
    if t.rule == SEQ_RULE:
        return PlanNode(
            "seq",
            first=compile_plan(t.premises[0]),
            second=compile_plan(t.premises[1]),
        )
    if t.rule == FORK_RULE:
        side = t.side
        return PlanNode(
            "fork",
            split=(side.child_obs, side.child_credits),
            child=compile_plan(t.premises[0]),
        )
    if t.rule == FRAME_RULE:
        # framed resources ride along untouched; side conditions are
        # inequalities, so extra holdings never block a step
        return compile_plan(t.premises[0])
    if t.rule == VIEW_SHIFT_RULE:
        inner = compile_plan(t.premises[0])
        return replace(
            inner,
            pre_ghost=_chain_ops(t.side.pre_shift) + inner.pre_ghost,
            post_ghost=inner.post_ghost + _chain_ops(t.side.post_shift),
        )
    raise ValueError(f"unknown rule {t.rule!r}")


class StuckError(RuntimeError):
    """A step's resource side condition failed during a directed run."""

    def __init__(self, tid: int, rule: str, reason: str):
        self.tid = tid
        self.rule = rule
        self.reason = reason
        super().__init__(f"thread {tid} stuck at {rule}: {reason}")


class _LiveThread:
    __slots__ = ("chunk", "credits", "cont", "plans", "activated", "ghosts")

    def __init__(self, chunk: int, credits: int, cont: list[Command], plans: list[PlanNode]):
        self.chunk = chunk
        self.credits = credits
        self.cont = cont
        self.plans = plans
        self.activated = [False] * len(plans)
        self.ghosts: deque[str] = deque()
        self._activate_head()

    def _activate_head(self) -> None:
        if self.plans and not self.activated[0]:
            self.ghosts.extend(self.plans[0].pre_ghost)
            self.activated[0] = True

    def snapshot(self) -> AnnotatedThread:
        return AnnotatedThread(tuple(self.cont), self.chunk, self.credits)


def _snapshot(pool: dict[int, _LiveThread]) -> AnnotatedPool:
    return AnnotatedPool.from_dict({tid: t.snapshot() for tid, t in pool.items()})


def annotated_run(
    tree: ProofTree,
    scheduler: Scheduler = RoundRobin(),
    fuel: int = 100_000,
    check: bool = True,
) -> tuple[Outcome, AnnotatedTrace]:
    """Run the proved command with resources tracked per thread.

    The proof is checked first (disable with check=False only for trees that
    were already validated). Ghost steps from view shifts are queued when a
    command reaches or leaves the head of its thread and drain one per turn
    before the thread takes its next real step.
    """
    if check:
        check_proof(tree)
    pre = canonicalize(tree.conclusion.pre)
    if pre.false_flag or len(pre.obs_atoms) != 1 or pre.credit_count != 0:
        raise ValueError(
            "directed runs need a precondition of a lone obs atom with no credits"
        )
    root = _LiveThread(
        chunk=pre.obs_atoms[0],
        credits=0,
        cont=[tree.conclusion.command],
        plans=[compile_plan(tree)],
    )
    pool: dict[int, _LiveThread] = {0: root}
    initial = _snapshot(pool)
    steps: list[AnnotatedStep] = []
    pools: list[AnnotatedPool] = []

    rr = _RoundRobinState() if isinstance(scheduler, RoundRobin) else None
    rng = random.Random(scheduler.seed) if isinstance(scheduler, SeededRandom) else None

    def record(step: AnnotatedStep) -> None:
        steps.append(step)
        pools.append(_snapshot(pool))

    while True:
        if not pool:
            outcome: Outcome = Terminated(len(steps))
            break
        if len(steps) >= fuel:
            outcome = FuelExhausted(len(steps))
            break
        ids = tuple(sorted(pool))
        if rr is not None:
            tid = rr.pick(ids)
        elif rng is not None:
            tid = rng.choice(ids)
        else:
            assert isinstance(scheduler, Scripted)
            if len(steps) >= len(scheduler.script):
                outcome = FuelExhausted(len(steps))
                break
            tid = scheduler.script[len(steps)]
            if tid not in pool:
                raise UnknownThreadError(tid)
        t = pool[tid]

        if t.ghosts:
            op = t.ghosts.popleft()
            if op == "intro":
                t.chunk += 1
                t.credits += 1
                record(AnnotatedStep("ghost", tid, GS_INTRO))
            else:
                if t.chunk < 1 or t.credits < 1:
                    raise StuckError(tid, GS_CANCEL, "needs an obligation and a credit")
                t.chunk -= 1
                t.credits -= 1
                record(AnnotatedStep("ghost", tid, GS_CANCEL))
            continue

        if not t.cont:
            if t.chunk != 0:
                raise StuckError(tid, GA_TP_DONE, f"{t.chunk} obligations undischarged")
            del pool[tid]
            record(AnnotatedStep("real", tid, GA_TP_DONE))
            continue

        head = t.cont[0]
        plan = t.plans[0]
        if isinstance(head, Exit):
            assert plan.kind == "exit", "plan out of step with the continuation"
            pool.clear()
            record(AnnotatedStep("real", tid, GA_TP_EXIT))
        elif isinstance(head, BusyLoop):
            assert plan.kind == "loop", "plan out of step with the continuation"
            if t.chunk != 0:
                raise StuckError(tid, GA_ST_LOOP, f"{t.chunk} pending obligations")
            if t.credits < 1:
                raise StuckError(tid, GA_ST_LOOP, "no credit to spin on")
            record(AnnotatedStep("real", tid, GA_ST_LOOP))
        elif isinstance(head, Fork):
            assert plan.kind == "fork", "plan out of step with the continuation"
            m, j = plan.split
            if m > t.chunk:
                raise StuckError(tid, GA_ST_FORK, f"split passes obs({m}), thread holds obs({t.chunk})")
            if j > t.credits:
                raise StuckError(tid, GA_ST_FORK, f"split passes {j} credits, thread holds {t.credits}")
            t.cont.pop(0)
            t.plans.pop(0)
            t.activated.pop(0)
            t.chunk -= m
            t.credits -= j
            t.ghosts.extend(plan.post_ghost)
            child_tid = max(pool) + 1
            pool[child_tid] = _LiveThread(m, j, [head.body], [plan.child])
            t._activate_head()
            record(AnnotatedStep("real", tid, GA_ST_FORK, child_obs=m, child_credits=j))
        elif isinstance(head, Seq):
            assert plan.kind == "seq", "plan out of step with the continuation"
            t.cont.pop(0)
            t.plans.pop(0)
            t.activated.pop(0)
            second = replace(plan.second, post_ghost=plan.second.post_ghost + plan.post_ghost)
            t.cont[0:0] = [head.first, head.second]
            t.plans[0:0] = [plan.first, second]
            t.activated[0:0] = [False, False]
            t._activate_head()
            record(AnnotatedStep("real", tid, GA_ST_SEQ))
        else:
            raise TypeError(f"not a command: {head!r}")

    return outcome, AnnotatedTrace(initial, tuple(steps), tuple(pools))


class TraceError(ValueError):
    """Replay of an annotated trace failed at a specific step."""

    def __init__(self, step_index: int, reason: str):
        self.step_index = step_index
        self.reason = reason
        super().__init__(f"step {step_index}: {reason}")


def _replay_step(
    pool: dict[int, AnnotatedThread], st: AnnotatedStep, i: int
) -> dict[int, AnnotatedThread]:
    if st.tid not in pool:
        raise TraceError(i, f"thread {st.tid} is not in the pool")
    t = pool[st.tid]
    out = dict(pool)
    if st.rule == GS_INTRO:
        out[st.tid] = replace(t, chunk=t.chunk + 1, credits=t.credits + 1)
    elif st.rule == GS_CANCEL:
        if t.chunk < 1 or t.credits < 1:
            raise TraceError(i, "cancel needs an obligation and a credit")
        out[st.tid] = replace(t, chunk=t.chunk - 1, credits=t.credits - 1)
    elif st.rule == GA_TP_DONE:
        if t.cont:
            raise TraceError(i, "thread still has work but claims to be done")
        if t.chunk != 0:
            raise TraceError(i, f"thread ends holding obs({t.chunk})")
        del out[st.tid]
    elif st.rule == GA_TP_EXIT:
        if not t.cont or not isinstance(t.cont[0], Exit):
            raise TraceError(i, "exit step on a thread whose head is not exit")
        out = {}
    elif st.rule == GA_ST_LOOP:
        if not t.cont or not isinstance(t.cont[0], BusyLoop):
            raise TraceError(i, "loop step on a thread whose head is not a busy loop")
        if t.chunk != 0:
            raise TraceError(i, f"busy loop step while holding obs({t.chunk})")
        if t.credits < 1:
            raise TraceError(i, "busy loop step without a credit")
    elif st.rule == GA_ST_FORK:
        if not t.cont or not isinstance(t.cont[0], Fork):
            raise TraceError(i, "fork step on a thread whose head is not a fork")
        if st.child_obs is None or st.child_credits is None:
            raise TraceError(i, "fork step without a resource split")
        m, j = st.child_obs, st.child_credits
        if m < 0 or j < 0:
            raise TraceError(i, "fork split components must be naturals")
        if m > t.chunk:
            raise TraceError(i, f"split passes obs({m}) but the thread holds obs({t.chunk})")
        if j > t.credits:
            raise TraceError(i, f"split passes {j} credits but the thread holds {t.credits}")
        body = t.cont[0].body
        out[st.tid] = AnnotatedThread(t.cont[1:], t.chunk - m, t.credits - j)
        out[max(pool) + 1] = AnnotatedThread((body,), m, j)
    elif st.rule == GA_ST_SEQ:
        if not t.cont or not isinstance(t.cont[0], Seq):
            raise TraceError(i, "seq step on a thread whose head is not a sequence")
        head = t.cont[0]
        out[st.tid] = replace(t, cont=(head.first, head.second) + t.cont[1:])
    else:
        raise TraceError(i, f"unknown rule {st.rule!r}")
    return out


def check_annotated_trace(trace: AnnotatedTrace) -> None:
    """Replay the trace from its initial pool, enforcing every side condition.

    Needs no proof: the trace itself is the claim being audited. Raises
    TraceError at the first step whose rule does not apply, and at any step
    whose recorded pool differs from the replayed one.
    """
    pool = trace.initial.as_dict()
    for i, st in enumerate(trace.steps):
        pool = _replay_step(pool, st, i)
        if trace.pools:
            if AnnotatedPool.from_dict(pool) != trace.pools[i]:
                raise TraceError(i, "recorded pool differs from the replayed one")


def is_valid_annotated_trace(trace: AnnotatedTrace) -> bool:
    try:
        check_annotated_trace(trace)
    except TraceError:
        return False
    return True


def erase_pool(p: AnnotatedPool) -> ThreadPool:
    return ThreadPool(tuple((tid, t.cont) for tid, t in p.entries))


def erase_trace(trace: AnnotatedTrace) -> Trace:
    """Forget resources and ghost steps; what remains is a plain pool trace."""
    out = []
    for i, st in enumerate(trace.steps):
        if st.kind != "real":
            continue
        assert st.rule.startswith("ga-")
        out.append(TraceStep(erase_pool(trace.pool_before(i)), st.tid, st.rule[3:]))
    return tuple(out)


class TraceFormatError(ValueError):
    """The JSON document does not encode an annotated trace."""


def annotated_pool_to_json(p: AnnotatedPool) -> dict:
    return {
        str(tid): {
            "cont": continuation_text(t.cont),
            "chunk": t.chunk,
            "credits": t.credits,
        }
        for tid, t in p.entries
    }


def annotated_trace_to_json(trace: AnnotatedTrace) -> dict:
    steps = []
    for i, st in enumerate(trace.steps):
        doc: dict = {"step": i, "kind": st.kind, "tid": st.tid, "rule": st.rule}
        if st.rule == GA_ST_FORK:
            doc["payload"] = {"child_obs": st.child_obs, "child_credits": st.child_credits}
        doc["pool"] = annotated_pool_to_json(trace.pools[i])
        steps.append(doc)
    return {"initial": annotated_pool_to_json(trace.initial), "steps": steps}


def _pool_from_json(doc, what: str) -> AnnotatedPool:
    if not isinstance(doc, dict):
        raise TraceFormatError(f"{what}: pool must be an object")
    entries = {}
    for key, raw in doc.items():
        try:
            tid = int(key)
            cont = parse_continuation(raw["cont"])
            chunk = int(raw["chunk"])
            credits = int(raw["credits"])
        except (KeyError, TypeError, ValueError) as e:
            raise TraceFormatError(f"{what}: thread {key}: {e}") from e
        if chunk < 0 or credits < 0:
            raise TraceFormatError(f"{what}: thread {key}: resources must be naturals")
        entries[tid] = AnnotatedThread(cont, chunk, credits)
    return AnnotatedPool.from_dict(entries)


def annotated_trace_from_json(doc) -> AnnotatedTrace:
    if not isinstance(doc, dict) or "initial" not in doc or "steps" not in doc:
        raise TraceFormatError("trace must be an object with initial and steps")
    initial = _pool_from_json(doc["initial"], "initial")
    raw_steps = doc["steps"]
    if not isinstance(raw_steps, list):
        raise TraceFormatError("steps must be a list")
    steps: list[AnnotatedStep] = []
    pools: list[AnnotatedPool] = []
    for i, raw in enumerate(raw_steps):
        if not isinstance(raw, dict):
            raise TraceFormatError(f"step {i}: must be an object")
        try:
            kind = raw["kind"]
            tid = int(raw["tid"])
            rule = raw["rule"]
        except (KeyError, TypeError, ValueError) as e:
            raise TraceFormatError(f"step {i}: {e}") from e
        if kind not in ("real", "ghost"):
            raise TraceFormatError(f"step {i}: unknown kind {kind!r}")
        if kind == "ghost" and rule not in GHOST_RULES:
            raise TraceFormatError(f"step {i}: {rule!r} is not a ghost rule")
        if kind == "real" and rule not in REAL_RULES:
            raise TraceFormatError(f"step {i}: {rule!r} is not a pool rule")
        child_obs = child_credits = None
        if rule == GA_ST_FORK:
            payload = raw.get("payload")
            if not isinstance(payload, dict):
                raise TraceFormatError(f"step {i}: fork step needs a payload")
            try:
                child_obs = int(payload["child_obs"])
                child_credits = int(payload["child_credits"])
            except (KeyError, TypeError, ValueError) as e:
                raise TraceFormatError(f"step {i}: bad payload: {e}") from e
        steps.append(AnnotatedStep(kind, tid, rule, child_obs, child_credits))
        pools.append(_pool_from_json(raw.get("pool", {}), f"step {i} pool"))
    return AnnotatedTrace(initial, tuple(steps), tuple(pools))
