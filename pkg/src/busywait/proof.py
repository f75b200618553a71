"""Derivations of termination triples {P} c {Q} and their checker/synthesizer.

Rule schemas, all compared up to canonical assertion forms:

  exit        {obs(n)} exit {false}                      no premises
  loop        {obs(0) * credit} loop skip {false}        no premises
  seq         {P} c1 {R}   {R} c2 {Q}  =>  {P} c1; c2 {Q}
  fork        {obs(m) * credit^j} c {obs(0)}
              =>  {obs(n+m) * credit^(i+j)} fork(c) {obs(n) * credit^i}
              side payload records the split (m, j)
  frame       {P} c {Q}  =>  {P * F} c {Q * F}           side payload F
  view-shift  {P'} c {Q'}  =>  {P} c {Q}                 side payload two chains
              establishing P ~> P' and Q' ~> Q

The synthesizer targets {obs(0)} c {obs(0)}: it counts busy-looping threads in
the static unfolding, introduces one obligation/credit pair per looper at the
root, routes all obligations to one exiting thread and one credit to each
looper through fork splits, and closes branches with the exit/loop axioms plus
weakenings from false.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .lang import BusyLoop, Command, Exit, Fork, Seq, parse_command, pretty
from .resources import (
    Assertion,
    Bottom,
    CancelStep,
    CanonicalAssertion,
    Credit,
    IntroStep,
    Obs,
    ShiftStep,
    Star,
    ViewShiftChain,
    ViewShiftError,
    WeakenStep,
    canonicalize,
    check_view_shift,
    obs_with_credits,
    parse_assertion,
    pretty_assertion,
)
from .semantics import _classify_line

EXIT_RULE = "exit"
LOOP_RULE = "loop"
SEQ_RULE = "seq"
FORK_RULE = "fork"
FRAME_RULE = "frame"
VIEW_SHIFT_RULE = "view-shift"

RULES = (EXIT_RULE, LOOP_RULE, SEQ_RULE, FORK_RULE, FRAME_RULE, VIEW_SHIFT_RULE)


@dataclass(frozen=True)
class Triple:
    pre: Assertion
    command: Command
    post: Assertion


@dataclass(frozen=True)
class FrameSide:
    frame: Assertion


@dataclass(frozen=True)
class ForkSide:
    child_obs: int
    child_credits: int


@dataclass(frozen=True)
class ShiftSide:
    pre_shift: Optional[ViewShiftChain]
    post_shift: Optional[ViewShiftChain]


Side = Union[FrameSide, ForkSide, ShiftSide, None]


@dataclass(frozen=True)
class ProofTree:
    rule: str
    conclusion: Triple
    premises: tuple["ProofTree", ...] = ()
    side: Side = None


def conclusion_of(t: ProofTree) -> Triple:
    return t.conclusion


class ProofError(ValueError):
    """First failing node: where it is, which rule, what went wrong."""

    def __init__(self, path: tuple[int, ...], rule: str, reason: str, conclusion: Triple):
        self.path = path
        self.rule = rule
        self.reason = reason
        self.conclusion = conclusion
        where = "root" + "".join(f".{i}" for i in path)
        shown = (
            f"{{{pretty_assertion(conclusion.pre)}}} {pretty(conclusion.command)} "
            f"{{{pretty_assertion(conclusion.post)}}}"
        )
        super().__init__(f"node {where} ({rule}): {reason}; conclusion {shown}")


def _canon_eq(a: Assertion, b: Assertion) -> bool:
    ca, cb = canonicalize(a), canonicalize(b)
    if ca.false_flag and cb.false_flag:
        return True
    return ca == cb


def _single_atom(c: CanonicalAssertion) -> Optional[tuple[int, int]]:
    """(obs value, credits) when the form is a single non-false obs atom."""
    if c.false_flag or len(c.obs_atoms) != 1:
        return None
    return (c.obs_atoms[0], c.credit_count)


def check_proof(t: ProofTree) -> None:
    """Validate the whole tree; raises ProofError at the first failing node."""
    _check(t, ())


def is_valid_proof(t: ProofTree) -> bool:
    try:
        check_proof(t)
    except (ProofError, ViewShiftError):
        return False
    return True


def _fail(path, t: ProofTree, reason: str):
    raise ProofError(path, t.rule, reason, t.conclusion)


def _check(t: ProofTree, path: tuple[int, ...]) -> None:
    pre = canonicalize(t.conclusion.pre)
    post = canonicalize(t.conclusion.post)
    cmd = t.conclusion.command

    if t.rule == EXIT_RULE:
        if t.premises or t.side is not None:
            _fail(path, t, "exit takes no premises and no side payload")
        if not isinstance(cmd, Exit):
            _fail(path, t, "command is not exit")
        atom = _single_atom(pre)
        if atom is None or atom[1] != 0:
            _fail(path, t, "precondition must be a single obs(n) atom with no credits")
        if not post.false_flag:
            _fail(path, t, "exit postcondition must be false")
    elif t.rule == LOOP_RULE:
        if t.premises or t.side is not None:
            _fail(path, t, "loop takes no premises and no side payload")
        if not isinstance(cmd, BusyLoop):
            _fail(path, t, "command is not loop skip")
        if _single_atom(pre) != (0, 1):
            _fail(path, t, "precondition must be obs(0) * credit: busy-waiting "
                           "needs a credit and tolerates no obligations")
        if not post.false_flag:
            _fail(path, t, "loop postcondition must be false")
    elif t.rule == SEQ_RULE:
        if len(t.premises) != 2 or t.side is not None:
            _fail(path, t, "seq takes exactly two premises and no side payload")
        if not isinstance(cmd, Seq):
            _fail(path, t, "command is not a sequence")
        first, second = t.premises
        if first.conclusion.command != cmd.first:
            _fail(path, t, "first premise proves a different command")
        if second.conclusion.command != cmd.second:
            _fail(path, t, "second premise proves a different command")
        if not _canon_eq(t.conclusion.pre, first.conclusion.pre):
            _fail(path, t, "precondition differs from the first premise's")
        if not _canon_eq(first.conclusion.post, second.conclusion.pre):
            _fail(path, t, "premises do not meet at a common midpoint assertion")
        if not _canon_eq(second.conclusion.post, t.conclusion.post):
            _fail(path, t, "postcondition differs from the second premise's")
    elif t.rule == FORK_RULE:
        if len(t.premises) != 1:
            _fail(path, t, "fork takes exactly one premise")
        if not isinstance(t.side, ForkSide):
            _fail(path, t, "fork needs a split side payload")
        if not isinstance(cmd, Fork):
            _fail(path, t, "command is not a fork")
        premise = t.premises[0]
        if premise.conclusion.command != cmd.body:
            _fail(path, t, "premise proves a different command than the fork body")
        m, j = t.side.child_obs, t.side.child_credits
        if m < 0 or j < 0:
            _fail(path, t, "split components must be naturals")
        if _single_atom(canonicalize(premise.conclusion.pre)) != (m, j):
            _fail(path, t, f"premise precondition must be obs({m}) * credit^{j} "
                           "matching the split")
        if _single_atom(canonicalize(premise.conclusion.post)) != (0, 0):
            _fail(path, t, "forked thread must end with obs(0) and no credits")
        conc_pre = _single_atom(pre)
        conc_post = _single_atom(post)
        if conc_pre is None:
            _fail(path, t, "precondition must be a single obs atom with credits")
        if conc_post is None:
            _fail(path, t, "postcondition must be a single obs atom with credits")
        n, i = conc_post
        if conc_pre != (n + m, i + j):
            _fail(path, t, f"split does not balance: pre {conc_pre}, "
                           f"post {conc_post}, child ({m}, {j})")
    elif t.rule == FRAME_RULE:
        if len(t.premises) != 1:
            _fail(path, t, "frame takes exactly one premise")
        if not isinstance(t.side, FrameSide):
            _fail(path, t, "frame needs a frame assertion side payload")
        premise = t.premises[0]
        if premise.conclusion.command != cmd:
            _fail(path, t, "premise proves a different command")
        framed_pre = Star(premise.conclusion.pre, t.side.frame)
        framed_post = Star(premise.conclusion.post, t.side.frame)
        if not _canon_eq(t.conclusion.pre, framed_pre):
            _fail(path, t, "precondition is not premise precondition * frame")
        if not _canon_eq(t.conclusion.post, framed_post):
            _fail(path, t, "postcondition is not premise postcondition * frame")
    elif t.rule == VIEW_SHIFT_RULE:
        if len(t.premises) != 1:
            _fail(path, t, "view shift takes exactly one premise")
        if not isinstance(t.side, ShiftSide):
            _fail(path, t, "view shift needs a side payload with two chains")
        premise = t.premises[0]
        if premise.conclusion.command != cmd:
            _fail(path, t, "premise proves a different command")
        pre_shift, post_shift = t.side.pre_shift, t.side.post_shift
        if pre_shift is None:
            if not _canon_eq(t.conclusion.pre, premise.conclusion.pre):
                _fail(path, t, "missing pre chain but preconditions differ")
        else:
            if not _canon_eq(pre_shift.source, t.conclusion.pre):
                _fail(path, t, "pre chain does not start at the conclusion precondition")
            if not _canon_eq(pre_shift.target, premise.conclusion.pre):
                _fail(path, t, "pre chain does not reach the premise precondition")
            try:
                check_view_shift(pre_shift)
            except ViewShiftError as e:
                _fail(path, t, f"pre chain invalid: {e}")
        if post_shift is None:
            if not _canon_eq(t.conclusion.post, premise.conclusion.post):
                _fail(path, t, "missing post chain but postconditions differ")
        else:
            if not _canon_eq(post_shift.source, premise.conclusion.post):
                _fail(path, t, "post chain does not start at the premise postcondition")
            if not _canon_eq(post_shift.target, t.conclusion.post):
                _fail(path, t, "post chain does not reach the conclusion postcondition")
            try:
                check_view_shift(post_shift)
            except ViewShiftError as e:
                _fail(path, t, f"post chain invalid: {e}")
    else:
        _fail(path, t, f"unknown rule {t.rule!r}")

    for i, premise in enumerate(t.premises):
        _check(premise, path + (i,))


def _subtree_stats(c: Command) -> tuple[int, bool]:
    """(busy-looping threads, any exiting thread) over the live unfolding."""
    fate, forked = _classify_line(c)
    loopers = 1 if fate == "loop" else 0
    has_exit = fate == "exit"
    for body in forked:
        sub_loopers, sub_exit = _subtree_stats(body)
        loopers += sub_loopers
        has_exit = has_exit or sub_exit
    return loopers, has_exit


def _cont_exits(rest: tuple[Command, ...]) -> bool:
    """Does the line formed by these pending commands reach an exit?

    Dead code after a busy loop does not count: the line never gets there.
    """
    for item in rest:
        fate, _ = _classify_line(item)
        if fate == "exit":
            return True
        if fate == "loop":
            return False
    return False


# _build_live returns (tree, None) when the line ended inside c (post false)
# and (tree, (o, cr)) with the remaining budget otherwise.  rest holds the
# commands still to run on this thread's line after c.
def _build_live(
    c: Command, o: int, cr: int, rest: tuple[Command, ...]
) -> tuple[ProofTree, Optional[tuple[int, int]]]:
    match c:
        case Exit():
            assert cr == 0, "credits must all be routed before an exit"
            tree = ProofTree(EXIT_RULE, Triple(Obs(o), c, Bottom()))
            return tree, None
        case BusyLoop():
            assert o == 0 and cr == 1, "a loop holds exactly its own credit"
            tree = ProofTree(LOOP_RULE, Triple(obs_with_credits(0, 1), c, Bottom()))
            return tree, None
        case Fork(body):
            loopers, body_exits = _subtree_stats(body)
            m = o if (o > 0 and body_exits and not _cont_exits(rest)) else 0
            j = loopers
            child = _build_thread(body, m, j)
            n, i = o - m, cr - j
            assert n >= 0 and i >= 0, "split exceeds the available budget"
            conclusion = Triple(obs_with_credits(o, cr), c, obs_with_credits(n, i))
            return ProofTree(FORK_RULE, conclusion, (child,), ForkSide(m, j)), (n, i)
        case Seq(first, second):
            t1, r1 = _build_live(first, o, cr, (second,) + rest)
            if r1 is None:
                t2 = _build_dead(second)
                conclusion = Triple(t1.conclusion.pre, c, Bottom())
                return ProofTree(SEQ_RULE, conclusion, (t1, t2)), None
            o1, cr1 = r1
            t2, r2 = _build_live(second, o1, cr1, rest)
            conclusion = Triple(t1.conclusion.pre, c, t2.conclusion.post)
            return ProofTree(SEQ_RULE, conclusion, (t1, t2)), r2
    raise TypeError(f"not a command: {c!r}")


def _build_thread(c: Command, o: int, cr: int) -> ProofTree:
    """A proof of {obs(o) * credit^cr} c {obs(0)} for one thread's body."""
    tree, result = _build_live(c, o, cr, ())
    if result is None:
        chain = ViewShiftChain(Bottom(), (WeakenStep(Obs(0)),), Obs(0))
        conclusion = Triple(tree.conclusion.pre, c, Obs(0))
        return ProofTree(VIEW_SHIFT_RULE, conclusion, (tree,), ShiftSide(None, chain))
    assert result == (0, 0), "thread budget must be spent exactly"
    return tree


def _build_dead(c: Command) -> ProofTree:
    """{false} c {false}: code after an exit or busy loop on the same line.

    Framing with false makes the whole triple vacuous while the premise stays
    a well-formed derivation of c.
    """
    loopers, _ = _subtree_stats(c)
    inner = _build_thread(c, 0, loopers)
    framed_pre = Star(inner.conclusion.pre, Bottom())
    framed_post = Star(inner.conclusion.post, Bottom())
    framed = ProofTree(
        FRAME_RULE, Triple(framed_pre, c, framed_post), (inner,), FrameSide(Bottom())
    )
    side = ShiftSide(
        ViewShiftChain(Bottom(), (WeakenStep(framed_pre),), framed_pre),
        ViewShiftChain(framed_post, (WeakenStep(Bottom()),), Bottom()),
    )
    return ProofTree(VIEW_SHIFT_RULE, Triple(Bottom(), c, Bottom()), (framed,), side)


def synthesize(c: Command) -> Optional[ProofTree]:
    """A checkable proof of {obs(0)} c {obs(0)}, or None when no fair
    termination proof exists (some thread busy-waits and none exits)."""
    loopers, has_exit = _subtree_stats(c)
    if loopers > 0 and not has_exit:
        return None
    inner = _build_thread(c, loopers, loopers)
    if loopers == 0:
        return inner
    steps: tuple[ShiftStep, ...] = tuple(IntroStep(0) for _ in range(loopers))
    chain = ViewShiftChain(Obs(0), steps, inner.conclusion.pre)
    return ProofTree(
        VIEW_SHIFT_RULE,
        Triple(Obs(0), c, Obs(0)),
        (inner,),
        ShiftSide(chain, None),
    )


class ProofFormatError(ValueError):
    """The JSON document does not encode a proof tree."""


def _chain_to_json(chain: Optional[ViewShiftChain]) -> Optional[dict]:
    if chain is None:
        return None
    steps = []
    for step in chain.steps:
        match step:
            case IntroStep(at):
                steps.append({"kind": "intro", "at": at})
            case CancelStep(at):
                steps.append({"kind": "cancel", "at": at})
            case WeakenStep(target):
                steps.append({"kind": "weaken", "target": pretty_assertion(target)})
    return {
        "source": pretty_assertion(chain.source),
        "steps": steps,
        "target": pretty_assertion(chain.target),
    }


def _chain_from_json(doc, what: str) -> Optional[ViewShiftChain]:
    if doc is None:
        return None
    if not isinstance(doc, dict):
        raise ProofFormatError(f"{what}: chain must be an object or null")
    try:
        source = parse_assertion(doc["source"])
        target = parse_assertion(doc["target"])
        raw_steps = doc["steps"]
    except (KeyError, TypeError, ValueError) as e:
        raise ProofFormatError(f"{what}: bad chain: {e}") from e
    steps: list[ShiftStep] = []
    if not isinstance(raw_steps, list):
        raise ProofFormatError(f"{what}: chain steps must be a list")
    for i, raw in enumerate(raw_steps):
        if not isinstance(raw, dict) or "kind" not in raw:
            raise ProofFormatError(f"{what}: step {i} must be an object with a kind")
        kind = raw["kind"]
        if kind == "intro":
            steps.append(IntroStep(int(raw["at"])))
        elif kind == "cancel":
            steps.append(CancelStep(int(raw["at"])))
        elif kind == "weaken":
            try:
                steps.append(WeakenStep(parse_assertion(raw["target"])))
            except (KeyError, ValueError) as e:
                raise ProofFormatError(f"{what}: step {i}: {e}") from e
        else:
            raise ProofFormatError(f"{what}: step {i}: unknown kind {kind!r}")
    return ViewShiftChain(source, tuple(steps), target)


def proof_to_json(t: ProofTree) -> dict:
    doc: dict = {
        "rule": t.rule,
        "conclusion": {
            "pre": pretty_assertion(t.conclusion.pre),
            "cmd": pretty(t.conclusion.command),
            "post": pretty_assertion(t.conclusion.post),
        },
    }
    match t.side:
        case ForkSide(m, j):
            doc["side"] = {"child_obs": m, "child_credits": j}
        case FrameSide(frame):
            doc["side"] = {"frame": pretty_assertion(frame)}
        case ShiftSide(pre_shift, post_shift):
            doc["side"] = {
                "pre_shift": _chain_to_json(pre_shift),
                "post_shift": _chain_to_json(post_shift),
            }
    if t.premises:
        doc["premises"] = [proof_to_json(p) for p in t.premises]
    return doc


def proof_from_json(doc) -> ProofTree:
    if not isinstance(doc, dict):
        raise ProofFormatError("proof node must be an object")
    try:
        rule = doc["rule"]
        conclusion = doc["conclusion"]
        pre = parse_assertion(conclusion["pre"])
        cmd = parse_command(conclusion["cmd"])
        post = parse_assertion(conclusion["post"])
    except (KeyError, TypeError, ValueError) as e:
        raise ProofFormatError(f"bad proof node: {e}") from e
    if rule not in RULES:
        raise ProofFormatError(f"unknown rule {rule!r}")
    side: Side = None
    raw_side = doc.get("side")
    if raw_side is not None:
        if not isinstance(raw_side, dict):
            raise ProofFormatError("side payload must be an object")
        if rule == FORK_RULE:
            try:
                side = ForkSide(int(raw_side["child_obs"]), int(raw_side["child_credits"]))
            except (KeyError, TypeError, ValueError) as e:
                raise ProofFormatError(f"bad fork split: {e}") from e
        elif rule == FRAME_RULE:
            try:
                side = FrameSide(parse_assertion(raw_side["frame"]))
            except (KeyError, TypeError, ValueError) as e:
                raise ProofFormatError(f"bad frame payload: {e}") from e
        elif rule == VIEW_SHIFT_RULE:
            side = ShiftSide(
                _chain_from_json(raw_side.get("pre_shift"), "pre_shift"),
                _chain_from_json(raw_side.get("post_shift"), "post_shift"),
            )
        else:
            raise ProofFormatError(f"rule {rule!r} takes no side payload")
    premises = tuple(proof_from_json(p) for p in doc.get("premises", []))
    return ProofTree(rule, Triple(pre, cmd, post), premises, side)
