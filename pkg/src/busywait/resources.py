"""Ghost resources: obligation chunks and credits, assertions over them.

A resource bundle is a multiset of naturals (obligation chunks, each chunk the
obligation count of one thread) plus a credit count. Assertions describe
bundles; `satisfies` is the direct model relation with an existential split at
each star, and `canonicalize`/`entails` give the linear-time decision route.
The two routes are checked against each other in the tests.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterator, Optional, Union


@dataclass(frozen=True)
class ResourceBundle:
    chunks: tuple[int, ...] = ()
    credits: int = 0

    def __post_init__(self):
        object.__setattr__(self, "chunks", tuple(sorted(self.chunks)))
        if any(n < 0 for n in self.chunks) or self.credits < 0:
            raise ValueError("bundle components must be naturals")

    def is_complete(self) -> bool:
        """Complete bundles carry exactly one chunk: one thread's full view."""
        return len(self.chunks) == 1


def bundle_union(a: ResourceBundle, b: ResourceBundle) -> ResourceBundle:
    return ResourceBundle(a.chunks + b.chunks, a.credits + b.credits)


@dataclass(frozen=True)
class Top:
    pass


@dataclass(frozen=True)
class Bottom:
    pass


@dataclass(frozen=True)
class Star:
    left: "Assertion"
    right: "Assertion"


@dataclass(frozen=True)
class Obs:
    count: int

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("obligation counts are naturals")


@dataclass(frozen=True)
class Credit:
    pass


Assertion = Union[Top, Bottom, Star, Obs, Credit]


def _splits(r: ResourceBundle) -> Iterator[tuple[ResourceBundle, ResourceBundle]]:
    chunks = r.chunks
    n = len(chunks)
    seen = set()
    for mask in range(1 << n):
        left = tuple(chunks[i] for i in range(n) if mask >> i & 1)
        right = tuple(chunks[i] for i in range(n) if not mask >> i & 1)
        key = (tuple(sorted(left)), tuple(sorted(right)))
        if key in seen:
            continue
        seen.add(key)
        for c_left in range(r.credits + 1):
            yield (
                ResourceBundle(left, c_left),
                ResourceBundle(right, r.credits - c_left),
            )


def satisfies(r: ResourceBundle, a: Assertion) -> bool:
    """Direct model relation; stars split the bundle existentially."""
    match a:
        case Top():
            return True
        case Bottom():
            return False
        case Obs(n):
            return n in r.chunks
        case Credit():
            return r.credits >= 1
        case Star(left, right):
            return any(
                satisfies(r1, left) and satisfies(r2, right) for r1, r2 in _splits(r)
            )
    raise TypeError(f"not an assertion: {a!r}")


@dataclass(frozen=True)
class CanonicalAssertion:
    false_flag: bool
    obs_atoms: tuple[int, ...]
    credit_count: int

    def __post_init__(self):
        object.__setattr__(self, "obs_atoms", tuple(sorted(self.obs_atoms)))

    def holds_for(self, r: ResourceBundle) -> bool:
        """Fast satisfaction: obs atoms embed into the chunks, credits suffice."""
        if self.false_flag:
            return False
        return _multiset_leq(self.obs_atoms, r.chunks) and r.credits >= self.credit_count

    def balance(self) -> int:
        """Sum of obligation atom values minus credit count."""
        return sum(self.obs_atoms) - self.credit_count


def _multiset_leq(small: tuple[int, ...], big: tuple[int, ...]) -> bool:
    need = Counter(small)
    have = Counter(big)
    return all(have[k] >= v for k, v in need.items())


def canonicalize(a: Assertion) -> CanonicalAssertion:
    match a:
        case Top():
            return CanonicalAssertion(False, (), 0)
        case Bottom():
            return CanonicalAssertion(True, (), 0)
        case Obs(n):
            return CanonicalAssertion(False, (n,), 0)
        case Credit():
            return CanonicalAssertion(False, (), 1)
        case Star(left, right):
            cl, cr = canonicalize(left), canonicalize(right)
            return CanonicalAssertion(
                cl.false_flag or cr.false_flag,
                cl.obs_atoms + cr.obs_atoms,
                cl.credit_count + cr.credit_count,
            )
    raise TypeError(f"not an assertion: {a!r}")


def entails_canonical(p: CanonicalAssertion, q: CanonicalAssertion) -> bool:
    if p.false_flag:
        return True
    if q.false_flag:
        return False
    return _multiset_leq(q.obs_atoms, p.obs_atoms) and q.credit_count <= p.credit_count


def entails(p: Assertion, q: Assertion) -> bool:
    """Semantic entailment, decided on canonical forms."""
    return entails_canonical(canonicalize(p), canonicalize(q))


def assertions_equivalent(p: Assertion, q: Assertion) -> bool:
    return entails(p, q) and entails(q, p)


@dataclass(frozen=True)
class IntroStep:
    """Raise obs atom `at` by one and add a credit: pairs appear together."""

    at: int


@dataclass(frozen=True)
class CancelStep:
    """Lower obs atom `at` by one and remove a credit; needs both available."""

    at: int


@dataclass(frozen=True)
class WeakenStep:
    """Semantic implication step. Valid when the current form entails the
    target and either the current form is false or the obligation/credit
    balance is unchanged, so pairs can never appear or vanish one-sidedly."""

    target: "Assertion"


ShiftStep = Union[IntroStep, CancelStep, WeakenStep]


@dataclass(frozen=True)
class ViewShiftChain:
    source: Assertion
    steps: tuple[ShiftStep, ...]
    target: Assertion


class ViewShiftError(ValueError):
    def __init__(self, step_index: int, reason: str):
        super().__init__(f"view shift step {step_index}: {reason}")
        self.step_index = step_index
        self.reason = reason


def _weaken_ok(cur: CanonicalAssertion, tgt: CanonicalAssertion) -> bool:
    if not entails_canonical(cur, tgt):
        return False
    return cur.false_flag or cur.balance() == tgt.balance()


def check_view_shift(chain: ViewShiftChain) -> None:
    """Validate every primitive step on canonical forms; raises ViewShiftError."""
    cur = canonicalize(chain.source)
    for i, step in enumerate(chain.steps):
        match step:
            case IntroStep(at):
                if cur.false_flag:
                    raise ViewShiftError(i, "cannot intro on a false form; weaken instead")
                if not 0 <= at < len(cur.obs_atoms):
                    raise ViewShiftError(i, f"no obs atom at index {at}")
                atoms = list(cur.obs_atoms)
                atoms[at] += 1
                cur = CanonicalAssertion(False, tuple(atoms), cur.credit_count + 1)
            case CancelStep(at):
                if cur.false_flag:
                    raise ViewShiftError(i, "cannot cancel on a false form; weaken instead")
                if not 0 <= at < len(cur.obs_atoms):
                    raise ViewShiftError(i, f"no obs atom at index {at}")
                if cur.obs_atoms[at] < 1:
                    raise ViewShiftError(i, "obs atom is already zero")
                if cur.credit_count < 1:
                    raise ViewShiftError(i, "no credit to cancel")
                atoms = list(cur.obs_atoms)
                atoms[at] -= 1
                cur = CanonicalAssertion(False, tuple(atoms), cur.credit_count - 1)
            case WeakenStep(target):
                tgt = canonicalize(target)
                if not entails_canonical(cur, tgt):
                    raise ViewShiftError(i, "current form does not entail the target")
                if not (cur.false_flag or cur.balance() == tgt.balance()):
                    raise ViewShiftError(
                        i, "weakening would change the obligation/credit balance"
                    )
                cur = tgt
            case _:
                raise ViewShiftError(i, f"unknown step {step!r}")
    final = canonicalize(chain.target)
    if cur != final:
        raise ViewShiftError(
            len(chain.steps),
            f"chain ends at {cur}, target canonicalizes to {final}",
        )


def is_valid_view_shift(chain: ViewShiftChain) -> bool:
    try:
        check_view_shift(chain)
    except ViewShiftError:
        return False
    return True


def search_view_shift(p: Assertion, q: Assertion, bound: int) -> Optional[ViewShiftChain]:
    """Breadth-first search for a chain of at most `bound` primitive steps.

    Moves are intro/cancel at each atom plus a final weakening directly to q.
    """
    start = canonicalize(p)
    goal = canonicalize(q)

    def finish(ops: tuple[ShiftStep, ...], cur: CanonicalAssertion) -> Optional[ViewShiftChain]:
        if cur == goal:
            return ViewShiftChain(p, ops, q)
        if len(ops) < bound and _weaken_ok(cur, goal):
            return ViewShiftChain(p, ops + (WeakenStep(q),), q)
        return None

    frontier: list[tuple[CanonicalAssertion, tuple[ShiftStep, ...]]] = [(start, ())]
    seen = {start}
    while frontier:
        next_frontier: list[tuple[CanonicalAssertion, tuple[ShiftStep, ...]]] = []
        for cur, ops in frontier:
            found = finish(ops, cur)
            if found is not None:
                return found
            if len(ops) >= bound or cur.false_flag:
                continue
            for at in range(len(cur.obs_atoms)):
                atoms = list(cur.obs_atoms)
                atoms[at] += 1
                succ = CanonicalAssertion(False, tuple(atoms), cur.credit_count + 1)
                if succ not in seen:
                    seen.add(succ)
                    next_frontier.append((succ, ops + (IntroStep(at),)))
                if cur.obs_atoms[at] >= 1 and cur.credit_count >= 1:
                    atoms = list(cur.obs_atoms)
                    atoms[at] -= 1
                    succ = CanonicalAssertion(False, tuple(atoms), cur.credit_count - 1)
                    if succ not in seen:
                        seen.add(succ)
                        next_frontier.append((succ, ops + (CancelStep(at),)))
        frontier = next_frontier
    return None


_ATOM_TOKENS = {"true": Top(), "false": Bottom(), "credit": Credit()}


class AssertionParseError(ValueError):
    pass


def parse_assertion(text: str) -> Assertion:
    """Parse `true | false | obs(n) | credit | A * B`, star right-associative."""
    tokens = _tokenize_assertion(text)
    pos = 0

    def atom() -> Assertion:
        nonlocal pos
        if pos >= len(tokens):
            raise AssertionParseError("unexpected end of assertion")
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            inner = star()
            if pos >= len(tokens) or tokens[pos] != ")":
                raise AssertionParseError("expected ')'")
            pos += 1
            return inner
        if tok in _ATOM_TOKENS:
            return _ATOM_TOKENS[tok]
        if tok == "obs":
            if pos + 2 >= len(tokens) or tokens[pos] != "(" or tokens[pos + 2] != ")":
                raise AssertionParseError("expected obs(<n>)")
            count = tokens[pos + 1]
            if not count.isdigit():
                raise AssertionParseError(f"expected a natural, found {count!r}")
            pos += 3
            return Obs(int(count))
        raise AssertionParseError(f"unexpected token {tok!r}")

    def star() -> Assertion:
        left = atom()
        nonlocal pos
        if pos < len(tokens) and tokens[pos] == "*":
            pos += 1
            return Star(left, star())
        return left

    result = star()
    if pos != len(tokens):
        raise AssertionParseError(f"trailing tokens {tokens[pos:]!r}")
    return result


def _tokenize_assertion(text: str) -> list[str]:
    tokens = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()*":
            tokens.append(ch)
            i += 1
        elif ch.isalpha() or ch.isdigit():
            start = i
            while i < len(text) and (text[i].isalnum()):
                i += 1
            tokens.append(text[start:i])
        else:
            raise AssertionParseError(f"unexpected character {ch!r}")
    return tokens


def pretty_assertion(a: Assertion) -> str:
    match a:
        case Top():
            return "true"
        case Bottom():
            return "false"
        case Obs(n):
            return f"obs({n})"
        case Credit():
            return "credit"
        case Star(left, right):
            left_text = pretty_assertion(left)
            if isinstance(left, Star):
                left_text = f"({left_text})"
            return f"{left_text} * {pretty_assertion(right)}"
    raise TypeError(f"not an assertion: {a!r}")


def obs_with_credits(obs: int, credits: int) -> Assertion:
    """obs(n) * credit * ... * credit, the shape proof synthesis routes around."""
    if credits == 0:
        return Obs(obs)
    tail: Assertion = Credit()
    for _ in range(credits - 1):
        tail = Star(Credit(), tail)
    return Star(Obs(obs), tail)
