"""Command language: exit | loop skip | fork(cmd) | cmd ; cmd.

`;` is right-associative. Continuations are represented as tuples of commands,
the empty tuple standing for the finished thread.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Union


@dataclass(frozen=True)
class Exit:
    """Terminate the whole pool."""


@dataclass(frozen=True)
class BusyLoop:
    """`loop skip`: spin forever, yielding to the scheduler each iteration."""


@dataclass(frozen=True)
class Fork:
    body: "Command"


@dataclass(frozen=True)
class Seq:
    first: "Command"
    second: "Command"


Command = Union[Exit, BusyLoop, Fork, Seq]

# A continuation is the list of commands a thread still has to run.
# The empty tuple is the `done` continuation.
Continuation = tuple[Command, ...]

DONE: Continuation = ()


def to_continuation(c: Command) -> Continuation:
    return (c,)


def node_count(c: Command) -> int:
    match c:
        case Exit() | BusyLoop():
            return 1
        case Fork(body):
            return 1 + node_count(body)
        case Seq(first, second):
            return 1 + node_count(first) + node_count(second)
    raise TypeError(f"not a command: {c!r}")


class ParseError(ValueError):
    """Syntax error with 1-based line/column position."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


_KEYWORDS = ("exit", "loop", "skip", "fork", "done")


@dataclass(frozen=True)
class _Token:
    kind: str  # "word", ";", "(", ")", "eof"
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
        elif ch in " \t\r":
            i += 1
            col += 1
        elif ch == "#":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in ";()":
            tokens.append(_Token(ch, ch, line, col))
            i += 1
            col += 1
        elif ch.isalpha():
            start = i
            startcol = col
            while i < n and text[i].isalpha():
                i += 1
                col += 1
            word = text[start:i]
            if word not in _KEYWORDS:
                raise ParseError(f"unknown keyword {word!r}", line, startcol)
            tokens.append(_Token("word", word, line, startcol))
        else:
            raise ParseError(f"unexpected character {ch!r}", line, col)
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str, what: str) -> _Token:
        tok = self.next()
        if tok.kind != kind:
            raise ParseError(f"expected {what}, found {tok.text or 'end of input'!r}", tok.line, tok.col)
        return tok

    def command(self) -> Command:
        first = self.unit()
        if self.peek().kind == ";":
            self.next()
            rest = self.command()  # right-associative
            return Seq(first, rest)
        return first

    def unit(self) -> Command:
        tok = self.next()
        if tok.kind == "(":
            inner = self.command()
            self.expect(")", "')'")
            return inner
        if tok.kind == "word":
            if tok.text == "exit":
                return Exit()
            if tok.text == "loop":
                skip = self.next()
                if skip.kind != "word" or skip.text != "skip":
                    raise ParseError("expected 'skip' after 'loop'", skip.line, skip.col)
                return BusyLoop()
            if tok.text == "fork":
                self.expect("(", "'(' after 'fork'")
                body = self.command()
                self.expect(")", "')'")
                return Fork(body)
        raise ParseError(f"expected a command, found {tok.text or 'end of input'!r}", tok.line, tok.col)


def parse_command(text: str) -> Command:
    parser = _Parser(_tokenize(text))
    cmd = parser.command()
    tok = parser.peek()
    if tok.kind != "eof":
        raise ParseError(f"trailing input {tok.text!r}", tok.line, tok.col)
    return cmd


def parse_program(text: str) -> Command:
    """Parse a program file body (UTF-8, '#' line comments)."""
    return parse_command(text)


def pretty(c: Command) -> str:
    match c:
        case Exit():
            return "exit"
        case BusyLoop():
            return "loop skip"
        case Fork(body):
            return f"fork({pretty(body)})"
        case Seq(first, second):
            # left operand needs parens to survive right-associative reparsing
            left = f"({pretty(first)})" if isinstance(first, Seq) else pretty(first)
            return f"{left}; {pretty(second)}"
    raise TypeError(f"not a command: {c!r}")


def continuation_text(k: Continuation) -> str:
    """Render a continuation as '<cmd>; ...; done'.

    Items that are themselves sequences are parenthesized so the rendering
    splits back unambiguously at top-level semicolons.
    """
    parts = []
    for c in k:
        text = pretty(c)
        if isinstance(c, Seq):
            text = f"({text})"
        parts.append(text)
    parts.append("done")
    return "; ".join(parts)


def parse_continuation(text: str) -> Continuation:
    parser = _Parser(_tokenize(text))
    items: list[Command] = []
    while True:
        tok = parser.peek()
        if tok.kind == "word" and tok.text == "done":
            parser.next()
            end = parser.peek()
            if end.kind != "eof":
                raise ParseError(f"trailing input {end.text!r}", end.line, end.col)
            return tuple(items)
        items.append(parser.unit())
        parser.expect(";", "';'")


def enumerate_commands(max_nodes: int) -> Iterator[Command]:
    """All commands with at most max_nodes AST nodes, smallest first.

    Sizes 1..7 give 2, 2, 6, 14, 42, 122, 382 commands (570 in total).
    """
    by_size: list[list[Command]] = [[]]  # index 0 unused
    for size in range(1, max_nodes + 1):
        bucket: list[Command] = []
        if size == 1:
            bucket.extend((Exit(), BusyLoop()))
        else:
            bucket.extend(Fork(b) for b in by_size[size - 1])
            for left_size in range(1, size - 1):
                right_size = size - 1 - left_size
                for a in by_size[left_size]:
                    for b in by_size[right_size]:
                        bucket.append(Seq(a, b))
        by_size.append(bucket)
        yield from bucket
