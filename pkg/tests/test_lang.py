"""Syntax: parsing, printing, continuations, and the bounded enumeration."""

import random

import pytest

from busywait.lang import (
    BusyLoop,
    Exit,
    Fork,
    ParseError,
    Seq,
    continuation_text,
    enumerate_commands,
    node_count,
    parse_command,
    parse_continuation,
    parse_program,
    pretty,
    to_continuation,
)


def test_parse_atoms():
    assert parse_command("exit") == Exit()
    assert parse_command("loop skip") == BusyLoop()
    assert parse_command("fork(exit)") == Fork(Exit())


def test_seq_is_right_associative():
    c = parse_command("exit; loop skip; exit")
    assert c == Seq(Exit(), Seq(BusyLoop(), Exit()))


def test_parens_override_associativity():
    c = parse_command("(exit; loop skip); exit")
    assert c == Seq(Seq(Exit(), BusyLoop()), Exit())


def test_fork_takes_a_full_command():
    c = parse_command("fork(exit; loop skip)")
    assert c == Fork(Seq(Exit(), BusyLoop()))


def test_comments_and_blank_lines_ignored():
    text = "# spawn a promise\nfork(exit);\n\n# then wait\nloop skip\n"
    assert parse_program(text) == Seq(Fork(Exit()), BusyLoop())


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as err:
        parse_command("fork(exit")
    assert err.value.line == 1
    assert err.value.col >= 9


def test_unknown_keyword_rejected():
    with pytest.raises(ParseError):
        parse_command("spin")
    with pytest.raises(ParseError):
        parse_command("loop forever")


def test_trailing_input_rejected():
    with pytest.raises(ParseError):
        parse_command("exit exit")
    with pytest.raises(ParseError):
        parse_command("exit)")


def test_empty_program_rejected():
    with pytest.raises(ParseError):
        parse_command("   # nothing here\n")


def test_pretty_parenthesizes_left_nested_seq():
    c = Seq(Seq(Exit(), BusyLoop()), Exit())
    assert pretty(c) == "(exit; loop skip); exit"
    assert parse_command(pretty(c)) == c


def test_node_count():
    assert node_count(Exit()) == 1
    assert node_count(Seq(Fork(Exit()), BusyLoop())) == 4


def test_to_continuation():
    assert to_continuation(Exit()) == (Exit(),)


def test_enumeration_counts_by_size():
    by_size = {}
    for c in enumerate_commands(7):
        by_size.setdefault(node_count(c), []).append(c)
    assert [len(by_size[n]) for n in range(1, 8)] == [2, 2, 6, 14, 42, 122, 382]


def test_enumeration_is_exhaustive_and_distinct():
    programs = list(enumerate_commands(7))
    assert len(programs) == 570
    assert len(set(programs)) == 570
    assert all(node_count(c) <= 7 for c in programs)


def test_enumeration_roundtrips_through_text():
    for c in enumerate_commands(6):
        assert parse_command(pretty(c)) == c


def test_continuation_text_marks_done():
    assert continuation_text(()) == "done"
    assert continuation_text((Exit(),)) == "exit; done"


def test_continuation_text_parenthesizes_seq_items():
    k = (Seq(Exit(), BusyLoop()), Exit())
    text = continuation_text(k)
    assert text == "(exit; loop skip); exit; done"
    assert parse_continuation(text) == k


def test_continuation_roundtrip_random():
    rng = random.Random(7)
    pool = list(enumerate_commands(5))
    for _ in range(200):
        k = tuple(rng.choice(pool) for _ in range(rng.randrange(4)))
        assert parse_continuation(continuation_text(k)) == k


def test_parse_continuation_rejects_garbage():
    with pytest.raises(ParseError):
        parse_continuation("exit")
    with pytest.raises(ParseError):
        parse_continuation("done; exit")
