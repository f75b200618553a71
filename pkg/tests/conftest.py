"""Shared fixtures: the worked busy-wait example and its hand-written proof."""

import pytest

from busywait.lang import BusyLoop, Exit, Fork, Seq, parse_command
from busywait.proof import (
    EXIT_RULE,
    FORK_RULE,
    LOOP_RULE,
    SEQ_RULE,
    VIEW_SHIFT_RULE,
    ForkSide,
    ProofTree,
    ShiftSide,
    Triple,
)
from busywait.resources import (
    Bottom,
    Credit,
    IntroStep,
    Obs,
    Star,
    ViewShiftChain,
    WeakenStep,
)


@pytest.fixture
def worked_program():
    return parse_command("fork(exit); loop skip")


def build_worked_tree() -> ProofTree:
    """The canonical derivation of {obs(0)} fork(exit); loop skip {obs(0)}.

    Six of its seven nodes are the proof's working steps: introduce an
    obligation/credit pair, fork it off, the exit axiom, the loop axiom, and
    one weakening out of false per branch. The seq node just glues the two
    branches together.
    """
    obs1_credit = Star(Obs(1), Credit())
    obs0_credit = Star(Obs(0), Credit())
    false_to_done = ViewShiftChain(Bottom(), (WeakenStep(Obs(0)),), Obs(0))

    exit_axiom = ProofTree(EXIT_RULE, Triple(Obs(1), Exit(), Bottom()))
    exit_done = ProofTree(
        VIEW_SHIFT_RULE,
        Triple(Obs(1), Exit(), Obs(0)),
        (exit_axiom,),
        ShiftSide(None, false_to_done),
    )
    fork_node = ProofTree(
        FORK_RULE,
        Triple(obs1_credit, Fork(Exit()), obs0_credit),
        (exit_done,),
        ForkSide(1, 0),
    )
    loop_axiom = ProofTree(LOOP_RULE, Triple(obs0_credit, BusyLoop(), Bottom()))
    loop_done = ProofTree(
        VIEW_SHIFT_RULE,
        Triple(obs0_credit, BusyLoop(), Obs(0)),
        (loop_axiom,),
        ShiftSide(None, false_to_done),
    )
    body = Seq(Fork(Exit()), BusyLoop())
    seq_node = ProofTree(
        SEQ_RULE, Triple(obs1_credit, body, Obs(0)), (fork_node, loop_done)
    )
    intro = ViewShiftChain(Obs(0), (IntroStep(0),), obs1_credit)
    return ProofTree(
        VIEW_SHIFT_RULE,
        Triple(Obs(0), body, Obs(0)),
        (seq_node,),
        ShiftSide(intro, None),
    )


@pytest.fixture
def worked_tree():
    return build_worked_tree()


def tree_nodes(t: ProofTree):
    """All nodes of a proof tree, root first."""
    out = [t]
    for p in t.premises:
        out.extend(tree_nodes(p))
    return out
