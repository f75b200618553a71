"""Proof-directed runs, ghost steps, trace replay, and erasure."""

import random

import pytest

from conftest import build_worked_tree

from busywait.annotated import (
    AnnotatedPool,
    AnnotatedStep,
    AnnotatedThread,
    AnnotatedTrace,
    TraceError,
    TraceFormatError,
    annotated_run,
    annotated_trace_from_json,
    annotated_trace_to_json,
    check_annotated_trace,
    compile_plan,
    erase_trace,
    is_valid_annotated_trace,
)
from busywait.lang import enumerate_commands, parse_command, parse_continuation
from busywait.proof import (
    FRAME_RULE,
    FrameSide,
    ProofTree,
    Triple,
    synthesize,
)
from busywait.resources import Credit, Obs, Star
from busywait.semantics import (
    FuelExhausted,
    RoundRobin,
    Scripted,
    SeededRandom,
    Terminated,
    UnknownThreadError,
)


def scripted_worked_trace():
    """Worked example driven so the busy loop spins once before the exit."""
    tree = build_worked_tree()
    outcome, trace = annotated_run(tree, Scripted((0, 0, 0, 0, 1)))
    assert isinstance(outcome, Terminated)
    return trace


def test_round_robin_directed_run(worked_tree):
    outcome, trace = annotated_run(worked_tree, RoundRobin())
    assert outcome == Terminated(4)
    assert [(s.tid, s.rule) for s in trace.steps] == [
        (0, "gs-intro"),
        (0, "ga-st-seq"),
        (0, "ga-st-fork"),
        (1, "ga-tp-exit"),
    ]
    check_annotated_trace(trace)


def test_fork_step_records_the_split(worked_tree):
    _, trace = annotated_run(worked_tree, RoundRobin())
    fork = next(s for s in trace.steps if s.rule == "ga-st-fork")
    assert (fork.child_obs, fork.child_credits) == (1, 0)
    # after the fork the child holds the obligation, the parent the credit
    after = trace.pools[2]
    assert after.get(1) == AnnotatedThread((parse_command("exit"),), 1, 0)
    assert after.get(0).chunk == 0 and after.get(0).credits == 1


def test_scripted_run_includes_a_loop_step():
    trace = scripted_worked_trace()
    assert [s.rule for s in trace.steps] == [
        "gs-intro",
        "ga-st-seq",
        "ga-st-fork",
        "ga-st-loop",
        "ga-tp-exit",
    ]
    check_annotated_trace(trace)


def test_erasure_recovers_the_plain_golden_trace(worked_tree):
    _, trace = annotated_run(worked_tree, RoundRobin())
    plain = erase_trace(trace)
    assert [(s.tid, s.rule) for s in plain] == [
        (0, "st-seq"),
        (0, "st-fork"),
        (1, "tp-exit"),
    ]
    # ghost steps vanish and pools forget their resources
    assert plain[0].pool_before.as_dict() == {
        0: parse_continuation("(fork(exit); loop skip); done")
    }


def test_replay_rejects_deleted_intro_at_the_fork():
    """Dropping the opening gs-intro starves the fork split two steps before
    the loop ever runs: the fork asks for obs(1) from a thread holding obs(0).
    """
    trace = scripted_worked_trace()
    assert trace.steps[0].rule == "gs-intro"
    broken = AnnotatedTrace(trace.initial, trace.steps[1:], ())
    with pytest.raises(TraceError) as err:
        check_annotated_trace(broken)
    assert err.value.step_index == 1
    assert broken.steps[err.value.step_index].rule == "ga-st-fork"
    assert "obs(1)" in err.value.reason and "obs(0)" in err.value.reason


def test_replay_rejects_wrong_recorded_pool():
    trace = scripted_worked_trace()
    tampered_pools = list(trace.pools)
    pool = tampered_pools[1].as_dict()
    pool[0] = AnnotatedThread(pool[0].cont, pool[0].chunk, pool[0].credits + 1)
    tampered_pools[1] = AnnotatedPool.from_dict(pool)
    bad = AnnotatedTrace(trace.initial, trace.steps, tuple(tampered_pools))
    with pytest.raises(TraceError) as err:
        check_annotated_trace(bad)
    assert err.value.step_index == 1
    assert "recorded pool" in err.value.reason


def _single_thread_trace(cont_text, chunk, credits, steps):
    initial = AnnotatedPool.from_dict(
        {0: AnnotatedThread(parse_continuation(cont_text), chunk, credits)}
    )
    return AnnotatedTrace(initial, tuple(steps), ())


def test_replay_loop_without_credit_rejected():
    bad = _single_thread_trace(
        "loop skip; done", 0, 0, [AnnotatedStep("real", 0, "ga-st-loop")]
    )
    with pytest.raises(TraceError) as err:
        check_annotated_trace(bad)
    assert "credit" in err.value.reason


def test_replay_loop_with_obligation_rejected():
    bad = _single_thread_trace(
        "loop skip; done", 1, 1, [AnnotatedStep("real", 0, "ga-st-loop")]
    )
    with pytest.raises(TraceError) as err:
        check_annotated_trace(bad)
    assert "obs(1)" in err.value.reason


def test_replay_done_with_obligation_rejected():
    bad = _single_thread_trace("done", 1, 0, [AnnotatedStep("real", 0, "ga-tp-done")])
    with pytest.raises(TraceError):
        check_annotated_trace(bad)
    ok = _single_thread_trace("done", 0, 3, [AnnotatedStep("real", 0, "ga-tp-done")])
    check_annotated_trace(ok)  # leftover credits are allowed


def test_replay_cancel_needs_both_resources():
    bad = _single_thread_trace("exit; done", 0, 1, [AnnotatedStep("ghost", 0, "gs-cancel")])
    with pytest.raises(TraceError):
        check_annotated_trace(bad)
    ok = _single_thread_trace("exit; done", 1, 1, [AnnotatedStep("ghost", 0, "gs-cancel")])
    check_annotated_trace(ok)


def test_replay_fork_overdraw_rejected():
    bad = _single_thread_trace(
        "fork(exit); done",
        0,
        0,
        [AnnotatedStep("real", 0, "ga-st-fork", child_obs=0, child_credits=1)],
    )
    assert not is_valid_annotated_trace(bad)


def test_replay_rule_must_match_head_shape():
    bad = _single_thread_trace("exit; done", 0, 0, [AnnotatedStep("real", 0, "ga-st-seq")])
    with pytest.raises(TraceError):
        check_annotated_trace(bad)
    bad = _single_thread_trace("exit; done", 0, 0, [AnnotatedStep("real", 5, "ga-tp-exit")])
    with pytest.raises(TraceError) as err:
        check_annotated_trace(bad)
    assert "not in the pool" in err.value.reason


def test_directed_runs_never_stick_on_the_corpus():
    """Every provable program runs to completion under round robin and keeps
    replaying cleanly; random schedules may run out of fuel but never stick."""
    rng = random.Random(2)
    provable = [c for c in enumerate_commands(6) if synthesize(c) is not None]
    for c in provable:
        tree = synthesize(c)
        outcome, trace = annotated_run(tree, RoundRobin(), fuel=10_000, check=False)
        assert isinstance(outcome, Terminated)
        check_annotated_trace(trace)
    for c in rng.sample(provable, 30):
        tree = synthesize(c)
        outcome, trace = annotated_run(tree, SeededRandom(rng.randrange(100)), fuel=200, check=False)
        check_annotated_trace(trace)  # partial traces still replay


def test_fuel_exhaustion_returns_the_partial_trace(worked_tree):
    outcome, trace = annotated_run(worked_tree, Scripted((0, 0)), fuel=100)
    assert outcome == FuelExhausted(2)
    assert len(trace.steps) == 2
    check_annotated_trace(trace)


def test_scripted_unknown_thread_raises(worked_tree):
    with pytest.raises(UnknownThreadError):
        annotated_run(worked_tree, Scripted((4,)))


def test_initial_precondition_shape_is_enforced(worked_tree):
    framed = ProofTree(
        FRAME_RULE,
        Triple(
            Star(Obs(0), Credit()),
            worked_tree.conclusion.command,
            Star(Obs(0), Credit()),
        ),
        (worked_tree,),
        FrameSide(Credit()),
    )
    with pytest.raises(ValueError) as err:
        annotated_run(framed, RoundRobin())
    assert "lone obs atom" in str(err.value)


def test_invalid_proof_is_rejected_before_running(worked_tree):
    import dataclasses

    bad = dataclasses.replace(worked_tree, rule="frame")
    from busywait.proof import ProofError

    with pytest.raises(ProofError):
        annotated_run(bad, RoundRobin())


def test_compile_plan_spreads_ghosts(worked_tree):
    plan = compile_plan(worked_tree)
    assert plan.kind == "seq"
    assert plan.pre_ghost == ("intro",)
    assert plan.post_ghost == ()
    assert plan.first.kind == "fork"
    assert plan.first.split == (1, 0)
    assert plan.second.kind == "loop"


def test_seq_post_ghosts_fold_into_the_second_leg():
    # synthesized proofs wrap ended lines in a view shift around the seq; the
    # run must still replay, with the fold never firing on the dead branch
    tree = synthesize(parse_command("exit; loop skip"))
    outcome, trace = annotated_run(tree, RoundRobin())
    assert isinstance(outcome, Terminated)
    assert [s.rule for s in trace.steps] == ["ga-st-seq", "ga-tp-exit"]
    check_annotated_trace(trace)


def test_two_waiters_route_credits_to_both_loops():
    tree = synthesize(parse_command("fork(loop skip); fork(exit); loop skip"))
    outcome, trace = annotated_run(tree, RoundRobin(), fuel=1000)
    assert isinstance(outcome, Terminated)
    check_annotated_trace(trace)
    forks = [s for s in trace.steps if s.rule == "ga-st-fork"]
    assert len(forks) == 2
    # first fork hands its loop a credit, second hands the exit the obligations
    assert (forks[0].child_obs, forks[0].child_credits) == (0, 1)
    assert forks[1].child_obs == 2 and forks[1].child_credits == 0


def test_json_roundtrip():
    trace = scripted_worked_trace()
    doc = annotated_trace_to_json(trace)
    back = annotated_trace_from_json(doc)
    assert back == trace
    assert annotated_trace_to_json(back) == doc


def test_json_rejects_malformed():
    with pytest.raises(TraceFormatError):
        annotated_trace_from_json([])
    with pytest.raises(TraceFormatError):
        annotated_trace_from_json({"initial": {}, "steps": [{"kind": "real"}]})
    with pytest.raises(TraceFormatError):
        annotated_trace_from_json(
            {"initial": {"0": {"cont": "done", "chunk": -1, "credits": 0}}, "steps": []}
        )
    with pytest.raises(TraceFormatError):
        annotated_trace_from_json(
            {
                "initial": {"0": {"cont": "exit; done", "chunk": 0, "credits": 0}},
                "steps": [{"step": 0, "kind": "ghost", "tid": 0, "rule": "ga-tp-exit", "pool": {}}],
            }
        )
    # fork step without its payload
    with pytest.raises(TraceFormatError):
        annotated_trace_from_json(
            {
                "initial": {"0": {"cont": "fork(exit); done", "chunk": 0, "credits": 0}},
                "steps": [{"step": 0, "kind": "real", "tid": 0, "rule": "ga-st-fork", "pool": {}}],
            }
        )
