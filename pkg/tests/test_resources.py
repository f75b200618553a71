"""Resource bundles, assertions, canonical forms, and view shift chains."""

import random

import pytest

from busywait.resources import (
    AssertionParseError,
    Bottom,
    CancelStep,
    CanonicalAssertion,
    Credit,
    IntroStep,
    Obs,
    ResourceBundle,
    Star,
    Top,
    ViewShiftChain,
    ViewShiftError,
    WeakenStep,
    assertions_equivalent,
    bundle_union,
    canonicalize,
    check_view_shift,
    entails,
    is_valid_view_shift,
    obs_with_credits,
    parse_assertion,
    pretty_assertion,
    satisfies,
    search_view_shift,
)


def test_bundle_sorts_and_validates():
    r = ResourceBundle((3, 1, 1), 2)
    assert r.chunks == (1, 1, 3)
    with pytest.raises(ValueError):
        ResourceBundle((-1,), 0)
    with pytest.raises(ValueError):
        ResourceBundle((0,), -1)


def test_bundle_completeness_is_one_chunk():
    assert ResourceBundle((0,), 5).is_complete()
    assert not ResourceBundle((), 0).is_complete()
    assert not ResourceBundle((0, 0), 0).is_complete()


def test_bundle_union():
    assert bundle_union(ResourceBundle((1,), 2), ResourceBundle((0,), 1)) == ResourceBundle(
        (0, 1), 3
    )


def test_satisfies_atoms():
    r = ResourceBundle((0, 2), 1)
    assert satisfies(r, Top())
    assert not satisfies(r, Bottom())
    assert satisfies(r, Obs(2))
    assert not satisfies(r, Obs(1))
    assert satisfies(r, Credit())
    assert not satisfies(ResourceBundle((0,), 0), Credit())


def test_satisfies_star_splits_chunks():
    # two obs atoms need two separate chunks
    assert satisfies(ResourceBundle((1, 1), 0), Star(Obs(1), Obs(1)))
    assert not satisfies(ResourceBundle((1,), 0), Star(Obs(1), Obs(1)))


def test_satisfies_star_splits_credits():
    assert satisfies(ResourceBundle((), 2), Star(Credit(), Credit()))
    assert not satisfies(ResourceBundle((), 1), Star(Credit(), Credit()))


def test_canonicalize_flattens_stars():
    a = Star(Obs(1), Star(Credit(), Star(Obs(0), Credit())))
    assert canonicalize(a) == CanonicalAssertion(False, (0, 1), 2)
    assert canonicalize(Star(Top(), Bottom())).false_flag


def test_canonical_balance():
    assert canonicalize(obs_with_credits(3, 1)).balance() == 2
    assert canonicalize(Obs(0)).balance() == 0


def test_satisfies_matches_canonical_on_random_assertions():
    """The split search and the canonical multiset test agree everywhere."""
    rng = random.Random(5)
    atoms = [Top(), Bottom(), Credit(), Obs(0), Obs(1), Obs(2)]

    def rand_assertion(depth):
        if depth == 0 or rng.random() < 0.4:
            return rng.choice(atoms)
        return Star(rand_assertion(depth - 1), rand_assertion(depth - 1))

    for _ in range(300):
        a = rand_assertion(3)
        chunks = tuple(rng.randrange(3) for _ in range(rng.randrange(4)))
        r = ResourceBundle(chunks, rng.randrange(4))
        assert satisfies(r, a) == canonicalize(a).holds_for(r)


def test_entails_examples():
    assert entails(Star(Obs(1), Credit()), Obs(1))
    assert entails(Bottom(), Obs(7))
    assert not entails(Obs(1), Star(Obs(1), Credit()))
    assert not entails(Top(), Bottom())
    assert not entails(Obs(1), Obs(2))


def test_equivalence_ignores_star_order():
    assert assertions_equivalent(Star(Obs(1), Credit()), Star(Credit(), Obs(1)))
    assert assertions_equivalent(Bottom(), Star(Bottom(), Obs(3)))
    assert not assertions_equivalent(Obs(0), Top())


def test_intro_chain_checks():
    chain = ViewShiftChain(Obs(0), (IntroStep(0),), Star(Obs(1), Credit()))
    check_view_shift(chain)


def test_cancel_chain_checks():
    chain = ViewShiftChain(Star(Obs(2), Credit()), (CancelStep(0),), Obs(1))
    check_view_shift(chain)


def test_cancel_requires_a_credit():
    chain = ViewShiftChain(Obs(2), (CancelStep(0),), Obs(1))
    with pytest.raises(ViewShiftError) as err:
        check_view_shift(chain)
    assert err.value.step_index == 0


def test_cancel_requires_an_obligation():
    chain = ViewShiftChain(Obs(0), (CancelStep(0),), Obs(0))
    assert not is_valid_view_shift(chain)


def test_weaken_preserves_the_obligation_credit_balance():
    # dropping obs(1) alone shifts the balance and is rejected
    unbalanced = ViewShiftChain(Star(Obs(1), Obs(2)), (WeakenStep(Obs(2)),), Obs(2))
    with pytest.raises(ViewShiftError):
        check_view_shift(unbalanced)
    # dropping obs(1) together with one credit nets to zero and is fine
    balanced = ViewShiftChain(
        Star(Obs(1), Star(Obs(2), Credit())), (WeakenStep(Obs(2)),), Obs(2)
    )
    check_view_shift(balanced)


def test_weaken_from_false_reaches_anything():
    chain = ViewShiftChain(Bottom(), (WeakenStep(Obs(0)),), Obs(0))
    check_view_shift(chain)


def test_weaken_rejects_strengthening():
    chain = ViewShiftChain(Obs(0), (WeakenStep(Star(Obs(0), Credit())),), Star(Obs(0), Credit()))
    assert not is_valid_view_shift(chain)


def test_chain_must_land_on_its_target():
    chain = ViewShiftChain(Obs(0), (IntroStep(0),), Obs(0))
    with pytest.raises(ViewShiftError):
        check_view_shift(chain)


def test_ghost_ops_rejected_on_false_forms():
    chain = ViewShiftChain(Bottom(), (IntroStep(0),), Star(Bottom(), Star(Obs(1), Credit())))
    with pytest.raises(ViewShiftError) as err:
        check_view_shift(chain)
    assert "false" in err.value.reason


def test_search_finds_intro_chain():
    chain = search_view_shift(Obs(0), Star(Obs(1), Credit()), 2)
    assert chain is not None
    assert [type(s).__name__ for s in chain.steps] == ["IntroStep"]
    check_view_shift(chain)


def test_search_reflexive_is_empty_or_trivial():
    chain = search_view_shift(Obs(0), Obs(0), 1)
    assert chain is not None
    assert len(chain.steps) == 0


def test_search_cannot_turn_obligations_into_credit():
    # an intro then weaken would reach credit but break conservation
    assert search_view_shift(Obs(0), Credit(), 4) is None


def test_search_results_always_check():
    rng = random.Random(9)
    atoms = [Credit(), Obs(0), Obs(1)]
    for _ in range(60):
        p = Star(rng.choice(atoms), rng.choice(atoms))
        q = Star(rng.choice(atoms), rng.choice(atoms))
        chain = search_view_shift(p, q, 3)
        if chain is not None:
            check_view_shift(chain)
            assert assertions_equivalent(chain.source, p)
            assert assertions_equivalent(chain.target, q)


def test_assertion_text_roundtrip():
    for text in (
        "obs(0)",
        "credit",
        "true",
        "false",
        "obs(1) * credit",
        "obs(2) * credit * credit",
        "(obs(0) * credit) * obs(1)",
    ):
        a = parse_assertion(text)
        assert assertions_equivalent(parse_assertion(pretty_assertion(a)), a)


def test_assertion_parse_errors():
    for text in ("obs()", "obs(-1)", "credit *", "* obs(0)", "obs(0) obs(1)", ""):
        with pytest.raises(AssertionParseError):
            parse_assertion(text)


def test_obs_with_credits_shape():
    assert pretty_assertion(obs_with_credits(2, 3)) == "obs(2) * credit * credit * credit"
    assert pretty_assertion(obs_with_credits(1, 0)) == "obs(1)"
    assert canonicalize(obs_with_credits(4, 2)) == CanonicalAssertion(False, (4,), 2)
