import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planshaping import strips
from planshaping.strips import Atom

MODELS = ("household", "mario", "minecraft", "doorkey")


def names(plan):
    return [str(a) for a in plan]


@pytest.fixture(scope="module")
def problems():
    return {m: strips.load_bundled(m) for m in MODELS}


def test_mario_domain_schemas(problems):
    schemas = [s.name for s in problems["mario"].domain.actions]
    assert schemas == ["go_down_the_tube", "pickup_key", "pickup_hidden_key", "go_up_the_ladder", "unlock_door"]


def test_minecraft_get_wood_schema(problems):
    get_wood = problems["minecraft"].domain.schema("get_wood")
    assert get_wood.params == (("?w", "wood"),)
    assert tuple(get_wood.pre_neg) == (Atom("wood-picked", ("?w",)),)
    assert not get_wood.pre_pos


def test_or_connective_rejected_with_position():
    with pytest.raises(strips.PddlError, match="unsupported connective `or`") as info:
        strips.parse_domain("(define (domain x) (:action a :precondition (or p q)))")
    assert info.value.line == 1


@pytest.mark.parametrize(
    "text, message",
    [
        ("(define (domain x) (:requirements :adl))", "requirement"),
        ("(define (domain x) (:predicates (p)) (:action a :parameters () :precondition (q) :effect (p)))", "q"),
        ("(define (domain x) (:predicates (p ?a)) (:action a :parameters () :precondition (p) :effect (p)))", "arity"),
        ("(define (domain x) (:predicates (p ?a - thing)))", "thing"),
        ("(define (domain x) (:predicates (p)) #)", "line 1"),
    ],
)
def test_domain_errors(text, message):
    with pytest.raises(strips.PddlError, match=message):
        strips.parse_domain(text)


def test_minecraft_problem(problems):
    p = problems["minecraft"]
    assert p.objects == (("wood0", "wood"), ("wood1", "wood"))
    assert p.init == frozenset({Atom("at-starting-location")})
    assert p.goal == frozenset({Atom("ladder_made")})


def test_mario_problem(problems):
    p = problems["mario"]
    assert p.init == frozenset({Atom("at-upper-platform")})
    assert p.goal == frozenset({Atom("door-open")})


def test_empty_goal_rejected(problems):
    text = "(define (problem p) (:domain Mario) (:init (at-upper-platform)) (:goal (and)))"
    with pytest.raises(strips.PddlError, match="empty goal"):
        strips.parse_problem(text, problems["mario"].domain)


def test_problem_with_unknown_predicate_in_goal(problems):
    text = "(define (problem p) (:domain Mario) (:init (at-upper-platform)) (:goal (and (flying))))"
    with pytest.raises(strips.PddlError, match="flying"):
        strips.parse_problem(text, problems["mario"].domain)


def test_problem_with_undeclared_type(problems):
    text = "(define (problem p) (:domain minecraft) (:objects w - stone) (:init) (:goal (and (ladder_made))))"
    with pytest.raises(strips.PddlError, match="stone"):
        strips.parse_problem(text, problems["minecraft"].domain)


def test_ground_counts(problems):
    # four unary schemas over two woods plus the parameterless make_ladder
    assert len(problems["minecraft"].ground_actions()) == 9
    assert len(problems["mario"].ground_actions()) == 5
    assert len(problems["household"].ground_actions()) == 4


def test_ground_order_is_schema_then_binding(problems):
    assert names(problems["minecraft"].ground_actions())[:4] == [
        "(get_wood wood0)",
        "(get_wood wood1)",
        "(get_processed_wood wood0)",
        "(get_processed_wood wood1)",
    ]


def test_domain_without_schemas_grounds_to_nothing():
    d = strips.parse_domain("(define (domain x) (:predicates (p)))")
    assert strips.ground(d, ()) == []


def test_grounding_count_matches_type_populations(problems):
    for p in problems.values():
        pops = {}
        for obj, typ in p.objects:
            for t in p.domain.declared_types():
                if p.domain.is_subtype(typ, t):
                    pops[t] = pops.get(t, 0) + 1
        expected = 0
        for schema in p.domain.actions:
            n = 1
            for _, t in schema.params:
                n *= pops.get(t, 0)
            expected += n
        assert len(p.ground_actions()) == expected


def test_applicable_examples(problems):
    mario = problems["mario"].ground_actions()
    house = problems["household"].ground_actions()
    mc = problems["minecraft"].ground_actions()
    pickup = strips.find_action(mario, "pickup_key")
    assert not strips.applicable(frozenset({Atom("at-upper-platform")}), pickup)
    assert not strips.applicable(frozenset({Atom("at-starting-location")}), strips.find_action(house, "open_door"))
    assert strips.applicable(frozenset(), strips.find_action(mc, "get_wood", ["wood0"]))


def test_apply_examples(problems):
    mario = problems["mario"].ground_actions()
    house = problems["household"].ground_actions()
    s = strips.apply(frozenset({Atom("at-upper-platform")}), strips.find_action(mario, "go_down_the_tube"))
    assert s == {Atom("at-upper-platform"), Atom("at-bottom")}
    s = strips.apply(frozenset({Atom("key-picked"), Atom("holding-key")}), strips.find_action(house, "open_door"))
    assert s == {Atom("door-opened")}


def test_apply_rejects_inapplicable(problems):
    house = problems["household"].ground_actions()
    with pytest.raises(strips.InapplicableActionError):
        strips.apply(frozenset(), strips.find_action(house, "goal"))


def test_identity_effects_leave_state_alone():
    a = strips.GroundAction("noop", (), frozenset(), frozenset(), frozenset(), frozenset())
    s = frozenset({Atom("p")})
    assert strips.apply(strips.apply(s, a), a) == s


def test_valid_actions_examples(problems):
    mario = problems["mario"]
    ok, bad = strips.valid_actions(mario.init, mario.ground_actions())
    assert names(ok) == ["(go_down_the_tube)"]
    assert len(bad) == 4
    house = problems["household"]
    ok, bad = strips.valid_actions(house.init, house.ground_actions())
    assert "(get_key)" in names(ok)
    assert {"(open_door)", "(is_charged)", "(goal)"} <= set(names(bad))


def test_valid_actions_empty_infeasible_when_everything_holds():
    d = strips.parse_domain(
        "(define (domain x) (:predicates (p) (q))"
        " (:action a :parameters () :precondition (and (p)) :effect (and (q)))"
        " (:action b :parameters () :precondition (and (q)) :effect (and (p))))"
    )
    acts = strips.ground(d, ())
    ok, bad = strips.valid_actions(frozenset({Atom("p"), Atom("q")}), acts)
    assert len(ok) == 2 and bad == []


def test_validate_mario_plans(problems):
    mario = problems["mario"]
    acts = mario.ground_actions()
    plan = [strips.find_action(acts, n) for n in
            ("go_down_the_tube", "pickup_key", "pickup_hidden_key", "go_up_the_ladder", "unlock_door")]
    assert strips.validate_plan(mario, plan).goal_reached
    short = strips.validate_plan(mario, plan[:-1])
    assert not short.goal_reached and short.valid_prefix_len == 4
    assert short.failure.reason == "goal"
    empty = strips.validate_plan(mario, [])
    assert empty.valid_prefix_len == 0 and not empty.goal_reached


def test_validate_reports_failing_literal(problems):
    house = problems["household"]
    acts = house.ground_actions()
    r = strips.validate_plan(house, [strips.find_action(acts, "open_door")])
    assert r.valid_prefix_len == 0
    assert r.failure.step == 0 and r.failure.literal == "(holding-key)"


def test_bfs_plans(problems):
    assert names(strips.bfs_plan(problems["household"])) == ["(get_key)", "(open_door)", "(is_charged)", "(goal)"]
    mario = strips.bfs_plan(problems["mario"])
    assert len(mario) == 5 and mario[-1].name == "unlock_door"
    # two woods are needed: one becomes the plank, the other the stick
    assert len(strips.bfs_plan(problems["minecraft"])) == 7


def test_bfs_goal_in_init_gives_empty_plan(problems):
    mario = problems["mario"]
    assert strips.bfs_plan(mario, start=mario.init | mario.goal) == []


def test_bfs_unreachable_goal():
    d = strips.parse_domain("(define (domain x) (:predicates (p) (q)))")
    p = strips.parse_problem("(define (problem y) (:domain x) (:init (p)) (:goal (and (q))))", d)
    with pytest.raises(strips.NoPlanError):
        strips.bfs_plan(p)


def test_bfs_plan_is_minimum_length(problems):
    # compare with an exhaustive search over all action sequences up to the found length
    for name in ("household", "mario", "doorkey"):
        p = problems[name]
        acts = p.ground_actions()
        best = len(strips.bfs_plan(p))
        for k in range(best):
            for seq in itertools.product(acts, repeat=k):
                assert not strips.validate_plan(p, list(seq)).goal_reached


@pytest.mark.parametrize("name", MODELS)
def test_bfs_plan_validates(problems, name):
    p = problems[name]
    assert strips.validate_plan(p, strips.bfs_plan(p)).goal_reached


@pytest.mark.parametrize("name", MODELS)
def test_print_parse_fixpoint(problems, name):
    p = problems[name]
    d2 = strips.parse_domain(strips.format_domain(p.domain))
    assert d2 == p.domain
    p2 = strips.parse_problem(strips.format_problem(p), d2)
    assert p2 == p
    assert strips.format_domain(d2) == strips.format_domain(p.domain)


def test_atom_round_trip():
    a = Atom("wood-picked", ("wood0",))
    assert str(a) == "(wood-picked wood0)"
    assert Atom.parse(str(a)) == a


# --- properties -------------------------------------------------------------


def _state_strategy(problem):
    preds = sorted({x for a in problem.ground_actions() for x in a.pre_pos | a.pre_neg | a.add | a.delete}
                   | problem.init | problem.goal)
    return st.frozensets(st.sampled_from(preds))


@settings(max_examples=200, deadline=None)
@given(data=st.data(), name=st.sampled_from(("household", "mario", "minecraft")))
def test_applicable_xor_infeasible(data, name):
    p = strips.load_bundled(name)
    state = data.draw(_state_strategy(p))
    ok, bad = strips.valid_actions(state, p.ground_actions())
    for a in p.ground_actions():
        assert strips.applicable(state, a) != (a in bad)
        assert (a in ok) != (a in bad)


@settings(max_examples=200, deadline=None)
@given(data=st.data(), name=st.sampled_from(("household", "mario", "minecraft")))
def test_apply_matches_naive_sets(data, name):
    p = strips.load_bundled(name)
    state = data.draw(_state_strategy(p))
    for a in p.ground_actions():
        if not strips.applicable(state, a):
            continue
        naive = set(state)
        for f in a.delete:
            naive.discard(f)
        for f in a.add:
            naive.add(f)
        out = strips.apply(state, a)
        assert out == naive
        assert out <= state | a.add
