import pytest

from tooluse.actions import apply, enumerate_applicable
from tooluse.domains import instantiate_goal, sample_scene
from tooluse.oracle import (
    BudgetExhausted, augment, build_corpus, corpus_digest, load_corpus, plan,
    plan_variants, rank_optimality, save_corpus, tool_usage_ranking, validate_trace,
)
from tooluse.world import goal_check, state_to_json


def bfs_optimal_length(state, goal, horizon=4):
    """Independent exhaustive breadth-first search over raw applicable actions."""
    if goal_check(state, goal):
        return 0
    frontier = [(state, 0)]
    seen = {state_to_json(state)}
    while frontier:
        nxt = []
        for s, depth in frontier:
            if depth >= horizon:
                continue
            for action in enumerate_applicable(s):
                out = apply(s, action)
                s2 = out.next_state
                if goal_check(s2, goal):
                    return depth + 1
                key = state_to_json(s2)
                if key not in seen:
                    seen.add(key)
                    nxt.append((s2, depth + 1))
        frontier = nxt
    return None


def test_satisfied_goal_gives_empty_plan(mini_home):
    state = sample_scene(mini_home, 0)
    goal = instantiate_goal(mini_home.template("clear_dirt"), state)
    # remove the dirt by cleaning through the simulator would be long; instead
    # check the trivial case directly on a goal that already holds
    from tooluse.world import GoalSpec, GoalConstraint
    trivial = GoalSpec((GoalConstraint("Near", state.robot, state.robot + 1),))
    if goal_check(state, trivial):
        assert plan(state, trivial) == []


def test_plan_replays_to_success(mini_home):
    for seed in (0, 4, 9):
        state = sample_scene(mini_home, seed)
        goal = instantiate_goal(mini_home.template("store_milk"), state)
        actions = plan(state, goal, budget=80000)
        s = state
        for a in actions:
            out = apply(s, a)
            assert out.applied, (a, out.reason)
            s = out.next_state
        assert goal_check(s, goal)
        # closed fridge means an open step precedes the placeInside
        names = [a.interaction for a in actions]
        if "placeInside" in names:
            fridge = state.instances_of("fridge")[0]
            if not state.state_of(fridge.id, "open"):
                assert "open" in names and names.index("open") < names.index("placeInside")


def test_budget_exhausted_raises(mini_home):
    state = sample_scene(mini_home, 2)
    goal = instantiate_goal(mini_home.template("store_milk"), state)
    with pytest.raises(BudgetExhausted):
        plan(state, goal, budget=1)


def test_plan_matches_bfs_on_short_instances(mini_home):
    checked = 0
    for seed in range(10):
        state = sample_scene(mini_home, seed)
        goal = instantiate_goal(mini_home.template("light_on"), state)
        best = bfs_optimal_length(state, goal, horizon=3)
        if best is None:
            continue
        assert len(plan(state, goal)) == best
        checked += 1
    assert checked >= 2


def test_plan_matches_bfs_deeper_on_small_instance(mini_home):
    # exhaustive search is affordable on a stripped five-object scene
    from tooluse.world import refresh_geometric_edges
    checked = 0
    keep = ("robot", "milk", "fridge", "table", "floor")
    for seed in range(8):
        state = sample_scene(mini_home, seed)
        small = state.copy()
        for oid in sorted(small.objects):
            if small.objects[oid].cls.token not in keep:
                del small.objects[oid]
        small.edges = frozenset(e for e in small.edges
                                if e.subject in small.objects and e.object in small.objects)
        small = refresh_geometric_edges(small)
        goal = instantiate_goal(mini_home.template("store_milk"), small)
        best = bfs_optimal_length(small, goal, horizon=6)
        if best is None:
            continue
        assert len(plan(small, goal)) == best
        checked += 1
        if checked >= 2:
            break
    assert checked >= 1


def test_plan_variants_distinct_and_equal_cost(mini_home):
    state = sample_scene(mini_home, 1)
    goal = instantiate_goal(mini_home.template("serve_fruit"), state)
    variants = plan_variants(state, goal, k=3, budget=80000, seed=0)
    assert 1 <= len(variants) <= 3
    lengths = {len(v) for v in variants}
    assert len(lengths) == 1  # tie-broken plans stay optimal
    sigs = {tuple((a.interaction, a.o1, a.o2) for a in v) for v in variants}
    assert len(sigs) == len(variants)


@pytest.fixture(scope="module")
def small_corpus():
    from tooluse.domains import load_catalog
    catalog = load_catalog("mini-home")
    corpus = build_corpus(catalog, range(4), seed=0, variants=2, budget=80000)
    return catalog, corpus


def test_corpus_traces_all_validate(small_corpus):
    _, corpus = small_corpus
    assert corpus.traces
    assert all(validate_trace(t) for t in corpus.traces)
    assert all(t.success for t in corpus.traces)


def test_rank_optimality_rules(small_corpus):
    _, corpus = small_corpus
    alphas = rank_optimality(corpus)
    by_pair = {}
    for t in corpus.traces:
        by_pair.setdefault(t.pair_key(), []).append(t)
    for pair, traces in by_pair.items():
        best = min(len(t.actions) for t in traces)
        for t in traces:
            expected = 2.0 if len(t.actions) == best else 1.0
            assert alphas[t.trace_id] == expected
    singles = [ts for ts in by_pair.values() if len(ts) == 1]
    for [t] in singles:
        assert alphas[t.trace_id] == 2.0


def test_augment_grows_and_validates(small_corpus):
    catalog, corpus = small_corpus
    grown = augment(corpus, catalog, seed=3, replay_seeds=list(range(4)),
                    max_replays_per_trace=2)
    assert len(grown.traces) > len(corpus.traces)
    assert all(validate_trace(t) for t in grown.traces)
    # removal clones never reference removed objects
    for t in grown.traces:
        if t.provenance == "augmented-removal":
            for a in t.actions:
                assert a.o1 in t.initial_state.objects
                assert a.o2 is None or a.o2 in t.initial_state.objects


def test_tool_usage_ranking_counts_tools_only(small_corpus):
    catalog, corpus = small_corpus
    usage = tool_usage_ranking(corpus, catalog)
    for goal_id, tokens in usage.items():
        assert all(tok in catalog.tools for tok in tokens)


def test_corpus_round_trip_and_digest(small_corpus, tmp_path):
    catalog, corpus = small_corpus
    save_corpus(corpus, tmp_path / "c")
    loaded = load_corpus(tmp_path / "c", catalog)
    assert corpus_digest(loaded) == corpus_digest(corpus)
    assert (tmp_path / "c" / "manifest.json").exists()


def test_corpus_rejects_wrong_catalog(small_corpus, tmp_path, mini_factory):
    catalog, corpus = small_corpus
    save_corpus(corpus, tmp_path / "c2")
    with pytest.raises(ValueError):
        load_corpus(tmp_path / "c2", mini_factory)
