import pytest

from tooluse.actions import SymbolicAction
from tooluse.domains import instantiate_goal, load_catalog, sample_scene
from tooluse.evaluation import (
    EmptySplit, OraclePolicy, RandomPolicy, action_accuracy, build_base_suite,
    build_perturbed_suite, evaluate_suite, replay_open_loop, rollout, run_suites,
)
from tooluse.oracle import build_corpus, tool_usage_ranking


@pytest.fixture(scope="module")
def eval_setup():
    catalog = load_catalog("mini-home")
    corpus = build_corpus(catalog, range(3), seed=0, variants=1, budget=80000)
    return catalog, corpus


class ReplayPolicy:
    """Reads the demonstration labels; the accuracy harness upper bound."""

    def __init__(self, trace):
        self.actions = {i: a for i, (_, a) in enumerate(trace.steps())}
        self.i = 0

    def act(self, state, goal, history):
        action = self.actions[min(self.i, len(self.actions) - 1)]
        self.i += 1
        return action


def test_oracle_replay_policy_scores_one(eval_setup):
    catalog, corpus = eval_setup
    trace = next(t for t in corpus.traces if len(t.actions) >= 2)
    policy = ReplayPolicy(trace)
    total = correct = 0
    history = []
    for state, action in trace.steps():
        predicted = policy.act(state, trace.goal, history)
        correct += predicted == action
        total += 1
    assert correct / total == 1.0


def test_action_accuracy_requires_steps():
    with pytest.raises(EmptySplit):
        action_accuracy(None, [])


def test_rollout_step_cap(eval_setup):
    catalog, _ = eval_setup
    state = sample_scene(catalog, 0)
    goal = instantiate_goal(catalog.template("store_milk"), state)

    class Spinner:
        def act(self, state, goal, history):
            return SymbolicAction("moveTo", min(o for o in state.objects if o != state.robot))

    result = rollout(Spinner(), state, goal, max_steps=50)
    assert not result.success
    assert result.length <= 50
    assert result.failure_cause() == "StepCapExhausted"


def test_rollout_oracle_reaches_goal(eval_setup):
    catalog, corpus = eval_setup
    trace = next(t for t in corpus.traces if t.actions)
    result = rollout(OraclePolicy(budget=80000), trace.initial_state, trace.goal)
    assert result.success
    assert result.length <= 50


def test_rollout_deterministic_without_noise(eval_setup):
    catalog, corpus = eval_setup
    trace = next(t for t in corpus.traces if t.actions)
    a = rollout(OraclePolicy(budget=80000), trace.initial_state, trace.goal, seed=3)
    b = rollout(OraclePolicy(budget=80000), trace.initial_state, trace.goal, seed=9)
    assert [x for x in a.actions] == [x for x in b.actions]


def test_open_loop_replay_succeeds_no_noise(eval_setup):
    catalog, corpus = eval_setup
    for trace in corpus.traces[:5]:
        assert replay_open_loop(trace.actions, trace.initial_state, trace.goal)


def test_suite_build_and_oracle_ceiling(eval_setup):
    catalog, corpus = eval_setup
    base = build_base_suite(catalog, range(300, 303), budget=80000)
    assert base
    acc, results = evaluate_suite(OraclePolicy(budget=80000), base, seed=0)
    assert acc == 1.0


def test_perturbed_suite_filtered_solvable(eval_setup):
    catalog, corpus = eval_setup
    base = build_base_suite(catalog, range(300, 303), budget=80000)
    usage = tool_usage_ranking(corpus, catalog)
    suite = build_perturbed_suite("Position", catalog, base, usage, budget=80000,
                                  seed=0, limit=4)
    assert suite
    acc, _ = evaluate_suite(OraclePolicy(budget=80000), suite, seed=0)
    assert acc == 1.0  # filter keeps only solvable cases


def test_run_suites_report_shape(eval_setup, tmp_path):
    catalog, corpus = eval_setup
    base = build_base_suite(catalog, range(300, 302), budget=80000)
    usage = tool_usage_ranking(corpus, catalog)
    suites = {"Position": build_perturbed_suite("Position", catalog, base, usage,
                                                budget=80000, seed=1, limit=2)}
    report = run_suites(OraclePolicy(budget=80000), catalog, base, suites)
    assert report.plan_execution == 1.0
    assert 0.0 <= report.suite_accuracy["Position"] <= 1.0
    assert report.failures == sum(report.error_histogram.values())
    report.write(tmp_path)
    assert (tmp_path / "report.json").exists()
    assert (tmp_path / "plan_lengths.csv").exists()
    assert (tmp_path / "errors.csv").exists()
    assert "plan execution" in report.summary()


def test_random_policy_rarely_succeeds(eval_setup):
    catalog, _ = eval_setup
    base = build_base_suite(catalog, range(300, 303), budget=80000)
    acc, _ = evaluate_suite(RandomPolicy(0), base, seed=1)
    assert acc <= 0.25  # loose bound on a tiny suite; acceptance pins <= 0.05


def test_random_policy_action_accuracy_floor(eval_setup):
    catalog, corpus = eval_setup
    rng_policy = RandomPolicy(3)
    total = matches = 0
    for trace in corpus.traces:
        history = []
        for state, action in trace.steps():
            predicted = rng_policy.act(state, trace.goal, history)
            matches += predicted == action
            total += 1
    assert total > 0
    assert matches / total <= 0.05
