"""Experiment harness: action accuracy, closed-loop rollouts, generalization
suites, robustness runs, plan-length and error-breakdown reports.

A rollout alternates policy queries with simulator transitions until the goal
check passes or the step cap runs out. Rejected actions consume a step and
stay in the query history: the agent knows what it attempted, and that
knowledge is what lets a history-conditioned policy leave a rejection loop
(the state alone is a fixed point there). A config flag can instead terminate
on the first rejection; both readings of execution accuracy are reported.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

from .actions import INTERACTIONS, INTERACTION_NAMES, SymbolicAction, apply
from .domains import (
    DomainCatalog, MissingClass, NothingToPerturb, PerturbationKind,
    instantiate_goal, perturb, sample_scene,
)
from .oracle import BudgetExhausted, DemonstrationTrace, plan
from .policy import HistoryItem, Policy
from .world import GoalSpec, WorldState, goal_check

STEP_CAP = 50
SUITE_KINDS = ("Position", "Alternate", "Unseen", "Random", "Goal")


class EmptySplit(Exception):
    pass


class ActionPolicy(Protocol):
    def act(self, state: WorldState, goal: GoalSpec,
            history: Sequence[HistoryItem]) -> SymbolicAction: ...


class OraclePolicy:
    """Plans with the demonstration oracle and follows the plan, replanning
    whenever execution diverges; the harness ceiling."""

    def __init__(self, budget: int = 60_000):
        self.budget = budget
        self._plan: list[SymbolicAction] = []
        self._expected: Optional[tuple] = None

    def act(self, state, goal, history):
        from .world import state_key
        if not self._plan or self._expected != state_key(state):
            self._plan = list(plan(state, goal, budget=self.budget))
        if not self._plan:
            return SymbolicAction("moveTo", min(o for o in state.objects if o != state.robot))
        action = self._plan.pop(0)
        nxt = apply(state, action)
        self._expected = state_key(nxt.next_state) if nxt.applied else None
        return action


class RandomPolicy:
    """Uniform draw over the grammar-valid action space; the floor."""

    def __init__(self, seed: int = 0):
        self.rng = random.Random("random-policy:%d" % seed)

    def act(self, state, goal, history):
        ids = sorted(o for o in state.objects if o != state.robot)
        name = self.rng.choice(INTERACTION_NAMES)
        o1 = self.rng.choice(ids)
        if INTERACTIONS[name][0] == 1:
            return SymbolicAction(name, o1)
        o2 = self.rng.choice([i for i in ids if i != o1] or ids)
        return SymbolicAction(name, o1, o2)


@dataclass
class RolloutResult:
    success: bool
    actions: list[SymbolicAction]
    statuses: list[str]
    reasons: list[Optional[str]]
    final_state: WorldState
    perturbed_steps: int = 0

    @property
    def length(self) -> int:
        return len(self.actions)

    def failure_cause(self) -> Optional[str]:
        if self.success:
            return None
        for r in self.reasons:
            if r is not None:
                return r
        return "StepCapExhausted"


def rollout(policy: ActionPolicy, state: WorldState, goal: GoalSpec,
            max_steps: int = STEP_CAP, drop_prob: float = 0.0,
            seed: int = 0, terminate_on_rejection: bool = False) -> RolloutResult:
    rng = random.Random("rollout:%d" % seed)
    history: list[HistoryItem] = []
    actions: list[SymbolicAction] = []
    statuses: list[str] = []
    reasons: list[Optional[str]] = []
    perturbed = 0
    if goal_check(state, goal):
        return RolloutResult(True, [], [], [], state)
    for _ in range(max_steps):
        action = policy.act(state, goal, history)
        tok1 = state.objects[action.o1].cls.token if action.o1 in state.objects else None
        tok2 = (state.objects[action.o2].cls.token
                if action.o2 is not None and action.o2 in state.objects else None)
        outcome = apply(state, action, drop_prob=drop_prob, rng=rng)
        actions.append(action)
        statuses.append(outcome.status)
        reasons.append(outcome.reason)
        history.append((action.interaction, tok1, tok2))
        if outcome.status == "AppliedWithPerturbation":
            perturbed += 1
        state = outcome.next_state
        if goal_check(state, goal):
            return RolloutResult(True, actions, statuses, reasons, state, perturbed)
        if terminate_on_rejection and not outcome.applied:
            break
    return RolloutResult(False, actions, statuses, reasons, state, perturbed)


def replay_open_loop(actions: Sequence[SymbolicAction], state: WorldState,
                     goal: GoalSpec, drop_prob: float = 0.0, seed: int = 0) -> bool:
    """Execute a fixed plan blindly under noise; success iff the goal holds."""
    rng = random.Random("rollout:%d" % seed)
    for a in actions:
        outcome = apply(state, a, drop_prob=drop_prob, rng=rng)
        state = outcome.next_state
    return goal_check(state, goal)


def action_accuracy(policy: Policy, traces: Sequence[DemonstrationTrace]) -> float:
    """Per-step exact match of (interaction, o1, o2) under teacher forcing."""
    total = correct = 0
    for trace in traces:
        steps = trace.steps()
        history: list[HistoryItem] = []
        for state, action in steps:
            predicted = policy.act(state, trace.goal, history)
            total += 1
            if predicted == action:
                correct += 1
            tok1 = state.objects[action.o1].cls.token
            tok2 = (state.objects[action.o2].cls.token if action.o2 is not None else None)
            history.append((action.interaction, tok1, tok2))
    if total == 0:
        raise EmptySplit("no demonstration steps to score")
    return correct / total


# --- suite construction -----------------------------------------------------

@dataclass
class SuiteCase:
    state: WorldState
    goal: GoalSpec
    oracle_len: int
    meta: dict = field(default_factory=dict)


def _solvable(state: WorldState, goal: GoalSpec, budget: int) -> Optional[int]:
    try:
        return len(plan(state, goal, budget=budget))
    except BudgetExhausted:
        return None


def build_base_suite(catalog: DomainCatalog, scene_seeds: Sequence[int],
                     budget: int = 60_000,
                     goals: Optional[Sequence[str]] = None,
                     include_satisfied: bool = False) -> list[SuiteCase]:
    """Solvable (goal, scene) pairs. Pairs whose goal already holds at the
    start measure nothing and are skipped unless explicitly requested."""
    cases = []
    for template in catalog.goal_templates:
        if goals is not None and template.id not in goals:
            continue
        for seed in scene_seeds:
            state = sample_scene(catalog, seed)
            try:
                goal = instantiate_goal(template, state)
            except MissingClass:
                continue
            length = _solvable(state, goal, budget)
            if length is None or (length == 0 and not include_satisfied):
                continue
            cases.append(SuiteCase(state, goal, length,
                                   {"scene_seed": seed, "goal": template.id}))
    return cases


def build_perturbed_suite(kind: str, catalog: DomainCatalog,
                          base: Sequence[SuiteCase],
                          tool_usage: dict[str, list[str]],
                          budget: int = 60_000, seed: int = 0,
                          limit: Optional[int] = None,
                          prefer_tool_cases: bool = True) -> list[SuiteCase]:
    """Perturb base cases into one generalization suite, keeping only cases the
    oracle can still solve so accuracy deficits belong to the policy. For the
    tool-substitution kinds, cases whose base plan already uses a tool come
    first: those are the ones the perturbation actually stresses."""
    pk = PerturbationKind(kind, catalog, tool_usage=tool_usage)
    ordered = list(base)
    if prefer_tool_cases and kind in ("Alternate", "Unseen", "Random"):
        ranked = set()
        for case in base:
            used = tool_usage.get(case.goal.template_id, [])
            if used and any(case.state.instances_of(t) for t in used):
                ranked.add(id(case))
        ordered.sort(key=lambda c: (0 if id(c) in ranked else 1, c.meta.get("scene_seed", 0)))
    cases = []
    for i, case in enumerate(ordered):
        if limit is not None and len(cases) >= limit:
            break
        try:
            state2, goal2 = perturb(case.state, case.goal, pk, seed=seed + i)
        except (NothingToPerturb, MissingClass):
            continue
        length = _solvable(state2, goal2, budget)
        if length is None or length == 0:
            continue
        cases.append(SuiteCase(state2, goal2, length,
                               dict(case.meta, kind=kind, perturb_seed=seed + i)))
    return cases


# --- reports -------------------------------------------------------------------

@dataclass
class EvalReport:
    action_accuracy: Optional[float]
    plan_execution: float
    plan_execution_strict: Optional[float]  # terminate-on-first-rejection reading
    suite_accuracy: dict[str, float]
    plan_lengths: list[tuple[int, int]]      # (oracle length, model length) on successes
    error_histogram: dict[str, int]
    rollouts: int
    failures: int
    seeds: dict = field(default_factory=dict)
    config_hash: str = ""

    def to_dict(self) -> dict:
        return {
            "action_accuracy": self.action_accuracy,
            "plan_execution": self.plan_execution,
            "plan_execution_strict": self.plan_execution_strict,
            "suite_accuracy": dict(sorted(self.suite_accuracy.items())),
            "plan_lengths": [list(p) for p in self.plan_lengths],
            "error_histogram": dict(sorted(self.error_histogram.items())),
            "rollouts": self.rollouts,
            "failures": self.failures,
            "seeds": self.seeds,
            "config_hash": self.config_hash,
        }

    def summary(self) -> str:
        lines = ["plan execution: %.3f (%d rollouts)" % (self.plan_execution, self.rollouts)]
        if self.plan_execution_strict is not None:
            lines.append("plan execution (stop at first rejection): %.3f"
                         % self.plan_execution_strict)
        if self.action_accuracy is not None:
            lines.insert(0, "action accuracy: %.3f" % self.action_accuracy)
        for name, acc in sorted(self.suite_accuracy.items()):
            lines.append("%-10s %.3f" % (name, acc))
        if self.error_histogram:
            lines.append("failures by cause: " + ", ".join(
                "%s=%d" % kv for kv in sorted(self.error_histogram.items())))
        return "\n".join(lines)

    def write(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.json").write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        (directory / "summary.txt").write_text(self.summary() + "\n")
        with open(directory / "plan_lengths.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["oracle_length", "model_length"])
            w.writerows(self.plan_lengths)
        with open(directory / "errors.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cause", "count"])
            for cause, count in sorted(self.error_histogram.items()):
                w.writerow([cause, count])


def evaluate_suite(policy: ActionPolicy, cases: Sequence[SuiteCase],
                   max_steps: int = STEP_CAP, drop_prob: float = 0.0,
                   seed: int = 0, terminate_on_rejection: bool = False
                   ) -> tuple[float, list[RolloutResult]]:
    if not cases:
        raise EmptySplit("no cases in suite")
    results = []
    for i, case in enumerate(cases):
        results.append(rollout(policy, case.state, case.goal, max_steps=max_steps,
                               drop_prob=drop_prob, seed=seed + i,
                               terminate_on_rejection=terminate_on_rejection))
    return sum(r.success for r in results) / len(results), results


def run_suites(policy: ActionPolicy, catalog: DomainCatalog,
               base: Sequence[SuiteCase],
               suites: dict[str, Sequence[SuiteCase]],
               test_traces: Sequence[DemonstrationTrace] = (),
               max_steps: int = STEP_CAP, seed: int = 0,
               terminate_on_rejection: bool = False) -> EvalReport:
    """Closed-loop accuracy on the base suite and every generalization suite,
    plus teacher-forced action accuracy when test traces are supplied."""
    acc = None
    if test_traces and isinstance(policy, Policy):
        acc = action_accuracy(policy, test_traces)
    base_acc, base_results = evaluate_suite(policy, base, max_steps=max_steps, seed=seed,
                                            terminate_on_rejection=terminate_on_rejection)
    strict_acc = None
    if not terminate_on_rejection:
        strict_acc, _ = evaluate_suite(policy, base, max_steps=max_steps, seed=seed,
                                       terminate_on_rejection=True)
    suite_accuracy = {}
    all_results = list(zip(base, base_results))
    for name, cases in suites.items():
        if not cases:
            continue
        s_acc, s_results = evaluate_suite(policy, cases, max_steps=max_steps, seed=seed,
                                          terminate_on_rejection=terminate_on_rejection)
        suite_accuracy[name] = s_acc
        all_results.extend(zip(cases, s_results))
    lengths = [(case.oracle_len, r.length) for case, r in all_results
               if r.success and case.oracle_len > 0]
    histogram: dict[str, int] = {}
    failures = 0
    for _, r in all_results:
        if not r.success:
            failures += 1
            cause = r.failure_cause()
            histogram[cause] = histogram.get(cause, 0) + 1
    return EvalReport(acc, base_acc, strict_acc, suite_accuracy, lengths, histogram,
                      rollouts=len(all_results), failures=failures,
                      seeds={"rollout_seed": seed}, config_hash=catalog.hash)
