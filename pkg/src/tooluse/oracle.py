"""Search-based demonstration generator and corpus construction.

The planner is optimal cost search over the action grammar: best-first on
(cost + admissible lower bound), with duplicate-state pruning on the
canonical state form and the count of unsatisfied goal constraints as the
tie-break. Navigation is folded in as macro expansions: instead of branching
over bare moveTo actions, each expansion optionally prepends the moveTo its
manipulation needs, which mirrors the precondition structure without
changing what is reachable.

Every emitted trace is validated by deterministic replay before it enters a
corpus, so corpus membership itself certifies executability.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .actions import INTERACTIONS, SymbolicAction, apply
from .domains import DomainCatalog, MissingClass, instantiate_goal, sample_scene
from .world import (
    GoalSpec, WorldState, constraint_holds, goal_check, state_from_dict,
    state_key, state_to_dict, state_to_json, unsatisfied_count,
)

DEFAULT_BUDGET = 60_000
ALPHA_HI = 2.0
ALPHA_LO = 1.0


class BudgetExhausted(Exception):
    pass


# --- admissible goal-distance lower bound -----------------------------------

def _subject_enclosure(state: WorldState, oid: int) -> Optional[int]:
    node = state.inside_parent(oid)
    while node is not None:
        cls = state.obj(node).cls
        if cls.has("openable") and not cls.has("always_open") and not state.state_of(node, "open"):
            return node
        node = state.inside_parent(node)
    return None


def _heuristic(state: WorldState, goal: GoalSpec) -> int:
    """Lower bound on remaining actions: every unsatisfied constraint needs at
    least its own placement/switch/clean step plus a pick when the subject is
    not already held; container openings, one climb, and one cleaner fetch are
    counted once since a single action can serve several constraints."""
    total = 0
    opens: set[int] = set()
    climb_needed = False
    cleaner_fetch = False
    held = state.held_object()
    reach = state.robot_elevation + 1
    for c in goal.constraints:
        if constraint_holds(state, c):
            continue
        if c.kind == "absent":
            n = len(state.instances_of(c.subject)) if isinstance(c.subject, str) else 1
            total += n
            if held is None or not state.obj(held).cls.has("cleaning_agent"):
                cleaner_fetch = True
            continue
        if c.kind == "state":
            total += 1
            if isinstance(c.subject, int) and c.subject in state.objects:
                o = state.obj(c.subject)
                if c.predicate == "on" and o.cls.has("needs_fuel") and not state.state_of(o.id, "fueled"):
                    total += 1
                if o.height_level > reach:
                    climb_needed = True
            continue
        if not isinstance(c.subject, int) or c.subject not in state.objects:
            total += 1
            continue
        subj = state.obj(c.subject)
        if c.kind == "StuckTo":
            total += 1
            if held != subj.id:
                total += 1
            if not state.state_of(subj.id, "sticky"):
                total += 2
            continue
        # Inside / OnTop / Near placements
        total += 1
        if held != subj.id:
            total += 1
            enc = _subject_enclosure(state, subj.id)
            if enc is not None:
                opens.add(enc)
            if subj.height_level > reach:
                climb_needed = True
        if c.kind == "Inside" and isinstance(c.object, int) and c.object in state.objects:
            tgt = state.obj(c.object)
            if tgt.cls.has("openable") and not tgt.cls.has("always_open") \
                    and not state.state_of(tgt.id, "open"):
                opens.add(tgt.id)
        if c.kind == "OnTop" and isinstance(c.object, int) and c.object in state.objects:
            tgt = state.obj(c.object)
            tier = tgt.cls.surface_tier if tgt.cls.has("surface") else tgt.height_level
            if tier > reach:
                climb_needed = True
    return total + len(opens) + (1 if climb_needed else 0) + (1 if cleaner_fetch else 0)


# --- expansion ----------------------------------------------------------------

def _goal_reference_ids(state: WorldState, goal: GoalSpec) -> list[int]:
    out = []
    for c in goal.constraints:
        for ref in (c.subject, c.object):
            if isinstance(ref, int) and ref in state.objects and ref not in out:
                out.append(ref)
            elif isinstance(ref, str):
                out.extend(o.id for o in state.instances_of(ref) if o.id not in out)
    return out


def _candidate_steps(state: WorldState,
                     goal: Optional[GoalSpec] = None) -> list[list[SymbolicAction]]:
    """Successor action sequences: statically admissible manipulations, bare
    when the robot is already in range, otherwise prefixed with the moveTo
    they need; plus positioning drops toward every landmark. Bare moveTo
    never branches on its own, which is what keeps the tree narrow.

    Positioning drops list goal-referenced landmarks first: among equal-cost
    plans the tie then falls on the landmark a teacher would name, which keeps
    demonstrations consistent across scenes."""
    from .actions import _proximity_preconditions, _static_preconditions

    steps: list[list[SymbolicAction]] = []
    ids = sorted(oid for oid in state.objects if oid != state.robot)
    held = state.held_object()

    def emit(act: SymbolicAction, near_target: int) -> None:
        if _static_preconditions(state, act) is not None:
            return
        if _proximity_preconditions(state, act) is None:
            steps.append([act])
        else:
            steps.append([SymbolicAction("moveTo", near_target), act])

    for a in ids:
        obj = state.objects[a]
        cls = obj.cls
        if held is None and cls.has("graspable"):
            emit(SymbolicAction("pick", a), a)
        if cls.has("openable") and not cls.has("always_open"):
            name = "close" if state.state_of(a, "open") else "open"
            emit(SymbolicAction(name, a), a)
        if cls.has("operable") and "on" in cls.supported_states:
            name = "switchOff" if state.state_of(a, "on") else "switchOn"
            emit(SymbolicAction(name, a), a)
        if cls.has("climbable"):
            name = "climbUp" if state.robot_elevation == 0 else "climbDown"
            emit(SymbolicAction(name, a), a)
        if cls.has("movable") and not cls.has("graspable"):
            emit(SymbolicAction("push", a), a)
        if held is not None:
            held_cls = state.objects[held].cls
            if cls.has("cleanable") and held_cls.has("cleaning_agent"):
                emit(SymbolicAction("clean", a), a)
            if held_cls.has("applicable") and "sticky" in cls.supported_states:
                emit(SymbolicAction("apply", a), a)
            if "fueled" in cls.supported_states and held_cls.has("combustible"):
                emit(SymbolicAction("fuel", a, held), a)
            if held_cls.has("operable") and held_cls.operate_state in cls.supported_states:
                emit(SymbolicAction("operate", held, a), a)
            if a != held:
                if cls.has("surface"):
                    emit(SymbolicAction("placeOn", held, a), a)
                if cls.has("container"):
                    emit(SymbolicAction("placeInside", held, a), a)
                if state.state_of(held, "sticky"):
                    emit(SymbolicAction("stick", held, a), a)
    if held is not None:
        steps.append([SymbolicAction("drop", held)])
        goal_first = _goal_reference_ids(state, goal) if goal is not None else []
        ordered = goal_first + [t for t in ids if t not in goal_first]
        for t in ordered:
            if t != held:
                steps.append([SymbolicAction("moveTo", t), SymbolicAction("drop", held)])
    return steps


def plan(state: WorldState, goal: GoalSpec, budget: int = DEFAULT_BUDGET,
         tiebreak_seed: Optional[int] = None) -> list[SymbolicAction]:
    """Shortest goal-reaching action sequence, or BudgetExhausted.

    The returned plan always replays to success under a noise-free transition.
    `tiebreak_seed` shuffles expansion order among equal-priority nodes, which
    yields alternative equal-cost plans for corpus diversity.
    """
    if goal_check(state, goal):
        return []
    rng = random.Random(tiebreak_seed) if tiebreak_seed is not None else None
    counter = 0
    start_key = state_key(state)
    frontier: list = []
    heapq.heappush(frontier, (_heuristic(state, goal), unsatisfied_count(state, goal),
                              0, counter, state, []))
    best_cost = {start_key: 0}
    expanded = 0
    while frontier:
        f, _, g_cost, _, s, actions = heapq.heappop(frontier)
        key = state_key(s)
        if g_cost > best_cost.get(key, 1 << 30):
            continue
        # goal test on pop, not on generation: with an admissible bound this
        # is what makes the returned plan length-optimal
        if goal_check(s, goal):
            return actions
        expanded += 1
        if expanded > budget:
            raise BudgetExhausted("expanded %d nodes without reaching the goal" % expanded)
        candidates = _candidate_steps(s, goal)
        if rng is not None:
            rng.shuffle(candidates)
        for seq in candidates:
            s2 = s
            ok = True
            for a in seq:
                outcome = apply(s2, a, refresh=False)
                if not outcome.applied:
                    ok = False
                    break
                s2 = outcome.next_state
            if not ok:
                continue
            g2 = g_cost + len(seq)
            k2 = state_key(s2)
            if g2 >= best_cost.get(k2, 1 << 30):
                continue
            best_cost[k2] = g2
            counter += 1
            heapq.heappush(frontier, (g2 + _heuristic(s2, goal),
                                      unsatisfied_count(s2, goal), g2, counter, s2,
                                      actions + seq))
    raise BudgetExhausted("frontier exhausted without reaching the goal")


def plan_variants(state: WorldState, goal: GoalSpec, k: int = 3,
                  budget: int = DEFAULT_BUDGET, seed: int = 0) -> list[list[SymbolicAction]]:
    """Up to k distinct equal-quality plans via seeded tie-break orders."""
    plans: list[list[SymbolicAction]] = []
    seen: set[tuple] = set()
    for i in range(k):
        p = plan(state, goal, budget=budget, tiebreak_seed=None if i == 0 else seed * 1000 + i)
        sig = tuple((a.interaction, a.o1, a.o2) for a in p)
        if sig not in seen:
            seen.add(sig)
            plans.append(p)
    return plans


# --- traces & corpus ----------------------------------------------------------

@dataclass
class DemonstrationTrace:
    trace_id: str
    domain: str
    scene_seed: int
    goal: GoalSpec
    initial_state: WorldState
    actions: list[SymbolicAction]
    final_state: WorldState
    success: bool
    provenance: str = "oracle"
    meta: dict = field(default_factory=dict)

    def steps(self) -> list[tuple[WorldState, SymbolicAction]]:
        """(state, action) pairs reconstructed by noise-free replay."""
        out = []
        s = self.initial_state
        for a in self.actions:
            out.append((s, a))
            s = apply(s, a).next_state
        return out

    def pair_key(self) -> tuple:
        return (self.domain, self.goal.template_id, self.scene_seed)

    def to_record(self) -> dict:
        init = state_to_dict(self.initial_state)
        return {
            "schema": "trace/v1",
            "trace_id": self.trace_id,
            "domain": self.domain,
            "scene_seed": self.scene_seed,
            "provenance": self.provenance,
            "goal": self.goal.to_dict(),
            "initial_state": init,
            "actions": [a.to_wire(self.initial_state) for a in self.actions],
            "final_state": state_to_dict(self.final_state),
            "success": self.success,
            "meta": self.meta,
        }

    @staticmethod
    def from_record(d: dict, catalog: DomainCatalog) -> "DemonstrationTrace":
        init = state_from_dict(d["initial_state"], catalog.class_map())
        actions = [SymbolicAction.from_wire(a, init) for a in d["actions"]]
        final = state_from_dict(d["final_state"], catalog.class_map())
        return DemonstrationTrace(
            trace_id=d["trace_id"], domain=d["domain"], scene_seed=d["scene_seed"],
            goal=GoalSpec.from_dict(d["goal"]), initial_state=init, actions=actions,
            final_state=final, success=d["success"], provenance=d["provenance"],
            meta=d.get("meta", {}))


def validate_trace(trace: DemonstrationTrace) -> bool:
    """Replay under zero noise: every action applies, the recorded final state
    matches byte-for-byte, and success mirrors the goal check."""
    s = trace.initial_state
    for a in trace.actions:
        outcome = apply(s, a)
        if not outcome.applied:
            return False
        s = outcome.next_state
    if state_to_json(s) != state_to_json(trace.final_state):
        return False
    return trace.success == goal_check(s, trace.goal)


def make_trace(catalog: DomainCatalog, scene_seed: int, goal: GoalSpec,
               initial: WorldState, actions: list[SymbolicAction],
               provenance: str, variant: int = 0,
               meta: Optional[dict] = None) -> Optional[DemonstrationTrace]:
    s = initial
    for a in actions:
        outcome = apply(s, a)
        if not outcome.applied:
            return None
        s = outcome.next_state
    if not goal_check(s, goal):
        return None
    trace_id = "%s:%s:s%d:%s:v%d" % (catalog.name, goal.template_id, scene_seed,
                                     provenance, variant)
    return DemonstrationTrace(trace_id, catalog.name, scene_seed, goal, initial,
                              list(actions), s, True, provenance, dict(meta or {}))


@dataclass
class Corpus:
    catalog_name: str
    catalog_hash: str
    traces: list[DemonstrationTrace]
    seeds: dict = field(default_factory=dict)
    splits: dict[str, str] = field(default_factory=dict)  # trace_id -> train/validation/test
    alphas: dict[str, float] = field(default_factory=dict)

    def by_split(self, split: str) -> list[DemonstrationTrace]:
        return [t for t in self.traces if self.splits.get(t.trace_id) == split]

    def manifest(self) -> dict:
        return {
            "schema": "corpus/v1",
            "catalog": self.catalog_name,
            "catalog_hash": self.catalog_hash,
            "seeds": self.seeds,
            "trace_count": len(self.traces),
            "trace_ids": [t.trace_id for t in self.traces],
            "splits": {k: self.splits[k] for k in sorted(self.splits)},
            "alphas": {k: self.alphas[k] for k in sorted(self.alphas)},
        }


def build_corpus(catalog: DomainCatalog, scene_seeds: Iterable[int], seed: int = 0,
                 variants: int = 3, budget: int = DEFAULT_BUDGET,
                 goals: Optional[list[str]] = None) -> Corpus:
    """Plan every (goal, scene) pair; unreachable pairs are skipped, so every
    trace in the result replays to success."""
    traces: list[DemonstrationTrace] = []
    scene_seeds = list(scene_seeds)
    for template in catalog.goal_templates:
        if goals is not None and template.id not in goals:
            continue
        for scene_seed in scene_seeds:
            state = sample_scene(catalog, scene_seed)
            try:
                goal = instantiate_goal(template, state)
            except MissingClass:
                continue
            try:
                plans = plan_variants(state, goal, k=variants, budget=budget,
                                      seed=seed + scene_seed)
            except BudgetExhausted:
                continue
            for vi, p in enumerate(plans):
                t = make_trace(catalog, scene_seed, goal, state, p, "oracle", vi,
                               meta={"variant": vi, "plan_len": len(p)})
                if t is not None:
                    traces.append(t)
    corpus = Corpus(catalog.name, catalog.hash, traces,
                    seeds={"seed": seed, "scene_seeds": scene_seeds, "variants": variants})
    corpus.alphas = rank_optimality(corpus)
    return corpus


def _interacted_ids(trace: DemonstrationTrace) -> set[int]:
    out = set()
    for a in trace.actions:
        out.add(a.o1)
        if a.o2 is not None:
            out.add(a.o2)
    return out


def _goal_ids(goal: GoalSpec, state: WorldState) -> set[int]:
    out = set()
    for c in goal.constraints:
        for ref in (c.subject, c.object):
            if isinstance(ref, int):
                out.add(ref)
            elif isinstance(ref, str):
                out |= {o.id for o in state.instances_of(ref)}
    return out


def augment(corpus: Corpus, catalog: DomainCatalog, seed: int = 0,
            replay_seeds: Optional[list[int]] = None,
            max_removals: int = 5, max_replays_per_trace: Optional[int] = None) -> Corpus:
    """Grow the corpus with validated variants of existing demonstrations:
    cross-scene replays of each plan, and clones with up to `max_removals`
    goal-irrelevant untouched objects removed. Every candidate is replayed in
    simulation and kept only if it still reaches the goal."""
    rng = random.Random("augment:%d" % seed)
    out = list(corpus.traces)
    base = [t for t in corpus.traces if t.provenance in ("oracle", "human-ui")]

    replay_seeds = replay_seeds if replay_seeds is not None else list(
        corpus.seeds.get("scene_seeds", []))
    for t in base:
        wire = [a.to_wire(t.initial_state) for a in t.actions]
        template = catalog.template(t.goal.template_id)
        kept_replays = 0
        for s2 in replay_seeds:
            if s2 == t.scene_seed:
                continue
            if max_replays_per_trace is not None and kept_replays >= max_replays_per_trace:
                break
            scene = sample_scene(catalog, s2)
            try:
                goal2 = instantiate_goal(template, scene)
                actions2 = [SymbolicAction.from_wire(w, scene) for w in wire]
            except (MissingClass, Exception):
                continue
            t2 = make_trace(catalog, s2, goal2, scene, actions2, "augmented-replay",
                            variant=t.meta.get("variant", 0),
                            meta={"source": t.trace_id})
            if t2 is not None:
                t2.trace_id = "%s<-%s" % (t2.trace_id, t.trace_id)
                out.append(t2)
                kept_replays += 1

    for t in base:
        protected = _goal_ids(t.goal, t.initial_state) | _interacted_ids(t) | {t.initial_state.robot}
        removable = [oid for oid in sorted(t.initial_state.objects)
                     if oid not in protected
                     and not t.initial_state.objects[oid].cls.has("surface")
                     and not any(c in protected for c in t.initial_state.contents(oid))]
        if not removable:
            continue
        n = min(len(removable), 1 + rng.randrange(max_removals))
        removed = sorted(rng.sample(removable, n))
        doomed = set(removed)
        for oid in removed:
            doomed.update(t.initial_state.contents(oid))
        stripped = t.initial_state.copy()
        for oid in doomed:
            del stripped.objects[oid]
        stripped.edges = frozenset(e for e in stripped.edges
                                   if e.subject in stripped.objects and e.object in stripped.objects)
        from .world import refresh_geometric_edges
        stripped = refresh_geometric_edges(stripped)
        t3 = make_trace(catalog, t.scene_seed, t.goal, stripped, t.actions,
                        "augmented-removal", variant=t.meta.get("variant", 0),
                        meta={"source": t.trace_id, "removed": removed})
        if t3 is not None:
            t3.trace_id = "%s-rm%d" % (t.trace_id, len(removed))
            out.append(t3)

    grown = Corpus(corpus.catalog_name, corpus.catalog_hash, out,
                   seeds=dict(corpus.seeds, augment_seed=seed))
    grown.alphas = rank_optimality(grown)
    return grown


def rank_optimality(corpus: Corpus, alpha_hi: float = ALPHA_HI,
                    alpha_lo: float = ALPHA_LO) -> dict[str, float]:
    """Shortest trace per (goal, scene) pair earns alpha_hi; ties share it."""
    best: dict[tuple, int] = {}
    for t in corpus.traces:
        k = t.pair_key()
        best[k] = min(best.get(k, 1 << 30), len(t.actions))
    return {t.trace_id: (alpha_hi if len(t.actions) == best[t.pair_key()] else alpha_lo)
            for t in corpus.traces}


def tool_usage_ranking(corpus: Corpus, catalog: DomainCatalog) -> dict[str, list[str]]:
    """Per goal template, tool class tokens ranked by how often demonstrations
    touch them; drives the Alternate perturbation."""
    counts: dict[str, dict[str, int]] = {}
    for t in corpus.traces:
        per_goal = counts.setdefault(t.goal.template_id, {})
        for oid in _interacted_ids(t):
            obj = t.initial_state.objects.get(oid)
            if obj is not None and obj.cls.token in catalog.tools:
                per_goal[obj.cls.token] = per_goal.get(obj.cls.token, 0) + 1
    return {g: [tok for tok, _ in sorted(c.items(), key=lambda kv: (-kv[1], kv[0]))]
            for g, c in counts.items()}


# --- persistence ---------------------------------------------------------------

def save_corpus(corpus: Corpus, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "traces.ndjson", "w") as fh:
        for t in corpus.traces:
            fh.write(json.dumps(t.to_record(), sort_keys=True, separators=(",", ":")) + "\n")
    with open(directory / "manifest.json", "w") as fh:
        json.dump(corpus.manifest(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_corpus(directory: str | Path, catalog: DomainCatalog) -> Corpus:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("catalog_hash") != catalog.hash:
        raise ValueError("corpus was built against a different catalog")
    traces = []
    with open(directory / "traces.ndjson") as fh:
        for line in fh:
            traces.append(DemonstrationTrace.from_record(json.loads(line), catalog))
    corpus = Corpus(manifest["catalog"], manifest["catalog_hash"], traces,
                    seeds=manifest.get("seeds", {}),
                    splits=dict(manifest.get("splits", {})),
                    alphas=dict(manifest.get("alphas", {})))
    if not corpus.alphas:
        corpus.alphas = rank_optimality(corpus)
    return corpus


def corpus_digest(corpus: Corpus) -> str:
    h = hashlib.sha256()
    for t in corpus.traces:
        h.update(json.dumps(t.to_record(), sort_keys=True, separators=(",", ":")).encode())
    h.update(json.dumps(corpus.manifest(), sort_keys=True).encode())
    return h.hexdigest()
