"""Domain catalogs, randomized scene/goal sampling, generalization perturbations.

Catalogs are JSON data files: object classes with affordance flags, extents,
multiplicity bounds, placement priors, goal templates, and the substitution
table used by the unseen-object test suite. Everything downstream (scenes,
corpus, policy vocabularies) derives from the loaded catalog, so editing the
data file reshapes the whole pipeline without code changes.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from .world import (
    Geometry, GoalConstraint, GoalSpec, ObjectClass, ObjectInstance, WorldState,
    check_state_invariants, refresh_geometric_edges,
)

PERTURBATION_KINDS = ("Position", "Alternate", "Unseen", "Random", "Goal")


class DomainError(Exception):
    pass


class MissingClass(DomainError):
    pass


class NothingToPerturb(DomainError):
    pass


@dataclass(frozen=True)
class CatalogClass:
    cls: ObjectClass
    count: tuple[int, int]
    fixed: bool
    anchors: tuple[tuple[float, float], ...]
    placements: tuple[tuple[str, str, float], ...]  # (support token, mode, weight)
    category: str


@dataclass(frozen=True)
class GoalTemplate:
    id: str
    text: str
    constraints: tuple[dict, ...]


@dataclass
class DomainCatalog:
    name: str
    classes: dict[str, CatalogClass]
    tools: tuple[str, ...]
    goal_templates: tuple[GoalTemplate, ...]
    substitutions: dict[str, str]
    geometry: Geometry
    room: tuple[float, float]
    predicates: tuple[str, ...] = ()
    hash: str = ""

    def object_class(self, token: str) -> ObjectClass:
        try:
            return self.classes[token].cls
        except KeyError:
            raise MissingClass("class %r not in catalog %s" % (token, self.name))

    def class_map(self) -> dict[str, ObjectClass]:
        return {t: c.cls for t, c in self.classes.items()}

    def category_of(self, token: str) -> str:
        c = self.classes.get(token)
        return c.category if c else token

    def category_map(self) -> dict[str, str]:
        return {t: c.category for t, c in self.classes.items()}

    def template(self, template_id: str) -> GoalTemplate:
        for t in self.goal_templates:
            if t.id == template_id:
                return t
        raise DomainError("no goal template %r in %s" % (template_id, self.name))


def _parse_catalog(raw: dict) -> DomainCatalog:
    classes: dict[str, CatalogClass] = {}
    for cd in raw["classes"]:
        token = cd["token"]
        if not token or token in classes:
            raise DomainError("bad or duplicate class token %r" % token)
        cls = ObjectClass(
            token=token,
            affordances=frozenset(cd.get("affordances", [])),
            default_extent=tuple(cd.get("extent", [0.3, 0.3, 0.3])),
            supported_states=tuple(cd.get("states", [])),
            surface_tier=int(cd.get("surface_tier", 0)),
            operate_state=cd.get("operate_state"),
        )
        if any(e <= 0 for e in cls.default_extent):
            raise DomainError("%s: extent must be positive" % token)
        if cls.has("container") and not (cls.has("openable") or cls.has("always_open")):
            raise DomainError("%s: container must be openable or always open" % token)
        count = tuple(cd.get("count", [1, 1]))
        classes[token] = CatalogClass(
            cls=cls, count=(int(count[0]), int(count[1])),
            fixed=bool(cd.get("fixed", False)),
            anchors=tuple((float(a[0]), float(a[1])) for a in cd.get("anchors", [])),
            placements=tuple((p[0], p[1], float(p[2])) for p in cd.get("placements", [])),
            category=cd.get("category", token),
        )
    tools = tuple(raw.get("tools", []))
    for t in tools:
        if t not in classes:
            raise DomainError("tool %r not a catalog class" % t)
        if not classes[t].cls.has("movable"):
            raise DomainError("tool %r must be movable" % t)
    goals = tuple(GoalTemplate(g["id"], g["text"], tuple(g["constraints"]))
                  for g in raw.get("goals", []))
    for g in goals:
        for c in g.constraints:
            for ref in (c.get("subject"), c.get("object")):
                if isinstance(ref, str) and ref not in classes:
                    raise DomainError("goal %s references unknown class %r" % (g.id, ref))
    for token, sub in raw.get("substitutions", {}).items():
        if token not in classes or sub not in classes:
            raise DomainError("substitution %s->%s references unknown class" % (token, sub))
    predicates = tuple(sorted({s for c in classes.values() for s in c.cls.supported_states}))
    digest = hashlib.sha256(
        json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()).hexdigest()
    return DomainCatalog(
        name=raw["name"], classes=classes, tools=tools, goal_templates=goals,
        substitutions=dict(raw.get("substitutions", {})),
        geometry=Geometry.from_dict(raw.get("geometry", {})),
        room=tuple(raw.get("room", [10.0, 8.0])),
        predicates=predicates, hash=digest)


_BUILTIN = {"home": "home.json", "factory": "factory.json",
            "mini-home": "mini_home.json", "mini-factory": "mini_factory.json"}


def load_catalog(name_or_path: str) -> DomainCatalog:
    if name_or_path in _BUILTIN:
        text = resources.files("tooluse.data").joinpath(_BUILTIN[name_or_path]).read_text()
    else:
        text = Path(name_or_path).read_text()
    return _parse_catalog(json.loads(text))


# --- scene sampling ----------------------------------------------------------

def _rng_for(*parts) -> random.Random:
    return random.Random(":".join(str(p) for p in parts))


def _floor_spot(rng: random.Random, room: tuple[float, float]) -> tuple[float, float]:
    return (rng.uniform(0.8, room[0] - 0.8), rng.uniform(0.8, room[1] - 0.8))


def _state_bits(cls: ObjectClass, predicates: tuple[str, ...]) -> tuple[bool, ...]:
    return tuple(False for _ in predicates)


def _place_on(rng: random.Random, obj: ObjectInstance, support: ObjectInstance) -> None:
    sx, sy, sz = support.position
    ex, ey, ez = support.extent
    obj.position = (sx + rng.uniform(-0.4, 0.4) * ex / 2,
                    sy + rng.uniform(-0.4, 0.4) * ey / 2,
                    sz + ez / 2 + obj.extent[2] / 2)
    obj.height_level = support.cls.surface_tier


def _place_inside(rng: random.Random, obj: ObjectInstance, support: ObjectInstance,
                  shrink: float) -> None:
    sx, sy, sz = support.position
    span = shrink * 0.5
    obj.position = (sx + rng.uniform(-span, span) * support.extent[0] / 2,
                    sy + rng.uniform(-span, span) * support.extent[1] / 2,
                    sz)
    obj.height_level = support.height_level


def _place_near(rng: random.Random, obj: ObjectInstance, support: ObjectInstance) -> None:
    axis = 0 if support.extent[0] <= support.extent[1] else 1
    other = 1 - axis
    sign = rng.choice((-1.0, 1.0))
    offset = support.extent[axis] / 2 + obj.extent[axis] / 2 + rng.uniform(0.25, 0.4)
    pos = list(support.position)
    pos[axis] += sign * offset
    pos[other] += rng.uniform(-0.2, 0.2) * support.extent[other] / 2
    pos[2] = obj.extent[2] / 2
    obj.position = (pos[0], pos[1], pos[2])
    obj.height_level = 0


def _place_high(rng: random.Random, obj: ObjectInstance, support: ObjectInstance) -> None:
    _place_near(rng, obj, support)
    x, y, _ = obj.position
    obj.position = (x, y, 2.2)
    obj.height_level = 2


_PLACERS = {"on": _place_on, "inside": _place_inside, "near": _place_near, "high": _place_high}


def _apply_placement(rng: random.Random, cat: DomainCatalog, obj: ObjectInstance,
                     spec: CatalogClass, placed: dict[str, list[ObjectInstance]]) -> None:
    if spec.placements:
        total = sum(w for _, _, w in spec.placements)
        pick = rng.uniform(0.0, total)
        acc = 0.0
        choice = spec.placements[-1]
        for p in spec.placements:
            acc += p[2]
            if pick <= acc:
                choice = p
                break
        support_token, mode, _ = choice
        supports = placed.get(support_token)
        if not supports:
            raise DomainError("%s placed before its support %s" % (obj.name, support_token))
        support = supports[rng.randrange(len(supports))]
        if mode == "inside":
            _place_inside(rng, obj, support, 0.6)
        else:
            _PLACERS[mode](rng, obj, support)
        x, y, z = obj.position
        obj.position = (min(max(x, 0.4), cat.room[0] - 0.4),
                        min(max(y, 0.4), cat.room[1] - 0.4), z)
    else:
        x, y = _floor_spot(rng, cat.room)
        obj.position = (x, y, obj.extent[2] / 2)
        obj.height_level = 0


def sample_scene(catalog: DomainCatalog, seed: int) -> WorldState:
    """Deterministic scene draw: fixtures at jittered anchors, movables on
    supports drawn from the placement priors. The robot always gets id 0."""
    rng = _rng_for("scene", catalog.name, seed)
    predicates = catalog.predicates
    objects: dict[int, ObjectInstance] = {}
    placed: dict[str, list[ObjectInstance]] = {}
    next_id = 0

    def add(cls: ObjectClass, ordinal: int) -> ObjectInstance:
        nonlocal next_id
        obj = ObjectInstance(
            id=next_id, cls=cls, name="%s%d" % (cls.token, ordinal),
            position=(0.0, 0.0, 0.0), yaw=0.0, extent=cls.default_extent,
            state_vector=_state_bits(cls, predicates), height_level=0)
        objects[next_id] = obj
        placed.setdefault(cls.token, []).append(obj)
        next_id += 1
        return obj

    robot_cls = catalog.object_class("robot")
    robot = add(robot_cls, 0)
    x, y = _floor_spot(rng, catalog.room)
    robot.position = (x, y, robot_cls.default_extent[2] / 2)
    robot.name = "robot"

    for token, spec in catalog.classes.items():
        if token == "robot" or spec.cls.has("holdout"):
            continue
        n = rng.randint(spec.count[0], spec.count[1])
        for ordinal in range(n):
            obj = add(spec.cls, ordinal)
            if spec.fixed and spec.anchors:
                ax, ay = spec.anchors[ordinal % len(spec.anchors)]
                obj.position = (ax + rng.uniform(-0.3, 0.3), ay + rng.uniform(-0.3, 0.3),
                                obj.extent[2] / 2)
                if spec.cls.token == "floor":
                    obj.position = (ax, ay, -obj.extent[2] / 2)
            else:
                _apply_placement(rng, catalog, obj, spec, placed)

    state = WorldState(objects=objects, edges=frozenset(), robot=robot.id,
                       robot_elevation=0, time_step=0, predicates=predicates,
                       geometry=catalog.geometry)
    state = refresh_geometric_edges(state)
    problems = check_state_invariants(state)
    if problems:
        raise DomainError("sampled scene violates invariants: %s" % "; ".join(problems))
    return state


# --- goal instantiation ------------------------------------------------------

def instantiate_goal(template: GoalTemplate, state: WorldState) -> GoalSpec:
    """Bind class slots to scene instances: lowest id wins, or one constraint
    per instance when the template marks a slot `each`."""
    def lowest(token: str) -> int:
        instances = state.instances_of(token)
        if not instances:
            raise MissingClass("no instance of %r in scene" % token)
        return instances[0].id

    constraints: list[GoalConstraint] = []
    for c in template.constraints:
        kind = c["kind"]
        if kind == "absent":
            if not state.instances_of(c["subject"]):
                raise MissingClass("no instance of %r in scene" % c["subject"])
            constraints.append(GoalConstraint("absent", c["subject"]))
            continue
        subjects: list
        if c.get("each"):
            subjects = [o.id for o in state.instances_of(c["subject"])]
            if not subjects:
                raise MissingClass("no instance of %r in scene" % c["subject"])
        else:
            subjects = [lowest(c["subject"])] if isinstance(c["subject"], str) else [c["subject"]]
        obj_ref = c.get("object")
        bound_obj = lowest(obj_ref) if isinstance(obj_ref, str) else obj_ref
        for s in subjects:
            constraints.append(GoalConstraint(kind, s, bound_obj,
                                              c.get("predicate"), c.get("value")))
    return GoalSpec(tuple(constraints), text=template.text, template_id=template.id)


# --- generalization perturbations --------------------------------------------

@dataclass
class PerturbationKind:
    kind: str
    catalog: DomainCatalog
    substitutions: dict[str, str] = field(default_factory=dict)
    tool_usage: dict[str, list[str]] = field(default_factory=dict)  # goal id -> ranked tools

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise DomainError("unknown perturbation kind %r" % self.kind)
        if self.kind == "Unseen" and not self.substitutions:
            self.substitutions = dict(self.catalog.substitutions)


def _rename(state: WorldState, obj: ObjectInstance, new_cls: ObjectClass) -> None:
    ordinal = sum(1 for o in state.objects.values()
                  if o.cls.token == new_cls.token and o.id != obj.id)
    obj.cls = new_cls
    obj.name = "%s%d" % (new_cls.token, ordinal)


def _tool_instances(state: WorldState, catalog: DomainCatalog) -> list[ObjectInstance]:
    return [o for t in catalog.tools for o in state.instances_of(t)]


def perturb(state: WorldState, goal: GoalSpec, kind: PerturbationKind,
            seed: int) -> tuple[WorldState, GoalSpec]:
    """Produce one generalization test case; deterministic in seed."""
    cat = kind.catalog
    rng = _rng_for("perturb", kind.kind, cat.name, seed)
    s = state.copy()

    if kind.kind == "Position":
        before = {o.id: o.position for o in s.objects.values()}
        placed: dict[str, list[ObjectInstance]] = {}
        for oid in sorted(s.objects):
            o = s.objects[oid]
            placed.setdefault(o.cls.token, []).append(o)
        for oid in sorted(s.objects):
            o = s.objects[oid]
            spec = cat.classes.get(o.cls.token)
            if oid == s.robot or spec is None or spec.fixed:
                continue
            _apply_placement(rng, cat, o, spec, placed)
        if all(s.objects[i].position == before[i] for i in before):
            raise NothingToPerturb("no pose changed")
        out = refresh_geometric_edges(s)
        return out, goal

    if kind.kind == "Alternate":
        ranked = kind.tool_usage.get(goal.template_id, [])
        target = next((t for t in ranked if s.instances_of(t)), None)
        if target is None:
            raise NothingToPerturb("no used tool present in scene")
        for o in list(s.instances_of(target)):
            del s.objects[o.id]
        s.edges = frozenset(e for e in s.edges
                            if e.subject in s.objects and e.object in s.objects)
        return refresh_geometric_edges(s), goal

    if kind.kind == "Unseen" or kind.kind == "Random":
        goal_ids = {c.subject for c in goal.constraints if isinstance(c.subject, int)}
        goal_ids |= {c.object for c in goal.constraints if isinstance(c.object, int)}
        candidates = [o for o in _tool_instances(s, cat) if o.id not in goal_ids]
        if kind.kind == "Unseen":
            candidates = [o for o in candidates if o.cls.token in kind.substitutions]
        if not candidates:
            raise NothingToPerturb("no eligible tool instance")
        victim = candidates[rng.randrange(len(candidates))]
        if kind.kind == "Unseen":
            new_cls = cat.object_class(kind.substitutions[victim.cls.token])
        else:
            pool = [c.cls for t, c in cat.classes.items()
                    if t not in cat.tools and t != "robot" and not c.cls.has("holdout")
                    and c.cls.has("movable")
                    and cat.category_of(t) != cat.category_of(victim.cls.token)]
            if not pool:
                raise NothingToPerturb("no unrelated class available")
            new_cls = pool[rng.randrange(len(pool))]
        _rename(s, victim, new_cls)
        return refresh_geometric_edges(s), goal

    # Goal: rebind one constraint's reference to a same-category alternative.
    options = []
    for ci, c in enumerate(goal.constraints):
        for slot in ("subject", "object"):
            ref = getattr(c, slot)
            if not isinstance(ref, int) or ref not in s.objects:
                continue
            token = s.objects[ref].cls.token
            category = cat.category_of(token)
            for alt_token, alt in cat.classes.items():
                if alt_token == token or alt.category != category or alt.cls.has("holdout"):
                    continue
                alternatives = s.instances_of(alt_token)
                if alternatives:
                    options.append((ci, slot, token, alt_token, alternatives[0].id))
    if not options:
        raise NothingToPerturb("no same-category alternative in scene")
    ci, slot, old_token, new_token, new_id = options[rng.randrange(len(options))]
    new_constraints = list(goal.constraints)
    c = new_constraints[ci]
    new_constraints[ci] = GoalConstraint(
        c.kind,
        new_id if slot == "subject" else c.subject,
        new_id if slot == "object" else c.object,
        c.predicate, c.value)
    if old_token in goal.text:
        text = goal.text.replace(old_token, new_token)
    else:
        text = "%s (%s instead of %s)" % (goal.text, new_token, old_token)
    return s, GoalSpec(tuple(new_constraints), text=text, template_id=goal.template_id)
