"""Object-centric world state: geometry regions, relation predicates, goals.

The world is 2.5-D: positions live in R^3 with yaw-only orientation, and
vertical reachability is discretized into integer tiers. Relations follow the
box-arithmetic definitions: an object is Inside a container when its center
lies in the container's interior region, and OnTop of another when its center
is strictly higher and their manipulation regions overlap.

States are values: transition code copies, mutates the copy, then refreshes
derived edges. Nothing here mutates a state in place after construction.
"""

from __future__ import annotations

import json

import numpy as np
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

RELATION_KINDS = ("ConnectedTo", "Inside", "Near", "OnTop", "StuckTo")
GEOMETRIC_KINDS = ("Inside", "Near", "OnTop")

# Affordance flags carried by object classes. `always_open` marks containers
# without a lid; `combustible` marks fuel; `needs_fuel` gates switching on;
# `holdout` excludes a class from scene sampling (reserved for unseen tests).
KNOWN_AFFORDANCES = frozenset({
    "surface", "openable", "container", "operable", "climbable", "applicable",
    "cleanable", "cleaning_agent", "printable", "movable", "graspable",
    "always_open", "combustible", "needs_fuel", "holdout",
})

Vec3 = tuple[float, float, float]


class WorldError(Exception):
    pass


class NotAContainer(WorldError):
    pass


class UnknownObject(WorldError):
    pass


@dataclass(frozen=True)
class Geometry:
    """Region constants; catalog-overridable, recorded in every serialized state."""

    margin: float = 0.5        # horizontal expansion of the manipulation region
    shrink: float = 0.9        # containment region scale factor, in (0, 1)
    near_radius: float = 1.5   # max horizontal center distance for Near

    def to_dict(self) -> dict:
        return {"margin": self.margin, "shrink": self.shrink, "near_radius": self.near_radius}

    @staticmethod
    def from_dict(d: Mapping) -> "Geometry":
        return Geometry(margin=float(d.get("margin", 0.5)),
                        shrink=float(d.get("shrink", 0.9)),
                        near_radius=float(d.get("near_radius", 1.5)))


@dataclass(frozen=True)
class ObjectClass:
    token: str
    affordances: frozenset[str] = frozenset()
    default_extent: Vec3 = (0.3, 0.3, 0.3)
    supported_states: tuple[str, ...] = ()
    surface_tier: int = 0          # tier occupied by objects resting on this one
    operate_state: Optional[str] = None  # state this class sets on targets when used

    def has(self, flag: str) -> bool:
        return flag in self.affordances


@dataclass
class ObjectInstance:
    id: int
    cls: ObjectClass
    name: str
    position: Vec3
    yaw: float
    extent: Vec3
    state_vector: tuple[bool, ...]
    height_level: int = 0

    def copy(self) -> "ObjectInstance":
        return ObjectInstance(self.id, self.cls, self.name, self.position, self.yaw,
                              self.extent, self.state_vector, self.height_level)


@dataclass(frozen=True, order=True)
class RelationEdge:
    kind: str
    subject: int
    object: int


GoalRef = Union[int, str]  # instance id or class token


@dataclass(frozen=True)
class GoalConstraint:
    """One conjunct: a relation between refs, a state bit, or class absence."""

    kind: str                      # relation name, "state", or "absent"
    subject: GoalRef
    object: Optional[GoalRef] = None
    predicate: Optional[str] = None
    value: Optional[bool] = None

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind, "subject": self.subject}
        if self.object is not None:
            d["object"] = self.object
        if self.predicate is not None:
            d["predicate"] = self.predicate
        if self.value is not None:
            d["value"] = self.value
        return d

    @staticmethod
    def from_dict(d: Mapping) -> "GoalConstraint":
        return GoalConstraint(kind=d["kind"], subject=d["subject"], object=d.get("object"),
                              predicate=d.get("predicate"), value=d.get("value"))


@dataclass(frozen=True)
class GoalSpec:
    constraints: tuple[GoalConstraint, ...]
    text: str = ""
    template_id: str = ""

    def to_dict(self) -> dict:
        return {"text": self.text, "template_id": self.template_id,
                "constraints": [c.to_dict() for c in self.constraints]}

    @staticmethod
    def from_dict(d: Mapping) -> "GoalSpec":
        return GoalSpec(tuple(GoalConstraint.from_dict(c) for c in d["constraints"]),
                        text=d.get("text", ""), template_id=d.get("template_id", ""))


@dataclass
class WorldState:
    objects: dict[int, ObjectInstance]
    edges: frozenset[RelationEdge]
    robot: int
    robot_elevation: int = 0
    time_step: int = 0
    predicates: tuple[str, ...] = ()
    geometry: Geometry = field(default_factory=Geometry)

    def copy(self) -> "WorldState":
        return WorldState({oid: o.copy() for oid, o in self.objects.items()},
                          self.edges, self.robot, self.robot_elevation,
                          self.time_step, self.predicates, self.geometry)

    def shallow(self) -> "WorldState":
        """New state sharing instances; mutate only through copy-on-write."""
        return WorldState(dict(self.objects), self.edges, self.robot,
                          self.robot_elevation, self.time_step,
                          self.predicates, self.geometry)

    def obj(self, oid: int) -> ObjectInstance:
        try:
            return self.objects[oid]
        except KeyError:
            raise UnknownObject("no object with id %r" % (oid,))

    def by_name(self, name: str) -> ObjectInstance:
        for o in self.objects.values():
            if o.name == name:
                return o
        raise UnknownObject("no object named %r" % (name,))

    def instances_of(self, token: str) -> list[ObjectInstance]:
        return sorted((o for o in self.objects.values() if o.cls.token == token),
                      key=lambda o: o.id)

    def state_of(self, oid: int, predicate: str) -> bool:
        o = self.obj(oid)
        try:
            return o.state_vector[self.predicates.index(predicate)]
        except ValueError:
            return False

    def held_object(self) -> Optional[int]:
        for e in self.edges:
            if e.kind == "ConnectedTo" and e.object == self.robot:
                return e.subject
        return None

    def inside_parent(self, oid: int) -> Optional[int]:
        for e in self.edges:
            if e.kind == "Inside" and e.subject == oid:
                return e.object
        return None

    def contents(self, oid: int, transitive: bool = True) -> list[int]:
        direct = sorted(e.subject for e in self.edges if e.kind == "Inside" and e.object == oid)
        if not transitive:
            return direct
        out: list[int] = []
        queue = list(direct)
        while queue:
            c = queue.pop(0)
            out.append(c)
            queue.extend(self.contents(c, transitive=False))
        return out


# --- region geometry -------------------------------------------------------

Box = tuple[Vec3, Vec3]  # (lo, hi), axis-aligned


def bounding_box(obj: ObjectInstance) -> Box:
    x, y, z = obj.position
    ex, ey, ez = obj.extent
    return ((x - ex / 2, y - ey / 2, z - ez / 2), (x + ex / 2, y + ey / 2, z + ez / 2))


def manipulation_region(obj: ObjectInstance, margin: float = 0.5) -> Box:
    """Bounding box grown by `margin` on each horizontal side and 2*margin of
    headroom above; the underside stays flush so the region never dips below
    the object base."""
    (x0, y0, z0), (x1, y1, z1) = bounding_box(obj)
    return ((x0 - margin, y0 - margin, z0), (x1 + margin, y1 + margin, z1 + 2 * margin))


def containment_region(obj: ObjectInstance, shrink: float = 0.9) -> Box:
    if not obj.cls.has("container"):
        raise NotAContainer("%s is not a container" % obj.name)
    x, y, z = obj.position
    ex, ey, ez = (e * shrink for e in obj.extent)
    return ((x - ex / 2, y - ey / 2, z - ez / 2), (x + ex / 2, y + ey / 2, z + ez / 2))


def boxes_intersect(a: Box, b: Box) -> bool:
    return all(a[0][i] <= b[1][i] and b[0][i] <= a[1][i] for i in range(3))


def box_contains(box: Box, p: Vec3) -> bool:
    return all(box[0][i] <= p[i] <= box[1][i] for i in range(3))


def _horizontal_distance(a: ObjectInstance, b: ObjectInstance) -> float:
    dx = a.position[0] - b.position[0]
    dy = a.position[1] - b.position[1]
    return (dx * dx + dy * dy) ** 0.5


def eval_relation(state: WorldState, kind: str, a: int, b: int) -> bool:
    """Pure relation test: geometric for Inside/OnTop/Near, symbolic otherwise."""
    oa, ob = state.obj(a), state.obj(b)
    g = state.geometry
    if kind == "Inside":
        if not ob.cls.has("container"):
            return False
        return box_contains(containment_region(ob, g.shrink), oa.position)
    if kind == "OnTop":
        return (oa.position[2] > ob.position[2]
                and boxes_intersect(manipulation_region(oa, g.margin),
                                    manipulation_region(ob, g.margin)))
    if kind == "Near":
        return _horizontal_distance(oa, ob) <= g.near_radius
    if kind in ("ConnectedTo", "StuckTo"):
        return RelationEdge(kind, a, b) in state.edges
    raise WorldError("unknown relation kind %r" % (kind,))


def _bbox_volume(obj: ObjectInstance) -> float:
    ex, ey, ez = obj.extent
    return ex * ey * ez


def holds(state: WorldState, kind: str, a: int, b: int) -> bool:
    """Relation as the simulator understands it: a grasped object counts as
    connected to the gripper, not as placed, so it is never Inside/OnTop."""
    if kind in ("Inside", "OnTop") and state.held_object() == a:
        return False
    return eval_relation(state, kind, a, b)


def geometric_inside_parent(state: WorldState, oid: int) -> Optional[int]:
    """Unique containment parent: the smallest enclosing container, with the
    strictly-decreasing-volume rule (ties by id) keeping containment acyclic."""
    oa = state.obj(oid)
    va = _bbox_volume(oa)
    best: Optional[int] = None
    best_vol = float("inf")
    for b, ob in state.objects.items():
        if b == oid or not ob.cls.has("container"):
            continue
        vb = _bbox_volume(ob)
        if not (vb > va or (vb == va and b < oid)):
            continue
        if box_contains(containment_region(ob, state.geometry.shrink), oa.position):
            if vb < best_vol or (vb == best_vol and b < best):
                best, best_vol = b, vb
    return best


def refresh_geometric_edges(state: WorldState) -> WorldState:
    """Recompute Inside/OnTop/Near edges from geometry; keep symbolic edges.

    Held objects never receive Inside/OnTop edges (the gripper, not the
    geometry, owns them). Near is stored once per pair, lower id first.
    """
    kept = frozenset(e for e in state.edges if e.kind in ("ConnectedTo", "StuckTo"))
    new_edges = set(kept)
    ids = sorted(state.objects)
    n = len(ids)
    held = state.held_object()
    g = state.geometry
    pos = np.array([state.objects[i].position for i in ids])
    ext = np.array([state.objects[i].extent for i in ids])
    half = ext / 2
    mlo = (pos - half) - np.array([g.margin, g.margin, 0.0])
    mhi = (pos + half) + np.array([g.margin, g.margin, 2 * g.margin])
    overlap = ((mlo[:, None, :] <= mhi[None, :, :]) & (mlo[None, :, :] <= mhi[:, None, :])).all(axis=2)
    ontop = (pos[:, None, 2] > pos[None, :, 2]) & overlap
    dx = pos[:, None, 0] - pos[None, :, 0]
    dy = pos[:, None, 1] - pos[None, :, 1]
    near = (dx * dx + dy * dy) ** 0.5 <= g.near_radius
    np.fill_diagonal(ontop, False)
    np.fill_diagonal(near, False)
    held_row = ids.index(held) if held in state.objects else None
    if held_row is not None:
        ontop[held_row, :] = False
    for i, j in zip(*np.nonzero(ontop)):
        new_edges.add(RelationEdge("OnTop", ids[i], ids[j]))
    for i, j in zip(*np.nonzero(near)):
        if ids[i] < ids[j]:
            new_edges.add(RelationEdge("Near", ids[i], ids[j]))
    for oid in ids:
        if oid == held:
            continue
        parent = geometric_inside_parent(state, oid)
        if parent is not None:
            new_edges.add(RelationEdge("Inside", oid, parent))
    return replace_edges(state, frozenset(new_edges))


def replace_edges(state: WorldState, edges: frozenset[RelationEdge]) -> WorldState:
    out = state.copy()
    out.edges = edges
    return out


# --- goal checking ---------------------------------------------------------

def _candidates(state: WorldState, ref: GoalRef) -> list[int]:
    if isinstance(ref, int):
        return [ref] if ref in state.objects else []
    return [o.id for o in state.instances_of(ref)]


def constraint_holds(state: WorldState, c: GoalConstraint) -> bool:
    if c.kind == "absent":
        return not _candidates(state, c.subject)
    subjects = _candidates(state, c.subject)
    if c.kind == "state":
        want = bool(c.value)
        return any(state.state_of(a, c.predicate) == want for a in subjects)
    objects = _candidates(state, c.object)
    for a in subjects:          # lowest-id witness by construction
        for b in objects:
            if a != b and holds(state, c.kind, a, b):
                return True
    return False


def goal_check(state: WorldState, goal: GoalSpec) -> bool:
    return all(constraint_holds(state, c) for c in goal.constraints)


def unsatisfied_count(state: WorldState, goal: GoalSpec) -> int:
    return sum(0 if constraint_holds(state, c) else 1 for c in goal.constraints)


# --- canonical serialization -----------------------------------------------

def _clean_float(x: float) -> float:
    x = float(x)
    return 0.0 if x == 0.0 else x  # fold -0.0 into 0.0


def state_to_dict(state: WorldState) -> dict:
    objs = []
    for oid in sorted(state.objects):
        o = state.objects[oid]
        active = sorted(p for p, bit in zip(state.predicates, o.state_vector) if bit)
        objs.append({
            "id": o.id,
            "class": o.cls.token,
            "name": o.name,
            "position": [_clean_float(v) for v in o.position],
            "yaw": _clean_float(o.yaw),
            "extent": [_clean_float(v) for v in o.extent],
            "states": active,
            "tier": o.height_level,
        })
    edges = sorted([e.kind, e.subject, e.object] for e in state.edges)
    return {
        "objects": objs,
        "edges": edges,
        "robot": state.robot,
        "robot_elevation": state.robot_elevation,
        "time_step": state.time_step,
        "predicates": list(state.predicates),
        "geometry": state.geometry.to_dict(),
    }


def state_to_json(state: WorldState) -> str:
    return json.dumps(state_to_dict(state), sort_keys=True, separators=(",", ":"))


def state_from_dict(d: Mapping, classes: Mapping[str, ObjectClass]) -> WorldState:
    predicates = tuple(d["predicates"])
    objects: dict[int, ObjectInstance] = {}
    for od in d["objects"]:
        cls = classes[od["class"]]
        bits = tuple(p in set(od["states"]) for p in predicates)
        objects[od["id"]] = ObjectInstance(
            id=od["id"], cls=cls, name=od["name"],
            position=tuple(float(v) for v in od["position"]),
            yaw=float(od["yaw"]),
            extent=tuple(float(v) for v in od["extent"]),
            state_vector=bits, height_level=int(od["tier"]))
    edges = frozenset(RelationEdge(k, s, o) for k, s, o in d["edges"])
    return WorldState(objects=objects, edges=edges, robot=d["robot"],
                      robot_elevation=d["robot_elevation"], time_step=d["time_step"],
                      predicates=predicates, geometry=Geometry.from_dict(d["geometry"]))


def state_key(state: WorldState) -> tuple:
    """Hashable canonical form for duplicate-state pruning during search."""
    objs = tuple(
        (o.id, o.cls.token,
         tuple(round(v, 9) for v in o.position), round(o.yaw, 9),
         o.state_vector, o.height_level)
        for o in (state.objects[i] for i in sorted(state.objects)))
    return (objs, tuple(sorted((e.kind, e.subject, e.object) for e in state.edges)),
            state.robot_elevation)


def check_state_invariants(state: WorldState) -> list[str]:
    """Structural checks used by tests and the trace validator; returns problems."""
    problems = []
    if state.robot not in state.objects:
        problems.append("robot id missing")
    p = len(state.predicates)
    for o in state.objects.values():
        if len(o.state_vector) != p:
            problems.append("%s: state vector length %d != %d" % (o.name, len(o.state_vector), p))
        for pred, bit in zip(state.predicates, o.state_vector):
            if bit and pred not in o.cls.supported_states:
                problems.append("%s: unsupported state %s set" % (o.name, pred))
        if any(e <= 0 for e in o.extent):
            problems.append("%s: non-positive extent" % o.name)
    grips = 0
    inside_parents: dict[int, int] = {}
    for e in state.edges:
        if e.subject not in state.objects or e.object not in state.objects:
            problems.append("edge endpoint missing: %r" % (e,))
            continue
        if e.subject == e.object:
            problems.append("self edge: %r" % (e,))
        if e.kind == "ConnectedTo" and e.object == state.robot:
            grips += 1
        if e.kind == "Inside":
            if not state.objects[e.object].cls.has("container"):
                problems.append("Inside edge into non-container %r" % (e,))
            if e.subject in inside_parents:
                problems.append("object %d has two Inside parents" % e.subject)
            inside_parents[e.subject] = e.object
    if grips > 1:
        problems.append("%d objects connected to the robot" % grips)
    seen: set[int] = set()
    for start in inside_parents:
        chain = set()
        node = start
        while node in inside_parents:
            if node in chain:
                problems.append("containment cycle through %d" % node)
                break
            chain.add(node)
            node = inside_parents[node]
        seen |= chain
    return problems
