"""Symbolic action grammar: preconditions, effects, stochastic transitions.

Seventeen interaction types with arity 1 or 2. Effects are coarse and
symbolic: poses snap to deterministic slots, elevation is a tier counter.
Grasp, attachment, and containment edges are maintained incrementally by the
effects themselves; derived OnTop/Near edges come from the geometric refresh
that closes every public transition. The planner skips that refresh (every
check it needs is geometric or incrementally maintained), which is what makes
search affordable.

Rejection is an outcome, not an exception; a rejected transition returns the
input state untouched.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .world import (
    GoalSpec, ObjectInstance, RelationEdge, WorldState, geometric_inside_parent,
    holds, manipulation_region, refresh_geometric_edges,
)

REACH = 1              # tiers the gripper spans above the robot's elevation
PUSH_CELL = 1.0        # metres an object slides per push
APPROACH_GAP = 0.2     # clearance between robot and target boxes; keeps the
                       # robot inside the target's manipulation region margin
CARRY_CLEARANCE = 0.1  # held object rides this far above the robot frame

REJECTION_REASONS = (
    "ObjectUnreachable", "ObjectEnclosed", "GripperBusy", "GripperEmpty",
    "NotAffordance", "ElevationMismatch", "ArityMismatch",
)

# name -> (arity, argument the robot must be near and able to reach, or None)
INTERACTIONS: dict[str, tuple[int, Optional[int]]] = {
    "moveTo": (1, None),
    "pick": (1, 0),
    "drop": (1, None),
    "placeOn": (2, 1),
    "placeInside": (2, 1),
    "open": (1, 0),
    "close": (1, 0),
    "switchOn": (1, 0),
    "switchOff": (1, 0),
    "climbUp": (1, 0),
    "climbDown": (1, 0),
    "push": (1, 0),
    "clean": (1, 0),
    "apply": (1, 0),
    "stick": (2, 1),
    "fuel": (2, 0),
    "operate": (2, 1),
}

INTERACTION_NAMES = tuple(sorted(INTERACTIONS))


@dataclass(frozen=True)
class SymbolicAction:
    interaction: str
    o1: int
    o2: Optional[int] = None

    def arity(self) -> int:
        return INTERACTIONS[self.interaction][0]

    def to_wire(self, state: WorldState) -> dict:
        args = [state.obj(self.o1).name]
        if self.o2 is not None:
            args.append(state.obj(self.o2).name)
        return {"name": self.interaction, "args": args}

    @staticmethod
    def from_wire(d: Mapping, state: WorldState) -> "SymbolicAction":
        args = [state.by_name(a).id for a in d["args"]]
        return SymbolicAction(d["name"], args[0], args[1] if len(args) > 1 else None)


@dataclass(frozen=True)
class TransitionOutcome:
    status: str                      # Applied | AppliedWithPerturbation | Rejected
    next_state: WorldState
    reason: Optional[str] = None
    perturbed: Optional[int] = None  # object id that slipped, when perturbed

    @property
    def applied(self) -> bool:
        return self.status != "Rejected"


def _enclosing_closed_container(state: WorldState, oid: int) -> Optional[int]:
    node = state.inside_parent(oid)
    while node is not None:
        cls = state.obj(node).cls
        if cls.has("openable") and not cls.has("always_open") and not state.state_of(node, "open"):
            return node
        node = state.inside_parent(node)
    return None


def _is_stuck(state: WorldState, oid: int) -> bool:
    return any(e.kind == "StuckTo" and e.subject == oid for e in state.edges)


def _surface_tier(obj: ObjectInstance) -> int:
    return obj.cls.surface_tier if obj.cls.has("surface") else obj.height_level


def _volume(obj: ObjectInstance) -> float:
    ex, ey, ez = obj.extent
    return ex * ey * ez


def preconditions(state: WorldState, action: SymbolicAction) -> Optional[str]:
    """Return None when applicable, otherwise the rejection reason.

    Static requirements (affordances, gripper, enclosure, state bits) are
    checked before nearness/reach, so the reported reason names the blocker a
    moveTo cannot fix whenever there is one."""
    reason = _static_preconditions(state, action)
    if reason is not None:
        return reason
    return _proximity_preconditions(state, action)


def _proximity_preconditions(state: WorldState, action: SymbolicAction) -> Optional[str]:
    name = action.interaction
    _, near_arg = INTERACTIONS[name]
    if near_arg is None:
        return None
    target = state.obj(action.o1 if near_arg == 0 else action.o2)
    if not holds(state, "Near", state.robot, target.id):
        return "ObjectUnreachable"
    tier = _surface_tier(target) if name == "placeOn" else target.height_level
    if name not in ("climbUp", "climbDown", "push") and state.robot_elevation + REACH < tier:
        return "ObjectUnreachable"
    return None


def _static_preconditions(state: WorldState, action: SymbolicAction) -> Optional[str]:
    name = action.interaction
    if name not in INTERACTIONS:
        return "ArityMismatch"
    arity, _ = INTERACTIONS[name]
    if (action.o2 is None) != (arity == 1):
        return "ArityMismatch"
    args = [action.o1] if action.o2 is None else [action.o1, action.o2]
    for a in args:
        if a not in state.objects or a == state.robot:
            return "ArityMismatch"
    if arity == 2 and action.o1 == action.o2:
        return "ArityMismatch"
    o1 = state.obj(action.o1)
    o2 = state.obj(action.o2) if action.o2 is not None else None
    held = state.held_object()

    if name == "moveTo":
        return None
    if name == "pick":
        if not o1.cls.has("graspable"):
            return "NotAffordance"
        if _is_stuck(state, o1.id):
            return "NotAffordance"
        if held is not None:
            return "GripperBusy"
        if _enclosing_closed_container(state, o1.id) is not None:
            return "ObjectEnclosed"
        return None
    if name == "drop":
        return None if held == o1.id else "GripperEmpty"
    if name == "placeOn":
        if held != o1.id:
            return "GripperEmpty"
        if not o2.cls.has("surface"):
            return "NotAffordance"
        return None
    if name == "placeInside":
        if held != o1.id:
            return "GripperEmpty"
        if not o2.cls.has("container"):
            return "NotAffordance"
        if _volume(o1) >= _volume(o2):
            return "NotAffordance"
        if o2.cls.has("openable") and not o2.cls.has("always_open") and not state.state_of(o2.id, "open"):
            return "ObjectEnclosed"
        if _enclosing_closed_container(state, o2.id) is not None:
            return "ObjectEnclosed"
        return None
    if name in ("open", "close"):
        if not o1.cls.has("openable") or o1.cls.has("always_open"):
            return "NotAffordance"
        if _enclosing_closed_container(state, o1.id) is not None:
            return "ObjectEnclosed"
        if (name == "open") == state.state_of(o1.id, "open"):
            return "NotAffordance"
        return None
    if name in ("switchOn", "switchOff"):
        if not o1.cls.has("operable") or "on" not in o1.cls.supported_states:
            return "NotAffordance"
        if name == "switchOn" and o1.cls.has("needs_fuel") and not state.state_of(o1.id, "fueled"):
            return "NotAffordance"
        if (name == "switchOn") == state.state_of(o1.id, "on"):
            return "NotAffordance"
        return None
    if name == "climbUp":
        if not o1.cls.has("climbable"):
            return "NotAffordance"
        if state.robot_elevation != 0:
            return "ElevationMismatch"
        return None
    if name == "climbDown":
        if not o1.cls.has("climbable"):
            return "NotAffordance"
        if state.robot_elevation == 0:
            return "ElevationMismatch"
        return None
    if name == "push":
        if not o1.cls.has("movable") or o1.cls.has("graspable"):
            return "NotAffordance"
        return None
    if name == "clean":
        if not o1.cls.has("cleanable"):
            return "NotAffordance"
        if held is None:
            return "GripperEmpty"
        if not state.obj(held).cls.has("cleaning_agent"):
            return "NotAffordance"
        return None
    if name == "apply":
        if held is None:
            return "GripperEmpty"
        if not state.obj(held).cls.has("applicable"):
            return "NotAffordance"
        if "sticky" not in o1.cls.supported_states or state.state_of(o1.id, "sticky"):
            return "NotAffordance"
        return None
    if name == "stick":
        if held != o1.id:
            return "GripperEmpty"
        if not state.state_of(o1.id, "sticky"):
            return "NotAffordance"
        return None
    if name == "fuel":
        if "fueled" not in o1.cls.supported_states or state.state_of(o1.id, "fueled"):
            return "NotAffordance"
        if held != (o2.id if o2 else None):
            return "GripperEmpty"
        if not o2.cls.has("combustible"):
            return "NotAffordance"
        return None
    if name == "operate":
        if held != o1.id:
            return "GripperEmpty"
        effect = o1.cls.operate_state
        if not o1.cls.has("operable") or effect is None:
            return "NotAffordance"
        if effect not in o2.cls.supported_states or state.state_of(o2.id, effect):
            return "NotAffordance"
        return None
    return "ArityMismatch"


# --- copy-on-write effect helpers --------------------------------------------

def _mut(state: WorldState, fresh: set[int], oid: int) -> ObjectInstance:
    o = state.objects[oid]
    if oid not in fresh:
        o = o.copy()
        state.objects[oid] = o
        fresh.add(oid)
    return o


def _translate(state: WorldState, fresh: set[int], oid: int,
               delta: tuple[float, float, float], tier: Optional[int] = None) -> None:
    o = _mut(state, fresh, oid)
    o.position = (o.position[0] + delta[0], o.position[1] + delta[1], o.position[2] + delta[2])
    if tier is not None:
        o.height_level = tier


def _set_state(state: WorldState, fresh: set[int], oid: int, predicate: str, value: bool) -> None:
    o = _mut(state, fresh, oid)
    idx = state.predicates.index(predicate)
    bits = list(o.state_vector)
    bits[idx] = value
    o.state_vector = tuple(bits)


def _drop_edges(state: WorldState, oid: int, kinds: tuple[str, ...]) -> None:
    state.edges = frozenset(e for e in state.edges
                            if not (e.subject == oid and e.kind in kinds))


def _reparent(state: WorldState, oid: int) -> None:
    """Re-derive the containment edge of a (re)positioned, unheld object."""
    _drop_edges(state, oid, ("Inside",))
    parent = geometric_inside_parent(state, oid)
    if parent is not None:
        state.edges = state.edges | {RelationEdge("Inside", oid, parent)}


def _capture_bystanders(state: WorldState, container_id: int) -> None:
    """A container moved: objects whose centers now fall in its interior get
    re-parented, keeping incremental containment equal to the geometric rule."""
    if not state.objects[container_id].cls.has("container"):
        return
    inside = set(state.contents(container_id))
    held = state.held_object()
    for oid in sorted(state.objects):
        if oid in inside or oid in (container_id, state.robot, held):
            continue
        parent = geometric_inside_parent(state, oid)
        current = state.inside_parent(oid)
        if parent != current:
            _drop_edges(state, oid, ("Inside",))
            if parent is not None:
                state.edges = state.edges | {RelationEdge("Inside", oid, parent)}


def _relocate(state: WorldState, fresh: set[int], oid: int,
              new_pos: tuple[float, float, float], tier: int) -> None:
    """Move an object and everything it contains; containment follows."""
    o = state.objects[oid]
    delta = (new_pos[0] - o.position[0], new_pos[1] - o.position[1], new_pos[2] - o.position[2])
    contents = state.contents(oid)
    _translate(state, fresh, oid, delta, tier)
    for c in contents:
        _translate(state, fresh, c, delta, tier)
    if state.held_object() != oid:
        _reparent(state, oid)
    _capture_bystanders(state, oid)


def _slot_offset(oid: int, span_x: float, span_y: float) -> tuple[float, float]:
    """Deterministic lateral slot inside a support, spread by id hashing."""
    fx = (oid * 0.6180339887498949) % 1.0 - 0.5
    fy = (oid * 0.3819660112501051) % 1.0 - 0.5
    return fx * span_x, fy * span_y


def _settle_pose(state: WorldState, obj: ObjectInstance, x: float, y: float,
                 exclude: set[int], max_top: float) -> tuple[tuple[float, float, float], int]:
    """Landing pose at (x, y): on the highest surface whose manipulation
    region spans the point, else the notional floor plane. Objects fall, so
    surfaces topping out above the object's current center are not supports."""
    best_top, best_tier = 0.0, 0
    held = state.held_object()
    for c in state.objects.values():
        if c.id in exclude or c.id == obj.id or c.id == state.robot or c.id == held:
            continue
        if not c.cls.has("surface"):
            continue
        top = c.position[2] + c.extent[2] / 2
        if top > max_top:
            continue
        mr = manipulation_region(c, state.geometry.margin)
        if mr[0][0] <= x <= mr[1][0] and mr[0][1] <= y <= mr[1][1]:
            if top > best_top:
                best_top, best_tier = top, c.cls.surface_tier
    return (x, y, best_top + obj.extent[2] / 2), best_tier


def _rests_on(b: ObjectInstance, support: ObjectInstance) -> bool:
    """Geometric contact test: b's base sits on support's top face."""
    top = support.position[2] + support.extent[2] / 2
    base = b.position[2] - b.extent[2] / 2
    if abs(base - top) > 0.02:
        return False
    return (abs(b.position[0] - support.position[0]) <= support.extent[0] / 2
            and abs(b.position[1] - support.position[1]) <= support.extent[1] / 2)


def _resettle_dependents(state: WorldState, fresh: set[int], moved: int,
                         carried: set[int]) -> None:
    """Objects that were resting directly on a lifted object drop back down."""
    src = state.objects[moved]
    held = state.held_object()
    for b in list(state.objects.values()):
        if b.id in carried or b.id in (moved, state.robot, held):
            continue
        if not _rests_on(b, src):
            continue
        pos, tier = _settle_pose(state, b, b.position[0], b.position[1],
                                 exclude={moved}, max_top=b.position[2])
        _relocate(state, fresh, b.id, pos, tier)


def _carry_position(state: WorldState, obj: ObjectInstance) -> tuple[float, float, float]:
    r = state.objects[state.robot]
    return (r.position[0], r.position[1],
            r.position[2] + r.extent[2] / 2 + CARRY_CLEARANCE + obj.extent[2] / 2)


def _adjacent_pose(robot: ObjectInstance, target: ObjectInstance) -> tuple[float, float, float]:
    axis = 0 if target.extent[0] <= target.extent[1] else 1
    sign = 1.0 if robot.position[axis] >= target.position[axis] else -1.0
    dist = target.extent[axis] / 2 + robot.extent[axis] / 2 + APPROACH_GAP
    pos = list(target.position)
    pos[axis] = target.position[axis] + sign * dist
    pos[2] = robot.position[2]
    pos[1 - axis] = target.position[1 - axis]
    return (pos[0], pos[1], pos[2])


def _shed(state: WorldState, fresh: set[int], oid: int) -> None:
    """Detach an object at the robot's feet and let it settle onto a support."""
    o = state.objects[oid]
    r = state.objects[state.robot]
    carried = set(state.contents(oid))
    state.edges = frozenset(e for e in state.edges
                            if not (e.kind == "ConnectedTo" and e.subject == oid)
                            and not (e.kind == "Inside" and e.subject == oid))
    pos, tier = _settle_pose(state, o, r.position[0], r.position[1],
                             exclude=carried | {oid}, max_top=o.position[2])
    _relocate(state, fresh, oid, pos, tier)


def apply(state: WorldState, action: SymbolicAction, drop_prob: float = 0.0,
          rng: Optional[random.Random] = None, refresh: bool = True) -> TransitionOutcome:
    """Transition function: check preconditions, apply effects, refresh edges.

    With probability `drop_prob` a successful pick or carrying move sheds the
    held object (or one item it contains) at the robot's feet. `refresh=False`
    skips the final geometric edge refresh; search uses it because everything
    it consults is either geometric or incrementally maintained.
    """
    reason = preconditions(state, action)
    if reason is not None:
        return TransitionOutcome("Rejected", state, reason=reason)

    s = state.shallow()
    fresh: set[int] = set()
    name = action.interaction
    o1_id = action.o1
    o2 = s.objects[action.o2] if action.o2 is not None else None
    held_before = s.held_object()

    if name == "moveTo":
        robot = _mut(s, fresh, s.robot)
        target = s.objects[o1_id]
        new_pos = _adjacent_pose(robot, target)
        delta = (new_pos[0] - robot.position[0], new_pos[1] - robot.position[1], 0.0)
        robot.yaw = math.atan2(target.position[1] - robot.position[1],
                               target.position[0] - robot.position[0])
        robot.position = new_pos
        s.robot_elevation = 0
        if held_before is not None:
            contents = s.contents(held_before)
            _translate(s, fresh, held_before, delta, tier=0)
            for c in contents:
                _translate(s, fresh, c, delta, tier=0)
    elif name == "pick":
        carried = set(s.contents(o1_id))
        _drop_edges(s, o1_id, ("Inside", "OnTop"))
        s.edges = s.edges | {RelationEdge("ConnectedTo", o1_id, s.robot)}
        _resettle_dependents(s, fresh, o1_id, carried)
        _relocate(s, fresh, o1_id, _carry_position(s, s.objects[o1_id]), s.robot_elevation)
    elif name == "drop":
        _shed(s, fresh, o1_id)
    elif name == "placeOn":
        _drop_edges(s, o1_id, ("ConnectedTo",))
        ox, oy = _slot_offset(o1_id, o2.extent[0] * 0.5, o2.extent[1] * 0.5)
        top = o2.position[2] + o2.extent[2] / 2
        o1 = s.objects[o1_id]
        pos = (o2.position[0] + ox, o2.position[1] + oy, top + o1.extent[2] / 2)
        _relocate(s, fresh, o1_id, pos, o2.cls.surface_tier)
    elif name == "placeInside":
        _drop_edges(s, o1_id, ("ConnectedTo",))
        shrink = s.geometry.shrink
        ox, oy = _slot_offset(o1_id, o2.extent[0] * shrink * 0.5, o2.extent[1] * shrink * 0.5)
        pos = (o2.position[0] + ox, o2.position[1] + oy, o2.position[2])
        _relocate(s, fresh, o1_id, pos, o2.height_level)
    elif name in ("open", "close", "switchOn", "switchOff"):
        pred = "open" if name in ("open", "close") else "on"
        _set_state(s, fresh, o1_id, pred, name in ("open", "switchOn"))
    elif name == "climbUp":
        s.robot_elevation = s.objects[o1_id].height_level + 1
    elif name == "climbDown":
        s.robot_elevation = 0
    elif name == "push":
        o1 = s.objects[o1_id]
        robot = s.objects[s.robot]
        dx = o1.position[0] - robot.position[0]
        dy = o1.position[1] - robot.position[1]
        norm = math.hypot(dx, dy)
        ux, uy = (1.0, 0.0) if norm == 0 else (dx / norm, dy / norm)
        new_pos = (o1.position[0] + ux * PUSH_CELL, o1.position[1] + uy * PUSH_CELL,
                   o1.position[2])
        _relocate(s, fresh, o1_id, new_pos, o1.height_level)
    elif name == "clean":
        doomed = {o1_id} | set(s.contents(o1_id))
        for oid in doomed:
            del s.objects[oid]
        s.edges = frozenset(e for e in s.edges
                            if e.subject not in doomed and e.object not in doomed)
    elif name == "apply":
        _set_state(s, fresh, o1_id, "sticky", True)
    elif name == "stick":
        _drop_edges(s, o1_id, ("ConnectedTo",))
        s.edges = s.edges | {RelationEdge("StuckTo", o1_id, o2.id)}
        pos = _adjacent_pose(s.objects[o1_id], o2)
        _relocate(s, fresh, o1_id, (pos[0], pos[1], o2.position[2]), o2.height_level)
    elif name == "fuel":
        _set_state(s, fresh, o1_id, "fueled", True)
    elif name == "operate":
        _set_state(s, fresh, o2.id, s.objects[o1_id].cls.operate_state, True)

    status = "Applied"
    perturbed = None
    if drop_prob > 0.0 and name in ("pick", "moveTo"):
        held = s.held_object()
        if held is not None:
            r = rng if isinstance(rng, random.Random) else random.Random(rng)
            if r.random() < drop_prob:
                candidates = [held] + s.contents(held)
                victim = candidates[r.randrange(len(candidates))]
                _shed(s, fresh, victim)
                status = "AppliedWithPerturbation"
                perturbed = victim

    s.time_step += 1
    if refresh:
        s = refresh_geometric_edges(s)
    return TransitionOutcome(status, s, perturbed=perturbed)


def enumerate_applicable(state: WorldState) -> list[SymbolicAction]:
    """Every action whose preconditions pass, in (name, o1, o2) order."""
    out: list[SymbolicAction] = []
    ids = sorted(oid for oid in state.objects if oid != state.robot)
    for name in INTERACTION_NAMES:
        arity, _ = INTERACTIONS[name]
        for a in ids:
            if arity == 1:
                act = SymbolicAction(name, a)
                if preconditions(state, act) is None:
                    out.append(act)
            else:
                for b in ids:
                    if b == a:
                        continue
                    act = SymbolicAction(name, a, b)
                    if preconditions(state, act) is None:
                        out.append(act)
    return out


def replay(state: WorldState, actions: Iterable[SymbolicAction],
           goal: Optional[GoalSpec] = None) -> tuple[WorldState, bool]:
    """Deterministically re-execute a plan; returns (final state, all applied)."""
    ok = True
    for a in actions:
        outcome = apply(state, a, drop_prob=0.0)
        if not outcome.applied:
            ok = False
        state = outcome.next_state
    return state, ok
