"""Shared schema validation for traces, actions, and states.

The teaching service and the CLI both run records through these checks, which
is what makes UI-taught traces and oracle traces interchangeable training
inputs: one validator, one schema.
"""

from __future__ import annotations

from typing import Mapping

from .actions import INTERACTIONS
from .domains import DomainCatalog
from .world import check_state_invariants, state_from_dict


class ValidationFailure(ValueError):
    pass


def check_action_wire(d: Mapping) -> None:
    if not isinstance(d, Mapping) or "name" not in d or "args" not in d:
        raise ValidationFailure("action must be {'name': ..., 'args': [...]}")
    name = d["name"]
    if name not in INTERACTIONS:
        raise ValidationFailure("unknown interaction %r" % (name,))
    args = d["args"]
    if not isinstance(args, (list, tuple)) or not all(isinstance(a, str) for a in args):
        raise ValidationFailure("args must be a list of object names")
    if len(args) != INTERACTIONS[name][0]:
        raise ValidationFailure("%s takes %d argument(s), got %d"
                                % (name, INTERACTIONS[name][0], len(args)))


def check_trace_record(record: Mapping, catalog: DomainCatalog) -> None:
    """Structural validation of one serialized demonstration trace."""
    if record.get("schema") != "trace/v1":
        raise ValidationFailure("unknown trace schema %r" % record.get("schema"))
    for key in ("trace_id", "domain", "scene_seed", "goal", "initial_state",
                "actions", "final_state", "success", "provenance"):
        if key not in record:
            raise ValidationFailure("trace record missing %r" % key)
    if record["domain"] != catalog.name:
        raise ValidationFailure("trace domain %r does not match catalog %r"
                                % (record["domain"], catalog.name))
    for a in record["actions"]:
        check_action_wire(a)
    for key in ("initial_state", "final_state"):
        try:
            state = state_from_dict(record[key], catalog.class_map())
        except Exception as exc:
            raise ValidationFailure("%s does not parse: %s" % (key, exc))
        problems = check_state_invariants(state)
        if problems:
            raise ValidationFailure("%s violates invariants: %s" % (key, "; ".join(problems)))
    goal = record["goal"]
    if not isinstance(goal.get("constraints"), list) or not goal["constraints"]:
        raise ValidationFailure("goal must carry a nonempty constraint list")
