"""Session service backing the teaching interface.

JSON over HTTP. A session owns one scene plus one goal; the client submits
symbolic actions one at a time, the simulator applies them, and the view the
client renders is derived purely from the canonical world state. Actions
within one session are serialized by a per-session lock; sessions are
independent. Finishing a session persists a demonstration trace in exactly
the oracle trace schema, so taught data feeds the trainer unchanged.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles

from .actions import INTERACTIONS, SymbolicAction, apply, enumerate_applicable
from .domains import DomainCatalog, MissingClass, instantiate_goal, load_catalog, sample_scene
from .estimator import ToolPolicyEstimator
from .oracle import DemonstrationTrace
from .policy import HistoryItem
from .validation import check_action_wire
from .world import GoalSpec, WorldState, goal_check

DEFAULT_TIMER_SECONDS = 600  # advisory countdown; sessions are never force-closed


@dataclass
class Session:
    id: str
    catalog: DomainCatalog
    scene_seed: int
    goal: GoalSpec
    initial_state: WorldState
    state: WorldState
    started: float
    timer_seconds: int = DEFAULT_TIMER_SECONDS
    status: str = "active"                    # active | goal_reached | abandoned
    actions: list[SymbolicAction] = field(default_factory=list)
    log: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_outcome: Optional[dict] = None

    def history(self) -> list[HistoryItem]:
        return [(e["action"]["name"],
                 e["tokens"][0] if e["tokens"] else None,
                 e["tokens"][1] if len(e["tokens"]) > 1 else None)
                for e in self.log]

    def view(self) -> dict:
        objects = []
        for oid in sorted(self.state.objects):
            o = self.state.objects[oid]
            if oid == self.state.robot:
                tier = self.state.robot_elevation
            else:
                tier = o.height_level
            active = [p for p, bit in zip(self.state.predicates, o.state_vector) if bit]
            objects.append({
                "id": o.id, "name": o.name, "class": o.cls.token,
                "position": [round(v, 4) for v in o.position],
                "extent": list(o.extent), "tier": tier, "states": active,
                "affordances": sorted(o.cls.affordances),
                "is_robot": oid == self.state.robot,
            })
        name_of = {o.id: o.name for o in self.state.objects.values()}
        relations = sorted([e.kind, name_of[e.subject], name_of[e.object]]
                           for e in self.state.edges)
        remaining = max(0, self.timer_seconds - int(time.time() - self.started))
        return {
            "session_id": self.id,
            "domain": self.catalog.name,
            "scene_seed": self.scene_seed,
            "goal_text": self.goal.text,
            "goal": self.goal.to_dict(),
            "goal_reached": self.status == "goal_reached",
            "status": self.status,
            "timer_remaining": remaining,
            "room": list(self.catalog.room),
            "objects": objects,
            "relations": relations,
            "history": list(self.log),
            "last_outcome": self.last_outcome,
            "time_step": self.state.time_step,
        }


def create_app(trace_dir: str | Path = "traces", checkpoint: Optional[str] = None,
               static_dir: Optional[str] = None,
               timer_seconds: int = DEFAULT_TIMER_SECONDS) -> FastAPI:
    app = FastAPI(title="tool-use teaching service")
    sessions: dict[str, Session] = {}
    catalogs: dict[str, DomainCatalog] = {}
    estimators: dict[str, ToolPolicyEstimator] = {}
    trace_dir = Path(trace_dir)

    def catalog_for(domain: str) -> DomainCatalog:
        if domain not in catalogs:
            try:
                catalogs[domain] = load_catalog(domain)
            except Exception:
                raise HTTPException(404, "unknown domain %r" % domain)
        return catalogs[domain]

    def get_session(session_id: str) -> Session:
        s = sessions.get(session_id)
        if s is None:
            raise HTTPException(404, "unknown session %r" % session_id)
        return s

    def estimator_for(domain: str) -> Optional[ToolPolicyEstimator]:
        if checkpoint is None:
            return None
        if domain not in estimators:
            estimators[domain] = ToolPolicyEstimator.load(checkpoint, catalog_for(domain))
        return estimators[domain]

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "sessions": len(sessions)}

    @app.get("/catalog/{domain}")
    def catalog_view(domain: str) -> dict:
        cat = catalog_for(domain)
        return {
            "name": cat.name,
            "room": list(cat.room),
            "classes": [{
                "token": t, "affordances": sorted(c.cls.affordances),
                "states": list(c.cls.supported_states), "category": c.category,
            } for t, c in cat.classes.items()],
            "tools": list(cat.tools),
            "goals": [{"id": g.id, "text": g.text} for g in cat.goal_templates],
            "interactions": {name: arity for name, (arity, _) in INTERACTIONS.items()},
        }

    @app.post("/sessions")
    def create_session(body: dict = Body(...)) -> dict:
        domain = body.get("domain", "mini-home")
        scene_seed = int(body.get("scene_seed", 0))
        goal_id = body.get("goal_id")
        cat = catalog_for(domain)
        state = sample_scene(cat, scene_seed)
        if goal_id is None:
            goal_id = cat.goal_templates[scene_seed % len(cat.goal_templates)].id
        try:
            goal = instantiate_goal(cat.template(goal_id), state)
        except MissingClass as exc:
            raise HTTPException(409, "goal not instantiable in this scene: %s" % exc)
        except Exception as exc:
            raise HTTPException(404, str(exc))
        session = Session(id=uuid.uuid4().hex, catalog=cat, scene_seed=scene_seed,
                          goal=goal, initial_state=state, state=state,
                          started=time.time(), timer_seconds=timer_seconds)
        if goal_check(state, goal):
            session.status = "goal_reached"
        sessions[session.id] = session
        return session.view()

    @app.get("/sessions/{session_id}")
    def session_view(session_id: str) -> dict:
        return get_session(session_id).view()

    @app.post("/sessions/{session_id}/actions")
    def submit_action(session_id: str, body: dict = Body(...)) -> dict:
        session = get_session(session_id)
        with session.lock:
            if session.status != "active":
                raise HTTPException(409, "session is %s; no further actions" % session.status)
            try:
                check_action_wire(body)
                action = SymbolicAction.from_wire(body, session.state)
            except Exception as exc:
                raise HTTPException(400, "malformed action: %s" % exc)
            outcome = apply(session.state, action, drop_prob=0.0)
            tokens = [session.state.objects[action.o1].cls.token]
            if action.o2 is not None:
                tokens.append(session.state.objects[action.o2].cls.token)
            entry = {
                "action": action.to_wire(session.state),
                "tokens": tokens,
                "status": outcome.status,
                "reason": outcome.reason,
                "time_step": session.state.time_step,
            }
            session.log.append(entry)
            if outcome.applied:
                session.actions.append(action)
                session.state = outcome.next_state
                if goal_check(session.state, session.goal):
                    session.status = "goal_reached"
            session.last_outcome = {"status": outcome.status, "reason": outcome.reason}
            view = session.view()
            view["outcome"] = session.last_outcome
            return view

    @app.get("/sessions/{session_id}/suggestions")
    def suggestions(session_id: str, k: int = 3) -> dict:
        session = get_session(session_id)
        with session.lock:
            est = estimator_for(session.catalog.name)
            if est is not None:
                ranked = est.suggest(session.state, session.goal, session.history(), k=k)
                return {"source": "policy",
                        "suggestions": [{"action": a.to_wire(session.state), "score": float(s)}
                                        for a, s in ranked]}
            applicable = enumerate_applicable(session.state)[:k]
            return {"source": "applicable",
                    "suggestions": [{"action": a.to_wire(session.state), "score": None}
                                    for a in applicable]}

    @app.post("/sessions/{session_id}/finish")
    def finish(session_id: str, body: dict = Body(default={})) -> dict:
        session = get_session(session_id)
        with session.lock:
            provenance = body.get("provenance", "human-ui")
            if session.status == "active":
                session.status = ("goal_reached"
                                  if goal_check(session.state, session.goal) else "abandoned")
            trace = DemonstrationTrace(
                trace_id="%s:%s:s%d:%s:%s" % (session.catalog.name, session.goal.template_id,
                                              session.scene_seed, provenance, session.id[:8]),
                domain=session.catalog.name,
                scene_seed=session.scene_seed,
                goal=session.goal,
                initial_state=session.initial_state,
                actions=list(session.actions),
                final_state=session.state,
                success=session.status == "goal_reached",
                provenance=provenance,
                meta={"session": session.id, "attempts": len(session.log),
                      "timer_seconds": session.timer_seconds})
            record = trace.to_record()
            trace_dir.mkdir(parents=True, exist_ok=True)
            path = trace_dir / ("%s.json" % session.id)
            path.write_text(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
            return {"trace": record, "path": str(path), "status": session.status}

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
