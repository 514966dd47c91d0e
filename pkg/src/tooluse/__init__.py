"""Symbolic tool-use workbench: simulator, demonstration oracle, learned policy."""

from .world import (
    Geometry, GoalConstraint, GoalSpec, ObjectClass, ObjectInstance,
    RelationEdge, WorldState, eval_relation, goal_check, refresh_geometric_edges,
)
from .actions import SymbolicAction, TransitionOutcome, apply, enumerate_applicable, preconditions
from .domains import DomainCatalog, PerturbationKind, instantiate_goal, load_catalog, perturb, sample_scene
from .embeddings import EmbeddingTable, load_embeddings, make_embeddings
from .oracle import BudgetExhausted, Corpus, DemonstrationTrace, augment, build_corpus, plan
from .policy import Policy, PolicyConfig
from .train import TrainConfig, Trainer, make_splits
from .estimator import NotFittedError, ToolPolicyEstimator

__version__ = "0.1.0"

__all__ = [
    "Geometry", "GoalConstraint", "GoalSpec", "ObjectClass", "ObjectInstance",
    "RelationEdge", "WorldState", "eval_relation", "goal_check",
    "refresh_geometric_edges", "SymbolicAction", "TransitionOutcome", "apply",
    "enumerate_applicable", "preconditions", "DomainCatalog", "PerturbationKind",
    "instantiate_goal", "load_catalog", "perturb", "sample_scene",
    "EmbeddingTable", "load_embeddings", "make_embeddings",
    "BudgetExhausted", "Corpus", "DemonstrationTrace", "augment", "build_corpus",
    "plan", "Policy", "PolicyConfig", "TrainConfig", "Trainer", "make_splits",
    "NotFittedError", "ToolPolicyEstimator",
]
