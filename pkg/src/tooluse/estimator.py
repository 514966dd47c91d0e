"""Scikit-learn style front door for the whole learner.

`ToolPolicyEstimator` follows the estimator protocol: constructor arguments
are stored verbatim as hyperparameters, `get_params`/`set_params` expose them
for grid search and cloning, `fit` consumes a demonstration corpus, and
`predict` maps (state, goal, history) to the next symbolic action. Fitting
runs both imitation phases: tool-likelihood pretraining, then the full action
decoder fine-tuned on top of it.
"""

from __future__ import annotations

import inspect
from pathlib import Path
from typing import Optional, Sequence

from .domains import DomainCatalog
from .embeddings import make_embeddings
from .oracle import Corpus
from .policy import (
    HistoryItem, Policy, PolicyConfig, load_checkpoint, save_checkpoint,
)
from .train import TrainConfig, Trainer, make_splits
from .world import GoalSpec, WorldState
from .actions import SymbolicAction


class NotFittedError(RuntimeError):
    pass


class ToolPolicyEstimator:
    """Imitation-learned tool-use policy with a fit/predict interface."""

    def __init__(self, hidden_size: int = 128, ggcn_layers: int = 4, conv_steps: int = 2,
                 fcn_depth: int = 2, head_layers: int = 2, embed_dim: int = 300,
                 prelu_slope: float = 0.25, history_cap: int = 50,
                 use_ggcn: bool = True, use_metric: bool = True, use_attention: bool = True,
                 use_history: bool = True, use_factored: bool = True, use_tool_head: bool = True,
                 lr: float = 5e-4, weight_decay: float = 1e-5, max_epochs: int = 200,
                 patience: int = 10, seed: int = 0, alpha_hi: float = 2.0, alpha_lo: float = 1.0,
                 embeddings: str = "synthetic"):
        self.hidden_size = hidden_size
        self.ggcn_layers = ggcn_layers
        self.conv_steps = conv_steps
        self.fcn_depth = fcn_depth
        self.head_layers = head_layers
        self.embed_dim = embed_dim
        self.prelu_slope = prelu_slope
        self.history_cap = history_cap
        self.use_ggcn = use_ggcn
        self.use_metric = use_metric
        self.use_attention = use_attention
        self.use_history = use_history
        self.use_factored = use_factored
        self.use_tool_head = use_tool_head
        self.lr = lr
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed
        self.alpha_hi = alpha_hi
        self.alpha_lo = alpha_lo
        self.embeddings = embeddings

    # -- estimator protocol ------------------------------------------------------

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [p for p in sig.parameters if p != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "ToolPolicyEstimator":
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError("unknown parameter %r for ToolPolicyEstimator" % key)
            setattr(self, key, value)
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "policy_"):
            raise NotFittedError("estimator is not fitted; call fit() first")

    # -- fitting --------------------------------------------------------------------

    def _build_policy_config(self, catalog: DomainCatalog) -> PolicyConfig:
        return PolicyConfig(
            hidden_size=self.hidden_size, ggcn_layers=self.ggcn_layers,
            conv_steps=self.conv_steps, fcn_depth=self.fcn_depth,
            head_layers=self.head_layers, embed_dim=self.embed_dim,
            state_dim=max(1, len(catalog.predicates)), prelu_slope=self.prelu_slope,
            history_cap=self.history_cap, use_ggcn=self.use_ggcn,
            use_metric=self.use_metric, use_attention=self.use_attention,
            use_history=self.use_history, use_factored=self.use_factored,
            use_tool_head=self.use_tool_head, tool_tokens=tuple(catalog.tools),
            vocab=tuple(t for t in catalog.classes if t != "robot"),
            pose_center=(catalog.room[0] / 2, catalog.room[1] / 2, 1.0),
            pose_scale=max(catalog.room) / 2)

    def fit(self, corpus: Corpus, catalog: DomainCatalog,
            splits: Optional[dict[str, str]] = None,
            log_path: Optional[Path] = None) -> "ToolPolicyEstimator":
        if not corpus.traces:
            raise ValueError("cannot fit on an empty corpus")
        if corpus.catalog_hash and corpus.catalog_hash != catalog.hash:
            raise ValueError("corpus catalog hash does not match the given catalog")
        config = self._build_policy_config(catalog)
        table = make_embeddings(self.embeddings, self.embed_dim, catalog.category_map())
        train_config = TrainConfig(lr=self.lr, weight_decay=self.weight_decay,
                                   max_epochs=self.max_epochs, patience=self.patience,
                                   seed=self.seed, alpha_hi=self.alpha_hi,
                                   alpha_lo=self.alpha_lo)
        trainer = Trainer(corpus, catalog, config, train_config, table, splits=splits)
        if log_path is not None:
            trainer.checkpoint_dir = Path(log_path).parent
        trainer.train(log_path)
        self.catalog_ = catalog
        self.config_ = config
        self.params_ = trainer.params
        self.embeddings_ = table
        self.policy_ = trainer.policy
        self.splits_ = trainer.splits
        self.metrics_ = trainer.metrics
        return self

    # -- inference --------------------------------------------------------------------

    def predict(self, state: WorldState, goal: GoalSpec,
                history: Sequence[HistoryItem] = ()) -> SymbolicAction:
        self._check_fitted()
        return self.policy_.act(state, goal, history)

    def suggest(self, state: WorldState, goal: GoalSpec,
                history: Sequence[HistoryItem] = (), k: int = 3):
        self._check_fitted()
        return self.policy_.score_actions(state, goal, history, k=k)

    def score(self, traces) -> float:
        """Teacher-forced action-prediction accuracy on the given traces."""
        self._check_fitted()
        from .evaluation import action_accuracy
        return action_accuracy(self.policy_, traces)

    # -- persistence -------------------------------------------------------------------

    def save(self, path: str | Path) -> None:
        self._check_fitted()
        save_checkpoint(path, self.config_, self.params_,
                        catalog_hash=self.catalog_.hash,
                        extra={"estimator_params": {k: v for k, v in self.get_params().items()}})

    @classmethod
    def load(cls, path: str | Path, catalog: DomainCatalog) -> "ToolPolicyEstimator":
        config, params, meta = load_checkpoint(path)
        if meta["catalog_hash"] and meta["catalog_hash"] != catalog.hash:
            raise ValueError("checkpoint was trained against a different catalog")
        stored = meta["extra"].get("estimator_params", {})
        est = cls(**{k: v for k, v in stored.items() if k in cls._param_names()})
        est.catalog_ = catalog
        est.config_ = config
        est.params_ = params
        est.embeddings_ = make_embeddings(est.embeddings, config.embed_dim,
                                          catalog.category_map())
        est.policy_ = Policy(config, params, est.embeddings_)
        est.splits_ = {}
        est.metrics_ = []
        return est


def default_splits(corpus: Corpus, seed: int = 0) -> dict[str, str]:
    return make_splits(corpus, seed)
