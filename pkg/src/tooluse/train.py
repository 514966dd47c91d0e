"""Two-phase imitation training.

Phase one fits the tool-likelihood head alone: weighted binary cross-entropy
over tool class tokens per demonstration step, a token labelled positive when
the demonstration uses any instance of it. Phase two trains the full action
decoder: binary cross-entropy of the interaction softmax plus both factored
object heads, added independently, with the tool head initialized from phase
one and fine-tuned through the scores it feeds downstream.

Supervision is teacher-forced throughout: every step conditions on the
demonstrated state and the demonstrated history, and the object heads see the
demonstrated interaction one-hot. Batch size is one trace per optimizer step;
runs are bit-reproducible from (seed, corpus, config).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tensor, adam_step, zero_grads
from .actions import INTERACTION_NAMES, SymbolicAction
from .domains import DomainCatalog
from .embeddings import EmbeddingTable
from .oracle import Corpus, DemonstrationTrace
from .policy import (
    Policy, PolicyConfig, SceneFeatures, history_from_steps, init_parameters,
)

CLAMP = 1e-7


class TrainError(Exception):
    pass


class TooFewTraces(TrainError):
    pass


class NonFiniteLoss(TrainError):
    pass


@dataclass
class TrainConfig:
    lr: float = 5e-4
    weight_decay: float = 1e-5
    batch_size: int = 1
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    alpha_hi: float = 2.0
    alpha_lo: float = 1.0

    def __post_init__(self):
        if self.lr <= 0 or self.max_epochs < 1:
            raise TrainError("lr must be positive and max_epochs >= 1")


def make_splits(corpus: Corpus, seed: int, test_fraction: float = 0.25,
                val_fraction: float = 0.10) -> dict[str, str]:
    """75/25 train/test split by (goal, scene) group, 10% of train groups held
    out for validation. Augmented traces never land in the test split; a trace
    whose pair belongs to a test group is dropped rather than leaked."""
    if not corpus.traces:
        raise TooFewTraces("empty corpus")
    groups = sorted({t.pair_key() for t in corpus.traces})
    if len(groups) < 2:
        raise TooFewTraces("need at least two (goal, scene) groups, got %d" % len(groups))
    rng = random.Random("splits:%d" % seed)
    rng.shuffle(groups)
    n_test = max(1, round(len(groups) * test_fraction))
    test_groups = set(groups[:n_test])
    train_groups = groups[n_test:]
    n_val = max(1, round(len(train_groups) * val_fraction)) if len(train_groups) > 1 else 0
    val_groups = set(train_groups[:n_val])
    assignment: dict[str, str] = {}
    for t in corpus.traces:
        key = t.pair_key()
        if key in test_groups:
            if t.provenance.startswith("augmented"):
                continue  # no augmentation reaches the test set
            assignment[t.trace_id] = "test"
        elif key in val_groups:
            assignment[t.trace_id] = "validation"
        else:
            assignment[t.trace_id] = "train"
    return assignment


def bce_sum(pred: Tensor, target: np.ndarray) -> Tensor:
    """Summed binary cross-entropy with probability clamping at 1e-7."""
    p = ad.clamp(pred, CLAMP, 1.0 - CLAMP)
    t = Tensor(np.asarray(target, dtype=np.float64).reshape(p.data.shape))
    ones = Tensor(np.ones_like(p.data))
    pos = ad.mul(t, ad.log(p))
    neg = ad.mul(ad.sub(ones, t), ad.log(ad.sub(ones, p)))
    return ad.scale(ad.tsum(ad.add(pos, neg)), -1.0)


def toolnet_loss(predictions: Tensor, labels: np.ndarray, alpha: float) -> Tensor:
    """Optimality-weighted tool BCE for one trace: predictions (steps x tools),
    labels broadcastable to the same shape."""
    labels = np.broadcast_to(np.asarray(labels, dtype=np.float64), predictions.data.shape)
    return ad.scale(bce_sum(predictions, labels), alpha)


@dataclass
class _StepSample:
    features: SceneFeatures
    history: list
    onehot: np.ndarray
    o1_row: int
    o2_row: Optional[int]
    action: SymbolicAction


@dataclass
class _TraceSample:
    trace: DemonstrationTrace
    alpha: float
    steps: list[_StepSample]
    tool_labels: np.ndarray  # over config.tool_tokens


class Trainer:
    """Owns the prepared corpus views, parameter state, and the two phases."""

    def __init__(self, corpus: Corpus, catalog: DomainCatalog,
                 policy_config: PolicyConfig, config: TrainConfig,
                 embeddings: EmbeddingTable,
                 splits: Optional[dict[str, str]] = None):
        self.corpus = corpus
        self.catalog = catalog
        self.policy_config = policy_config
        self.config = config
        self.embeddings = embeddings
        self.splits = splits if splits is not None else make_splits(corpus, config.seed)
        corpus.splits = dict(self.splits)
        self.params = init_parameters(policy_config, seed=config.seed)
        self.policy = Policy(policy_config, self.params, embeddings)
        self.metrics: list[dict] = []
        self.checkpoint_dir: Optional[Path] = None  # set to persist every improvement
        self._samples: dict[str, _TraceSample] = {}

    # -- sample preparation ----------------------------------------------------

    def _sample(self, trace: DemonstrationTrace) -> _TraceSample:
        cached = self._samples.get(trace.trace_id)
        if cached is not None:
            return cached
        steps = trace.steps()
        history = history_from_steps(steps)
        cfg = self.policy_config
        out_steps: list[_StepSample] = []
        for i, (state, action) in enumerate(steps):
            feats = self.policy.featurize(state)
            onehot = np.zeros(len(INTERACTION_NAMES))
            onehot[INTERACTION_NAMES.index(action.interaction)] = 1.0
            o1_row = feats.ids.index(action.o1)
            o2_row = feats.ids.index(action.o2) if action.o2 is not None else None
            out_steps.append(_StepSample(feats, history[:i], onehot, o1_row, o2_row, action))
        used_tokens = set()
        for state, action in steps:
            for oid in (action.o1, action.o2):
                if oid is not None and oid in state.objects:
                    used_tokens.add(state.objects[oid].cls.token)
        labels = np.array([1.0 if tok in used_tokens else 0.0 for tok in cfg.tool_tokens])
        alpha = self.corpus.alphas.get(trace.trace_id, self.config.alpha_lo)
        sample = _TraceSample(trace, alpha, out_steps, labels)
        self._samples[trace.trace_id] = sample
        return sample

    def _split_traces(self, split: str) -> list[DemonstrationTrace]:
        return sorted((t for t in self.corpus.traces if self.splits.get(t.trace_id) == split),
                      key=lambda t: t.trace_id)

    # -- losses ------------------------------------------------------------------

    def _toolnet_trace_loss(self, sample: _TraceSample) -> Optional[Tensor]:
        if not sample.steps:
            return None
        rows = []
        for step in sample.steps:
            result = self.policy.forward(
                sample.trace.initial_state, sample.trace.goal, step.history,
                feats=step.features, interaction_onehot=step.onehot)
            if result.tool_token_scores is None:
                return None
            rows.append(result.tool_token_scores)
        stacked = ad.concat(rows, axis=1) if len(rows) > 1 else rows[0]
        labels = np.repeat(sample.tool_labels.reshape(-1, 1), len(rows), axis=1)
        return toolnet_loss(stacked, labels, sample.alpha)

    def _tango_trace_loss(self, sample: _TraceSample) -> Optional[Tensor]:
        if not sample.steps:
            return None
        terms = []
        for step in sample.steps:
            result = self.policy.forward(
                sample.trace.initial_state, sample.trace.goal, step.history,
                feats=step.features, interaction_onehot=step.onehot)
            terms.append(bce_sum(result.interaction_probs, step.onehot.reshape(1, -1)))
            n = len(step.features.ids)
            if self.policy_config.use_factored:
                t1 = np.zeros((n, 1))
                t1[step.o1_row, 0] = 1.0
                terms.append(bce_sum(result.obj1_scores, t1))
                if step.o2_row is not None:
                    t2 = np.zeros((n, 1))
                    t2[step.o2_row, 0] = 1.0
                    terms.append(bce_sum(result.obj2_scores, t2))
            else:
                vocab = self.policy_config.vocab
                tok1 = step.features.tokens[step.o1_row]
                v1 = np.zeros((1, len(vocab)))
                if tok1 in vocab:
                    v1[0, vocab.index(tok1)] = 1.0
                terms.append(bce_sum(result.vocab1, v1))
                if step.o2_row is not None:
                    tok2 = step.features.tokens[step.o2_row]
                    v2 = np.zeros((1, len(vocab)))
                    if tok2 in vocab:
                        v2[0, vocab.index(tok2)] = 1.0
                    terms.append(bce_sum(result.vocab2, v2))
        total = terms[0]
        for t in terms[1:]:
            total = ad.add(total, t)
        return ad.scale(total, sample.alpha)

    # -- validation metrics --------------------------------------------------------

    def _tool_f1(self, traces: list[DemonstrationTrace]) -> float:
        tp = fp = fn = 0
        for trace in traces:
            sample = self._sample(trace)
            for step in sample.steps:
                result = self.policy.forward(trace.initial_state, trace.goal, step.history,
                                             feats=step.features,
                                             interaction_onehot=step.onehot)
                pred = result.tool_token_scores.data[:, 0] > 0.5
                truth = sample.tool_labels > 0.5
                tp += int(np.sum(pred & truth))
                fp += int(np.sum(pred & ~truth))
                fn += int(np.sum(~pred & truth))
        return 1.0 if tp + fp + fn == 0 else 2.0 * tp / (2.0 * tp + fp + fn)

    def teacher_forced_accuracy(self, traces: list[DemonstrationTrace]) -> float:
        total = correct = 0
        for trace in traces:
            sample = self._sample(trace)
            for step in sample.steps:
                result = self.policy.forward(trace.initial_state, trace.goal, step.history,
                                             feats=step.features)
                predicted = self.policy.decode_action(result)
                total += 1
                if predicted == step.action:
                    correct += 1
        if total == 0:
            raise TooFewTraces("no steps to score")
        return correct / total

    # -- phases -----------------------------------------------------------------

    def _run_phase(self, phase: str, log_path: Optional[Path] = None) -> list[dict]:
        cfg = self.config
        train = self._split_traces("train")
        val = self._split_traces("validation") or train[:max(1, len(train) // 10)]
        if not train:
            raise TooFewTraces("empty training split")
        order_rng = random.Random("%s:%d" % (phase, cfg.seed))
        adam = AdamState()
        best_metric = -1.0
        best_params: Optional[dict[str, np.ndarray]] = None
        stale = 0
        log: list[dict] = []
        for epoch in range(cfg.max_epochs):
            ids = list(range(len(train)))
            order_rng.shuffle(ids)
            epoch_loss = 0.0
            for i in ids:
                sample = self._sample(train[i])
                loss = (self._toolnet_trace_loss(sample) if phase == "toolnet"
                        else self._tango_trace_loss(sample))
                if loss is None:
                    continue
                value = loss.item()
                if not np.isfinite(value):
                    raise NonFiniteLoss("%s loss diverged at epoch %d" % (phase, epoch))
                zero_grads(self.params.values())
                loss.backward()
                adam_step(self.params, cfg.lr, cfg.weight_decay, adam)
                epoch_loss += value
            metric = (self._tool_f1(val) if phase == "toolnet"
                      else self.teacher_forced_accuracy(val))
            improved = metric > best_metric + 1e-12
            if improved:
                best_metric = metric
                best_params = {k: v.data.copy() for k, v in self.params.items()}
                stale = 0
                if self.checkpoint_dir is not None:
                    from .policy import save_checkpoint
                    self.checkpoint_dir.mkdir(parents=True, exist_ok=True)
                    save_checkpoint(self.checkpoint_dir / ("best_%s.json" % phase),
                                    self.policy_config, self.params,
                                    catalog_hash=self.catalog.hash,
                                    extra={"epoch": epoch, "val_metric": metric})
            else:
                stale += 1
            entry = {"phase": phase, "epoch": epoch, "train_loss": epoch_loss,
                     "val_metric": metric, "improved": improved}
            log.append(entry)
            self.metrics.append(entry)
            if log_path is not None:
                with open(log_path, "a") as fh:
                    fh.write(json.dumps(entry, sort_keys=True) + "\n")
            if stale > cfg.patience:
                break
        if best_params is not None:
            for k, v in best_params.items():
                self.params[k].data = v
        return log

    def train_toolnet(self, log_path: Optional[Path] = None) -> list[dict]:
        if not self.policy_config.use_tool_head:
            return []
        return self._run_phase("toolnet", log_path)

    def train_tooltango(self, log_path: Optional[Path] = None) -> list[dict]:
        return self._run_phase("tooltango", log_path)

    def train(self, log_path: Optional[Path] = None) -> dict[str, Tensor]:
        """Both phases in order; the action phase starts from the tool phase's
        selected parameters without any reset in between."""
        self.train_toolnet(log_path)
        self.train_tooltango(log_path)
        return self.params
