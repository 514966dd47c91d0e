"""Goal-conditioned action policy: graph encoder, history encoder, attention,
factored tool likelihood, and a grammar-constrained auto-regressive decoder.

The state encoder fuses two branches per object: gated message passing over
the relation graph (node features are discrete state bits plus the class word
embedding) and a small PReLU network over pose/size. Attention over the fused
object vectors, keyed by goal objects and action history, yields one scene
context vector. Tools are scored per class token through their embeddings, so
the same head covers tokens never seen in training; non-tool objects score
exactly zero. Action decoding picks the interaction first, then each argument
by an independent per-object likelihood, with the interaction's arity
dropping the second argument.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .actions import INTERACTIONS, INTERACTION_NAMES, SymbolicAction
from .embeddings import EmbeddingTable
from .world import GoalSpec, RELATION_KINDS, WorldState

HistoryItem = tuple[str, Optional[str], Optional[str]]  # (interaction, token1, token2)


@dataclass
class PolicyConfig:
    hidden_size: int = 128
    ggcn_layers: int = 4
    conv_steps: int = 2
    fcn_depth: int = 2
    head_layers: int = 2
    embed_dim: int = 300
    state_dim: int = 29
    prelu_slope: float = 0.25
    history_cap: int = 50
    use_ggcn: bool = True
    use_metric: bool = True
    use_attention: bool = True
    use_history: bool = True
    use_factored: bool = True
    use_tool_head: bool = True
    tool_tokens: tuple[str, ...] = ()
    vocab: tuple[str, ...] = ()          # fixed object vocabulary (ablation path)
    pose_center: tuple[float, float, float] = (5.0, 4.0, 1.0)
    pose_scale: float = 5.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tool_tokens"] = list(self.tool_tokens)
        d["vocab"] = list(self.vocab)
        d["pose_center"] = list(self.pose_center)
        return d

    @staticmethod
    def from_dict(d: dict) -> "PolicyConfig":
        d = dict(d)
        d["tool_tokens"] = tuple(d.get("tool_tokens", ()))
        d["vocab"] = tuple(d.get("vocab", ()))
        d["pose_center"] = tuple(d.get("pose_center", (5.0, 4.0, 1.0)))
        return PolicyConfig(**d)


N_INTERACTIONS = len(INTERACTION_NAMES)
# room-frame pose (x, y, z, yaw) + extent (3) + tier + robot-frame offsets
# (dx, dy, horizontal distance): nearness must be linearly readable per object
METRIC_DIM = 11


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _add_linear(params: dict, rng, name: str, fan_in: int, fan_out: int) -> None:
    params[name + ".w"] = Tensor(_xavier(rng, fan_in, fan_out), requires_grad=True)
    params[name + ".b"] = Tensor(np.zeros((1, fan_out)), requires_grad=True)


def _add_mlp(params: dict, rng, prefix: str, fan_in: int, hidden: int,
             layers: int, fan_out: int) -> None:
    dims = [fan_in] + [hidden] * layers + [fan_out]
    for i in range(len(dims) - 1):
        _add_linear(params, rng, "%s.%d" % (prefix, i), dims[i], dims[i + 1])


def init_parameters(config: PolicyConfig, seed: int = 0) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    h, q, p = config.hidden_size, config.embed_dim, config.state_dim
    params: dict[str, Tensor] = {}
    _add_linear(params, rng, "node_init", p + q, h)
    for k in range(config.ggcn_layers):
        for kind in RELATION_KINDS:
            params["ggcn.%d.%s.w" % (k, kind)] = Tensor(_xavier(rng, h, h), requires_grad=True)
        for gate in ("z", "r", "h"):
            _add_linear(params, rng, "gru.%d.w%s" % (k, gate), h, h)
            params["gru.%d.u%s.w" % (k, gate)] = Tensor(_xavier(rng, h, h), requires_grad=True)
    dims = [METRIC_DIM] + [h] * config.fcn_depth
    for i in range(len(dims) - 1):
        _add_linear(params, rng, "metric.%d" % i, dims[i], dims[i + 1])
    hist_in = N_INTERACTIONS + 2 * q
    for gate in ("i", "f", "o", "c"):
        _add_linear(params, rng, "lstm.w%s" % gate, hist_in, h)
        params["lstm.u%s.w" % gate] = Tensor(_xavier(rng, h, h), requires_grad=True)
    d_state = 2 * h
    ctx = d_state + q + h
    _add_linear(params, rng, "attn", d_state + q + h, 1)
    _add_mlp(params, rng, "tool", ctx + q, h, config.head_layers, 1)
    _add_mlp(params, rng, "act", ctx, h, config.head_layers, N_INTERACTIONS)
    _add_mlp(params, rng, "obj1", ctx + d_state + q + 1 + N_INTERACTIONS, h, config.head_layers, 1)
    _add_mlp(params, rng, "obj2", ctx + d_state + q + 1 + N_INTERACTIONS + 1, h, config.head_layers, 1)
    if config.vocab:
        v = len(config.vocab)
        _add_mlp(params, rng, "vocab1", ctx + N_INTERACTIONS, h, config.head_layers, v)
        _add_mlp(params, rng, "vocab2", ctx + N_INTERACTIONS + v, h, config.head_layers, v)
    return params


def _run_mlp(params: dict[str, Tensor], prefix: str, x: Tensor, layers: int,
             slope: float) -> Tensor:
    for i in range(layers + 1):
        x = ad.add(ad.matmul(x, params["%s.%d.w" % (prefix, i)]),
                   params["%s.%d.b" % (prefix, i)])
        if i < layers:
            x = ad.prelu(x, slope)
    return x


def _linear(params: dict[str, Tensor], name: str, x: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, params[name + ".w"]), params[name + ".b"])


@dataclass
class SceneFeatures:
    """Constant tensors for one world state; reusable across forward passes."""

    ids: list[int]
    tokens: list[str]
    bits: Tensor                      # (n, p)
    embeds: Tensor                    # (n, q)
    metric: Tensor                    # (n, 8)
    adjacency: dict[str, Tensor]      # kind -> (n, n) neighbor matrix
    tool_rows: Tensor                 # (n, T) selector onto tool token scores
    robot_row: int


@dataclass
class ForwardResult:
    features: SceneFeatures
    attention: Tensor                 # (n, 1)
    omega: Tensor                     # (1, 2h)
    history: Tensor                   # (1, h)
    goal_rel: Tensor                  # (1, q)
    tool_token_scores: Optional[Tensor]  # (T, 1) likelihood per tool token
    tool_instance_scores: Tensor      # (n, 1), exact zeros for non-tools
    interaction_probs: Tensor         # (1, |I|)
    obj1_scores: Optional[Tensor] = None
    obj2_scores: Optional[Tensor] = None
    vocab1: Optional[Tensor] = None
    vocab2: Optional[Tensor] = None
    state_encoding: Optional[Tensor] = None


class Policy:
    """Bundles parameters, config, and the embedding table into one callable."""

    def __init__(self, config: PolicyConfig, params: dict[str, Tensor],
                 embeddings: EmbeddingTable):
        if embeddings.dim != config.embed_dim:
            raise ValueError("embedding dim %d != config %d" % (embeddings.dim, config.embed_dim))
        self.config = config
        self.params = params
        self.embeddings = embeddings
        self._zero_q = Tensor(np.zeros((1, config.embed_dim)))

    # -- featurization --------------------------------------------------------

    def featurize(self, state: WorldState) -> SceneFeatures:
        cfg = self.config
        ids = sorted(state.objects)
        n = len(ids)
        index = {oid: i for i, oid in enumerate(ids)}
        tokens = [state.objects[oid].cls.token for oid in ids]
        p = len(state.predicates)
        if p > cfg.state_dim:
            raise ValueError("state vector length %d exceeds configured %d" % (p, cfg.state_dim))
        bits = np.zeros((n, cfg.state_dim))
        metric = np.zeros((n, METRIC_DIM))
        embeds = np.zeros((n, cfg.embed_dim))
        cx, cy, cz = cfg.pose_center
        scale = cfg.pose_scale
        robot = state.objects[state.robot]
        for i, oid in enumerate(ids):
            o = state.objects[oid]
            bits[i, :p] = o.state_vector
            embeds[i] = self.embeddings.lookup(o.cls.token)
            tier = state.robot_elevation if oid == state.robot else o.height_level
            dx = (o.position[0] - robot.position[0]) / scale
            dy = (o.position[1] - robot.position[1]) / scale
            metric[i] = [(o.position[0] - cx) / scale, (o.position[1] - cy) / scale,
                         (o.position[2] - cz) / scale, o.yaw / np.pi,
                         o.extent[0], o.extent[1], o.extent[2], tier / 3.0,
                         dx, dy, (dx * dx + dy * dy) ** 0.5]
        adjacency = {}
        for kind in RELATION_KINDS:
            a = np.zeros((n, n))
            for e in state.edges:
                if e.kind == kind and e.subject in index and e.object in index:
                    a[index[e.object], index[e.subject]] = 1.0
                    a[index[e.subject], index[e.object]] = 1.0
            adjacency[kind] = Tensor(a)
        sel = np.zeros((n, max(1, len(cfg.tool_tokens))))
        for i, tok in enumerate(tokens):
            if tok in cfg.tool_tokens:
                sel[i, cfg.tool_tokens.index(tok)] = 1.0
        return SceneFeatures(ids=ids, tokens=tokens, bits=Tensor(bits),
                             embeds=Tensor(embeds), metric=Tensor(metric),
                             adjacency=adjacency, tool_rows=Tensor(sel),
                             robot_row=index[state.robot])

    # -- encoders --------------------------------------------------------------

    def encode_state(self, feats: SceneFeatures) -> Tensor:
        cfg, params = self.config, self.params
        x = ad.concat([feats.bits, feats.embeds], axis=1)
        r = ad.tanh(_linear(params, "node_init", x))
        if cfg.use_ggcn:
            for k in range(cfg.ggcn_layers):
                for _ in range(cfg.conv_steps):
                    msgs = None
                    for kind in RELATION_KINDS:
                        m = ad.matmul(feats.adjacency[kind],
                                      ad.matmul(r, params["ggcn.%d.%s.w" % (k, kind)]))
                        msgs = m if msgs is None else ad.add(msgs, m)
                    r = self._gru(k, r, msgs)
        if cfg.use_metric:
            m = feats.metric
            for i in range(cfg.fcn_depth):
                m = ad.prelu(_linear(params, "metric.%d" % i, m), cfg.prelu_slope)
        else:
            m = Tensor(np.zeros((len(feats.ids), cfg.hidden_size)))
        return ad.concat([r, m], axis=1)

    def _gru(self, k: int, h: Tensor, x: Tensor) -> Tensor:
        p = self.params
        z = ad.sigmoid(ad.add(_linear(p, "gru.%d.wz" % k, x),
                              ad.matmul(h, p["gru.%d.uz.w" % k])))
        r = ad.sigmoid(ad.add(_linear(p, "gru.%d.wr" % k, x),
                              ad.matmul(h, p["gru.%d.ur.w" % k])))
        cand = ad.tanh(ad.add(_linear(p, "gru.%d.wh" % k, x),
                              ad.matmul(ad.mul(r, h), p["gru.%d.uh.w" % k])))
        one_minus = ad.add(ad.scale(z, -1.0), Tensor(np.ones((1, 1))))
        return ad.add(ad.mul(one_minus, h), ad.mul(z, cand))

    def encode_history(self, history: Sequence[HistoryItem]) -> Tensor:
        cfg, p = self.config, self.params
        h = Tensor(np.zeros((1, cfg.hidden_size)))
        if not cfg.use_history or not history:
            return h
        c = Tensor(np.zeros((1, cfg.hidden_size)))
        for name, tok1, tok2 in list(history)[-cfg.history_cap:]:
            onehot = np.zeros((1, N_INTERACTIONS))
            if name in INTERACTION_NAMES:
                onehot[0, INTERACTION_NAMES.index(name)] = 1.0
            e1 = self.embeddings.lookup(tok1).reshape(1, -1) if tok1 else np.zeros((1, cfg.embed_dim))
            e2 = self.embeddings.lookup(tok2).reshape(1, -1) if tok2 else np.zeros((1, cfg.embed_dim))
            x = Tensor(np.concatenate([onehot, e1, e2], axis=1))
            i = ad.sigmoid(ad.add(_linear(p, "lstm.wi", x), ad.matmul(h, p["lstm.ui.w"])))
            f = ad.sigmoid(ad.add(_linear(p, "lstm.wf", x), ad.matmul(h, p["lstm.uf.w"])))
            o = ad.sigmoid(ad.add(_linear(p, "lstm.wo", x), ad.matmul(h, p["lstm.uo.w"])))
            g = ad.tanh(ad.add(_linear(p, "lstm.wc", x), ad.matmul(h, p["lstm.uc.w"])))
            c = ad.add(ad.mul(f, c), ad.mul(i, g))
            h = ad.mul(o, ad.tanh(c))
        return h

    def encode_goal(self, goal: GoalSpec, state: WorldState) -> tuple[Tensor, Tensor]:
        """Mean embeddings of the goal's relation-side tokens and object tokens.

        The relation side carries what must hold: relation kinds, state
        predicates, or the absence marker. A goal with no constraints encodes
        to zero vectors."""
        rel_vecs, obj_vecs = [], []
        for c in goal.constraints:
            if c.kind in RELATION_KINDS:
                rel_vecs.append(self.embeddings.lookup(c.kind))
            elif c.kind == "state" and c.predicate:
                rel_vecs.append(self.embeddings.lookup(c.predicate))
            elif c.kind == "absent":
                rel_vecs.append(self.embeddings.lookup("absent"))
            for ref in (c.subject, c.object):
                if ref is None:
                    continue
                if isinstance(ref, int):
                    if ref in state.objects:
                        obj_vecs.append(self.embeddings.lookup(state.objects[ref].cls.token))
                else:
                    obj_vecs.append(self.embeddings.lookup(ref))
        g_rel = Tensor(np.mean(rel_vecs, axis=0).reshape(1, -1)) if rel_vecs else self._zero_q
        g_obj = Tensor(np.mean(obj_vecs, axis=0).reshape(1, -1)) if obj_vecs else self._zero_q
        return g_rel, g_obj

    # -- attention, tools, decoding ---------------------------------------------

    def attend(self, s: Tensor, g_obj: Tensor, hist: Tensor) -> tuple[Tensor, Tensor]:
        n = s.data.shape[0]
        if self.config.use_attention:
            f = ad.concat([s, ad.tile_rows(g_obj, n), ad.tile_rows(hist, n)], axis=1)
            logits = _linear(self.params, "attn", f)
            eps = ad.softmax(logits, axis=0)
        else:
            eps = Tensor(np.full((n, 1), 1.0 / n))
        omega = ad.tsum(ad.mul(eps, s), axis=0, keepdims=True)
        return eps, omega

    def tool_scores(self, omega: Tensor, g_rel: Tensor, hist: Tensor,
                    feats: SceneFeatures) -> tuple[Optional[Tensor], Tensor]:
        """Per-token tool likelihoods and their projection onto instances.

        Projection through a 0/1 selector keeps non-tool rows at exactly 0."""
        cfg = self.config
        n = len(feats.ids)
        if not cfg.use_tool_head or not cfg.tool_tokens:
            return None, Tensor(np.zeros((n, 1)))
        t = len(cfg.tool_tokens)
        et = Tensor(np.stack([self.embeddings.lookup(tok) for tok in cfg.tool_tokens]))
        inp = ad.concat([ad.tile_rows(omega, t), ad.tile_rows(g_rel, t),
                         ad.tile_rows(hist, t), et], axis=1)
        token_scores = ad.sigmoid(_run_mlp(self.params, "tool", inp, cfg.head_layers,
                                           cfg.prelu_slope))
        instance = ad.matmul(feats.tool_rows, token_scores)
        return token_scores, instance

    def forward(self, state: WorldState, goal: GoalSpec,
                history: Sequence[HistoryItem],
                feats: Optional[SceneFeatures] = None,
                interaction_onehot: Optional[np.ndarray] = None) -> ForwardResult:
        """Run the full network. When `interaction_onehot` is given (teacher
        forcing) the object heads condition on it instead of the argmax."""
        cfg = self.config
        feats = feats if feats is not None else self.featurize(state)
        s = self.encode_state(feats)
        hist = self.encode_history(history)
        g_rel, g_obj = self.encode_goal(goal, state)
        eps, omega = self.attend(s, g_obj, hist)
        token_scores, inst_scores = self.tool_scores(omega, g_rel, hist, feats)
        ctx = ad.concat([omega, g_rel, hist], axis=1)
        probs = ad.softmax(_run_mlp(self.params, "act", ctx, cfg.head_layers,
                                    cfg.prelu_slope), axis=1)
        out = ForwardResult(feats, eps, omega, hist, g_rel, token_scores, inst_scores, probs)
        out.state_encoding = s
        onehot = interaction_onehot
        if onehot is None:
            idx = int(np.argmax(probs.data[0]))
            onehot = np.zeros(N_INTERACTIONS)
            onehot[idx] = 1.0
        n = len(feats.ids)
        ihot = Tensor(onehot.reshape(1, -1))
        if cfg.use_factored:
            base = ad.concat([ad.tile_rows(ctx, n), s, feats.embeds, inst_scores,
                              ad.tile_rows(ihot, n)], axis=1)
            out.obj1_scores = ad.sigmoid(_run_mlp(self.params, "obj1", base,
                                                  cfg.head_layers, cfg.prelu_slope))
            base2 = ad.concat([base, out.obj1_scores], axis=1)
            out.obj2_scores = ad.sigmoid(_run_mlp(self.params, "obj2", base2,
                                                  cfg.head_layers, cfg.prelu_slope))
        else:
            # Fixed-vocabulary ablation: arguments are scored per class token,
            # so instances of classes outside the training vocabulary cannot
            # be addressed (the capability the factored heads exist to add).
            vin = ad.concat([ctx, ihot], axis=1)
            out.vocab1 = ad.sigmoid(_run_mlp(self.params, "vocab1", vin,
                                             cfg.head_layers, cfg.prelu_slope))
            vin2 = ad.concat([vin, out.vocab1], axis=1)
            out.vocab2 = ad.sigmoid(_run_mlp(self.params, "vocab2", vin2,
                                             cfg.head_layers, cfg.prelu_slope))
        return out

    # -- action selection --------------------------------------------------------

    def act(self, state: WorldState, goal: GoalSpec,
            history: Sequence[HistoryItem] = ()) -> SymbolicAction:
        result = self.forward(state, goal, history)
        return self.decode_action(result)

    def _object_scores(self, result: ForwardResult, which: int) -> np.ndarray:
        if self.config.use_factored:
            t = result.obj1_scores if which == 1 else result.obj2_scores
            return t.data[:, 0].copy()
        vocab = self.config.vocab
        v = result.vocab1 if which == 1 else result.vocab2
        scores = np.zeros(len(result.features.ids))
        for i, tok in enumerate(result.features.tokens):
            if tok in vocab:
                scores[i] = v.data[0, vocab.index(tok)]
        return scores

    def decode_action(self, result: ForwardResult) -> SymbolicAction:
        feats = result.features
        idx = int(np.argmax(result.interaction_probs.data[0]))
        name = INTERACTION_NAMES[idx]
        s1 = self._object_scores(result, 1)
        s1[feats.robot_row] = -np.inf
        o1_row = int(np.argmax(s1))
        if INTERACTIONS[name][0] == 1:
            return SymbolicAction(name, feats.ids[o1_row])
        s2 = self._object_scores(result, 2)
        s2[feats.robot_row] = -np.inf
        s2[o1_row] = -np.inf
        o2_row = int(np.argmax(s2))
        return SymbolicAction(name, feats.ids[o1_row], feats.ids[o2_row])

    def score_actions(self, state: WorldState, goal: GoalSpec,
                      history: Sequence[HistoryItem] = (), k: int = 3) -> list[tuple[SymbolicAction, float]]:
        """Top-k grammar-valid actions by joint likelihood, for assistance UIs."""
        result = self.forward(state, goal, history)
        feats = result.features
        s1 = self._object_scores(result, 1)
        s2 = self._object_scores(result, 2)
        options: list[tuple[float, SymbolicAction]] = []
        for idx, name in enumerate(INTERACTION_NAMES):
            p_i = float(result.interaction_probs.data[0, idx])
            for r1, oid1 in enumerate(feats.ids):
                if r1 == feats.robot_row:
                    continue
                if INTERACTIONS[name][0] == 1:
                    options.append((p_i * s1[r1], SymbolicAction(name, oid1)))
                else:
                    for r2, oid2 in enumerate(feats.ids):
                        if r2 == feats.robot_row or r2 == r1:
                            continue
                        options.append((p_i * s1[r1] * s2[r2], SymbolicAction(name, oid1, oid2)))
        options.sort(key=lambda t: (-t[0], t[1].interaction, t[1].o1, t[1].o2 or -1))
        return [(a, s) for s, a in options[:k]]


def history_from_steps(steps: Sequence[tuple[WorldState, SymbolicAction]]) -> list[HistoryItem]:
    out: list[HistoryItem] = []
    for state, action in steps:
        tok1 = state.objects[action.o1].cls.token if action.o1 in state.objects else None
        tok2 = None
        if action.o2 is not None and action.o2 in state.objects:
            tok2 = state.objects[action.o2].cls.token
        out.append((action.interaction, tok1, tok2))
    return out


# --- checkpoints ---------------------------------------------------------------

def save_checkpoint(path: str | Path, config: PolicyConfig, params: dict[str, Tensor],
                    catalog_hash: str = "", extra: Optional[dict] = None) -> None:
    doc = {
        "schema": "checkpoint/v1",
        "catalog_hash": catalog_hash,
        "config": config.to_dict(),
        "tensors": {name: {"shape": list(t.data.shape), "data": t.data.reshape(-1).tolist()}
                    for name, t in sorted(params.items())},
        "extra": extra or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))


def load_checkpoint(path: str | Path) -> tuple[PolicyConfig, dict[str, Tensor], dict]:
    doc = json.loads(Path(path).read_text())
    config = PolicyConfig.from_dict(doc["config"])
    params = {}
    for name, spec in doc["tensors"].items():
        arr = np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
        params[name] = Tensor(arr, requires_grad=True)
    return config, params, {"catalog_hash": doc.get("catalog_hash", ""),
                            "extra": doc.get("extra", {})}
