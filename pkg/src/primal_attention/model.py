"""A small transformer stack trained through the gradient tape.

Each block applies multi-head attention (primal or canonical per layer)
and a 2x-expansion feed-forward, both wrapped in residual connections
with per-token standardization in front of each sublayer. Token tasks go
through learned token + position embeddings; continuous tasks through a
linear input projection plus position embeddings. The task head is either
a mean-pooled linear classifier or a positionwise linear regressor.

The primal heads recompute their projection-variance objective J on the
tape, so the squared-J penalty trains every parameter it touches.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np

from . import autograd as ag
from .attention import DATA_DEPENDENT, DATA_INDEPENDENT, HeadParams, OutputMap, subsample_indices
from .autograd import Tape, Var
from .errors import ConfigError, NumericError
from .features import COSINE, IDENTITY, RANDOM_EXPONENTIAL, FeatureMapSpec, ProjectionSet
from .objective import KsvdLossReport
from .rng import Rng, derive_seed
from .tasks import LOW_RANK_REGRESSION, TaskSpec

PRIMAL = "primal"
CANONICAL = "canonical"
CLASSIFICATION = "classification"
REGRESSION = "regression"


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 1
    heads: int = 2
    d_model: int = 32
    head_dim: int = 32
    s: int | None = None  # defaults to head_dim // 2
    d_v: int = 16
    kinds: tuple[str, ...] = ()  # one of {primal, canonical} per layer; defaults to all primal
    feature_map: FeatureMapSpec | None = None  # defaults to cosine over head_dim
    mode: str = DATA_INDEPENDENT
    rank_multi: int = 10
    causal: bool = False
    eta: float = 0.1
    out_kind: str = CLASSIFICATION
    classes: int = 2
    out_dim: int = 1
    n_positions: int = 16
    vocab: int | None = 8
    input_dim: int | None = None
    subsample_seed: int = 0
    ffn_multiple: int = 2
    std_eps: float = 1e-5

    def __post_init__(self):
        if self.layers < 1 or self.heads < 1:
            raise ConfigError("need at least one layer and one head")
        kinds = tuple(self.kinds) if self.kinds else tuple(PRIMAL for _ in range(self.layers))
        if len(kinds) != self.layers or any(k not in (PRIMAL, CANONICAL) for k in kinds):
            raise ConfigError(f"kinds must list {self.layers} entries from {{primal, canonical}}")
        object.__setattr__(self, "kinds", kinds)
        s = self.s if self.s is not None else max(1, self.head_dim // 2)
        object.__setattr__(self, "s", s)
        fmap = self.feature_map
        if fmap is None:
            fmap = FeatureMapSpec(kind=COSINE, dim=self.head_dim)
        if fmap.input_dim != self.head_dim:
            raise ConfigError(
                f"feature map input dim {fmap.input_dim} != head_dim {self.head_dim}"
            )
        object.__setattr__(self, "feature_map", fmap)
        if self.mode not in (DATA_INDEPENDENT, DATA_DEPENDENT):
            raise ConfigError(f"unknown projection mode: {self.mode!r}")
        if self.mode == DATA_DEPENDENT and PRIMAL in kinds and self.head_dim != self.d_model:
            raise ConfigError("data-dependent primal layers require head_dim == d_model")
        if self.out_kind not in (CLASSIFICATION, REGRESSION):
            raise ConfigError(f"unknown task head: {self.out_kind!r}")
        if self.out_kind == CLASSIFICATION and self.classes < 2:
            raise ConfigError("classification head needs >= 2 classes")
        if (self.vocab is None) == (self.input_dim is None):
            raise ConfigError("exactly one of vocab / input_dim must be set")
        if self.eta < 0.0:
            raise ConfigError("eta must be nonnegative")

    @classmethod
    def for_task(cls, task: TaskSpec, **overrides) -> "ModelConfig":
        base = dict(n_positions=task.n_positions)
        if task.kind == LOW_RANK_REGRESSION:
            base.update(
                vocab=None,
                input_dim=task.input_dim,
                out_kind=REGRESSION,
                out_dim=task.output_dim,
            )
        else:
            base.update(vocab=task.vocab, out_kind=CLASSIFICATION, classes=task.label_count)
        base.update(overrides)
        return cls(**base)

    def fold_rows(self) -> int:
        """Row count of the data-dependent weight banks at this N."""
        if self.causal:
            return self.n_positions
        return min(self.s * self.rank_multi, self.n_positions)


def _fan_in_init(rng: Rng, shape, fan_in: int) -> np.ndarray:
    return rng.uniform_symmetric(1.0 / math.sqrt(fan_in), shape)


@dataclass
class Model:
    config: ModelConfig
    params: dict[str, np.ndarray]
    init_seed: int = 0

    @classmethod
    def build(cls, config: ModelConfig, init_seed: int = 0) -> "Model":
        cfg = config
        rng = Rng(init_seed)
        p: dict[str, np.ndarray] = {}
        if cfg.vocab is not None:
            p["embed.token"] = _fan_in_init(rng.derive("embed.token"), (cfg.vocab, cfg.d_model), cfg.d_model)
        else:
            p["embed.input"] = _fan_in_init(
                rng.derive("embed.input"), (cfg.d_model, cfg.input_dim), cfg.input_dim
            )
        p["embed.pos"] = _fan_in_init(rng.derive("embed.pos"), (cfg.n_positions, cfg.d_model), cfg.d_model)
        ffn_dim = cfg.ffn_multiple * cfg.d_model
        for layer in range(cfg.layers):
            kind = cfg.kinds[layer]
            for head in range(cfg.heads):
                tag = f"layer{layer}.head{head}"
                p[f"{tag}.w_q"] = _fan_in_init(rng.derive(tag, "w_q"), (cfg.head_dim, cfg.d_model), cfg.d_model)
                p[f"{tag}.w_k"] = _fan_in_init(rng.derive(tag, "w_k"), (cfg.head_dim, cfg.d_model), cfg.d_model)
                if kind == CANONICAL:
                    p[f"{tag}.w_v"] = _fan_in_init(rng.derive(tag, "w_v"), (cfg.d_v, cfg.d_model), cfg.d_model)
                else:
                    rows = cfg.feature_map.dim if cfg.mode == DATA_INDEPENDENT else cfg.fold_rows()
                    p[f"{tag}.w_e"] = _fan_in_init(rng.derive(tag, "w_e"), (rows, cfg.s), rows)
                    p[f"{tag}.w_r"] = _fan_in_init(rng.derive(tag, "w_r"), (rows, cfg.s), rows)
                    p[f"{tag}.lambda_raw"] = np.zeros(cfg.s)
                    p[f"{tag}.w_o"] = _fan_in_init(rng.derive(tag, "w_o"), (cfg.d_v, 2 * cfg.s), 2 * cfg.s)
            p[f"layer{layer}.mixer"] = _fan_in_init(
                rng.derive(f"layer{layer}.mixer"), (cfg.d_model, cfg.heads * cfg.d_v), cfg.heads * cfg.d_v
            )
            p[f"layer{layer}.ffn_w1"] = _fan_in_init(
                rng.derive(f"layer{layer}.ffn_w1"), (ffn_dim, cfg.d_model), cfg.d_model
            )
            p[f"layer{layer}.ffn_b1"] = np.zeros((1, ffn_dim))
            p[f"layer{layer}.ffn_w2"] = _fan_in_init(
                rng.derive(f"layer{layer}.ffn_w2"), (cfg.d_model, ffn_dim), ffn_dim
            )
            p[f"layer{layer}.ffn_b2"] = np.zeros((1, cfg.d_model))
        out_rows = cfg.classes if cfg.out_kind == CLASSIFICATION else cfg.out_dim
        p["head.w"] = _fan_in_init(rng.derive("head.w"), (out_rows, cfg.d_model), cfg.d_model)
        p["head.b"] = np.zeros((1, out_rows))
        return cls(config=cfg, params=p, init_seed=init_seed)

    def head_subsample_seed(self, layer: int, head: int) -> int:
        return derive_seed(self.config.subsample_seed, "subsample", layer, head)

    def head_params_at(self, layer: int, head: int) -> tuple[str, HeadParams, OutputMap | None]:
        """Reconstruct the numpy-path head objects for analysis tooling."""
        cfg = self.config
        kind = cfg.kinds[layer]
        tag = f"layer{layer}.head{head}"
        if kind == CANONICAL:
            ps = ProjectionSet(
                w_q=self.params[f"{tag}.w_q"],
                w_k=self.params[f"{tag}.w_k"],
                w_v=self.params[f"{tag}.w_v"],
            )
            dummy = np.zeros((cfg.head_dim, 1))
            hp = HeadParams(
                projections=ps,
                w_e=dummy,
                w_r=dummy,
                lambda_raw=np.zeros(1),
                causal=cfg.causal,
            )
            return kind, hp, None
        ps = ProjectionSet(w_q=self.params[f"{tag}.w_q"], w_k=self.params[f"{tag}.w_k"])
        hp = HeadParams(
            projections=ps,
            w_e=self.params[f"{tag}.w_e"],
            w_r=self.params[f"{tag}.w_r"],
            lambda_raw=self.params[f"{tag}.lambda_raw"],
            mode=cfg.mode,
            rank_multi=cfg.rank_multi,
            subsample_seed=self.head_subsample_seed(layer, head),
            causal=cfg.causal,
        )
        return kind, hp, OutputMap(w_o=self.params[f"{tag}.w_o"])


def _feature_rows_var(proj: Var, fmap: FeatureMapSpec, directions_var: Var | None) -> Var:
    if fmap.kind == IDENTITY:
        return proj
    if fmap.kind == COSINE:
        return ag.row_normalize(proj, fmap.epsilon)
    scale = ag.exp(ag.mul(-0.5, ag.sum_axis(ag.mul(proj, proj), axis=1, keepdims=True)))
    return ag.mul(scale, ag.exp(ag.matmul(proj, ag.transpose(directions_var))))


def _primal_head_graph(cfg: ModelConfig, leaves, tag: str, normed: Var, dd_indices):
    fmap = cfg.feature_map
    w_e, w_r = leaves[f"{tag}.w_e"], leaves[f"{tag}.w_r"]
    q = ag.matmul(normed, ag.transpose(leaves[f"{tag}.w_q"]))
    k = ag.matmul(normed, ag.transpose(leaves[f"{tag}.w_k"]))
    directions = leaves.get("_fmap.directions")
    phi_q = _feature_rows_var(q, fmap, directions)
    phi_k = _feature_rows_var(k, fmap, directions)
    if cfg.mode == DATA_INDEPENDENT:
        e = ag.matmul(phi_q, w_e)
        r = ag.matmul(phi_k, w_r)
    elif cfg.causal:
        e = ag.matmul(ag.tril(ag.matmul(phi_q, ag.transpose(normed))), w_e)
        r = ag.matmul(ag.tril(ag.matmul(phi_k, ag.transpose(normed))), w_r)
    else:
        fx = ag.gather_rows(normed, dd_indices)
        e = ag.matmul(phi_q, ag.matmul(ag.transpose(fx), w_e))
        r = ag.matmul(phi_k, ag.matmul(ag.transpose(fx), w_r))
    if fmap.kind == RANDOM_EXPONENTIAL:
        keys_summed = ag.cumsum_rows(phi_k) if cfg.causal else ag.sum_axis(phi_k, axis=0, keepdims=True)
        dhat = ag.sum_axis(ag.mul(phi_q, keys_summed), axis=1, keepdims=True)
        scale = ag.div(1.0, ag.sqrt(dhat))
        e = ag.mul(e, scale)
        r = ag.mul(r, scale)
    lam = ag.exp(leaves[f"{tag}.lambda_raw"])
    quad_e = ag.mul(0.5, ag.sum_all(ag.mul(ag.mul(e, e), lam)))
    quad_r = ag.mul(0.5, ag.sum_all(ag.mul(ag.mul(r, r), lam)))
    j_head = ag.sub(ag.add(quad_e, quad_r), ag.sum_all(ag.mul(w_e, w_r)))
    out = ag.matmul(ag.concat_cols(e, r), ag.transpose(leaves[f"{tag}.w_o"]))
    return out, j_head


def _canonical_head_graph(cfg: ModelConfig, leaves, tag: str, normed: Var):
    q = ag.matmul(normed, ag.transpose(leaves[f"{tag}.w_q"]))
    k = ag.matmul(normed, ag.transpose(leaves[f"{tag}.w_k"]))
    v = ag.matmul(normed, ag.transpose(leaves[f"{tag}.w_v"]))
    scores = ag.mul(ag.matmul(q, ag.transpose(k)), 1.0 / math.sqrt(cfg.head_dim))
    weights = ag.softmax_rows(scores, causal=cfg.causal)
    return ag.matmul(weights, v)


def _sequence_graph(model: Model, leaves, sequence, capture: list | None = None) -> tuple[Var, list[list[Var]]]:
    """Per-position features (N x d_model) and per-layer per-head J vars.

    When ``capture`` is a list, the standardized input of each attention
    sublayer is appended to it (used by the spectrum tooling).
    """
    cfg = model.config
    if cfg.vocab is not None:
        tokens = np.asarray(sequence, dtype=np.intp)
        h = ag.add(ag.gather_rows(leaves["embed.token"], tokens), leaves["embed.pos"])
    else:
        x_in = ag.constant(np.asarray(sequence, dtype=np.float64))
        h = ag.add(ag.matmul(x_in, ag.transpose(leaves["embed.input"])), leaves["embed.pos"])
    js: list[list[Var]] = []
    for layer in range(cfg.layers):
        kind = cfg.kinds[layer]
        normed = ag.standardize_rows(h, cfg.std_eps)
        if capture is not None:
            capture.append(normed.value.copy())
        head_outputs = []
        layer_js: list[Var] = []
        for head in range(cfg.heads):
            tag = f"layer{layer}.head{head}"
            if kind == PRIMAL:
                dd_indices = None
                if cfg.mode == DATA_DEPENDENT and not cfg.causal:
                    dd_indices = subsample_indices(
                        model.head_subsample_seed(layer, head), cfg.n_positions, cfg.fold_rows()
                    )
                out, j_head = _primal_head_graph(cfg, leaves, tag, normed, dd_indices)
                layer_js.append(j_head)
            else:
                out = _canonical_head_graph(cfg, leaves, tag, normed)
            head_outputs.append(out)
        concat = head_outputs[0]
        for extra in head_outputs[1:]:
            concat = ag.concat_cols(concat, extra)
        h = ag.add(h, ag.matmul(concat, ag.transpose(leaves[f"layer{layer}.mixer"])))
        normed2 = ag.standardize_rows(h, cfg.std_eps)
        hidden = ag.relu(
            ag.add(ag.matmul(normed2, ag.transpose(leaves[f"layer{layer}.ffn_w1"])), leaves[f"layer{layer}.ffn_b1"])
        )
        ffn_out = ag.add(ag.matmul(hidden, ag.transpose(leaves[f"layer{layer}.ffn_w2"])), leaves[f"layer{layer}.ffn_b2"])
        h = ag.add(h, ffn_out)
        if not np.all(np.isfinite(h.value)):
            raise NumericError(f"layer{layer}")
        js.append(layer_js)
    return h, js


def _make_leaves(tape: Tape, model: Model) -> dict[str, Var]:
    leaves = {name: tape.leaf(arr, name=name) for name, arr in model.params.items()}
    fmap = model.config.feature_map
    if fmap.kind == RANDOM_EXPONENTIAL:
        leaves["_fmap.directions"] = tape.leaf(fmap.directions)
    return leaves


def _batch_j_means(cfg: ModelConfig, per_seq_js: list[list[list[Var]]]) -> list[Var | None]:
    """Mean J per layer over heads and batch items; None for canonical layers."""
    batch = len(per_seq_js)
    means: list[Var | None] = []
    for layer in range(cfg.layers):
        terms = [j for seq_js in per_seq_js for j in seq_js[layer]]
        if not terms:
            means.append(None)
            continue
        total = terms[0]
        for t in terms[1:]:
            total = ag.add(total, t)
        means.append(ag.mul(total, 1.0 / len(terms)))
    return means


def forward_loss(model: Model, batch) -> tuple[float, Tape, KsvdLossReport]:
    """Regularized batch loss; returns (loss, tape, decomposition report).

    ``batch`` is an (inputs, targets) pair of stacked sequences. The tape
    output is the total loss, ready for `autograd.backward`.
    """
    cfg = model.config
    inputs, targets = batch
    tape = Tape()
    with tape:
        leaves = _make_leaves(tape, model)
        per_seq_js = []
        if cfg.out_kind == CLASSIFICATION:
            logit_rows = []
            for sequence in inputs:
                feats, js = _sequence_graph(model, leaves, sequence)
                per_seq_js.append(js)
                pooled = ag.mul(ag.sum_axis(feats, axis=0, keepdims=True), 1.0 / cfg.n_positions)
                logit_rows.append(ag.add(ag.matmul(pooled, ag.transpose(leaves["head.w"])), leaves["head.b"]))
            logits = ag.stack_rows(logit_rows)
            task = ag.cross_entropy_mean(logits, np.asarray(targets, dtype=np.intp))
        else:
            pred_rows = []
            for sequence in inputs:
                feats, js = _sequence_graph(model, leaves, sequence)
                per_seq_js.append(js)
                pred_rows.append(ag.add(ag.matmul(feats, ag.transpose(leaves["head.w"])), leaves["head.b"]))
            preds = ag.stack_rows(pred_rows)
            flat_targets = np.asarray(targets, dtype=np.float64).reshape(preds.value.shape)
            diff = ag.sub(preds, flat_targets)
            task = ag.mean_all(ag.mul(diff, diff))
        j_means = _batch_j_means(cfg, per_seq_js)
        loss = task
        if cfg.eta > 0.0:
            for j_mean in j_means:
                if j_mean is not None:
                    loss = ag.add(loss, ag.mul(cfg.eta, ag.mul(j_mean, j_mean)))
        tape.output = loss
    if not np.isfinite(loss.value):
        raise NumericError("loss")
    report = KsvdLossReport(
        per_head_j=[_layer_head_means(per_seq_js, layer) for layer in range(cfg.layers)],
        eta=cfg.eta,
        task_loss=float(task.value),
    )
    return float(loss.value), tape, report


def _layer_head_means(per_seq_js: list[list[list[Var]]], layer: int) -> list[float]:
    """Batch-mean J per head of one layer (report values, not tape nodes)."""
    head_count = len(per_seq_js[0][layer]) if per_seq_js else 0
    return [
        float(np.mean([seq_js[layer][head].value for seq_js in per_seq_js]))
        for head in range(head_count)
    ]


def predict(model: Model, inputs) -> np.ndarray:
    """Stacked head outputs: (B, classes) logits or (B, N, out_dim) values."""
    cfg = model.config
    outputs = []
    with Tape() as tape:
        leaves = _make_leaves(tape, model)
        for sequence in inputs:
            feats, _ = _sequence_graph(model, leaves, sequence)
            if cfg.out_kind == CLASSIFICATION:
                pooled = ag.mul(ag.sum_axis(feats, axis=0, keepdims=True), 1.0 / cfg.n_positions)
                row = ag.add(ag.matmul(pooled, ag.transpose(leaves["head.w"])), leaves["head.b"])
                outputs.append(row.value[0].copy())
            else:
                row = ag.add(ag.matmul(feats, ag.transpose(leaves["head.w"])), leaves["head.b"])
                outputs.append(row.value.copy())
    return np.asarray(outputs)


def sequence_features(model: Model, sequence) -> np.ndarray:
    """Final per-position features for one sequence (N x d_model)."""
    with Tape() as tape:
        leaves = _make_leaves(tape, model)
        feats, _ = _sequence_graph(model, leaves, sequence)
        return feats.value.copy()


def collect_layer_inputs(model: Model, sequence) -> list[np.ndarray]:
    """The standardized input each attention sublayer sees, per layer."""
    captured: list[np.ndarray] = []
    with Tape() as tape:
        leaves = _make_leaves(tape, model)
        _sequence_graph(model, leaves, sequence, capture=captured)
    return captured
