"""Federated averaging over community shards with a bare-numpy MLP.

Each round every participating client trains the current global parameters on
its own shard (mini-batch gradient descent on softmax cross-entropy), then the
server averages parameter vectors with the community weights.  The returned
model is the round minimising held-out validation loss.  Every random choice
is keyed off the config seed — initialisation, per-round shuffles, client
sampling — so a whole run is a pure function of (data, config).
"""

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ArchitectureMismatch, DimensionMismatch, EmptyShard
from .stats import Record

_INIT_STREAM = 101
_SHUFFLE_STREAM = 102
_CLIENT_SAMPLING_STREAM = 202


@dataclass
class FlConfig:
    rounds: int = 30
    local_epochs: int = 1
    batch_fraction: float = 1.0
    learning_rate: float = 0.05
    seed: int = 0
    participating_clients: Optional[int] = None  # None = all clients every round
    hidden_layers: Tuple[int, ...] = (64, 32)
    activation: str = "relu"
    optimizer: str = "sgd"  # "sgd" | "adam"
    use_sensitive_features: bool = False

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if self.local_epochs < 1:
            raise ValueError(f"local_epochs must be >= 1, got {self.local_epochs}")
        if not (0.0 < self.batch_fraction <= 1.0):
            raise ValueError(f"batch_fraction must be in (0, 1], got {self.batch_fraction}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.activation != "relu":
            raise ValueError(f"unknown activation {self.activation!r}")

    def to_json_dict(self) -> Dict[str, object]:
        return {
            "rounds": self.rounds,
            "local_epochs": self.local_epochs,
            "batch_fraction": self.batch_fraction,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "participating_clients": self.participating_clients,
            "hidden_layers": list(self.hidden_layers),
            "activation": self.activation,
            "optimizer": self.optimizer,
            "use_sensitive_features": self.use_sensitive_features,
        }

    @classmethod
    def from_json_dict(cls, d: Dict[str, object]) -> "FlConfig":
        d = dict(d)
        d["hidden_layers"] = tuple(d.get("hidden_layers", (64, 32)))
        return cls(**d)


@dataclass
class FlModel:
    """Flat parameter vector plus the architecture needed to interpret it."""

    theta: np.ndarray
    input_dim: int
    hidden: Tuple[int, ...]
    n_classes: int
    labels: Tuple[int, ...]
    activation: str = "relu"
    uses_sensitive: bool = False

    def __post_init__(self):
        if self.theta.shape != (param_count(self.input_dim, self.hidden, self.n_classes),):
            raise ArchitectureMismatch(
                f"theta has {self.theta.shape[0]} parameters, architecture needs "
                f"{param_count(self.input_dim, self.hidden, self.n_classes)}"
            )
        if len(self.labels) != self.n_classes:
            raise ArchitectureMismatch(f"{len(self.labels)} labels for {self.n_classes} classes")

    def architecture(self) -> Tuple:
        return (self.input_dim, self.hidden, self.n_classes, self.activation, self.labels, self.uses_sensitive)

    def to_json_dict(self) -> Dict[str, object]:
        return {
            "theta": self.theta.tolist(),
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "n_classes": self.n_classes,
            "labels": list(self.labels),
            "activation": self.activation,
            "uses_sensitive": self.uses_sensitive,
        }

    @classmethod
    def from_json_dict(cls, d: Dict[str, object]) -> "FlModel":
        return cls(
            theta=np.asarray(d["theta"], dtype=float),
            input_dim=int(d["input_dim"]),
            hidden=tuple(d["hidden"]),
            n_classes=int(d["n_classes"]),
            labels=tuple(d["labels"]),
            activation=d.get("activation", "relu"),
            uses_sensitive=bool(d.get("uses_sensitive", False)),
        )


def _layer_dims(input_dim: int, hidden: Tuple[int, ...], n_classes: int) -> List[Tuple[int, int]]:
    widths = [input_dim, *hidden, n_classes]
    return list(zip(widths[:-1], widths[1:]))


def param_count(input_dim: int, hidden: Tuple[int, ...], n_classes: int) -> int:
    return sum(d_in * d_out + d_out for d_in, d_out in _layer_dims(input_dim, hidden, n_classes))


def _unpack(theta: np.ndarray, dims: List[Tuple[int, int]]):
    weights, biases, pos = [], [], 0
    for d_in, d_out in dims:
        weights.append(theta[pos: pos + d_in * d_out].reshape(d_in, d_out))
        pos += d_in * d_out
        biases.append(theta[pos: pos + d_out])
        pos += d_out
    return weights, biases


def init_model(
    input_dim: int,
    n_classes: int,
    labels: Sequence[int],
    config: FlConfig,
) -> FlModel:
    """He-style initialisation drawn from the config seed's init stream."""
    rng = np.random.default_rng([config.seed, _INIT_STREAM])
    dims = _layer_dims(input_dim, config.hidden_layers, n_classes)
    parts = []
    for d_in, d_out in dims:
        parts.append(rng.normal(0.0, math.sqrt(2.0 / d_in), size=d_in * d_out))
        parts.append(np.zeros(d_out))
    return FlModel(
        theta=np.concatenate(parts),
        input_dim=input_dim,
        hidden=config.hidden_layers,
        n_classes=n_classes,
        labels=tuple(labels),
        activation=config.activation,
        uses_sensitive=config.use_sensitive_features,
    )


def design_matrix(model_or_flag, records: Sequence[Record]) -> np.ndarray:
    """Stack record features, optionally appending the sensitive bit and the
    community id as two trailing columns."""
    uses_sensitive = (
        model_or_flag if isinstance(model_or_flag, bool) else model_or_flag.uses_sensitive
    )
    rows = []
    for r in records:
        feats = np.asarray(r.features, dtype=float)
        if uses_sensitive:
            feats = np.concatenate([feats, [float(r.sensitive), float(r.community)]])
        rows.append(feats)
    return np.vstack(rows)


def _class_indices(model: FlModel, records: Sequence[Record]) -> np.ndarray:
    index = {v: i for i, v in enumerate(model.labels)}
    try:
        return np.array([index[r.label] for r in records], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} not in model labels {model.labels}") from None


def _forward(theta: np.ndarray, X: np.ndarray, dims) -> np.ndarray:
    weights, biases = _unpack(theta, dims)
    h = X
    for i, (W, b) in enumerate(zip(weights, biases)):
        h = h @ W + b
        if i < len(weights) - 1:
            h = np.maximum(h, 0.0)
    return h


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _loss_and_grad(theta: np.ndarray, X: np.ndarray, y_idx: np.ndarray, dims):
    weights, biases = _unpack(theta, dims)
    acts = [X]
    h = X
    for i, (W, b) in enumerate(zip(weights, biases)):
        h = h @ W + b
        if i < len(weights) - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    probs = _softmax(acts[-1])
    n = X.shape[0]
    loss = float(-np.mean(np.log(np.clip(probs[np.arange(n), y_idx], 1e-12, None))))
    delta = probs.copy()
    delta[np.arange(n), y_idx] -= 1.0
    delta /= n
    grads = []
    for i in range(len(weights) - 1, -1, -1):
        grads.append((acts[i].T @ delta, delta.sum(axis=0)))
        if i > 0:
            delta = (delta @ weights[i].T) * (acts[i] > 0.0)
    flat = []
    for dW, db in reversed(grads):
        flat.append(dW.ravel())
        flat.append(db)
    return loss, np.concatenate(flat)


def mean_loss(model: FlModel, records: Sequence[Record]) -> float:
    X = design_matrix(model, records)
    if X.shape[1] != model.input_dim:
        raise DimensionMismatch(X.shape[1], model.input_dim)
    dims = _layer_dims(model.input_dim, model.hidden, model.n_classes)
    y = _class_indices(model, records)
    probs = _softmax(_forward(model.theta, X, dims))
    return float(-np.mean(np.log(np.clip(probs[np.arange(len(records)), y], 1e-12, None))))


def local_train(
    model: FlModel,
    shard: Sequence[Record],
    config: FlConfig,
    round_index: int = 1,
    community: Optional[int] = None,
) -> FlModel:
    """E epochs of mini-batch descent from the given parameters.

    Batches have size ceil(batch_fraction * |shard|); shuffles are drawn from
    a stream keyed by (seed, round, community), so a rerun reproduces the
    identical parameter trajectory.  Adaptive-moment state, when enabled,
    lives only for the duration of this call.
    """
    if community is None:
        community = shard[0].community if len(shard) else 0
    if len(shard) == 0:
        raise EmptyShard(community)
    X = design_matrix(model, shard)
    if X.shape[1] != model.input_dim:
        raise DimensionMismatch(X.shape[1], model.input_dim)
    y = _class_indices(model, shard)
    dims = _layer_dims(model.input_dim, model.hidden, model.n_classes)
    n = X.shape[0]
    batch = int(math.ceil(config.batch_fraction * n))
    rng = np.random.default_rng([config.seed, _SHUFFLE_STREAM, round_index, community])
    theta = model.theta.copy()
    if config.optimizer == "adam":
        m_t = np.zeros_like(theta)
        v_t = np.zeros_like(theta)
        step = 0
    for _ in range(config.local_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch):
            idx = perm[start: start + batch]
            _, grad = _loss_and_grad(theta, X[idx], y[idx], dims)
            if config.optimizer == "sgd":
                theta -= config.learning_rate * grad
            else:
                step += 1
                m_t = 0.9 * m_t + 0.1 * grad
                v_t = 0.999 * v_t + 0.001 * grad * grad
                m_hat = m_t / (1.0 - 0.9 ** step)
                v_hat = v_t / (1.0 - 0.999 ** step)
                theta -= config.learning_rate * m_hat / (np.sqrt(v_hat) + 1e-8)
    return replace(model, theta=theta)


def aggregate(models: Sequence[FlModel], weights: Sequence[float]) -> FlModel:
    """Coordinate-wise weighted average, summed in client-index order."""
    if len(models) == 0:
        raise ValueError("nothing to aggregate")
    if len(models) != len(weights):
        raise ValueError(f"{len(models)} models vs {len(weights)} weights")
    arch = models[0].architecture()
    for m in models[1:]:
        if m.architecture() != arch:
            raise ArchitectureMismatch(f"{m.architecture()} vs {arch}")
    w = np.asarray(weights, dtype=float)
    if abs(float(w.sum()) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {w.sum()}")
    theta = np.zeros_like(models[0].theta)
    for wi, m in zip(w, models):
        theta += wi * m.theta
    return replace(models[0], theta=theta)


@dataclass
class TrainingTrace:
    communities: List[int]
    client_losses: np.ndarray  # (rounds, K), NaN for non-participating clients
    val_loss: np.ndarray
    val_acc: np.ndarray
    best_round: int  # 1-based

    def to_json_dict(self) -> Dict[str, object]:
        def clean(arr):
            return [[None if math.isnan(v) else v for v in row] for row in arr]

        return {
            "communities": self.communities,
            "client_losses": clean(self.client_losses),
            "val_loss": [None if math.isnan(v) else v for v in self.val_loss],
            "val_acc": [None if math.isnan(v) else v for v in self.val_acc],
            "best_round": self.best_round,
        }

    @classmethod
    def from_json_dict(cls, d: Dict[str, object]) -> "TrainingTrace":
        def arr(rows):
            return np.array([[np.nan if v is None else v for v in row] for row in rows], dtype=float)

        return cls(
            communities=[int(c) for c in d["communities"]],
            client_losses=arr(d["client_losses"]),
            val_loss=np.array([np.nan if v is None else v for v in d["val_loss"]], dtype=float),
            val_acc=np.array([np.nan if v is None else v for v in d["val_acc"]], dtype=float),
            best_round=int(d["best_round"]),
        )


def fedavg(
    clients: Sequence[Sequence[Record]],
    config: FlConfig,
    validation: Optional[Sequence[Record]] = None,
) -> Tuple[FlModel, TrainingTrace]:
    """Full federated-averaging loop over community shards.

    Community weights are the shard-size fractions.  With a validation set the
    returned model is the round with the smallest validation loss (earliest on
    ties); without one, the final round.  Client shards must be given in
    ascending community order, one shard per community.
    """
    k = len(clients)
    if k == 0:
        raise ValueError("need at least one client shard")
    communities = []
    for shard in clients:
        if len(shard) == 0:
            raise EmptyShard(len(communities) + 1)
        communities.append(shard[0].community)
    sizes = np.array([len(s) for s in clients], dtype=float)
    p = sizes / sizes.sum()
    label_set = {r.label for shard in clients for r in shard}
    if validation:
        label_set |= {r.label for r in validation}
    labels = tuple(sorted(label_set))
    first = clients[0][0]
    input_dim = len(np.asarray(first.features, dtype=float)) + (2 if config.use_sensitive_features else 0)
    model = init_model(input_dim, len(labels), labels, config)

    n_sample = config.participating_clients
    client_losses = np.full((config.rounds, k), np.nan)
    val_loss = np.full(config.rounds, np.nan)
    val_acc = np.full(config.rounds, np.nan)
    best_round = config.rounds
    best_loss = math.inf
    best_theta = None

    for rnd in range(1, config.rounds + 1):
        if n_sample is None or n_sample >= k:
            chosen = list(range(k))
        else:
            rng = np.random.default_rng([config.seed, _CLIENT_SAMPLING_STREAM, rnd])
            chosen = sorted(rng.choice(k, size=n_sample, replace=False).tolist())
        local_models = []
        for ci in chosen:
            local = local_train(model, clients[ci], config, round_index=rnd, community=communities[ci])
            client_losses[rnd - 1, ci] = mean_loss(local, clients[ci])
            local_models.append(local)
        w = p[chosen] / p[chosen].sum()
        model = aggregate(local_models, w)
        if validation:
            val_loss[rnd - 1] = mean_loss(model, validation)
            val_acc[rnd - 1] = float(np.mean(predict(model, validation) == [r.label for r in validation]))
            if val_loss[rnd - 1] < best_loss:
                best_loss = val_loss[rnd - 1]
                best_round = rnd
                best_theta = model.theta.copy()

    if validation and best_theta is not None:
        model = replace(model, theta=best_theta)
    else:
        best_round = config.rounds
    trace = TrainingTrace(
        communities=communities,
        client_losses=client_losses,
        val_loss=val_loss,
        val_acc=val_acc,
        best_round=best_round,
    )
    return model, trace


def predict(model: FlModel, records: Sequence[Record]) -> np.ndarray:
    """Label values by argmax of the output scores; ties break toward the
    smallest class index."""
    X = design_matrix(model, records)
    if X.shape[1] != model.input_dim:
        raise DimensionMismatch(X.shape[1], model.input_dim)
    dims = _layer_dims(model.input_dim, model.hidden, model.n_classes)
    logits = _forward(model.theta, X, dims)
    idx = np.argmax(logits, axis=1)  # first maximum wins
    return np.asarray(model.labels)[idx]


def predict_scores(model: FlModel, records: Sequence[Record]) -> Tuple[np.ndarray, np.ndarray]:
    """(labels, class probabilities) for callers that want scores too."""
    X = design_matrix(model, records)
    if X.shape[1] != model.input_dim:
        raise DimensionMismatch(X.shape[1], model.input_dim)
    dims = _layer_dims(model.input_dim, model.hidden, model.n_classes)
    probs = _softmax(_forward(model.theta, X, dims))
    idx = np.argmax(probs, axis=1)
    return np.asarray(model.labels)[idx], probs
