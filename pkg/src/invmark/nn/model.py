"""Message-passing backbones, task head, and the scalar perception head.

A Model owns named parameter tensors. Forward passes build fresh tape nodes,
so scoring an immutable model snapshot is thread-safe; training (which
mutates parameters) owns the model exclusively.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ArchMismatchError, ShapeMismatchError
from ..graphs import Graph, degree_features
from .tape import Tensor, add, cross_entropy, matmul, mean_rows, relu, sigmoid, stack_rows, sum_all

BACKBONES = ("gcn", "gin")


@dataclass(frozen=True)
class ModelHyper:
    feature_dim: int = 4
    hidden_dim: int = 32
    layers: int = 2
    n_classes: int = 2
    backbone: str = "gcn"
    gin_eps: float = 0.0

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ValueError(f"backbone must be one of {BACKBONES}")


class Model:
    """Named parameter collection plus hyperparameters."""

    def __init__(self, hyper: ModelHyper, params: dict[str, Tensor]):
        self.hyper = hyper
        self.params = params

    def parameter_names(self) -> list[str]:
        return list(self.params.keys())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def gradients(self) -> dict[str, np.ndarray | None]:
        return {name: p.grad for name, p in self.params.items()}

    def copy(self) -> "Model":
        params = {}
        for name, p in self.params.items():
            t = Tensor(p.data.copy(), requires_grad=True)
            params[name] = t
        return Model(self.hyper, params)

    def arch_signature(self) -> tuple:
        return (self.hyper, tuple((n, p.data.shape) for n, p in sorted(self.params.items())))

    def param_vector(self) -> np.ndarray:
        return np.concatenate([self.params[n].data.ravel() for n in sorted(self.params)])

    def set_param_vector(self, vec: np.ndarray):
        offset = 0
        for name in sorted(self.params):
            p = self.params[name]
            size = p.data.size
            p.data = vec[offset : offset + size].reshape(p.data.shape).astype(float)
            offset += size
        if offset != len(vec):
            raise ShapeMismatchError("parameter vector length mismatch")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(hyper: ModelHyper, seed: int) -> Model:
    """Deterministic Glorot-uniform initialization, zero biases."""
    rng = np.random.default_rng([seed, 0x6E57])
    params: dict[str, Tensor] = {}
    d_in = hyper.feature_dim
    for layer in range(hyper.layers):
        d_out = hyper.hidden_dim
        if hyper.backbone == "gcn":
            params[f"backbone.{layer}.weight"] = Tensor(_glorot(rng, d_in, d_out), True)
            params[f"backbone.{layer}.bias"] = Tensor(np.zeros(d_out), True)
        else:
            params[f"backbone.{layer}.w1"] = Tensor(_glorot(rng, d_in, d_out), True)
            params[f"backbone.{layer}.b1"] = Tensor(np.zeros(d_out), True)
            params[f"backbone.{layer}.w2"] = Tensor(_glorot(rng, d_out, d_out), True)
            params[f"backbone.{layer}.b2"] = Tensor(np.zeros(d_out), True)
        d_in = d_out
    params["task.weight"] = Tensor(_glorot(rng, d_in, hyper.n_classes), True)
    params["task.bias"] = Tensor(np.zeros(hyper.n_classes), True)
    params["perc.weight"] = Tensor(_glorot(rng, d_in, 1), True)
    params["perc.bias"] = Tensor(np.zeros(1), True)
    return Model(hyper, params)


def perception_parameter_names(model: Model) -> list[str]:
    return [n for n in model.params if n.startswith("perc.")]


def gcn_norm_matrix(g: Graph) -> np.ndarray:
    """Symmetric-normalized adjacency with self-loops: D^-1/2 (A+I) D^-1/2."""
    a = g.adjacency() + np.eye(g.node_count)
    inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def gcn_layer_forward(h: Tensor, g: Graph, weights: Tensor, bias: Tensor) -> Tensor:
    """Symmetric-normalized neighborhood mean, affine map, ReLU."""
    if h.data.shape[0] != g.node_count:
        raise ShapeMismatchError("feature rows must match node count")
    agg = matmul(Tensor(gcn_norm_matrix(g)), h)
    return relu(add(matmul(agg, weights), bias))


def gin_layer_forward(
    h: Tensor,
    g: Graph,
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
    eps: float = 0.0,
) -> Tensor:
    """Sum aggregation (1+eps) h_v + sum of neighbors, then a 2-layer MLP."""
    if h.data.shape[0] != g.node_count:
        raise ShapeMismatchError("feature rows must match node count")
    agg_matrix = g.adjacency() + (1.0 + eps) * np.eye(g.node_count)
    agg = matmul(Tensor(agg_matrix), h)
    hidden = relu(add(matmul(agg, w1), b1))
    return relu(add(matmul(hidden, w2), b2))


def mean_readout(h: Tensor) -> Tensor:
    """Permutation-invariant graph embedding: column means."""
    return mean_rows(h)


def node_embeddings(model: Model, g: Graph) -> Tensor:
    feats = g.node_features
    if feats is None:
        feats = degree_features(g, model.hyper.feature_dim)
    if feats.shape[1] != model.hyper.feature_dim:
        raise ShapeMismatchError(
            f"feature dim {feats.shape[1]} != model feature dim {model.hyper.feature_dim}"
        )
    h = Tensor(feats)
    for layer in range(model.hyper.layers):
        if model.hyper.backbone == "gcn":
            h = gcn_layer_forward(
                h, g, model.params[f"backbone.{layer}.weight"], model.params[f"backbone.{layer}.bias"]
            )
        else:
            h = gin_layer_forward(
                h,
                g,
                model.params[f"backbone.{layer}.w1"],
                model.params[f"backbone.{layer}.b1"],
                model.params[f"backbone.{layer}.w2"],
                model.params[f"backbone.{layer}.b2"],
                model.hyper.gin_eps,
            )
    return h


def graph_embedding(model: Model, g: Graph) -> Tensor:
    return mean_readout(node_embeddings(model, g))


def task_logits(model: Model, g: Graph) -> Tensor:
    emb = graph_embedding(model, g)
    return add(matmul(emb, model.params["task.weight"]), model.params["task.bias"])


def perception_score(model: Model, g: Graph) -> Tensor:
    """Scalar head in [0, 1]: sigmoid of an affine map of the embedding."""
    emb = graph_embedding(model, g)
    raw = add(matmul(emb, model.params["perc.weight"]), model.params["perc.bias"])
    return sigmoid(sum_all(raw))


def perception_score_value(model: Model, g: Graph) -> float:
    return float(perception_score(model, g).data)


def batch_task_loss(model: Model, graphs: list[Graph], labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of a batch of graphs under the task head."""
    rows = stack_rows([task_logits(model, g) for g in graphs])
    return cross_entropy(rows, labels)


def batch_logits(model: Model, graphs: list[Graph]) -> Tensor:
    return stack_rows([task_logits(model, g) for g in graphs])


def check_same_arch(a: Model, b: Model):
    if a.arch_signature() != b.arch_signature():
        raise ArchMismatchError("models do not share an architecture")


CHECKPOINT_VERSION = 1


def checkpoint_dict(model: Model) -> dict:
    """JSON-ready container; float repr round-trips bit-exactly."""
    return {
        "version": CHECKPOINT_VERSION,
        "hyper": asdict(model.hyper),
        "params": [
            {"name": n, "shape": list(p.data.shape), "values": p.data.ravel().tolist()}
            for n, p in sorted(model.params.items())
        ],
    }


def model_from_checkpoint(doc: dict) -> Model:
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    hyper = ModelHyper(**doc["hyper"])
    params = {}
    for rec in doc["params"]:
        arr = np.array(rec["values"], dtype=float).reshape(rec["shape"])
        params[rec["name"]] = Tensor(arr, requires_grad=True)
    return Model(hyper, params)


def save_checkpoint(model: Model, path: str):
    with open(path, "w") as fh:
        json.dump(checkpoint_dict(model), fh, sort_keys=True, allow_nan=False)
        fh.write("\n")


def load_checkpoint(path: str) -> Model:
    with open(path) as fh:
        return model_from_checkpoint(json.load(fh))
