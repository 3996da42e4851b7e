"""Minimal differentiable engine: tape, message-passing layers, Adam."""

from .model import (
    Model,
    batch_logits,
    batch_task_loss,
    ModelHyper,
    check_same_arch,
    gcn_layer_forward,
    gin_layer_forward,
    graph_embedding,
    init_model,
    load_checkpoint,
    mean_readout,
    node_embeddings,
    perception_score,
    perception_score_value,
    save_checkpoint,
    task_logits,
)
from .optim import AdamState, adam_step, apply_spectral_norm_inplace, param_grad_norm, spectral_normalize
from .tape import Tensor, cross_entropy, kl_to_teacher, log_softmax, mean_all, relu, sigmoid

__all__ = [
    "AdamState",
    "Model",
    "ModelHyper",
    "Tensor",
    "adam_step",
    "batch_logits",
    "batch_task_loss",
    "apply_spectral_norm_inplace",
    "check_same_arch",
    "cross_entropy",
    "gcn_layer_forward",
    "gin_layer_forward",
    "graph_embedding",
    "init_model",
    "kl_to_teacher",
    "load_checkpoint",
    "log_softmax",
    "mean_all",
    "mean_readout",
    "node_embeddings",
    "param_grad_norm",
    "perception_score",
    "perception_score_value",
    "relu",
    "save_checkpoint",
    "sigmoid",
    "task_logits",
]
