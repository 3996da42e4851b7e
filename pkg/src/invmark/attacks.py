"""Post-hoc model edits: pruning, fine-tuning, quantization, distillation.

Attacks never mutate their input model; each returns an edited copy. All
randomness is derived from the attack seed, so every edit is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .carriers import CarrierBundle
from .errors import BundleRequiredError, NonFiniteLossError, NonFiniteValueError
from .graphs import Graph
from .nn.model import Model, batch_logits, batch_task_loss, check_same_arch, init_model
from .nn.optim import AdamState, adam_step
from .nn.tape import add, kl_to_teacher, scale
from .watermark import drift, wm_loss

# A "full" distillation run; retention fractions scale against this count.
FULL_KD_EPOCHS = 40

PRUNE_SWEEP = (0.2, 0.4, 0.5)
DISTILL_SWEEP = (0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class AttackSpec:
    """Which edit to run; only the fields for ``kind`` are meaningful."""

    kind: str  # PRUNE | FINETUNE | QUANTIZE | KD | KD_WM
    prune_fraction: float = 0.0
    ft_epochs: int = 20
    bits: int = 8
    kd_temperature: float = 2.0
    kd_retention: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("PRUNE", "FINETUNE", "QUANTIZE", "KD", "KD_WM"):
            raise ValueError(f"unknown attack kind {self.kind}")
        if not (0.0 <= self.prune_fraction <= 1.0):
            raise ValueError("prune_fraction must be in [0, 1]")
        if self.bits not in (4, 8):
            raise ValueError("bits must be 4 or 8")
        if not (0.0 < self.kd_retention <= 1.0):
            raise ValueError("kd_retention must be in (0, 1]")

    @property
    def pi_kd(self) -> float:
        return 1.0 - self.kd_retention


def prune(model: Model, p_pr: float) -> Model:
    """One-shot global magnitude pruning over every parameter tensor.

    Zeroes exactly floor(p_pr * #params) entries of smallest magnitude
    (ties broken by flat parameter index), perception head included: the
    attacker has no reason to spare it. No retraining.
    """
    if not (0.0 <= p_pr <= 1.0):
        raise ValueError("p_pr must be in [0, 1]")
    out = model.copy()
    vec = out.param_vector()
    k = int(np.floor(p_pr * vec.size))
    if k > 0:
        order = np.argsort(np.abs(vec), kind="stable")
        vec[order[:k]] = 0.0
        out.set_param_vector(vec)
    return out


def finetune(
    model: Model,
    task_graphs: list[Graph],
    task_labels: np.ndarray,
    epochs: int = 20,
    seed: int = 0,
    lr: float = 0.01,
    weight_decay: float = 5e-4,
    batch_size: int = 32,
) -> tuple[Model, float]:
    """Task-loss-only training on clean data; returns (model, parameter displacement)."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    out = model.copy()
    labels = np.asarray(task_labels, dtype=int)
    rng = np.random.default_rng([seed, 0xF17E])
    state = AdamState(out)
    before = model.param_vector()
    for _ in range(epochs):
        order = rng.permutation(len(task_graphs))
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            try:
                out.zero_grad()
                loss = batch_task_loss(out, [task_graphs[i] for i in idx], labels[idx])
                loss.backward()
                adam_step(
                    out,
                    {n: p.grad for n, p in out.params.items()},
                    state,
                    lr=lr,
                    weight_decay=weight_decay,
                )
            except NonFiniteValueError as exc:
                raise NonFiniteLossError("fine-tuning loss became non-finite") from exc
    delta_theta = float(np.linalg.norm(out.param_vector() - before))
    return out, delta_theta


def quantize(model: Model, bits: int) -> Model:
    """Symmetric per-tensor fake quantization.

    Each named tensor is rounded to a (2^(bits-1) - 1)-level grid scaled by
    its own max magnitude; all-zero tensors pass through unchanged. Values
    already on the grid are fixed points, so re-quantizing is idempotent.
    """
    if bits not in (4, 8):
        raise ValueError("bits must be 4 or 8")
    out = model.copy()
    levels = 2 ** (bits - 1) - 1
    for p in out.params.values():
        scale_max = float(np.abs(p.data).max())
        if scale_max <= 0.0:
            continue
        step = scale_max / levels
        p.data = np.round(p.data / step) * step
    return out


def kd(
    teacher: Model,
    student_init: Model,
    task_graphs: list[Graph],
    temperature: float = 2.0,
    with_wm: bool = False,
    bundle: CarrierBundle | None = None,
    beta_wm: float = 1.0,
    epochs: int = FULL_KD_EPOCHS,
    seed: int = 0,
    lr: float = 0.01,
    batch_size: int = 32,
) -> Model:
    """Logits-only distillation: KL(teacher || student) at a temperature,
    times T^2, averaged over the task data. ``with_wm`` adds the watermark
    regression loss on the bundle (the KD+WM defense).
    """
    check_same_arch(teacher, student_init)
    if with_wm and bundle is None:
        raise BundleRequiredError("KD with watermark loss needs a carrier bundle")
    student = student_init.copy()
    rng = np.random.default_rng([seed, 0xD157])
    state = AdamState(student)
    for _ in range(epochs):
        order = rng.permutation(len(task_graphs))
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            graphs = [task_graphs[i] for i in idx]
            t_logits = batch_logits(teacher, graphs).data
            soft = np.exp(t_logits / temperature)
            soft = soft / soft.sum(axis=1, keepdims=True)
            try:
                student.zero_grad()
                loss = kl_to_teacher(batch_logits(student, graphs), soft, temperature)
                if with_wm:
                    loss = add(loss, scale(wm_loss(student, bundle), beta_wm))
                loss.backward()
                adam_step(
                    student,
                    {n: p.grad for n, p in student.params.items()},
                    state,
                    lr=lr,
                    weight_decay=0.0,
                )
            except NonFiniteValueError as exc:
                raise NonFiniteLossError("distillation loss became non-finite") from exc
    return student


def kd_epochs_for_retention(rho_kd: float, full_epochs: int = FULL_KD_EPOCHS) -> int:
    """Epoch-fraction surrogate: pi_kd = 1 - rho_kd of a full distillation run."""
    if not (0.0 < rho_kd <= 1.0):
        raise ValueError("rho_kd must be in (0, 1]")
    return max(1, int(round((1.0 - rho_kd) * full_epochs)))


def calibrate_budget_constants(
    model: Model,
    task_graphs: list[Graph],
    task_labels: np.ndarray,
    bundle: CarrierBundle,
    seed: int = 0,
    ft_epochs: int = 20,
) -> tuple[float, float]:
    """Sweep-based constants of the composite drift budget.

    Pruning drifts are measured against the fine-tuned model at fractions
    {0.2, 0.4, 0.5}; distillation drifts against the 50%-pruned fine-tuned
    model at retention complements {0.25, 0.5, 0.75, 1.0}. The constants are
    the worst drift-to-scale ratios, so the budget inequality holds on every
    sweep point by construction.
    """
    c_prune, c_distill = budget_sweep_ratios(
        model, task_graphs, task_labels, bundle, seed=seed, ft_epochs=ft_epochs
    )
    return c_prune, c_distill


def budget_sweep_ratios(
    model: Model,
    task_graphs: list[Graph],
    task_labels: np.ndarray,
    bundle: CarrierBundle,
    seed: int = 0,
    ft_epochs: int = 20,
) -> tuple[float, float]:
    finetuned, _ = finetune(model, task_graphs, task_labels, epochs=ft_epochs, seed=seed)
    c_prune = prune_ratio_from_drifts(
        [(p, drift(prune(finetuned, p), finetuned, bundle)) for p in PRUNE_SWEEP]
    )
    reference = prune(finetuned, 0.5)
    drifts = []
    for pi in DISTILL_SWEEP:
        student = kd(
            reference,
            init_model(reference.hyper, seed + 17),
            task_graphs,
            epochs=max(1, int(round(pi * FULL_KD_EPOCHS))),
            seed=seed,
        )
        drifts.append((pi, drift(student, reference, bundle)))
    c_distill = distill_ratio_from_drifts(drifts)
    return c_prune, c_distill


def prune_ratio_from_drifts(points: list[tuple[float, float]]) -> float:
    """c_prune = max over sweep points of gamma / sqrt(p)."""
    return max(gamma / np.sqrt(p) for p, gamma in points)


def distill_ratio_from_drifts(points: list[tuple[float, float]]) -> float:
    """c_distill = max over sweep points of gamma / pi."""
    return max(gamma / pi for pi, gamma in points)
