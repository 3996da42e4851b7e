"""Dual-objective embedding, bit decoding, black-box verification, margins.

Verification consumes an opaque score oracle (any callable mapping a graph
to a score in [0, 1]) so the same code path audits in-process models,
checkpoints, and attacked copies. Only perception scores are read.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .calibration import AuditThresholds
from .carriers import CarrierBundle
from .errors import NonFiniteLossError, NonFiniteValueError, SizeMismatchError
from .graphs import Graph
from .nn.model import Model, batch_task_loss, check_same_arch, perception_score, perception_score_value
from .nn.optim import AdamState, adam_step, apply_spectral_norm_inplace
from .nn.tape import Tensor, add, mean_all, mul, scale, stack_rows, sub

ScoreOracle = Callable[[Graph], float]


@dataclass(frozen=True)
class EmbedConfig:
    """Training configuration for watermark embedding."""

    beta_wm: float = 1.0
    epochs: int = 60
    task_loss_id: str = "cross_entropy"
    carrier_batch_fraction: float = 0.16
    seed: int = 0
    batch_size: int = 32
    lr: float = 0.01
    weight_decay: float = 5e-4
    spectral_nu: float = 1.0
    beta_cap: float | None = None

    def __post_init__(self):
        if self.beta_wm < 0.0:
            raise ValueError("beta_wm must be >= 0")
        if self.task_loss_id != "cross_entropy":
            raise ValueError("only cross_entropy task loss is supported")
        if not (0.0 < self.carrier_batch_fraction <= 0.16):
            raise ValueError("carrier_batch_fraction must be in (0, 0.16]")
        if self.beta_cap is not None and self.beta_wm > self.beta_cap:
            raise ValueError(
                f"beta_wm {self.beta_wm} exceeds the imperceptibility cap {self.beta_cap}"
            )


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    task_loss: float
    wm_loss: float
    wm_acc: float


@dataclass(frozen=True, eq=False)
class VerificationReport:
    """Outcome of the black-box bit-match audit."""

    scores: np.ndarray
    decoded_bits: np.ndarray
    match_count: int
    tau: int
    decision: str
    kappa: float
    per_bit_margins: np.ndarray

    @property
    def verified(self) -> bool:
        return self.decision == "VERIFIED"

    def to_dict(self) -> dict:
        return {
            "scores": [float(s) for s in self.scores],
            "decoded_bits": [int(b) for b in self.decoded_bits],
            "match_count": self.match_count,
            "tau": self.tau,
            "decision": self.decision,
            "kappa": self.kappa,
            "per_bit_margins": [float(x) for x in self.per_bit_margins],
        }


def decode_bit(score: float) -> int:
    """Hard decision at the midpoint; the boundary decodes to 1."""
    if not (0.0 <= score <= 1.0):
        raise ValueError("score must be in [0, 1]")
    return 1 if score >= 0.5 else 0


def model_score_oracle(model: Model) -> ScoreOracle:
    return lambda g: perception_score_value(model, g)


def _as_oracle(model_or_oracle) -> ScoreOracle:
    if isinstance(model_or_oracle, Model):
        return model_score_oracle(model_or_oracle)
    return model_or_oracle


def carrier_scores(model_or_oracle, bundle: CarrierBundle) -> np.ndarray:
    oracle = _as_oracle(model_or_oracle)
    return np.array([oracle(g) for g in bundle.carriers])


def wm_loss(model: Model, bundle: CarrierBundle, indices=None) -> Tensor:
    """Mean squared error of the perception head against carrier targets."""
    if bundle.m == 0:
        raise ValueError("bundle must be nonempty")
    idx = range(bundle.m) if indices is None else indices
    residuals = []
    for k in idx:
        s = perception_score(model, bundle.carriers[k])
        r = sub(s, Tensor(np.asarray(bundle.targets[k])))
        residuals.append(mul(r, r))
    if len(residuals) == 1:
        return residuals[0]
    return mean_all(stack_rows(residuals))


def wm_accuracy(model_or_oracle, bundle: CarrierBundle) -> float:
    """Fraction of carrier bits decoded correctly."""
    scores = carrier_scores(model_or_oracle, bundle)
    decoded = (scores >= 0.5).astype(int)
    return float((decoded == bundle.key_bits).mean())


def _carriers_per_batch(m: int, batch_size: int, fraction: float) -> int:
    """Largest carrier count keeping carriers <= fraction of the joint batch."""
    cap = int(fraction / (1.0 - fraction) * batch_size)
    return max(1, min(m, cap))


def embed(
    model: Model,
    task_graphs: list[Graph],
    task_labels: np.ndarray,
    bundle: CarrierBundle,
    cfg: EmbedConfig,
) -> tuple[Model, list[EpochLog]]:
    """Train the joint objective: task loss plus beta_wm times the carrier loss.

    Per batch the task loss is computed on the batch and the carrier loss on
    the full carrier set, unless that would exceed carrier_batch_fraction of
    the joint batch, in which case a per-batch carrier subsample of the
    admissible size is drawn. After every optimizer step the perception head
    is spectrally normalized. Deterministic given cfg.seed and data order.
    Aborts with the last finite-loss checkpoint on a non-finite loss.
    """
    if not bundle.norm_constants.frozen:
        raise ValueError("normalization constants must be frozen before embedding")
    labels = np.asarray(task_labels, dtype=int)
    if len(task_graphs) != len(labels):
        raise ValueError("graphs and labels must align")
    rng = np.random.default_rng([cfg.seed, 0xE4BED])
    state = AdamState(model)
    m_eff = _carriers_per_batch(bundle.m, cfg.batch_size, cfg.carrier_batch_fraction)
    logs: list[EpochLog] = []
    last_good = model.copy()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(task_graphs))
        epoch_task = 0.0
        batches = 0
        for start in range(0, len(order), cfg.batch_size):
            batch_idx = order[start : start + cfg.batch_size]
            batch_graphs = [task_graphs[i] for i in batch_idx]
            batch_labels = labels[batch_idx]
            if cfg.beta_wm > 0.0 and m_eff < bundle.m:
                chosen = rng.choice(bundle.m, size=m_eff, replace=False)
            else:
                chosen = None
            try:
                model.zero_grad()
                task = batch_task_loss(model, batch_graphs, batch_labels)
                joint = task
                if cfg.beta_wm > 0.0:
                    joint = add(task, scale(wm_loss(model, bundle, chosen), cfg.beta_wm))
                joint.backward()
                adam_step(
                    model,
                    {n: p.grad for n, p in model.params.items()},
                    state,
                    lr=cfg.lr,
                    weight_decay=cfg.weight_decay,
                )
            except NonFiniteValueError as exc:
                err = NonFiniteLossError(
                    f"loss became non-finite at epoch {epoch}; last checkpoint attached"
                )
                err.checkpoint = last_good
                raise err from exc
            apply_spectral_norm_inplace(model, nu=cfg.spectral_nu)
            epoch_task += float(task.data)
            batches += 1
        full_wm = float(wm_loss(model, bundle).data)
        logs.append(
            EpochLog(
                epoch=epoch,
                task_loss=epoch_task / max(batches, 1),
                wm_loss=full_wm,
                wm_acc=wm_accuracy(model, bundle),
            )
        )
        last_good = model.copy()
    return model, logs


def verify(model_or_oracle, bundle: CarrierBundle, thresholds: AuditThresholds) -> VerificationReport:
    """Black-box ownership test: decode carrier bits, compare match count to tau."""
    if thresholds.m != bundle.m:
        raise SizeMismatchError(f"thresholds for m={thresholds.m}, bundle has m={bundle.m}")
    scores = carrier_scores(model_or_oracle, bundle)
    decoded = (scores >= 0.5).astype(int)
    matches = int((decoded == bundle.key_bits).sum())
    margins = np.abs(scores - 0.5)
    return VerificationReport(
        scores=scores,
        decoded_bits=decoded,
        match_count=matches,
        tau=thresholds.tau,
        decision="VERIFIED" if matches >= thresholds.tau else "NOT_VERIFIED",
        kappa=float(margins.min()),
        per_bit_margins=margins,
    )


def margin(model_or_oracle, bundle: CarrierBundle) -> float:
    """Smallest distance of any carrier score from the decoding midpoint."""
    if bundle.m == 0:
        raise ValueError("bundle must be nonempty")
    scores = carrier_scores(model_or_oracle, bundle)
    return float(np.abs(scores - 0.5).min())


def drift(model_a: Model, model_b: Model, bundle: CarrierBundle) -> float:
    """Worst-case perception-score change over the carriers."""
    check_same_arch(model_a, model_b)
    a = carrier_scores(model_a, bundle)
    b = carrier_scores(model_b, bundle)
    return float(np.abs(a - b).max())


def oracle_drift(oracle_a, oracle_b, bundle: CarrierBundle) -> float:
    a = carrier_scores(oracle_a, bundle)
    b = carrier_scores(oracle_b, bundle)
    return float(np.abs(a - b).max())
