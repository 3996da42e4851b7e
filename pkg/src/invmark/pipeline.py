"""End-to-end orchestration: carriers -> calibrate -> embed -> verify -> attacks.

Every run writes a manifest with the fully resolved configuration and the
toolkit version; any stage failure aborts with a partial manifest. All
artifacts except the manifest are timestamp-free, so reruns with one seed
are byte-identical.
"""

from __future__ import annotations

import os
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .attacks import AttackSpec, finetune, kd, kd_epochs_for_retention, prune, quantize
from .calibration import budget_rhs, calibrate_thresholds, calibration_report, estimate_l_s
from .carriers import ProtocolParams, build_bundle, bundle_to_dict, estimate_rho0
from .data import SyntheticTask, load_tudataset, make_synthetic_task
from .errors import InvmarkError
from .graphs import Graph
from .nn.model import Model, ModelHyper, batch_logits, init_model, save_checkpoint
from .reports import emit_report
from .watermark import EmbedConfig, drift, embed, verify, wm_accuracy

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_NOT_VERIFIED = 3


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    out_dir: str
    n_graphs: int = 600
    m: int = 128
    alpha: float = 1e-6
    beta_wm: float = 5.0
    epochs: int = 120
    batch_size: int = 32
    hidden_dim: int = 32
    layers: int = 2
    backbone: str = "gcn"
    attacks: tuple[str, ...] = ()
    paper_compat: bool = False
    tu_dir: str | None = None


def task_accuracy(model: Model, graphs: list[Graph], labels: np.ndarray) -> float:
    logits = batch_logits(model, graphs).data
    return float((np.argmax(logits, axis=1) == np.asarray(labels)).mean())


def load_task(cfg: PipelineConfig) -> SyntheticTask:
    if cfg.tu_dir is None:
        return make_synthetic_task(cfg.n_graphs, cfg.seed)
    pairs = load_tudataset(cfg.tu_dir)
    graphs = [g for g, _ in pairs]
    raw = [label for _, label in pairs]
    classes = {c: i for i, c in enumerate(sorted(set(raw)))}
    labels = np.array([classes[c] for c in raw], dtype=int)
    rng = np.random.default_rng([cfg.seed, 0x7D])
    train, val, test = [], [], []
    for cls in range(len(classes)):
        members = np.nonzero(labels == cls)[0]
        members = members[rng.permutation(len(members))]
        n_tr = int(round(0.8 * len(members)))
        n_val = int(round(0.1 * len(members)))
        train.extend(members[:n_tr])
        val.extend(members[n_tr : n_tr + n_val])
        test.extend(members[n_tr + n_val :])
    return SyntheticTask(
        graphs=graphs,
        labels=labels,
        train_idx=np.sort(np.array(train, dtype=int)),
        val_idx=np.sort(np.array(val, dtype=int)),
        test_idx=np.sort(np.array(test, dtype=int)),
    )


def parse_attack_token(token: str, seed: int) -> AttackSpec:
    """Tokens like PRUNE:0.5, QUANTIZE:8, FINETUNE:20, KD:0.5, KD_WM:0.5."""
    kind, _, arg = token.partition(":")
    kind = kind.upper()
    if kind == "PRUNE":
        return AttackSpec(kind=kind, prune_fraction=float(arg or 0.5), seed=seed)
    if kind == "QUANTIZE":
        return AttackSpec(kind=kind, bits=int(arg or 8), seed=seed)
    if kind == "FINETUNE":
        return AttackSpec(kind=kind, ft_epochs=int(arg or 20), seed=seed)
    if kind in ("KD", "KD_WM"):
        return AttackSpec(kind=kind, kd_retention=float(arg or 0.5), seed=seed)
    raise ValueError(f"unknown attack token {token}")


def run_attack(
    spec: AttackSpec,
    model: Model,
    task: SyntheticTask,
    bundle,
    thresholds,
    budget_constants: tuple[float, float] | None = None,
    l_s: float | None = None,
) -> tuple[Model, dict]:
    """Apply one edit, measure drift and the post-edit verification.

    With calibrated (c_prune, c_distill) constants and an L_s estimate the
    report also checks the composite drift budget for this edit's own
    pruning fraction / distillation fraction.
    """
    tr_g, tr_y = task.subset(task.train_idx)
    delta_theta = 0.0
    p_pr = 0.0
    pi_kd = 0.0
    if spec.kind == "PRUNE":
        edited = prune(model, spec.prune_fraction)
        p_pr = spec.prune_fraction
    elif spec.kind == "QUANTIZE":
        edited = quantize(model, spec.bits)
    elif spec.kind == "FINETUNE":
        edited, delta_theta = finetune(
            model, tr_g, tr_y, epochs=spec.ft_epochs, seed=spec.seed
        )
    else:
        epochs = kd_epochs_for_retention(spec.kd_retention)
        edited = kd(
            model,
            init_model(model.hyper, spec.seed + 0x2D),
            tr_g,
            temperature=spec.kd_temperature,
            with_wm=spec.kind == "KD_WM",
            bundle=bundle if spec.kind == "KD_WM" else None,
            epochs=epochs,
            seed=spec.seed,
        )
        delta_theta = float(np.linalg.norm(edited.param_vector() - model.param_vector()))
        pi_kd = spec.pi_kd
    gamma = drift(edited, model, bundle)
    report = verify(edited, bundle, thresholds)
    doc = {
        "spec": asdict(spec),
        "drift_gamma": gamma,
        "delta_theta": delta_theta,
        "wm_acc": wm_accuracy(edited, bundle),
        "verification": report.to_dict(),
    }
    if budget_constants is not None and l_s is not None:
        c_prune, c_distill = budget_constants
        rhs = budget_rhs(l_s, delta_theta, c_prune, p_pr, c_distill, pi_kd)
        doc["budget"] = {
            "l_s": l_s,
            "c_prune": c_prune,
            "c_distill": c_distill,
            "rhs": rhs,
            "holds": gamma <= rhs,
        }
    else:
        doc["budget"] = {"checked": False, "reason": "no calibrated budget constants supplied"}
    return edited, doc


def run_pipeline(cfg: PipelineConfig) -> int:
    """gen-carriers -> calibrate -> embed -> verify (-> attacks -> verify)."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifest: dict = {
        "toolkit_version": __version__,
        "config": {**asdict(cfg), "attacks": list(cfg.attacks)},
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "stages": {},
        "status": "running",
    }

    def _flush(status: str | None = None):
        if status is not None:
            manifest["status"] = status
            manifest["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        emit_report(manifest, os.path.join(cfg.out_dir, "manifest.json"))

    stage = "task"
    try:
        task = load_task(cfg)
        manifest["stages"]["task"] = {"graphs": len(task.graphs)}
        _flush()

        stage = "carriers"
        bundle = build_bundle(task.graphs, cfg.m, ProtocolParams(rng_seed=cfg.seed))
        emit_report(bundle_to_dict(bundle), os.path.join(cfg.out_dir, "bundle.json"))
        manifest["stages"]["carriers"] = {"m": bundle.m, "path": "bundle.json"}
        _flush()

        stage = "calibrate"
        rho0 = estimate_rho0(bundle)
        thresholds = calibrate_thresholds(cfg.m, cfg.alpha, rho0)
        cal = calibration_report(cfg.m, cfg.alpha, rho0, paper_compat=cfg.paper_compat)
        cal["rho0_estimated"] = rho0
        emit_report(cal, os.path.join(cfg.out_dir, "calibration.json"))
        manifest["stages"]["calibrate"] = {"rho0": rho0, "tau": thresholds.tau}
        _flush()

        stage = "embed"
        tr_g, tr_y = task.subset(task.train_idx)
        te_g, te_y = task.subset(task.test_idx)
        hyper = ModelHyper(
            feature_dim=task.graphs[0].node_features.shape[1]
            if task.graphs[0].node_features is not None
            else 4,
            hidden_dim=cfg.hidden_dim,
            layers=cfg.layers,
            n_classes=int(task.labels.max()) + 1,
            backbone=cfg.backbone,
        )
        model = init_model(hyper, cfg.seed)
        embed_cfg = EmbedConfig(
            beta_wm=cfg.beta_wm, epochs=cfg.epochs, seed=cfg.seed, batch_size=cfg.batch_size
        )
        model, logs = embed(model, tr_g, tr_y, bundle, embed_cfg)
        save_checkpoint(model, os.path.join(cfg.out_dir, "model.json"))
        emit_report(
            {
                "epochs": [asdict(entry) for entry in logs],
                "test_accuracy": task_accuracy(model, te_g, te_y),
                "wm_acc": wm_accuracy(model, bundle),
            },
            os.path.join(cfg.out_dir, "training.json"),
        )
        manifest["stages"]["embed"] = {"path": "model.json"}
        _flush()

        stage = "verify"
        report = verify(model, bundle, thresholds)
        emit_report(report.to_dict(), os.path.join(cfg.out_dir, "verification.json"))
        manifest["stages"]["verify"] = {"decision": report.decision, "T": report.match_count}
        _flush()

        stage = "attacks"
        decision_ok = report.verified
        l_s = estimate_l_s(model, list(bundle.carriers)) if cfg.attacks else None
        for i, token in enumerate(cfg.attacks):
            spec = parse_attack_token(token, cfg.seed)
            _, doc = run_attack(spec, model, task, bundle, thresholds)
            doc["l_s"] = l_s
            name = f"attack_{i}_{spec.kind.lower()}.json"
            emit_report(doc, os.path.join(cfg.out_dir, name))
            manifest["stages"][f"attack_{i}"] = {
                "kind": spec.kind,
                "path": name,
                "post_decision": doc["verification"]["decision"],
            }
            _flush()

        _flush("ok")
        return EXIT_OK if decision_ok else EXIT_NOT_VERIFIED
    except (InvmarkError, ValueError, OSError) as exc:
        manifest["stages"][stage] = {"error": f"{type(exc).__name__}: {exc}"}
        _flush("failed")
        return EXIT_RUNTIME
