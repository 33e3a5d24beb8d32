"""Optimization loop: Adam with coupled L2, polynomial LR decay, early
stopping on validation loss, seeded mini-batching and k-fold splits.

Training is single-threaded and bitwise deterministic for a fixed seed:
the only randomness is the numpy generator owned by the loop, gradients
accumulate in a fixed order, and best-epoch parameters are restored by
value copy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Tape, Tensor, add, backward, scale
from .model import (DsbnConfig, ModelParams, init_model_params, metrics_report,
                    named_params, reconstruction_loss, reconstruction_mae,
                    run_model, subject_loss, supervised_loss, total_loss)


@dataclass
class TrainConfig:
    batch_size: int = 128
    lr0: float = 0.001
    max_epochs: int = 500
    patience: int = 100
    weight_decay: float = 1e-5
    seed: int = 0
    k_folds: int = 5

    def __post_init__(self):
        for name in ("batch_size", "lr0", "max_epochs", "patience", "k_folds"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Polynomial decay: lr0 * (1 - epoch/max_epochs)^0.9, evaluated per epoch."""
    if not 0 <= epoch <= cfg.max_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.max_epochs}]")
    return cfg.lr0 * (1.0 - epoch / cfg.max_epochs) ** 0.9


class Adam:
    """Adam with the L2 penalty folded into the gradient (coupled decay)."""

    def __init__(self, params: dict[str, Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in params.items()}

    def step(self, lr: float, weight_decay: float = 0.0):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.value)
            if weight_decay:
                g = g + weight_decay * p.value
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.value = p.value - lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grads(self):
        for p in self.params.values():
            p.reset_grad()


class EarlyStopper:
    """Halt when the watched loss has not strictly improved for `patience` epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.stale = 0

    def update(self, loss: float) -> bool:
        """Feed one epoch's loss; returns True when this is a new best."""
        if loss < self.best:
            self.best = loss
            self.stale = 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


def kfold_split(dataset, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint, exhaustive, size-balanced (train, validation) index pairs."""
    n = len(dataset) if not isinstance(dataset, int) else dataset
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise ValueError(f"dataset size {n} smaller than k={k}")
    perm = np.random.default_rng(seed).permutation(n)
    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    folds = []
    start = 0
    for size in sizes:
        val = np.sort(perm[start:start + size])
        train = np.sort(np.concatenate([perm[:start], perm[start + size:]]))
        folds.append((train, val))
        start += size
    return folds


@dataclass
class TrainResult:
    params: ModelParams
    history: list[dict]
    best_epoch: int
    best_val_loss: float
    stopped_early: bool


def _dataset_loss(prepared, indices, params, cfg) -> tuple[float, dict]:
    """Mean total loss and task metric over a subject subset, no gradients."""
    total = 0.0
    preds, truths = [], []
    recon_maes = []
    for i in indices:
        prep = prepared[i]
        fp = run_model(prep, params, cfg)
        rl = reconstruction_loss(fp.recon, prep.target_adj, cfg.delta)
        sl = supervised_loss(fp.prediction, prep, cfg)
        total += total_loss(rl, sl, cfg.effective_eta1(), cfg.eta2).item()
        if cfg.task == "classification":
            preds.append(int(np.argmax(fp.prediction.value)))
            truths.append(prep.label)
        else:
            preds.append(float(fp.prediction.value[0, 0]))
            truths.append(prep.score)
        recon_maes.append(reconstruction_mae(fp.recon.value, prep.target_adj, cfg.delta))
    report = metrics_report(preds, truths, cfg.task)
    report["reconstruction_mae"] = float(np.mean(recon_maes))
    return total / len(indices), report


def train(prepared, model_cfg: DsbnConfig, train_cfg: TrainConfig,
          train_idx, val_idx, params: ModelParams | None = None,
          log=None) -> TrainResult:
    """Mini-batch training with per-epoch validation and best-epoch restore."""
    train_idx = np.asarray(train_idx, dtype=np.int64)
    val_idx = np.asarray(val_idx, dtype=np.int64)
    if train_idx.size == 0 or val_idx.size == 0:
        raise ValueError("train: empty train or validation split")
    rng = np.random.default_rng(train_cfg.seed)
    if params is None:
        params = init_model_params(model_cfg, rng)
    flat = named_params(params)
    opt = Adam(flat)
    stopper = EarlyStopper(train_cfg.patience)
    best_values = {k: p.value.copy() for k, p in flat.items()}
    best_epoch = -1
    history = []
    metric_key = "accuracy" if model_cfg.task == "classification" else "mae"

    for epoch in range(train_cfg.max_epochs):
        lr = lr_at(epoch, train_cfg)
        order = rng.permutation(train_idx)
        epoch_loss = 0.0
        for start in range(0, len(order), train_cfg.batch_size):
            batch = order[start:start + train_cfg.batch_size]
            opt.zero_grads()
            with Tape() as tape:
                acc = None
                for i in batch:
                    tl, _, _ = subject_loss(prepared[i], params, model_cfg)
                    acc = tl if acc is None else add(acc, tl)
                batch_loss = scale(acc, 1.0 / len(batch))
                backward(batch_loss)
            epoch_loss += batch_loss.item() * len(batch)
            opt.step(lr, train_cfg.weight_decay)
            tape.reset_grads()
        train_loss = epoch_loss / len(order)
        val_loss, val_report = _dataset_loss(prepared, val_idx, params, model_cfg)
        history.append({
            "epoch": epoch,
            "lr": lr,
            "train_loss": train_loss,
            "val_loss": val_loss,
            "val_metric": val_report[metric_key],
        })
        if log is not None:
            log(history[-1])
        if stopper.update(val_loss):
            best_epoch = epoch
            for k, p in flat.items():
                best_values[k] = p.value.copy()
        if stopper.should_stop:
            break

    for k, p in flat.items():
        p.value = best_values[k].copy()
    return TrainResult(params=params, history=history, best_epoch=best_epoch,
                       best_val_loss=stopper.best,
                       stopped_early=len(history) < train_cfg.max_epochs)


def evaluate(prepared, indices, params: ModelParams, cfg: DsbnConfig) -> dict:
    loss, report = _dataset_loss(prepared, indices, params, cfg)
    report["loss"] = loss
    report["n_subjects"] = int(len(indices))
    return report


def history_to_csv(history, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "lr", "train_loss",
                                                "val_loss", "val_metric"])
        writer.writeheader()
        for row in history:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in row.items()})


def summarize_folds(fold_reports: list[dict]) -> dict:
    """Mean and standard deviation per metric across folds."""
    keys = [k for k in fold_reports[0] if isinstance(fold_reports[0][k], (int, float))]
    out = {}
    for k in keys:
        vals = np.array([r[k] for r in fold_reports], dtype=np.float64)
        out[k] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return out


def cross_validate(prepared, model_cfg: DsbnConfig, train_cfg: TrainConfig,
                   log=None) -> dict:
    """k-fold training; returns per-fold reports, histories and mean +/- std."""
    folds = kfold_split(len(prepared), train_cfg.k_folds, train_cfg.seed)
    fold_reports = []
    results = []
    for fold_id, (train_idx, val_idx) in enumerate(folds):
        fold_cfg = replace(train_cfg, seed=train_cfg.seed + fold_id)
        res = train(prepared, model_cfg, fold_cfg, train_idx, val_idx, log=log)
        report = evaluate(prepared, val_idx, res.params, model_cfg)
        report["fold"] = fold_id
        report["best_epoch"] = res.best_epoch
        report["epochs_run"] = len(res.history)
        fold_reports.append(report)
        results.append(res)
    return {
        "folds": fold_reports,
        "summary": summarize_folds(fold_reports),
        "results": results,
    }


def ablation_study(prepared, model_cfg: DsbnConfig, train_cfg: TrainConfig,
                   seeds, variants=("full", "no_bue", "no_pne", "no_recon"),
                   val_fraction: float = 0.2) -> dict:
    """Train every ablation variant across seeds on one shared split per seed.

    Returns per-variant mean/std of the validation metric and whether the
    full model beats (or ties) every ablation on the mean; the report is
    produced either way with the ordering outcome flagged.
    """
    metric_key = "accuracy" if model_cfg.task == "classification" else "mae"
    per_variant = {v: [] for v in variants}
    for seed in seeds:
        split_rng = np.random.default_rng(seed)
        perm = split_rng.permutation(len(prepared))
        n_val = max(1, int(len(prepared) * val_fraction))
        val_idx, train_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
        for variant in variants:
            cfg = replace(model_cfg, ablation=variant)
            t_cfg = replace(train_cfg, seed=seed)
            res = train(prepared, cfg, t_cfg, train_idx, val_idx)
            report = evaluate(prepared, val_idx, res.params, cfg)
            per_variant[variant].append(report[metric_key])
    stats = {v: {"mean": float(np.mean(xs)), "std": float(np.std(xs)), "runs": xs}
             for v, xs in per_variant.items()}
    full_mean = stats["full"]["mean"]
    if model_cfg.task == "classification":
        ordering_ok = all(full_mean >= stats[v]["mean"] for v in variants if v != "full")
    else:
        ordering_ok = all(full_mean <= stats[v]["mean"] for v in variants if v != "full")
    return {
        "metric": metric_key,
        "seeds": list(seeds),
        "variants": stats,
        "ordering_ok": bool(ordering_ok),
    }
