"""Full model assembly: encoder heads, decoder, MLP, losses and metrics.

A forward pass encodes the signed input graph into per-node latents,
reconstructs the unsigned target through an inner-product decoder, pools
the latents with a sum readout and maps the pooled vector to either class
log-probabilities or a scalar score. The training objective is
eta1 * reconstruction + eta2 * supervised.

Ablations keep the complete parameter set (checkpoints stay shape
compatible) and feed zeros for the removed head at fusion, or zero out
eta1 for the reconstruction-free variant.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import encoder as enc
from .autodiff import (Tensor, absolute, add, concat_last, elu, log_softmax,
                       matmul, mul, scale, sigmoid, square, sub, sum_all,
                       transpose)
from .graphs import Subject, normalize_functional, normalize_structural

TASKS = ("classification", "regression")
ABLATIONS = ("full", "no_bue", "no_pne", "no_recon")

# searched ranges reported for the loss weights: eta1 in [0.01, 0.1, 0.5, 1],
# eta2 in [0.1, 1, 5]; the defaults below are the selected operating points
DEFAULT_ETA1 = {"classification": 0.1, "regression": 0.5}
DEFAULT_ETA2 = 1.0


@dataclass
class DsbnConfig:
    t_layers: int = 3
    hidden_dim: int = 8
    latent_dim: int = 16
    mlp_widths: tuple[int, ...] = (32,)
    task: str = "classification"
    n_classes: int = 2
    eta1: float | None = None
    eta2: float | None = None
    delta: float = 0.05
    ablation: str = "full"
    top_k: int = 10
    feature_dim: int = 5
    bue_softmax: str = "family"
    edge_weighted_attention: bool = False

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.bue_softmax not in ("family", "union"):
            raise ValueError(f"bue_softmax must be 'family' or 'union', got {self.bue_softmax!r}")
        if self.eta1 is None:
            self.eta1 = DEFAULT_ETA1[self.task]
        if self.eta2 is None:
            self.eta2 = DEFAULT_ETA2
        if self.eta1 < 0 or self.eta2 < 0:
            raise ValueError("loss weights must be non-negative")
        if not 0.0 <= self.delta < 0.5:
            raise ValueError(f"delta must be in [0, 0.5), got {self.delta}")
        if self.t_layers < 1:
            raise ValueError("t_layers must be >= 1")
        if self.latent_dim % 2 != 0 or self.latent_dim < 2:
            raise ValueError("latent_dim must be a positive even number")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")

    @property
    def out_dim(self) -> int:
        return self.n_classes if self.task == "classification" else 1

    def effective_eta1(self) -> float:
        return 0.0 if self.ablation == "no_recon" else float(self.eta1)


@dataclass
class MlpParams:
    layers: list[tuple[Tensor, Tensor]]  # (weights, bias) per dense layer


@dataclass
class ModelParams:
    sge: enc.SgeParams
    mlp: MlpParams


def init_model_params(cfg: DsbnConfig, rng: np.random.Generator) -> ModelParams:
    sge = enc.init_sge_params(rng, cfg.feature_dim, cfg.hidden_dim,
                              cfg.latent_dim, cfg.t_layers)
    dims = [cfg.latent_dim, *cfg.mlp_widths, cfg.out_dim]
    layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        w = Tensor(enc.glorot_uniform(rng, d_in, d_out, (d_in, d_out)))
        b = Tensor(np.zeros((1, d_out)))
        layers.append((w, b))
    return ModelParams(sge=sge, mlp=MlpParams(layers=layers))


def named_params(params: ModelParams) -> dict[str, Tensor]:
    """Flat name -> tensor map; stable names for checkpoints and the optimizer."""
    out: dict[str, Tensor] = {}
    for i, layer in enumerate(params.sge.bue_layers):
        out[f"bue.{i}.w_bal"] = layer.w_bal
        out[f"bue.{i}.w_unbal"] = layer.w_unbal
        out[f"bue.{i}.attn_bal"] = layer.attn_bal
        out[f"bue.{i}.attn_unbal"] = layer.attn_unbal
    for prefix, stack in (("pne_pos", params.sge.pne_pos_layers),
                          ("pne_neg", params.sge.pne_neg_layers)):
        for i, layer in enumerate(stack):
            out[f"{prefix}.{i}.w"] = layer.w
            out[f"{prefix}.{i}.attn"] = layer.attn
    out["fuse.w_bue"] = params.sge.fuse_w_bue
    out["fuse.w_pne"] = params.sge.fuse_w_pne
    for i, (w, b) in enumerate(params.mlp.layers):
        out[f"mlp.{i}.w"] = w
        out[f"mlp.{i}.b"] = b
    return out


def params_from_arrays(arrays: dict[str, np.ndarray]) -> ModelParams:
    """Rebuild the parameter structure from a flat checkpoint map."""
    def take(name):
        if name not in arrays:
            raise ValueError(f"checkpoint missing parameter {name!r}")
        return Tensor(arrays[name].copy())

    t_layers = len({k.split(".")[1] for k in arrays if k.startswith("bue.")})
    if t_layers == 0:
        raise ValueError("checkpoint contains no encoder layers")
    bue = [enc.BueLayerParams(take(f"bue.{i}.w_bal"), take(f"bue.{i}.w_unbal"),
                              take(f"bue.{i}.attn_bal"), take(f"bue.{i}.attn_unbal"))
           for i in range(t_layers)]
    pos = [enc.GatLayerParams(take(f"pne_pos.{i}.w"), take(f"pne_pos.{i}.attn"))
           for i in range(t_layers)]
    neg = [enc.GatLayerParams(take(f"pne_neg.{i}.w"), take(f"pne_neg.{i}.attn"))
           for i in range(t_layers)]
    sge = enc.SgeParams(bue_layers=bue, pne_pos_layers=pos, pne_neg_layers=neg,
                        fuse_w_bue=take("fuse.w_bue"), fuse_w_pne=take("fuse.w_pne"))
    n_mlp = len({k.split(".")[1] for k in arrays if k.startswith("mlp.")})
    layers = [(take(f"mlp.{i}.w"), take(f"mlp.{i}.b")) for i in range(n_mlp)]
    return ModelParams(sge=sge, mlp=MlpParams(layers=layers))


def config_from_params(params: ModelParams, base: DsbnConfig | None = None) -> DsbnConfig:
    """Infer the structural config fields implied by a parameter set."""
    base = base or DsbnConfig()
    out_dim = params.mlp.layers[-1][0].value.shape[1]
    task = "regression" if out_dim == 1 else "classification"
    return replace(
        base,
        t_layers=len(params.sge.bue_layers),
        hidden_dim=params.sge.bue_layers[-1].w_bal.value.shape[1],
        latent_dim=2 * params.sge.fuse_w_bue.value.shape[1],
        feature_dim=params.sge.bue_layers[0].w_bal.value.shape[0],
        mlp_widths=tuple(w.value.shape[1] for w, _ in params.mlp.layers[:-1]),
        task=task,
        n_classes=out_dim if out_dim > 1 else base.n_classes,
        # loss weights are task-dependent; re-resolve them on a task switch
        eta1=base.eta1 if task == base.task else None,
    )


# ------------------------------------------------------------ data prep

@dataclass(frozen=True)
class PreparedSubject:
    """Normalized, edge-listed view of a subject, ready for forward passes."""

    n: int
    features: np.ndarray
    edges: enc.EdgeLists
    target_adj: np.ndarray
    label: int | None
    score: float | None


def prepare_subject(subject: Subject) -> PreparedSubject:
    functional = normalize_functional(subject.functional)
    structural = normalize_structural(subject.structural)
    if functional.features is None:
        raise ValueError("subject has no node features")
    return PreparedSubject(
        n=functional.n,
        features=functional.features,
        edges=enc.edge_lists(functional.adj),
        target_adj=structural.adj,
        label=subject.label,
        score=subject.score,
    )


def prepare_dataset(subjects) -> list[PreparedSubject]:
    return [prepare_subject(s) for s in subjects]


# ------------------------------------------------------------- forward

@dataclass
class ForwardPass:
    latents: Tensor
    recon: Tensor
    prediction: Tensor


@dataclass
class ModelOutput:
    """Plain-array snapshot of one forward pass."""

    latents: np.ndarray
    recon: np.ndarray
    prediction: np.ndarray


def decode_structural(latents: Tensor) -> Tensor:
    """Inner-product edge decoder: sigmoid of pairwise latent dot products.

    The dot-product matrix is averaged with its transpose before the
    sigmoid so the output is bitwise symmetric.
    """
    m = matmul(latents, transpose(latents))
    return sigmoid(scale(add(m, transpose(m)), 0.5))


def readout(latents: Tensor) -> Tensor:
    """Sum pooling over nodes; returns a single row vector."""
    n = latents.shape[0]
    return matmul(Tensor(np.ones((1, n))), latents)


def mlp_head(pooled: Tensor, mlp: MlpParams, task: str) -> Tensor:
    """Dense layers with elu between; classification ends in log-softmax."""
    x = pooled
    for w, b in mlp.layers[:-1]:
        x = elu(add(matmul(x, w), b))
    w, b = mlp.layers[-1]
    x = add(matmul(x, w), b)
    return log_softmax(x) if task == "classification" else x


def run_model(prep: PreparedSubject, params: ModelParams, cfg: DsbnConfig,
              collect=None) -> ForwardPass:
    x = Tensor(prep.features)
    half_width = 2 * cfg.hidden_dim
    if cfg.ablation == "no_bue":
        x_bue = Tensor(np.zeros((prep.n, half_width)))
    else:
        x_bal, x_unbal = enc.bue_encode(x, prep.edges, params.sge.bue_layers,
                                        cfg.bue_softmax, collect,
                                        cfg.edge_weighted_attention)
        x_bue = concat_last(x_bal, x_unbal)
    if cfg.ablation == "no_pne":
        x_pne = Tensor(np.zeros((prep.n, half_width)))
    else:
        h_pos, h_neg = enc.pne_encode(x, prep.edges, params.sge.pne_pos_layers,
                                      params.sge.pne_neg_layers, collect,
                                      cfg.edge_weighted_attention)
        x_pne = concat_last(h_pos, h_neg)
    latents = enc.sge_fuse(x_bue, x_pne, params.sge)
    recon = decode_structural(latents)
    prediction = mlp_head(readout(latents), params.mlp, cfg.task)
    return ForwardPass(latents=latents, recon=recon, prediction=prediction)


def predict(prep: PreparedSubject, params: ModelParams, cfg: DsbnConfig) -> ModelOutput:
    fp = run_model(prep, params, cfg)
    return ModelOutput(latents=fp.latents.value, recon=fp.recon.value,
                       prediction=fp.prediction.value)


# --------------------------------------------------------------- losses

def reconstruction_loss(recon: Tensor, target_adj: np.ndarray, delta: float) -> Tensor:
    """Mean squared error against the perturbed target over off-diagonal pairs.

    delta is added to every off-diagonal target entry, zeros included; true
    non-edges therefore train toward delta, which is what makes the
    below-delta zeroing rule at evaluation time coherent.
    """
    n = target_adj.shape[0]
    if recon.shape != (n, n):
        raise ValueError(f"reconstruction_loss: recon {recon.shape} vs target {target_adj.shape}")
    mask = 1.0 - np.eye(n)
    perturbed = (target_adj + delta) * mask
    sq = square(sub(recon, Tensor(perturbed)))
    total = sum_all(mul(sq, Tensor(mask)))
    return scale(total, 1.0 / (n * (n - 1)))


def supervised_loss(prediction: Tensor, prep: PreparedSubject, cfg: DsbnConfig) -> Tensor:
    if cfg.task == "classification":
        if prep.label is None:
            raise ValueError("supervised_loss: subject has no label")
        onehot = np.zeros((1, cfg.n_classes))
        onehot[0, prep.label] = 1.0
        return scale(sum_all(mul(prediction, Tensor(onehot))), -1.0)
    if prep.score is None:
        raise ValueError("supervised_loss: subject has no score")
    return sum_all(absolute(sub(prediction, Tensor(np.array([[prep.score]])))))


def total_loss(recon_l: Tensor, super_l: Tensor, eta1: float, eta2: float) -> Tensor:
    return add(scale(recon_l, eta1), scale(super_l, eta2))


def subject_loss(prep: PreparedSubject, params: ModelParams, cfg: DsbnConfig,
                 collect=None) -> tuple[Tensor, Tensor, Tensor]:
    """Forward pass plus losses; returns (total, reconstruction, supervised)."""
    fp = run_model(prep, params, cfg, collect)
    rl = reconstruction_loss(fp.recon, prep.target_adj, cfg.delta)
    sl = supervised_loss(fp.prediction, prep, cfg)
    return total_loss(rl, sl, cfg.effective_eta1(), cfg.eta2), rl, sl


# ------------------------------------------------------------- saliency

def node_class_contributions(latents: np.ndarray, mlp: MlpParams,
                             class_index: int) -> np.ndarray:
    """Per-node additive contribution to one class logit.

    Because the readout is a sum, a single linear head decomposes the class
    logit exactly as bias + sum of per-node terms. For deeper heads each
    node's latent is pushed through the hidden layers linearly (weights
    only, bias and elu act on pooled values and have no per-node split),
    then scored by the final layer's class column.
    """
    w_final = mlp.layers[-1][0].value
    if w_final.shape[1] < 2:
        raise ValueError("saliency requires a classification head")
    if not 0 <= class_index < w_final.shape[1]:
        raise ValueError(f"class index {class_index} out of range")
    z = latents
    for w, _ in mlp.layers[:-1]:
        z = z @ w.value
    return z @ w_final[:, class_index]


def saliency_map(latents: np.ndarray, mlp: MlpParams, class_index: int,
                 top_k: int = 10) -> list[dict]:
    """Top-k nodes by clipped class contribution, ties broken by node index."""
    raw = node_class_contributions(latents, mlp, class_index)
    scores = np.maximum(raw, 0.0)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return [{"node_index": int(i), "score": float(scores[i]), "rank": r + 1}
            for r, i in enumerate(order[:top_k])]


def threshold_reconstruction(recon: np.ndarray, delta: float) -> np.ndarray:
    """Zero every predicted weight strictly below delta."""
    return np.where(recon < delta, 0.0, recon)


# -------------------------------------------------------------- metrics

def confusion_matrix(pred_labels, true_labels, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for p, t in zip(pred_labels, true_labels):
        cm[int(t), int(p)] += 1
    return cm


def classification_metrics(pred_labels, true_labels) -> dict:
    """Accuracy plus macro-averaged precision and F1 over observed classes."""
    pred_labels = np.asarray(pred_labels, dtype=np.int64)
    true_labels = np.asarray(true_labels, dtype=np.int64)
    if pred_labels.size == 0:
        raise ValueError("metrics: empty input")
    n_classes = int(max(pred_labels.max(), true_labels.max())) + 1
    cm = confusion_matrix(pred_labels, true_labels, n_classes)
    precisions, f1s = [], []
    for c in range(n_classes):
        tp = cm[c, c]
        fp = cm[:, c].sum() - tp
        fn = cm[c, :].sum() - tp
        prec = tp / (tp + fp) if tp + fp > 0 else 0.0
        rec = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        precisions.append(prec)
        f1s.append(f1)
    return {
        "accuracy": float((pred_labels == true_labels).mean()),
        "precision": float(np.mean(precisions)),
        "f1": float(np.mean(f1s)),
    }


def regression_mae(preds, truths) -> float:
    preds = np.asarray(preds, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if preds.size == 0:
        raise ValueError("metrics: empty input")
    return float(np.abs(preds - truths).mean())


def reconstruction_mae(recon: np.ndarray, target_adj: np.ndarray, delta: float) -> float:
    """Mean absolute off-diagonal edge error after below-delta zeroing."""
    n = target_adj.shape[0]
    thr = threshold_reconstruction(recon, delta)
    mask = ~np.eye(n, dtype=bool)
    return float(np.abs(thr[mask] - target_adj[mask]).mean())


def metrics_report(predictions, truths, task: str) -> dict:
    if task == "classification":
        return classification_metrics(predictions, truths)
    if task == "regression":
        return {"mae": regression_mae(predictions, truths)}
    raise ValueError(f"unknown task {task!r}")
