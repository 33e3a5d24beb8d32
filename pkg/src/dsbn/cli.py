"""Command-line entry point: synth | train | eval | reconstruct | saliency | gradcheck.

Every command accepts --seed and is deterministic under it. Options can
also come from a JSON config file of flat dotted keys ("train.batch_size",
"model.t_layers", ...); command-line flags win over file values, unknown
keys are rejected. Exit codes: 0 success, 1 usage error, 2 validation
failure, 3 numerical-check failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import graphs, synth, trainer
from .autodiff import gradient_check, load_checkpoint, save_checkpoint
from .model import (DsbnConfig, config_from_params, init_model_params,
                    named_params, node_class_contributions, params_from_arrays,
                    predict, prepare_dataset, subject_loss,
                    threshold_reconstruction)


class CliParser(argparse.ArgumentParser):
    # usage problems exit 1 (argparse default of 2 is our validation code)
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


_SYNTH_FIELDS = {f.name for f in dataclasses.fields(synth.SynthConfig)}
_MODEL_FIELDS = {f.name for f in dataclasses.fields(DsbnConfig)}
_TRAIN_FIELDS = {f.name for f in dataclasses.fields(trainer.TrainConfig)}

_NAMESPACES = {
    "synth": _SYNTH_FIELDS,
    "model": _MODEL_FIELDS,
    "train": _TRAIN_FIELDS,
}


def load_config_file(path, allowed_namespaces) -> dict[str, dict]:
    """Read flat dotted keys into per-namespace override dicts."""
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("config file must be a JSON object of dotted keys")
    out: dict[str, dict] = {ns: {} for ns in allowed_namespaces}
    for key, value in raw.items():
        ns, _, fieldname = key.partition(".")
        if ns not in allowed_namespaces or fieldname not in _NAMESPACES.get(ns, ()):
            raise ValueError(f"config file: unknown key {key!r}")
        out[ns][fieldname] = value
    return out


def _overrides(namespace_dict, args, fields) -> dict:
    merged = dict(namespace_dict)
    for name in fields:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    return merged


def _parse_widths(text):
    if text is None:
        return None
    text = text.strip()
    return tuple(int(w) for w in text.split(",") if w) if text else ()


def _build_synth_config(args) -> synth.SynthConfig:
    file_cfg = load_config_file(args.config, ("synth",)) if args.config else {"synth": {}}
    return synth.SynthConfig(**_overrides(file_cfg["synth"], args, _SYNTH_FIELDS))


def _build_model_train_configs(args, feature_dim=None):
    namespaces = ("model", "train")
    file_cfg = (load_config_file(args.config, namespaces)
                if getattr(args, "config", None) else {ns: {} for ns in namespaces})
    model_over = _overrides(file_cfg["model"], args, _MODEL_FIELDS - {"mlp_widths"})
    widths = _parse_widths(getattr(args, "mlp_widths", None))
    if widths is not None:
        model_over["mlp_widths"] = widths
    elif "mlp_widths" in file_cfg["model"]:
        model_over["mlp_widths"] = tuple(file_cfg["model"]["mlp_widths"])
    if feature_dim is not None:
        model_over["feature_dim"] = feature_dim
    model_cfg = DsbnConfig(**model_over)
    train_cfg = trainer.TrainConfig(**_overrides(file_cfg["train"], args, _TRAIN_FIELDS))
    return model_cfg, train_cfg


def _load_prepared(path, task=None):
    subjects = graphs.load_dataset(path)
    if not subjects:
        raise ValueError(f"{path}: empty dataset")
    if task == "classification" and any(s.label is None for s in subjects):
        raise ValueError("classification task but some subjects have no label")
    if task == "regression" and any(s.score is None for s in subjects):
        raise ValueError("regression task but some subjects have no score")
    prepared = prepare_dataset(subjects)
    dims = {p.features.shape[1] for p in prepared}
    if len(dims) != 1:
        raise ValueError(f"inconsistent feature dimensions across subjects: {sorted(dims)}")
    return prepared


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    cfg = _build_synth_config(args)
    subjects, manifest = synth.generate_dataset(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    graphs.save_dataset(subjects, out)
    manifest_path = Path(args.manifest) if args.manifest else out.with_suffix(".manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    func_density = np.mean([np.count_nonzero(s.functional.adj) / (s.functional.n * (s.functional.n - 1))
                            for s in subjects])
    struct_density = np.mean([np.count_nonzero(s.structural.adj) / (s.structural.n * (s.structural.n - 1))
                              for s in subjects])
    labels = [s.label for s in subjects]
    print(f"wrote {len(subjects)} subjects ({cfg.n_nodes} nodes) to {out}")
    print(f"labels: {labels.count(0)}/{labels.count(1)}  "
          f"densities: functional {func_density:.3f}, structural {struct_density:.3f}")
    print(f"manifest: {manifest_path}")
    return 0


def cmd_train(args) -> int:
    subjects = graphs.load_dataset(args.dataset)
    if not subjects:
        raise ValueError(f"{args.dataset}: empty dataset")
    feat = subjects[0].functional.features
    if feat is None:
        raise ValueError("dataset subjects carry no node features")
    # feature_dim comes from the data, everything else from flags/config
    model_cfg, train_cfg = _build_model_train_configs(args, feature_dim=feat.shape[1])
    if model_cfg.task == "classification" and any(s.label is None for s in subjects):
        raise ValueError("classification task but some subjects have no label")
    if model_cfg.task == "regression" and any(s.score is None for s in subjects):
        raise ValueError("regression task but some subjects have no score")
    prepared = prepare_dataset(subjects)

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    cv = trainer.cross_validate(prepared, model_cfg, train_cfg)
    for fold_id, res in enumerate(cv["results"]):
        trainer.history_to_csv(res.history, outdir / f"history_fold{fold_id}.csv")
        save_checkpoint(named_params(res.params), outdir / f"checkpoint_fold{fold_id}.json")
    echo = {
        "command": "train",
        "dataset": str(args.dataset),
        "model": dataclasses.asdict(model_cfg),
        "train": dataclasses.asdict(train_cfg),
    }
    with open(outdir / "config.json", "w") as fh:
        json.dump(echo, fh, indent=2)
    report = {"folds": cv["folds"], "summary": cv["summary"]}
    with open(outdir / "fold_metrics.json", "w") as fh:
        json.dump(report, fh, indent=2)
    for name, stat in cv["summary"].items():
        print(f"{name}: {stat['mean']:.4f} +/- {stat['std']:.4f}")
    print(f"artifacts in {outdir}")
    return 0


def _load_model(args):
    params = params_from_arrays(load_checkpoint(args.checkpoint))
    base = DsbnConfig(task=args.task) if args.task else DsbnConfig()
    cfg = config_from_params(params, base)
    if args.task and cfg.task != args.task:
        raise ValueError(f"task/checkpoint mismatch: checkpoint head is {cfg.task}, "
                         f"requested {args.task}")
    if getattr(args, "ablation", None):
        cfg = dataclasses.replace(cfg, ablation=args.ablation)
    if getattr(args, "delta", None) is not None:
        cfg = dataclasses.replace(cfg, delta=args.delta)
    return params, cfg


def cmd_eval(args) -> int:
    params, cfg = _load_model(args)
    prepared = _load_prepared(args.dataset, cfg.task)
    report = trainer.evaluate(prepared, np.arange(len(prepared)), params, cfg)
    report["task"] = cfg.task
    report["threshold"] = cfg.delta
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"metrics written to {args.out}")
    else:
        print(text)
    return 0


def cmd_reconstruct(args) -> int:
    params, cfg = _load_model(args)
    prepared = _load_prepared(args.dataset)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for i, prep in enumerate(prepared):
        out = predict(prep, params, cfg)
        recon = threshold_reconstruction(out.recon, cfg.delta)
        np.fill_diagonal(recon, 0.0)
        payload = {"n": prep.n, "adj": recon.reshape(-1).tolist()}
        with open(outdir / f"recon_{i:04d}.json", "w") as fh:
            json.dump(payload, fh)
    print(f"wrote {len(prepared)} reconstructed graphs to {outdir}")
    return 0


def cmd_saliency(args) -> int:
    params, cfg = _load_model(args)
    if cfg.task != "classification":
        raise ValueError("saliency requires a classification checkpoint")
    prepared = _load_prepared(args.dataset, cfg.task)
    top_k = args.top_k if args.top_k is not None else cfg.top_k
    classes = [args.class_index] if args.class_index is not None else list(range(cfg.n_classes))
    per_class = {}
    for c in classes:
        members = [p for p in prepared if p.label == c]
        if not members:
            raise ValueError(f"no subjects with label {c}")
        scores = np.zeros(members[0].n)
        for prep in members:
            out = predict(prep, params, cfg)
            scores += np.maximum(node_class_contributions(out.latents, params.mlp, c), 0.0)
        scores /= len(members)
        order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
        per_class[str(c)] = [{"node_index": int(i), "score": float(scores[i]), "rank": r + 1}
                             for r, i in enumerate(order[:top_k])]
    payload = per_class[str(args.class_index)] if args.class_index is not None else \
        {"top_k": top_k, "classes": per_class}
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"saliency written to {args.out}")
    else:
        print(text)
    return 0


def cmd_gradcheck(args) -> int:
    synth_cfg = synth.SynthConfig(n_nodes=4, n_subjects=10, series_length=16,
                                  noise_level=0.4, seed=args.seed)
    subject = synth.generate_subject(synth_cfg, synth.subject_seed(args.seed, 0), label=1)
    prepared = prepare_dataset([subject])
    prep = prepared[0]
    failures = 0
    for task in ("classification", "regression"):
        for t_layers in (1, 2, 3):
            cfg = DsbnConfig(task=task, t_layers=t_layers, hidden_dim=3,
                             latent_dim=4, mlp_widths=(3,), feature_dim=5)
            rng = np.random.default_rng(args.seed + t_layers)
            params = init_model_params(cfg, rng)
            flat = named_params(params)
            report = gradient_check(lambda: subject_loss(prep, params, cfg)[0],
                                    flat, h=args.h, tol=args.tol)
            print(f"{task} t={t_layers}: {report.summary()}")
            if not report.passed:
                failures += 1
    if failures:
        print(f"{failures} gradient check(s) failed")
        return 3
    print("all gradient checks passed")
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> CliParser:
    parser = CliParser(prog="dsbn", description=__doc__,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic paired-graph dataset")
    p.add_argument("--out", required=True, help="dataset JSON path")
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
    p.add_argument("--config", help="JSON config file (flat dotted keys)")
    p.add_argument("--n-subjects", type=int, dest="n_subjects")
    p.add_argument("--n-nodes", type=int, dest="n_nodes")
    p.add_argument("--n-communities", type=int, dest="n_communities")
    p.add_argument("--series-length", type=int, dest="series_length")
    p.add_argument("--noise-level", type=float, dest="noise_level")
    p.add_argument("--class-effect", type=float, dest="class_effect")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="k-fold training run")
    p.add_argument("--dataset", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--config", help="JSON config file (flat dotted keys)")
    _add_model_flags(p)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr0", type=float)
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--patience", type=int)
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--k-folds", type=int, dest="k_folds")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    for name, fn, helptext in (
        ("eval", cmd_eval, "task metrics plus thresholded reconstruction error"),
        ("reconstruct", cmd_reconstruct, "write predicted structural graphs"),
        ("saliency", cmd_saliency, "write top-k node rankings per class"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--dataset", required=True)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--task", choices=("classification", "regression"))
        p.add_argument("--ablation", choices=("full", "no_bue", "no_pne", "no_recon"))
        p.add_argument("--delta", type=float)
        p.add_argument("--seed", type=int, default=0)
        if name == "reconstruct":
            p.add_argument("--outdir", required=True)
        else:
            p.add_argument("--out")
        if name == "saliency":
            p.add_argument("--top-k", type=int, dest="top_k")
            p.add_argument("--class-index", type=int, dest="class_index")
        p.set_defaults(func=fn)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full loss")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def _add_model_flags(p):
    p.add_argument("--task", choices=("classification", "regression"))
    p.add_argument("--ablation", choices=("full", "no_bue", "no_pne", "no_recon"))
    p.add_argument("--t-layers", type=int, dest="t_layers")
    p.add_argument("--hidden-dim", type=int, dest="hidden_dim")
    p.add_argument("--latent-dim", type=int, dest="latent_dim")
    p.add_argument("--mlp-widths", dest="mlp_widths",
                   help="comma-separated hidden widths, empty for a single linear head")
    p.add_argument("--n-classes", type=int, dest="n_classes")
    p.add_argument("--eta1", type=float)
    p.add_argument("--eta2", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--top-k", type=int, dest="top_k")
    p.add_argument("--bue-softmax", choices=("family", "union"), dest="bue_softmax")
    p.add_argument("--edge-weighted-attention", action=argparse.BooleanOptionalAction,
                   default=None, dest="edge_weighted_attention")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
