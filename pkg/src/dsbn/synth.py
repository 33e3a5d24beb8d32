"""Seeded generator of paired signed/unsigned graph subjects.

Each subject plants a shared low-rank community structure in both graphs:
latent node vectors define a sparse non-negative target adjacency, node
time series are driven by community signals scaled by each node's
structural strength, and the signed input graph is the sample correlation
matrix of those series. Class membership shifts the community coupling
strength, so labels are recoverable from within-community correlation
levels, and the score is a monotone function of that coherence.

Subjects are generated independently; per-subject seeds come from a
64-bit mix of the dataset seed and the subject index, so generation is
order-independent and exactly reproducible from the manifest.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .graphs import SignedGraph, Subject, UnsignedGraph, node_features_from_series

DATASET_FORMAT_VERSION = 1

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def subject_seed(dataset_seed: int, index: int) -> int:
    return splitmix64((dataset_seed & _MASK64) ^ splitmix64(index))


@dataclass
class SynthConfig:
    n_nodes: int = 16
    n_subjects: int = 200
    n_communities: int = 2
    series_length: int = 64
    noise_level: float = 0.3
    class_effect: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.n_nodes < 4:
            raise ValueError("n_nodes must be >= 4")
        if self.series_length < 8:
            raise ValueError("series_length must be >= 8")
        if self.n_communities < 2:
            raise ValueError("n_communities must be >= 2")
        if not 0.0 <= self.noise_level <= 1.0:
            raise ValueError("noise_level must be in [0, 1]")


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _subject_internals(cfg: SynthConfig, seed: int, label: int) -> dict:
    rng = np.random.default_rng(seed)
    n, k = cfg.n_nodes, cfg.n_communities

    # balanced community assignment, randomly permuted
    communities = rng.permutation(np.arange(n) % k)

    # latent vectors around one axis-aligned center per community
    centers = 1.5 * np.eye(k)
    z = centers[communities] + 0.35 * rng.normal(size=(n, k))

    # sparse non-negative target: keep the upper half of the sigmoid scores
    raw = _sigmoid(z @ z.T)
    raw = 0.5 * (raw + raw.T)
    np.fill_diagonal(raw, 0.0)
    off = raw[~np.eye(n, dtype=bool)]
    median = np.median(off)
    structural = np.where(raw < median, 0.0, raw)
    structural /= structural.max()

    # community signals; later communities anti-correlate with the first,
    # which is what puts genuinely negative edges into the input graph
    base = rng.normal(size=cfg.series_length)
    signals = np.empty((k, cfg.series_length))
    signals[0] = base
    for c in range(1, k):
        signals[c] = -0.6 * base + 0.8 * rng.normal(size=cfg.series_length)

    coupling = 1.0 + cfg.class_effect * (label - 0.5)
    strength = 0.3 + structural.mean(axis=1)  # floor keeps noiseless rows alive
    series = (coupling * strength[:, None] * signals[communities]
              + cfg.noise_level * rng.normal(size=(n, cfg.series_length)))

    functional = np.corrcoef(series)
    functional = np.clip(0.5 * (functional + functional.T), -1.0, 1.0)
    np.fill_diagonal(functional, 0.0)

    within = communities[:, None] == communities[None, :]
    np.fill_diagonal(within, False)
    coherence = float(functional[within].mean())
    score = float(np.clip(10.0 + 15.0 * coherence
                          + 0.5 * cfg.noise_level * rng.normal(), 0.0, 30.0))

    subject = Subject(
        functional=SignedGraph.create(functional,
                                      node_features_from_series(series)),
        structural=UnsignedGraph.create(structural),
        label=int(label),
        score=score,
    )
    return {
        "subject": subject,
        "communities": communities,
        "strength": strength,
        "coherence": coherence,
        "series": series,
    }


def generate_subject(cfg: SynthConfig, seed: int, label: int | None = None) -> Subject:
    """One paired subject, deterministic in (seed, label)."""
    if label is None:
        label = int(seed & 1)
    return _subject_internals(cfg, seed, label)["subject"]


def generate_dataset(cfg: SynthConfig) -> tuple[list[Subject], dict]:
    """Subjects with alternating labels (exact +/-1 class balance) plus manifest."""
    if cfg.n_subjects < 10:
        raise ValueError("n_subjects must be >= 10")
    subjects = [
        generate_subject(cfg, subject_seed(cfg.seed, i), label=i % 2)
        for i in range(cfg.n_subjects)
    ]
    manifest = {
        "config": asdict(cfg),
        "seed": cfg.seed,
        "version": DATASET_FORMAT_VERSION,
    }
    return subjects, manifest


def dataset_from_manifest(manifest: dict) -> list[Subject]:
    """Regenerate the exact dataset a manifest describes."""
    if manifest.get("version") != DATASET_FORMAT_VERSION:
        raise ValueError(f"unsupported manifest version {manifest.get('version')!r}")
    cfg = SynthConfig(**manifest["config"])
    return generate_dataset(cfg)[0]
