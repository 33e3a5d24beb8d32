"""Graph containers, preprocessing, sign partitioning and neighbor machinery.

Two graph flavors: signed weighted graphs (correlation-style connectivity,
entries of either sign) and unsigned non-negative graphs (structural-style
targets). Both are hollow (zero diagonal) and symmetric; construction
symmetrizes by averaging and warns when the asymmetry exceeds tolerance.
Arrays are frozen after construction so instances can be shared freely.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

SYMMETRY_TOL = 1e-9


class DegenerateGraphError(ValueError):
    pass


def _prepare_adj(adj, what: str) -> np.ndarray:
    adj = np.array(adj, dtype=np.float64)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError(f"{what}: adjacency must be square, got shape {adj.shape}")
    if np.abs(adj - adj.T).max(initial=0.0) > SYMMETRY_TOL:
        warnings.warn(f"{what}: asymmetric adjacency symmetrized by averaging")
    adj = 0.5 * (adj + adj.T)
    np.fill_diagonal(adj, 0.0)  # hollow by convention, self-weights discarded
    return adj


@dataclass(frozen=True)
class SignedGraph:
    """Signed weighted graph plus per-node feature rows."""

    n: int
    adj: np.ndarray
    features: np.ndarray | None = None

    @classmethod
    def create(cls, adj, features=None) -> "SignedGraph":
        adj = _prepare_adj(adj, "SignedGraph")
        if features is not None:
            features = np.array(features, dtype=np.float64)
            if features.ndim != 2 or features.shape[0] != adj.shape[0]:
                raise ValueError(
                    f"SignedGraph: features shape {features.shape} does not match "
                    f"{adj.shape[0]} nodes")
            features.setflags(write=False)
        adj.setflags(write=False)
        return cls(n=adj.shape[0], adj=adj, features=features)


@dataclass(frozen=True)
class UnsignedGraph:
    """Non-negative weighted graph (structural-style target)."""

    n: int
    adj: np.ndarray

    @classmethod
    def create(cls, adj) -> "UnsignedGraph":
        adj = _prepare_adj(adj, "UnsignedGraph")
        if adj.min(initial=0.0) < 0:
            raise ValueError("UnsignedGraph: negative entries")
        adj.setflags(write=False)
        return cls(n=adj.shape[0], adj=adj)


@dataclass(frozen=True)
class Subject:
    """One paired sample: signed input graph, unsigned target, supervision."""

    functional: SignedGraph
    structural: UnsignedGraph
    label: int | None = None
    score: float | None = None

    def __post_init__(self):
        if self.functional.n != self.structural.n:
            raise ValueError(
                f"Subject: node counts differ "
                f"({self.functional.n} vs {self.structural.n})")


@dataclass(frozen=True)
class NeighborSets:
    pos: tuple[tuple[int, ...], ...]
    neg: tuple[tuple[int, ...], ...]


# ------------------------------------------------------------ operations

def normalize_functional(g: SignedGraph) -> SignedGraph:
    """Scale signed weights by the max absolute entry into [-1, 1].

    Division (not affine min-max) keeps zeros at zero and preserves signs.
    """
    peak = np.abs(g.adj).max(initial=0.0)
    if peak == 0.0:
        raise DegenerateGraphError("degenerate graph: all-zero adjacency")
    return SignedGraph.create(g.adj / peak, g.features)


def normalize_structural(g: UnsignedGraph) -> UnsignedGraph:
    """Scale non-negative weights by the max entry into [0, 1]."""
    peak = g.adj.max(initial=0.0)
    if peak == 0.0:
        raise DegenerateGraphError("degenerate graph: all-zero adjacency")
    return UnsignedGraph.create(g.adj / peak)


def split_signed(g: SignedGraph) -> tuple[UnsignedGraph, UnsignedGraph]:
    """Split into (positive part, negated negative part); both non-negative.

    The difference positive.adj - negative.adj reproduces the input exactly.
    """
    pos = np.where(g.adj > 0, g.adj, 0.0)
    neg = np.where(g.adj < 0, -g.adj, 0.0)
    return UnsignedGraph.create(pos), UnsignedGraph.create(neg)


def neighbor_sets(g: SignedGraph) -> NeighborSets:
    """Per-node positive/negative neighbor index lists by entry sign."""
    pos = tuple(tuple(np.flatnonzero(row > 0).tolist()) for row in g.adj)
    neg = tuple(tuple(np.flatnonzero(row < 0).tolist()) for row in g.adj)
    return NeighborSets(pos=pos, neg=neg)


def balance_oracle(g: SignedGraph, start: int, t: int) -> tuple[list[int], list[int]]:
    """Walk-parity membership sets by brute-force walk enumeration.

    A node lands in the balanced set when some walk of length <= t from
    `start` reaches it with an even number of negative edges, and in the
    unbalanced set when some walk reaches it with an odd count. The sets
    may overlap: distinct walks can carry both parities. Exponential in t,
    hence the small-t guard; meant as a testing reference only.
    """
    if t < 1:
        raise ValueError("balance_oracle: t must be >= 1")
    if t > 6:
        raise ValueError("balance_oracle: t > 6 rejected (walk enumeration blows up)")
    adj = g.adj
    neighbors = [np.flatnonzero(adj[i]) for i in range(g.n)]
    balanced: set[int] = set()
    unbalanced: set[int] = set()

    def walk(node: int, depth: int, neg_edges: int):
        if depth == t:
            return
        for j in neighbors[node]:
            parity = neg_edges + (1 if adj[node, j] < 0 else 0)
            (balanced if parity % 2 == 0 else unbalanced).add(int(j))
            walk(int(j), depth + 1, parity)

    walk(start, 0, 0)
    return sorted(balanced), sorted(unbalanced)


def node_features_from_series(series) -> np.ndarray:
    """Per-row summary features: [min, Q25, median, Q75, max].

    Quantiles interpolate linearly between order statistics, so each output
    row is monotone non-decreasing with exact extrema at the ends.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2 or series.shape[1] < 2:
        raise ValueError(f"node_features_from_series: need n x L with L >= 2, "
                         f"got {series.shape}")
    qs = np.quantile(series, [0.0, 0.25, 0.5, 0.75, 1.0], axis=1, method="linear")
    return np.ascontiguousarray(qs.T)


# ------------------------------------------------------------------- I/O

def graph_to_dict(g: SignedGraph | UnsignedGraph) -> dict:
    d = {"n": g.n, "adj": g.adj.reshape(-1).tolist()}
    features = getattr(g, "features", None)
    if features is not None:
        d["features"] = features.reshape(-1).tolist()
    return d


def _adj_from_dict(d: dict) -> np.ndarray:
    n = int(d["n"])
    adj = np.asarray(d["adj"], dtype=np.float64)
    if adj.size != n * n:
        raise ValueError(f"graph dict: adj has {adj.size} entries, expected {n * n}")
    return adj.reshape(n, n)


def signed_graph_from_dict(d: dict) -> SignedGraph:
    adj = _adj_from_dict(d)
    features = d.get("features")
    if features is not None:
        features = np.asarray(features, dtype=np.float64).reshape(adj.shape[0], -1)
    return SignedGraph.create(adj, features)


def unsigned_graph_from_dict(d: dict) -> UnsignedGraph:
    return UnsignedGraph.create(_adj_from_dict(d))


def subject_to_dict(s: Subject) -> dict:
    return {
        "functional": graph_to_dict(s.functional),
        "structural": graph_to_dict(s.structural),
        "label": s.label,
        "score": s.score,
    }


def subject_from_dict(d: dict) -> Subject:
    label = d.get("label")
    score = d.get("score")
    return Subject(
        functional=signed_graph_from_dict(d["functional"]),
        structural=unsigned_graph_from_dict(d["structural"]),
        label=None if label is None else int(label),
        score=None if score is None else float(score),
    )


def save_dataset(subjects, path):
    with open(path, "w") as fh:
        json.dump([subject_to_dict(s) for s in subjects], fh)


def load_dataset(path) -> list[Subject]:
    with open(path) as fh:
        records = json.load(fh)
    if not isinstance(records, list):
        raise ValueError("dataset file: expected a JSON array of subject records")
    return [subject_from_dict(r) for r in records]


def load_graph_csv(path, signed: bool = True, n: int | None = None):
    """Read a (src, dst, weight) edge list into a graph; header row optional."""
    edges = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                i, j, w = int(row[0]), int(row[1]), float(row[2])
            except ValueError:
                continue  # header
            edges.append((i, j, w))
    if not edges:
        raise ValueError(f"{path}: no edges parsed")
    size = n if n is not None else max(max(i, j) for i, j, _ in edges) + 1
    adj = np.zeros((size, size))
    for i, j, w in edges:
        adj[i, j] = w
        adj[j, i] = w
    return SignedGraph.create(adj) if signed else UnsignedGraph.create(adj)
