"""Signed graph encoder: walk-parity head, sign-split head, latent fusion.

The parity head keeps two feature components per node. The balanced
component aggregates balanced features over positive edges and unbalanced
features over negative edges (even total parity); the unbalanced component
mirrors that (odd parity). The sign-split head runs plain graph attention
separately on the positive subgraph and on the magnitudes of the negative
one. Per-node latents are the concatenation of both heads' projections.

Attention coefficients pass through a leaky-relu (slope 0.2) and are
normalized by softmax over ragged per-source segments. By default each
coefficient family is normalized over its own edge set, which keeps the
gradient of the balanced component confined to even-parity walks; the
"union" mode instead normalizes each branch jointly over positive and
negative edges.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .autodiff import (Tensor, add, concat_last, concat_rows, elu, gather_rows,
                       leaky_relu, matmul, mul, segment_softmax, segment_sum)

ATTN_SLOPE = 0.2


class AttnRecord(NamedTuple):
    """Snapshot of one normalized attention segment group (for diagnostics)."""

    label: str
    alpha: np.ndarray
    seg: np.ndarray
    n_segments: int


@dataclass(frozen=True)
class EdgeLists:
    """Directed edge arrays of a signed graph, split by sign, row-major order."""

    n: int
    pos_src: np.ndarray
    pos_dst: np.ndarray
    neg_src: np.ndarray
    neg_dst: np.ndarray
    pos_w: np.ndarray
    neg_w: np.ndarray


def edge_lists(adj: np.ndarray) -> EdgeLists:
    pos_src, pos_dst = np.nonzero(adj > 0)
    neg_src, neg_dst = np.nonzero(adj < 0)
    return EdgeLists(
        n=adj.shape[0],
        pos_src=pos_src.astype(np.int64), pos_dst=pos_dst.astype(np.int64),
        neg_src=neg_src.astype(np.int64), neg_dst=neg_dst.astype(np.int64),
        pos_w=np.abs(adj[pos_src, pos_dst]),
        neg_w=np.abs(adj[neg_src, neg_dst]),
    )


# ------------------------------------------------------------- parameters

@dataclass
class BueLayerParams:
    w_bal: Tensor
    w_unbal: Tensor
    attn_bal: Tensor    # (2*d_out, 1), shared by both coefficient families of the branch
    attn_unbal: Tensor


@dataclass
class GatLayerParams:
    w: Tensor
    attn: Tensor


@dataclass
class SgeParams:
    bue_layers: list[BueLayerParams]
    pne_pos_layers: list[GatLayerParams]
    pne_neg_layers: list[GatLayerParams]
    fuse_w_bue: Tensor
    fuse_w_pne: Tensor


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


def init_bue_layer(rng, d_in: int, d_out: int) -> BueLayerParams:
    return BueLayerParams(
        w_bal=Tensor(glorot_uniform(rng, d_in, d_out, (d_in, d_out))),
        w_unbal=Tensor(glorot_uniform(rng, d_in, d_out, (d_in, d_out))),
        attn_bal=Tensor(glorot_uniform(rng, 2 * d_out, 1, (2 * d_out, 1))),
        attn_unbal=Tensor(glorot_uniform(rng, 2 * d_out, 1, (2 * d_out, 1))),
    )


def init_gat_layer(rng, d_in: int, d_out: int) -> GatLayerParams:
    return GatLayerParams(
        w=Tensor(glorot_uniform(rng, d_in, d_out, (d_in, d_out))),
        attn=Tensor(glorot_uniform(rng, 2 * d_out, 1, (2 * d_out, 1))),
    )


def init_sge_params(rng, feature_dim: int, hidden_dim: int, latent_dim: int,
                    t_layers: int) -> SgeParams:
    if t_layers < 1:
        raise ValueError("encoder depth must be >= 1")
    if latent_dim % 2 != 0:
        raise ValueError("latent_dim must be even (two fused head projections)")
    dims = [feature_dim] + [hidden_dim] * t_layers
    half = latent_dim // 2
    return SgeParams(
        bue_layers=[init_bue_layer(rng, dims[i], dims[i + 1]) for i in range(t_layers)],
        pne_pos_layers=[init_gat_layer(rng, dims[i], dims[i + 1]) for i in range(t_layers)],
        pne_neg_layers=[init_gat_layer(rng, dims[i], dims[i + 1]) for i in range(t_layers)],
        fuse_w_bue=Tensor(glorot_uniform(rng, 2 * hidden_dim, half, (2 * hidden_dim, half))),
        fuse_w_pne=Tensor(glorot_uniform(rng, 2 * hidden_dim, half, (2 * hidden_dim, half))),
    )


# ---------------------------------------------------------------- forward

def attention_scores(h: Tensor, src, dst, attn_vec: Tensor, n: int,
                     collect=None, label: str = "attn") -> Tensor:
    """Per-edge attention weights, softmax-normalized over each source segment."""
    hi = gather_rows(h, src)
    hj = gather_rows(h, dst)
    e = leaky_relu(matmul(concat_last(hi, hj), attn_vec), ATTN_SLOPE)
    alpha = segment_softmax(e, src, n)
    if collect is not None:
        collect.append(AttnRecord(label, alpha.value[:, 0].copy(), np.asarray(src), n))
    return alpha


def _edge_scores(h: Tensor, src, dst, attn_vec: Tensor) -> Tensor:
    hi = gather_rows(h, src)
    hj = gather_rows(h, dst)
    return leaky_relu(matmul(concat_last(hi, hj), attn_vec), ATTN_SLOPE)


def _attend_aggregate(h: Tensor, src, dst, attn_vec: Tensor, n: int,
                      collect, label, edge_w=None) -> Tensor:
    alpha = attention_scores(h, src, dst, attn_vec, n, collect, label)
    if edge_w is not None:
        alpha = mul(alpha, Tensor(edge_w[:, None]))
    msg = mul(gather_rows(h, dst), alpha)
    return segment_sum(msg, src, n)


def _attend_two_sets(h_pos: Tensor, h_neg: Tensor, edges: EdgeLists,
                     attn_vec: Tensor, mode: str, collect, label,
                     edge_weighted: bool) -> Tensor:
    """Aggregate pos-edge messages from h_pos and neg-edge messages from h_neg.

    mode "family": one softmax per edge set; "union": a single softmax per
    source node over both edge sets of the branch.
    """
    n = edges.n
    pw = edges.pos_w if edge_weighted else None
    nw = edges.neg_w if edge_weighted else None
    if mode == "family":
        agg_pos = _attend_aggregate(h_pos, edges.pos_src, edges.pos_dst, attn_vec, n,
                                    collect, label + "+", pw)
        agg_neg = _attend_aggregate(h_neg, edges.neg_src, edges.neg_dst, attn_vec, n,
                                    collect, label + "-", nw)
        return add(agg_pos, agg_neg)
    # union: concatenate both edge sets, normalize jointly per source node
    e = concat_rows(_edge_scores(h_pos, edges.pos_src, edges.pos_dst, attn_vec),
                    _edge_scores(h_neg, edges.neg_src, edges.neg_dst, attn_vec))
    seg = np.concatenate([edges.pos_src, edges.neg_src])
    alpha = segment_softmax(e, seg, n)
    if collect is not None:
        collect.append(AttnRecord(label + "u", alpha.value[:, 0].copy(), seg, n))
    if edge_weighted:
        alpha = mul(alpha, Tensor(np.concatenate([edges.pos_w, edges.neg_w])[:, None]))
    msg = mul(concat_rows(gather_rows(h_pos, edges.pos_dst),
                          gather_rows(h_neg, edges.neg_dst)), alpha)
    return segment_sum(msg, seg, n)


def bue_initial(x: Tensor, edges: EdgeLists, p: BueLayerParams,
                collect=None, edge_weighted: bool = False) -> tuple[Tensor, Tensor]:
    """First parity layer: balanced from positive edges, unbalanced from negative.

    Nodes with no edges of a kind get a zero row; elu keeps zero at zero, so
    empty aggregation stays exactly neutral.
    """
    h_bal = matmul(x, p.w_bal)
    h_unbal = matmul(x, p.w_unbal)
    pw = edges.pos_w if edge_weighted else None
    nw = edges.neg_w if edge_weighted else None
    x_bal = elu(_attend_aggregate(h_bal, edges.pos_src, edges.pos_dst,
                                  p.attn_bal, edges.n, collect, "bue1.bal", pw))
    x_unbal = elu(_attend_aggregate(h_unbal, edges.neg_src, edges.neg_dst,
                                    p.attn_unbal, edges.n, collect, "bue1.unbal", nw))
    return x_bal, x_unbal


def bue_subsequent(x_bal: Tensor, x_unbal: Tensor, edges: EdgeLists,
                   p: BueLayerParams, layer_index: int, mode: str = "family",
                   collect=None, edge_weighted: bool = False) -> tuple[Tensor, Tensor]:
    """Parity layer t>1: even/odd components exchange across negative edges.

    Balanced output: balanced features over positive edges plus unbalanced
    features over negative edges (both projected by the balanced weights);
    the unbalanced output mirrors it. Each branch has one attention vector
    serving its two coefficient families.
    """
    if layer_index < 2:
        raise ValueError("bue_subsequent applies to layers >= 2")
    lab = f"bue{layer_index}"
    g_bal_pos = matmul(x_bal, p.w_bal)
    g_bal_neg = matmul(x_unbal, p.w_bal)
    x_bal_next = elu(_attend_two_sets(g_bal_pos, g_bal_neg, edges, p.attn_bal,
                                      mode, collect, lab + ".bal", edge_weighted))
    g_unbal_pos = matmul(x_unbal, p.w_unbal)
    g_unbal_neg = matmul(x_bal, p.w_unbal)
    x_unbal_next = elu(_attend_two_sets(g_unbal_pos, g_unbal_neg, edges, p.attn_unbal,
                                        mode, collect, lab + ".unbal", edge_weighted))
    return x_bal_next, x_unbal_next


def bue_encode(x: Tensor, edges: EdgeLists, layers: list[BueLayerParams],
               mode: str = "family", collect=None,
               edge_weighted: bool = False) -> tuple[Tensor, Tensor]:
    """Run the full parity stack; returns (balanced, unbalanced) components."""
    if not layers:
        raise ValueError("bue_encode: need at least one layer")
    x_bal, x_unbal = bue_initial(x, edges, layers[0], collect, edge_weighted)
    for i, p in enumerate(layers[1:], start=2):
        x_bal, x_unbal = bue_subsequent(x_bal, x_unbal, edges, p, i, mode,
                                        collect, edge_weighted)
    return x_bal, x_unbal


def gat_layer(h: Tensor, src, dst, n: int, p: GatLayerParams,
              collect=None, label: str = "gat", edge_w=None) -> Tensor:
    """Plain graph-attention update over one edge set; zero rows for isolates."""
    hw = matmul(h, p.w)
    return elu(_attend_aggregate(hw, src, dst, p.attn, n, collect, label, edge_w))


def pne_encode(x: Tensor, edges: EdgeLists, pos_layers: list[GatLayerParams],
               neg_layers: list[GatLayerParams], collect=None,
               edge_weighted: bool = False) -> tuple[Tensor, Tensor]:
    """Attention stacks over the positive and negative subgraphs, shared input."""
    if not pos_layers or len(pos_layers) != len(neg_layers):
        raise ValueError("pne_encode: branch stacks must be non-empty and equal depth")
    pw = edges.pos_w if edge_weighted else None
    nw = edges.neg_w if edge_weighted else None
    h_pos = x
    h_neg = x
    for i, (pp, pn) in enumerate(zip(pos_layers, neg_layers), start=1):
        h_pos = gat_layer(h_pos, edges.pos_src, edges.pos_dst, edges.n, pp,
                          collect, f"pne{i}.pos", pw)
        h_neg = gat_layer(h_neg, edges.neg_src, edges.neg_dst, edges.n, pn,
                          collect, f"pne{i}.neg", nw)
    return h_pos, h_neg


def sge_fuse(x_bue: Tensor, x_pne: Tensor, params: SgeParams) -> Tensor:
    """Concatenate the projected head outputs into the final latent rows."""
    return concat_last(matmul(x_bue, params.fuse_w_bue),
                       matmul(x_pne, params.fuse_w_pne))
