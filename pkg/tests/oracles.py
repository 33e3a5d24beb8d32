"""Independent reference implementations used as test oracles.

Everything here is written as literal per-node / per-pair loops over plain
numpy values, deliberately ignoring the package's vectorized forward paths
and autodiff machinery, so agreement is meaningful.
"""

import numpy as np


def leaky_relu(x, slope=0.2):
    return x if x > 0 else slope * x


def elu_vec(v):
    return np.where(v > 0, v, np.expm1(v))


def _softmax_scores(coeffs):
    """Stable softmax of a dict key -> coefficient."""
    if not coeffs:
        return {}
    mx = max(coeffs.values())
    ex = {k: np.exp(c - mx) for k, c in coeffs.items()}
    z = sum(ex.values())
    return {k: e / z for k, e in ex.items()}


def _pair_coeff(h_i, h_j, attn):
    return leaky_relu(float(np.concatenate([h_i, h_j]) @ attn[:, 0]))


def gat_layer_naive(x, adj_mask, w, attn):
    """One graph-attention layer over the edges where adj_mask is True."""
    n = x.shape[0]
    h = x @ w
    out = np.zeros((n, w.shape[1]))
    for i in range(n):
        nbrs = [j for j in range(n) if adj_mask[i, j]]
        if not nbrs:
            continue
        coeffs = {j: _pair_coeff(h[i], h[j], attn) for j in nbrs}
        alpha = _softmax_scores(coeffs)
        agg = np.zeros(w.shape[1])
        for j in nbrs:
            agg += alpha[j] * h[j]
        out[i] = elu_vec(agg)
    return out


def bue_initial_naive(x, adj, layer):
    """First parity layer: term-by-term aggregation over signed neighbors."""
    n = x.shape[0]
    d = layer.w_bal.value.shape[1]
    h_bal = x @ layer.w_bal.value
    h_unbal = x @ layer.w_unbal.value
    x_bal = np.zeros((n, d))
    x_unbal = np.zeros((n, d))
    for i in range(n):
        pos = [j for j in range(n) if adj[i, j] > 0]
        neg = [j for j in range(n) if adj[i, j] < 0]
        if pos:
            alpha = _softmax_scores(
                {j: _pair_coeff(h_bal[i], h_bal[j], layer.attn_bal.value) for j in pos})
            x_bal[i] = elu_vec(sum(alpha[j] * h_bal[j] for j in pos))
        if neg:
            alpha = _softmax_scores(
                {j: _pair_coeff(h_unbal[i], h_unbal[j], layer.attn_unbal.value) for j in neg})
            x_unbal[i] = elu_vec(sum(alpha[j] * h_unbal[j] for j in neg))
    return x_bal, x_unbal


def bue_subsequent_naive(x_bal, x_unbal, adj, layer, mode="family"):
    """Parity layer t>1 with the four coefficient families.

    Positive edges carry same-parity features, negative edges carry
    opposite-parity features, both projected by the output branch's weight
    matrix. "family" normalizes each coefficient family over its own edge
    set; "union" normalizes each branch jointly over all neighbors.
    """
    n = adj.shape[0]
    d = layer.w_bal.value.shape[1]
    out_bal = np.zeros((n, d))
    out_unbal = np.zeros((n, d))
    branches = (
        (layer.w_bal.value, layer.attn_bal.value, x_bal, x_unbal, out_bal),
        (layer.w_unbal.value, layer.attn_unbal.value, x_unbal, x_bal, out_unbal),
    )
    for w, attn, feat_pos, feat_neg, out in branches:
        g_pos = feat_pos @ w
        g_neg = feat_neg @ w
        for i in range(n):
            pos = [j for j in range(n) if adj[i, j] > 0]
            neg = [j for j in range(n) if adj[i, j] < 0]
            if not pos and not neg:
                continue
            pos_coeffs = {j: _pair_coeff(g_pos[i], g_pos[j], attn) for j in pos}
            neg_coeffs = {k: _pair_coeff(g_neg[i], g_neg[k], attn) for k in neg}
            agg = np.zeros(d)
            if mode == "family":
                a_pos = _softmax_scores(pos_coeffs)
                a_neg = _softmax_scores(neg_coeffs)
                for j in pos:
                    agg += a_pos[j] * g_pos[j]
                for k in neg:
                    agg += a_neg[k] * g_neg[k]
            else:
                joint = {("p", j): c for j, c in pos_coeffs.items()}
                joint.update({("n", k): c for k, c in neg_coeffs.items()})
                alpha = _softmax_scores(joint)
                for j in pos:
                    agg += alpha[("p", j)] * g_pos[j]
                for k in neg:
                    agg += alpha[("n", k)] * g_neg[k]
            out[i] = elu_vec(agg)
    return out_bal, out_unbal


def bue_encode_naive(x, adj, layers, mode="family"):
    x_bal, x_unbal = bue_initial_naive(x, adj, layers[0])
    for layer in layers[1:]:
        x_bal, x_unbal = bue_subsequent_naive(x_bal, x_unbal, adj, layer, mode)
    return x_bal, x_unbal


def pne_encode_naive(x, adj, pos_layers, neg_layers):
    h_pos, h_neg = x, x
    for lp, ln in zip(pos_layers, neg_layers):
        h_pos = gat_layer_naive(h_pos, adj > 0, lp.w.value, lp.attn.value)
        h_neg = gat_layer_naive(h_neg, adj < 0, ln.w.value, ln.attn.value)
    return h_pos, h_neg


# -------------------------------------------------------- other oracles

def balance_sets_matrix_power(adj, start, t):
    """Walk-parity reachability via boolean DP over the sign-split pair."""
    n = adj.shape[0]
    pos = adj > 0
    neg = adj < 0
    even = np.zeros(n, dtype=bool)
    odd = np.zeros(n, dtype=bool)
    cur_even = np.zeros(n, dtype=bool)
    cur_even[start] = True
    cur_odd = np.zeros(n, dtype=bool)
    for _ in range(t):
        nxt_even = (pos.T @ cur_even) | (neg.T @ cur_odd)
        nxt_odd = (pos.T @ cur_odd) | (neg.T @ cur_even)
        even |= nxt_even
        odd |= nxt_odd
        cur_even, cur_odd = nxt_even, nxt_odd
    return sorted(np.nonzero(even)[0].tolist()), sorted(np.nonzero(odd)[0].tolist())


def quantile_five_naive(row):
    """Sorted-order linear interpolation at p in {0, .25, .5, .75, 1}."""
    s = np.sort(np.asarray(row, dtype=np.float64))
    out = []
    for p in (0.0, 0.25, 0.5, 0.75, 1.0):
        pos = p * (len(s) - 1)
        lo = int(np.floor(pos))
        hi = min(lo + 1, len(s) - 1)
        frac = pos - lo
        out.append(s[lo] + (s[hi] - s[lo]) * frac)
    return np.array(out)


def adam_reference(x0, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
    """Textbook scalar Adam trajectory for a fixed gradient sequence."""
    x = float(x0)
    m = v = 0.0
    traj = []
    for t, g_fn in enumerate(grads, start=1):
        g = g_fn(x) + weight_decay * x
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1 ** t)
        vhat = v / (1 - beta2 ** t)
        x = x - lr * mhat / (np.sqrt(vhat) + eps)
        traj.append(x)
    return traj


def random_signed_graph(rng, n, density=0.5, feature_dim=5, positive_features=False):
    """Symmetric hollow signed adjacency plus features, for property tests."""
    adj = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < density:
                sign = 1.0 if rng.random() < 0.5 else -1.0
                adj[i, j] = adj[j, i] = sign * rng.uniform(0.1, 1.0)
    if positive_features:
        feats = rng.uniform(0.1, 1.0, size=(n, feature_dim))
    else:
        feats = rng.normal(size=(n, feature_dim))
    return adj, feats
