"""Brute-force reference implementations used only by the tests.

These deliberately avoid the package's kernels: explicit loops, full-size
(N, N) masks, and zeroing instead of slicing.
"""

import math

import numpy as np

from visprune.layout import distance, full_radius
from visprune.pruning import layer_neuron_subsets


def matmul_loops(a, b):
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += float(a[i, t]) * float(b[t, j])
            out[i, j] = s
    return out


def softmax_exp_sum(scores, mask):
    out = np.zeros(scores.shape)
    for i in range(scores.shape[0]):
        cols = [j for j in range(scores.shape[1]) if mask[i, j] == 0.0]
        e = {j: math.exp(scores[i, j]) for j in cols}
        z = sum(e.values())
        for j in cols:
            out[i, j] = e[j] / z
    return out


def _softmax_rows(s, allowed):
    s = np.where(allowed, s, -np.inf)
    s = s - s.max(axis=1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=1, keepdims=True)


def _silu(x):
    return x / (1.0 + np.exp(-x))


def _rms(x):
    return x / np.sqrt(np.mean(x * x, axis=1, keepdims=True) + 1e-6)


def explicit_allowed(config, prune, layer):
    """(N, N) visibility built pair by pair from the pruning rules."""
    lay = config.layout
    nv, n = lay.n_visual, lay.n_tokens
    active = prune.visual_active(layer) and nv > 0
    windowed = nv > 0 and prune.radius < full_radius(lay, prune.metric)
    allowed = np.zeros((n, n), dtype=bool)
    for q in range(n):
        for k in range(n):
            if q < nv:
                if not active:
                    ok = q == k
                elif windowed:
                    ok = k < nv and distance(lay, prune.metric, q, k) <= prune.radius
                    ok = ok and (k <= q or not config.causal_visual)
                else:
                    ok = k <= q or not config.causal_visual
            else:
                if k < nv:
                    ok = active
                else:
                    ok = k <= q or not config.causal_text
            allowed[q, k] = ok
    return allowed


def pruned_forward_oracle(config, weights, x, prune, capture=False):
    lay = config.layout
    nv, n = lay.n_visual, lay.n_tokens
    H, dh = config.n_heads, config.d_head
    subsets = layer_neuron_subsets(config, prune)
    x = np.array(x, dtype=np.float64)
    records = []
    for layer, lw in enumerate(weights.layers):
        active = prune.visual_active(layer) and nv > 0
        allowed = explicit_allowed(config, prune, layer)
        kept = set(prune.heads(layer, H))
        h = _rms(x)
        q, k, v = h @ lw.wq, h @ lw.wk, h @ lw.wv
        heads_out = np.zeros((H, n, dh))
        attn_w = np.zeros((H, n, n))
        for head in range(H):
            c = slice(head * dh, (head + 1) * dh)
            w = _softmax_rows(q[:, c] @ k[:, c].T / math.sqrt(dh), allowed)
            o = w @ v[:, c]
            for row in range(nv):
                if not active or head not in kept:
                    o[row] = 0.0
                    w[row] = 0.0
            heads_out[head] = o
            attn_w[head] = w
        attn = np.concatenate(list(heads_out), axis=1)
        x1 = x + attn @ lw.wo
        h2 = _rms(x1)
        neuron_mask = np.zeros(config.d_ffn)
        neuron_mask[subsets[layer]] = 1.0
        hidden = _silu(h2 @ lw.w1)
        hidden[:nv] *= neuron_mask
        ffn = hidden @ lw.w2
        if config.ffn_outer_activation:
            ffn = _silu(ffn)
        out = x1 + ffn
        if not active:
            out[:nv] = x[:nv]
        records.append(attn_w)
        x = out
    return (x, records) if capture else x


def dense_forward_reference(config, weights, x):
    """Textbook dense transformer: full attention, every head, full FFN."""
    lay = config.layout
    nv, n = lay.n_visual, lay.n_tokens
    H, dh = config.n_heads, config.d_head
    allowed = np.ones((n, n), dtype=bool)
    if config.causal_visual:
        allowed[:nv] = np.tri(nv, n, dtype=bool)
    if config.causal_text:
        allowed[nv:, nv:] = np.tri(n - nv, dtype=bool)
    x = np.array(x, dtype=np.float64)
    for lw in weights.layers:
        h = _rms(x)
        q, k, v = h @ lw.wq, h @ lw.wk, h @ lw.wv
        outs = []
        for head in range(H):
            c = slice(head * dh, (head + 1) * dh)
            outs.append(_softmax_rows(q[:, c] @ k[:, c].T / math.sqrt(dh), allowed) @ v[:, c])
        x = x + np.concatenate(outs, axis=1) @ lw.wo
        ffn = _silu(_rms(x) @ lw.w1) @ lw.w2
        x = x + (_silu(ffn) if config.ffn_outer_activation else ffn)
    return x


def distance_profile_oracle(records, layout, tokens, n_bins):
    """Pair-by-pair aggregation: {(layer, token): {bin: mean}}."""
    nv = layout.n_visual
    diag = math.hypot(layout.grid_width - 1, layout.grid_height - 1) if nv else 0.0
    width = diag / n_bins if diag > 0 else 1.0
    out = {}
    for rec in records:
        for t in tokens:
            heads = [hd for hd in range(rec.weights.shape[0]) if rec.row_active[hd, t]]
            if not heads:
                continue
            sums, counts = {}, {}
            for j in range(nv):
                xt, yt = t % layout.grid_width, t // layout.grid_width
                xj, yj = j % layout.grid_width, j // layout.grid_width
                d = math.sqrt((xt - xj) ** 2 + (yt - yj) ** 2)
                b = min(int(d // width), n_bins - 1)
                val = sum(float(rec.weights[hd, t, j]) for hd in heads) / len(heads)
                sums[b] = sums.get(b, 0.0) + val
                counts[b] = counts.get(b, 0) + 1
            out[(rec.layer, t)] = {b: sums[b] / counts[b] for b in sums}
    return out


def cross_modal_oracle(records, layout):
    nv, nt = layout.n_visual, layout.n_text
    out = np.zeros((len(records), nt))
    for i, rec in enumerate(records):
        H = rec.weights.shape[0]
        for t in range(nt):
            total = 0.0
            for j in range(nv):
                total += sum(float(rec.weights[hd, nv + t, j]) for hd in range(H)) / H
            out[i, t] = total / nv if nv else 0.0
    return out


def head_activity_oracle(records, layout, mode):
    nv, n = layout.n_visual, layout.n_tokens
    L, H = len(records), records[0].weights.shape[0]
    rho = np.zeros((L, H))
    for li, rec in enumerate(records):
        for hd in range(H):
            if mode == "weight_mass":
                recv = [sum(float(rec.weights[hd, q, j]) for q in range(nv, n)) / (n - nv) for j in range(n)]
                vis = sum(recv[:nv]) / nv if nv else 0.0
                txt = sum(recv[nv:]) / (n - nv)
            else:
                norms = [math.sqrt(sum(float(v) ** 2 for v in rec.head_outputs[hd, i])) for i in range(n)]
                vis = sum(norms[:nv]) / nv if nv else 0.0
                txt = sum(norms[nv:]) / (n - nv)
            rho[li, hd] = vis / txt
    return rho
