"""Toy mixed-modality decoder with pruning hooks.

Each layer is a pre-norm block: RMS-normalised multi-head attention followed
by a two-matrix FFN, both wrapped in residual connections. The PruneConfig
decides, per layer, which keys a visual query sees, which heads produce
output for visual rows, which FFN neurons visual rows use, and whether the
layer touches visual tokens at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .config import ModelConfig, PruneConfig
from .layout import neighbor_matrix
from .pruning import layer_neuron_subsets, no_prune


@dataclass(frozen=True)
class LayerWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    w2: np.ndarray


@dataclass(frozen=True)
class ModelWeights:
    layers: tuple[LayerWeights, ...]

    def astype(self, dtype) -> "ModelWeights":
        return ModelWeights(tuple(
            LayerWeights(*(getattr(lw, f).astype(dtype) for f in ("wq", "wk", "wv", "wo", "w1", "w2")))
            for lw in self.layers
        ))


@dataclass
class AttentionRecord:
    """Attention captured for one layer.

    ``weights`` is (H, N, N) with blocked entries exactly 0. ``row_active``
    marks (head, query) rows that were actually computed; dropped heads on
    visual rows and visual rows of text-only layers are inactive and all-zero.
    ``head_outputs`` is (H, N, d_head), the per-head attention output before
    the output projection.
    """

    layer: int
    weights: np.ndarray
    head_outputs: np.ndarray
    row_active: np.ndarray
    visual_active: bool


@dataclass
class ForwardOutput:
    hidden: np.ndarray
    attention_records: list[AttentionRecord] | None = None


def init_weights(config: ModelConfig, seed: int) -> ModelWeights:
    """Uniform weights with std 1/sqrt(d_model); |w| <= sqrt(3)/sqrt(d_model)."""
    rng = np.random.default_rng(seed)
    d, f = config.d_model, config.d_ffn
    bound = np.sqrt(3.0 / d)

    def u(*shape):
        return rng.uniform(-bound, bound, size=shape)

    layers = tuple(LayerWeights(u(d, d), u(d, d), u(d, d), u(d, d), u(d, f), u(f, d)) for _ in range(config.n_layers))
    return ModelWeights(layers)


def random_input(config: ModelConfig, seed: int, dtype=np.float64) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((config.layout.n_tokens, config.d_model)).astype(dtype)


def attention_allowed(config: ModelConfig, prune: PruneConfig) -> np.ndarray:
    """Boolean (N, N) key visibility for layers that do visual computation.

    With a restrictive window, visual queries see only visual neighbours.
    When the window covers the whole grid the visual rows fall back to plain
    attention over the full sequence (causal if ``causal_visual``).
    """
    lay = config.layout
    nv, n = lay.n_visual, lay.n_tokens
    allowed = np.ones((n, n), dtype=bool)
    if nv:
        if prune.windowed(lay):
            allowed[:nv, :nv] = neighbor_matrix(lay, prune.metric, prune.radius, causal=config.causal_visual)
            allowed[:nv, nv:] = False
        elif config.causal_visual:
            allowed[:nv] = np.tri(nv, n, dtype=bool)
    if config.causal_text:
        allowed[nv:, nv:] = np.tri(lay.n_text, dtype=bool)
    return allowed


def text_allowed(config: ModelConfig) -> np.ndarray:
    nt = config.layout.n_text
    if config.causal_text:
        return np.tri(nt, dtype=bool)
    return np.ones((nt, nt), dtype=bool)


def _ffn(config: ModelConfig, h: np.ndarray, w1: np.ndarray, w2: np.ndarray) -> np.ndarray:
    out = kernels.matmul(kernels.silu(kernels.matmul(h, w1)), w2)
    return kernels.silu(out) if config.ffn_outer_activation else out


def _attend(q, k, v, mask, scale):
    w = kernels.masked_softmax(kernels.matmul(q, k.T) * scale, mask)
    return w, kernels.matmul(w, v)


def layer_forward(
    config: ModelConfig,
    lw: LayerWeights,
    layer: int,
    x: np.ndarray,
    prune: PruneConfig,
    neurons: np.ndarray,
    allowed: np.ndarray | None = None,
    capture: bool = False,
):
    """Run one block. Returns ``(hidden, record_or_None)``."""
    lay = config.layout
    nv, n = lay.n_visual, lay.n_tokens
    H, dh = config.n_heads, config.d_head
    scale = 1.0 / np.sqrt(dh)
    dtype = x.dtype

    if capture:
        weights = np.zeros((H, n, n), dtype=dtype)
        head_out = np.zeros((H, n, dh), dtype=dtype)
        row_active = np.zeros((H, n), dtype=bool)

    if not prune.visual_active(layer) or nv == 0:
        # text-only block: visual rows pass through untouched
        xt = x[nv:]
        h = kernels.rms_normalize(xt)
        q, k, v = (kernels.matmul(h, w) for w in (lw.wq, lw.wk, lw.wv))
        mask = kernels.mask_from_allowed(text_allowed(config))
        attn = np.zeros_like(xt)
        for head in range(H):
            cols = slice(head * dh, (head + 1) * dh)
            w, o = _attend(q[:, cols], k[:, cols], v[:, cols], mask, scale)
            attn[:, cols] = o
            if capture:
                weights[head, nv:, nv:] = w
                head_out[head, nv:] = o
                row_active[head, nv:] = True
        xt = xt + kernels.matmul(attn, lw.wo)
        xt = xt + _ffn(config, kernels.rms_normalize(xt), lw.w1, lw.w2)
        out = x.copy()
        out[nv:] = xt
        record = AttentionRecord(layer, weights, head_out, row_active, False) if capture else None
        return out, record

    if allowed is None:
        allowed = attention_allowed(config, prune)
    vis_mask = kernels.mask_from_allowed(allowed[:nv])
    txt_mask = kernels.mask_from_allowed(allowed[nv:])
    vis_keys = slice(0, nv) if prune.windowed(lay) else slice(0, n)
    vis_mask = vis_mask[:, vis_keys]
    kept = set(prune.heads(layer, H))

    h = kernels.rms_normalize(x)
    q, k, v = (kernels.matmul(h, w) for w in (lw.wq, lw.wk, lw.wv))
    attn = np.zeros_like(x)
    for head in range(H):
        cols = slice(head * dh, (head + 1) * dh)
        qh, kh, vh = q[:, cols], k[:, cols], v[:, cols]
        if head in kept:
            w, o = _attend(qh[:nv], kh[vis_keys], vh[vis_keys], vis_mask, scale)
            attn[:nv, cols] = o
            if capture:
                weights[head, :nv, vis_keys] = w
                head_out[head, :nv] = o
                row_active[head, :nv] = True
        w, o = _attend(qh[nv:], kh, vh, txt_mask, scale)
        attn[nv:, cols] = o
        if capture:
            weights[head, nv:] = w
            head_out[head, nv:] = o
            row_active[head, nv:] = True

    x = x + kernels.matmul(attn, lw.wo)
    h = kernels.rms_normalize(x)
    ffn = np.empty_like(x)
    ffn[:nv] = _ffn(config, h[:nv], lw.w1[:, neurons], lw.w2[neurons, :])
    ffn[nv:] = _ffn(config, h[nv:], lw.w1, lw.w2)
    out = x + ffn
    record = AttentionRecord(layer, weights, head_out, row_active, True) if capture else None
    return out, record


def forward(
    config: ModelConfig,
    weights: ModelWeights,
    x: np.ndarray,
    prune: PruneConfig | None = None,
    capture: bool = False,
) -> ForwardOutput:
    """Run every layer; computation happens in ``x.dtype``."""
    lay = config.layout
    if x.shape != (lay.n_tokens, config.d_model):
        raise ValueError(f"input shape {x.shape} does not match ({lay.n_tokens}, {config.d_model})")
    if len(weights.layers) != config.n_layers:
        raise ValueError(f"weights have {len(weights.layers)} layers, config has {config.n_layers}")
    prune = (prune if prune is not None else no_prune(config)).validate(config)
    if weights.layers[0].wq.dtype != x.dtype:
        weights = weights.astype(x.dtype)

    allowed = attention_allowed(config, prune)
    subsets = layer_neuron_subsets(config, prune)
    records = [] if capture else None
    for layer, lw in enumerate(weights.layers):
        x, record = layer_forward(config, lw, layer, x, prune, subsets[layer], allowed, capture)
        if capture:
            records.append(record)
    return ForwardOutput(x, records)
