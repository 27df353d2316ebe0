"""Analytical FLOPs model for dense and pruned forward passes.

Convention: 2 FLOPs per multiply-accumulate. Softmax, normalisation,
activations and residual adds are not counted. Only the language model is
modelled; any vision encoder / projector cost is absent. Counts are exact
Python integers.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

from .config import ModelConfig, PruneConfig
from .layout import TokenLayout, layout_for, window_pair_count
from .pruning import kept_neuron_count

TERMS = ("qkv_proj", "attn_scores", "attn_values", "out_proj", "ffn")

# Reported totals (FLOPs) for the published LLaVA-1.5 configurations.
PUBLISHED_FLOPS = {
    ("7b", "original"): 7.63e12,
    ("7b", "ours_a"): 1.91e12,
    ("7b", "ours_b"): 0.92e12,
    ("13b", "original"): 14.89e12,
    ("13b", "ours_a"): 3.72e12,
    ("13b", "ours_b"): 1.79e12,
}

# (kept heads, radius, last layers dropped, ffn keep ratio)
PUBLISHED_KNOBS = {
    ("7b", "ours_a"): (24, 5.0, 16, 0.5),
    ("7b", "ours_b"): (16, 5.0, 16, 0.25),
    ("13b", "ours_a"): (30, 5.0, 20, 0.5),
    ("13b", "ours_b"): (20, 5.0, 20, 0.25),
}

N_VISUAL_LLAVA = 576

# Text-token count that best fits both published dense totals; see
# calibrate_n_text(). Re-derived in the test suite.
CALIBRATED_N_TEXT = 156


def llava_config(size: str, n_text: int = CALIBRATED_N_TEXT) -> ModelConfig:
    dims = {"7b": (32, 4096, 32, 11008), "13b": (40, 5120, 40, 13824)}[size]
    L, d, H, f = dims
    return ModelConfig(n_layers=L, d_model=d, n_heads=H, d_ffn=f, layout=TokenLayout(24, 24, n_text))


def published_prune(config: ModelConfig, size: str, variant: str) -> PruneConfig:
    heads, radius, n_last, keep = PUBLISHED_KNOBS[(size, variant)]
    return PruneConfig(
        radius=radius,
        last_visual_layer=config.n_layers - n_last,
        kept_heads=tuple(tuple(range(heads)) for _ in range(config.n_layers)),
        ffn_keep_ratio=keep,
    ).validate(config)


@dataclass
class FlopsReport:
    per_layer: list[dict[str, int]]
    n_visual: int
    n_text: int
    accounting: str = "modeled"
    echo: dict = field(default_factory=dict)

    @property
    def totals(self) -> dict[str, int]:
        return {t: sum(row[t] for row in self.per_layer) for t in TERMS}

    @property
    def grand_total(self) -> int:
        return sum(self.totals.values())

    @property
    def attention(self) -> int:
        tot = self.totals
        return tot["attn_scores"] + tot["attn_values"]

    def rows(self) -> list[tuple[str, str, int]]:
        out = [(str(l), t, row[t]) for l, row in enumerate(self.per_layer) for t in TERMS]
        out += [("total", t, c) for t, c in self.totals.items()]
        out.append(("total", "all", self.grand_total))
        return out

    def header(self) -> list[str]:
        lines = [
            "FLOPs = 2 per multiply-accumulate; softmax/norm/activation excluded; language model only",
            f"n_visual={self.n_visual} n_text={self.n_text} accounting={self.accounting}",
        ]
        lines += [f"{k}={v}" for k, v in self.echo.items()]
        return lines

    def text_table(self) -> str:
        buf = io.StringIO()
        for line in self.header():
            buf.write(f"# {line}\n")
        buf.write(f"{'layer':>6} " + " ".join(f"{t:>14}" for t in TERMS) + "\n")
        for l, row in enumerate(self.per_layer):
            buf.write(f"{l:>6} " + " ".join(f"{row[t]:>14.4e}" for t in TERMS) + "\n")
        tot = self.totals
        buf.write(f"{'total':>6} " + " ".join(f"{tot[t]:>14.4e}" for t in TERMS) + "\n")
        buf.write(f"grand total: {self.grand_total:.4e} FLOPs ({self.grand_total / 1e12:.3f} T)\n")
        return buf.getvalue()


def _text_text_pairs(n_text: int, causal: bool) -> int:
    return n_text * (n_text + 1) // 2 if causal else n_text * n_text


def _dense_visual_pairs(n_visual: int, n_text: int, causal: bool) -> int:
    # with causal masking visual tokens precede text, so text keys are never seen
    return n_visual * (n_visual + 1) // 2 if causal else n_visual * (n_visual + n_text)


def _text_only_layer(config: ModelConfig, n_text: int) -> dict[str, int]:
    d, f = config.d_model, config.d_ffn
    pairs = _text_text_pairs(n_text, config.causal_text)
    return {
        "qkv_proj": 6 * n_text * d * d,
        "attn_scores": 2 * pairs * d,
        "attn_values": 2 * pairs * d,
        "out_proj": 2 * n_text * d * d,
        "ffn": 4 * n_text * d * f,
    }


def flops_dense(config: ModelConfig, n_visual: int | None = None, n_text: int | None = None) -> FlopsReport:
    layout = _layout(config, n_visual, n_text)
    nv, nt = layout.n_visual, layout.n_text
    d, f = config.d_model, config.d_ffn
    n = nv + nt
    pairs = _dense_visual_pairs(nv, nt, config.causal_visual) + nt * nv + _text_text_pairs(nt, config.causal_text)
    layer = {
        "qkv_proj": 6 * n * d * d,
        "attn_scores": 2 * pairs * d,
        "attn_values": 2 * pairs * d,
        "out_proj": 2 * n * d * d,
        "ffn": 4 * n * d * f,
    }
    return FlopsReport([dict(layer) for _ in range(config.n_layers)], nv, nt, "dense", _echo(config, None))


def flops_pruned(
    config: ModelConfig,
    prune: PruneConfig,
    n_visual: int | None = None,
    n_text: int | None = None,
    accounting: str = "modeled",
) -> FlopsReport:
    """FLOPs of a pruned forward pass.

    ``accounting="modeled"`` scales every visual-row attention term by the
    kept-head fraction. ``"dense-fallback"`` still scales scores and values
    but charges the full QKV and output projections for visual rows.
    """
    if accounting not in ("modeled", "dense-fallback"):
        raise ValueError(f"unknown accounting mode {accounting!r}")
    layout = _layout(config, n_visual, n_text)
    prune.validate(config)
    nv, nt = layout.n_visual, layout.n_text
    d, f, H, dh = config.d_model, config.d_ffn, config.n_heads, config.d_head

    if prune.windowed(layout):
        vis_pairs = window_pair_count(layout, prune.metric, float(prune.radius), config.causal_visual)
    else:
        vis_pairs = _dense_visual_pairs(nv, nt, config.causal_visual)
    text_pairs = nt * nv + _text_text_pairs(nt, config.causal_text)
    n_keep = kept_neuron_count(f, prune.ffn_keep_ratio)

    per_layer = []
    for l in range(config.n_layers):
        if not prune.visual_active(l) or nv == 0:
            per_layer.append(_text_only_layer(config, nt))
            continue
        dv = len(prune.heads(l, H)) * dh
        proj = dv if accounting == "modeled" else d
        per_layer.append({
            "qkv_proj": 6 * nv * d * proj + 6 * nt * d * d,
            "attn_scores": 2 * vis_pairs * dv + 2 * text_pairs * d,
            "attn_values": 2 * vis_pairs * dv + 2 * text_pairs * d,
            "out_proj": 2 * nv * proj * d + 2 * nt * d * d,
            "ffn": 4 * nv * d * n_keep + 4 * nt * d * f,
        })
    return FlopsReport(per_layer, nv, nt, accounting, _echo(config, prune))


def _layout(config: ModelConfig, n_visual: int | None, n_text: int | None) -> TokenLayout:
    base = config.layout
    nt = base.n_text if n_text is None else n_text
    if nt < 1:
        raise ValueError("n_text must be >= 1")
    if n_visual is None or n_visual == base.n_visual:
        return TokenLayout(base.grid_width, base.grid_height, nt)
    if n_visual < 0:
        raise ValueError("n_visual must be >= 0")
    return layout_for(n_visual, nt, width=base.grid_width)


def _echo(config: ModelConfig, prune: PruneConfig | None) -> dict:
    echo = {
        "n_layers": config.n_layers,
        "d_model": config.d_model,
        "n_heads": config.n_heads,
        "d_ffn": config.d_ffn,
        "causal_text": config.causal_text,
        "causal_visual": config.causal_visual,
        "calibrated_n_text": CALIBRATED_N_TEXT,
    }
    if prune is not None:
        echo.update(
            radius=prune.radius,
            metric=prune.metric.value,
            kept_heads_min=min(len(prune.heads(l, config.n_heads)) for l in range(config.n_layers)),
            ffn_keep_ratio=prune.ffn_keep_ratio,
            last_visual_layer=prune.last_visual_layer,
            dropped_block=prune.dropped_block,
        )
    return echo


def scaling_sweep(
    config: ModelConfig,
    prune: PruneConfig,
    n_visual_values: list[int],
    n_text: int | None = None,
) -> list[tuple[int, int, int]]:
    """Rows of (n_visual, dense FLOPs, pruned FLOPs).

    Each grid keeps the configured width when it divides ``n_visual``. The
    prune radius is used as given, so a radius that covered the original grid
    becomes a real window on a larger one.
    """
    if not n_visual_values:
        raise ValueError("n_visual_values is empty")
    rows = []
    for nv in n_visual_values:
        dense = flops_dense(config, nv, n_text).grand_total
        pruned = flops_pruned(config, prune, nv, n_text).grand_total
        rows.append((nv, dense, pruned))
    return rows


def calibrate_n_text(lo: int = 1, hi: int = 256) -> tuple[int, dict[str, float]]:
    """Text-token count minimising the worst relative error on both dense totals."""
    best = None
    for nt in range(lo, hi + 1):
        errs = {
            size: flops_dense(llava_config(size, nt)).grand_total / PUBLISHED_FLOPS[(size, "original")] - 1
            for size in ("7b", "13b")
        }
        worst = max(abs(e) for e in errs.values())
        if best is None or worst < best[0]:
            best = (worst, nt, errs)
    return best[1], best[2]

