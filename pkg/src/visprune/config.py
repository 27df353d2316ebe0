"""Architecture and pruning configuration records."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .layout import DistanceMetric, TokenLayout, full_radius


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    d_model: int
    n_heads: int
    d_ffn: int
    layout: TokenLayout
    causal_text: bool = False
    # intersect the visual window with a causal mask
    causal_visual: bool = False
    # apply the activation after W2 as well as after W1
    ffn_outer_activation: bool = True

    def __post_init__(self):
        for name in ("n_layers", "d_model", "n_heads", "d_ffn"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    def with_layout(self, layout: TokenLayout) -> "ModelConfig":
        return replace(self, layout=layout)


@dataclass(frozen=True)
class PruneConfig:
    """The four static pruning knobs.

    ``kept_heads`` is ``None`` (every head, every layer) or one tuple of head
    indices per layer. Layer ``l`` does visual computation iff
    ``l < last_visual_layer`` and ``l`` is outside ``dropped_block``.
    """

    radius: float
    last_visual_layer: int
    metric: DistanceMetric = DistanceMetric.EUCLIDEAN_2D
    kept_heads: tuple[tuple[int, ...], ...] | None = None
    ffn_keep_ratio: float = 1.0
    ffn_neuron_seed: int = 0
    dropped_block: tuple[int, int] | None = None
    flagged_layers: tuple[int, ...] = field(default=(), compare=False)

    def validate(self, config: ModelConfig) -> "PruneConfig":
        L, H = config.n_layers, config.n_heads
        if not self.radius >= 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")
        if not 0 < self.ffn_keep_ratio <= 1:
            raise ValueError(f"ffn_keep_ratio must be in (0, 1], got {self.ffn_keep_ratio}")
        if not 0 <= self.last_visual_layer <= L:
            raise ValueError(f"last_visual_layer must be in [0, {L}], got {self.last_visual_layer}")
        if self.dropped_block is not None:
            start, end = self.dropped_block
            if not 0 <= start < end <= L:
                raise ValueError(f"dropped_block must satisfy 0 <= start < end <= {L}, got {self.dropped_block}")
        if self.kept_heads is not None:
            if len(self.kept_heads) != L:
                raise ValueError(f"kept_heads has {len(self.kept_heads)} layers, model has {L}")
            for layer, heads in enumerate(self.kept_heads):
                if not heads:
                    raise ValueError(f"layer {layer} keeps no heads")
                bad = [h for h in heads if not 0 <= h < H]
                if bad:
                    raise ValueError(f"layer {layer} keeps out-of-range heads {bad}")
                if len(set(heads)) != len(heads):
                    raise ValueError(f"layer {layer} lists a head twice")
        return self

    def heads(self, layer: int, n_heads: int) -> tuple[int, ...]:
        if self.kept_heads is None:
            return tuple(range(n_heads))
        return self.kept_heads[layer]

    def visual_active(self, layer: int) -> bool:
        if layer >= self.last_visual_layer:
            return False
        if self.dropped_block is not None:
            start, end = self.dropped_block
            if start <= layer < end:
                return False
        return True

    def skipped_layers(self, n_layers: int) -> list[int]:
        return [l for l in range(n_layers) if not self.visual_active(l)]

    def windowed(self, layout: TokenLayout) -> bool:
        """False when the radius covers the whole grid (windowing is off)."""
        return self.radius < full_radius(layout, self.metric)
