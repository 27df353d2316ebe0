"""Builders for PruneConfig: head selection, neuron subsets, layer drops, budget search."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .config import ModelConfig, PruneConfig
from .layout import DistanceMetric, full_radius


@dataclass(frozen=True)
class HeadActivity:
    """Per-layer, per-head activity ratio; shape (n_layers, n_heads)."""

    rho: np.ndarray
    mode: str = "weight_mass"

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=np.float64)
        if rho.ndim != 2:
            raise ValueError("rho must be (n_layers, n_heads)")
        if not np.all(np.isfinite(rho)) or np.any(rho < 0):
            raise ValueError("rho values must be finite and non-negative")
        object.__setattr__(self, "rho", rho)


def no_prune(config: ModelConfig, metric: DistanceMetric = DistanceMetric.EUCLIDEAN_2D) -> PruneConfig:
    return PruneConfig(
        radius=full_radius(config.layout, metric),
        last_visual_layer=config.n_layers,
        metric=metric,
    )


def is_no_prune(prune: PruneConfig, config: ModelConfig) -> bool:
    L, H = config.n_layers, config.n_heads
    return (
        not prune.windowed(config.layout)
        and all(len(prune.heads(l, H)) == H for l in range(L))
        and kept_neuron_count(config.d_ffn, prune.ffn_keep_ratio) == config.d_ffn
        and not prune.skipped_layers(L)
    )


def heads_by_threshold(activity: HeadActivity, alpha: float) -> tuple[tuple[tuple[int, ...], ...], list[int]]:
    """Keep heads with rho >= alpha.

    A layer where every head falls below ``alpha`` keeps its single most
    active head and is reported in the returned flag list.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    kept, flagged = [], []
    for layer, rho in enumerate(activity.rho):
        heads = tuple(int(h) for h in np.flatnonzero(rho >= alpha))
        if not heads:
            heads = (int(np.argmax(rho)),)
            flagged.append(layer)
        kept.append(heads)
    return tuple(kept), flagged


def heads_by_count(activity: HeadActivity, k: int) -> tuple[tuple[int, ...], ...]:
    n_heads = activity.rho.shape[1]
    if not 1 <= k <= n_heads:
        raise ValueError(f"k must be in [1, {n_heads}], got {k}")
    kept = []
    for rho in activity.rho:
        # stable sort on -rho breaks ties by lower head index
        order = np.argsort(-rho, kind="stable")[:k]
        kept.append(tuple(sorted(int(h) for h in order)))
    return tuple(kept)


def first_heads(config: ModelConfig, k: int) -> tuple[tuple[int, ...], ...]:
    if not 1 <= k <= config.n_heads:
        raise ValueError(f"k must be in [1, {config.n_heads}], got {k}")
    return tuple(tuple(range(k)) for _ in range(config.n_layers))


def kept_neuron_count(d_ffn: int, keep_ratio: float) -> int:
    return max(1, min(d_ffn, int(math.floor(keep_ratio * d_ffn + 0.5))))


def ffn_neuron_subset(d_ffn: int, keep_ratio: float, seed: int) -> np.ndarray:
    """Sorted indices of the FFN hidden neurons kept for visual rows."""
    if not 0 < keep_ratio <= 1:
        raise ValueError(f"keep_ratio must be in (0, 1], got {keep_ratio}")
    n_keep = kept_neuron_count(d_ffn, keep_ratio)
    if n_keep == d_ffn:
        return np.arange(d_ffn)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(d_ffn, size=n_keep, replace=False))


def layer_neuron_subsets(config: ModelConfig, prune: PruneConfig) -> list[np.ndarray]:
    seeds = np.random.SeedSequence(prune.ffn_neuron_seed).generate_state(config.n_layers)
    return [ffn_neuron_subset(config.d_ffn, prune.ffn_keep_ratio, int(s)) for s in seeds]


def suffix_drop(config: ModelConfig, n_last: int, base: PruneConfig | None = None) -> PruneConfig:
    if not 0 <= n_last <= config.n_layers:
        raise ValueError(f"n_last must be in [0, {config.n_layers}], got {n_last}")
    base = base if base is not None else no_prune(config)
    return replace(base, last_visual_layer=config.n_layers - n_last).validate(config)


def block_drop(config: ModelConfig, start: int, end: int, base: PruneConfig | None = None) -> PruneConfig:
    if not 0 <= start < end <= config.n_layers:
        raise ValueError(f"block must satisfy 0 <= start < end <= {config.n_layers}, got ({start}, {end})")
    base = base if base is not None else no_prune(config)
    return replace(base, dropped_block=(start, end)).validate(config)


@dataclass(frozen=True)
class SearchSpace:
    radii: Sequence[float]
    head_counts: Sequence[int]
    suffix_drops: Sequence[int]
    keep_ratios: Sequence[float]
    metric: DistanceMetric = DistanceMetric.EUCLIDEAN_2D

    def points(self):
        return itertools.product(self.radii, self.head_counts, self.suffix_drops, self.keep_ratios)

    def size(self) -> int:
        return len(self.radii) * len(self.head_counts) * len(self.suffix_drops) * len(self.keep_ratios)


@dataclass(frozen=True)
class Candidate:
    flops: int
    radius: float
    n_heads: int
    n_last: int
    keep_ratio: float
    prune: PruneConfig

    @property
    def knobs(self) -> tuple:
        return (self.radius, self.n_heads, self.n_last, self.keep_ratio)


def solve_budget(
    config: ModelConfig,
    target_flops: float,
    space: SearchSpace,
    n_text: int | None = None,
    activity: HeadActivity | None = None,
    workers: int = 1,
) -> list[Candidate]:
    """Every grid point whose pruned FLOPs fit under ``target_flops``.

    Head sets come from ``activity`` when given, otherwise the lowest-indexed
    heads (FLOPs only depend on the count). Results are sorted by FLOPs, ties
    broken by the knob tuple.
    """
    from .flops import flops_pruned

    if space.size() == 0:
        raise ValueError("search space is empty")
    n_visual = config.layout.n_visual
    n_text = config.layout.n_text if n_text is None else n_text

    def evaluate(point):
        radius, k, n_last, keep = point
        heads = heads_by_count(activity, k) if activity is not None else first_heads(config, k)
        prune = PruneConfig(
            radius=float(radius),
            last_visual_layer=config.n_layers - n_last,
            metric=space.metric,
            kept_heads=heads,
            ffn_keep_ratio=float(keep),
        ).validate(config)
        total = flops_pruned(config, prune, n_visual, n_text).grand_total
        return Candidate(total, float(radius), k, n_last, float(keep), prune)

    points = list(space.points())
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, points))
    else:
        results = [evaluate(p) for p in points]
    feasible = [c for c in results if c.flops <= target_flops]
    feasible.sort(key=lambda c: (c.flops, c.knobs))
    return feasible
