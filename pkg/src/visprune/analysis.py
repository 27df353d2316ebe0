"""Redundancy diagnostics over captured attention records."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .layout import DistanceMetric, TokenLayout, distance_matrix
from .model import AttentionRecord
from .pruning import HeadActivity


class ActivityMode(str, enum.Enum):
    # attention mass that text queries put on visual vs text keys
    WEIGHT_MASS = "weight_mass"
    # L2 norm of the per-head output for visual vs text rows
    OUTPUT_NORM = "output_norm"


@dataclass
class DistanceProfile:
    n_bins: int
    bin_width: float
    # (layer, query_token) -> [(bin_center, mean_weight), ...] sorted by center
    profiles: dict[tuple[int, int], list[tuple[float, float]]] = field(default_factory=dict)

    def rows(self) -> list[tuple[int, int, float, float]]:
        return [(layer, tok, c, m) for (layer, tok), pts in sorted(self.profiles.items()) for c, m in pts]

    @property
    def query_tokens(self) -> list[int]:
        return sorted({tok for _, tok in self.profiles})


@dataclass
class CrossModalProfile:
    # (n_layers, n_text): mean head-averaged weight each text query puts on visual keys
    values: np.ndarray

    def rows(self) -> list[tuple[int, int, float]]:
        L, T = self.values.shape
        return [(l, t, float(self.values[l, t])) for l in range(L) for t in range(T)]


def select_query_tokens(layout: TokenLayout, n: int, seed: int) -> list[int]:
    if not 0 <= n <= layout.n_visual:
        raise ValueError(f"cannot select {n} of {layout.n_visual} visual tokens")
    rng = np.random.default_rng(seed)
    return sorted(int(t) for t in rng.choice(layout.n_visual, size=n, replace=False))


def bin_width(layout: TokenLayout, n_bins: int) -> float:
    diag = layout.diagonal
    return diag / n_bins if diag > 0 else 1.0


def bin_index(d: np.ndarray | float, width: float, n_bins: int):
    return np.minimum(np.floor(np.asarray(d) / width).astype(int), n_bins - 1)


def distance_profile(
    records: Sequence[AttentionRecord],
    layout: TokenLayout,
    query_tokens: Iterable[int],
    n_bins: int,
) -> DistanceProfile:
    """Head-averaged visual attention of each query, bucketed by grid distance.

    Only heads that actually computed the query row are averaged; layers that
    skipped visual computation contribute nothing. Empty bins are omitted.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    query_tokens = list(query_tokens)
    for t in query_tokens:
        if not 0 <= t < layout.n_visual:
            raise ValueError(f"query token {t} is not a visual token")
    nv = layout.n_visual
    width = bin_width(layout, n_bins)
    dist = distance_matrix(layout, DistanceMetric.EUCLIDEAN_2D)
    bins = bin_index(dist, width, n_bins)
    profile = DistanceProfile(n_bins, width)
    for rec in records:
        for t in query_tokens:
            heads = rec.row_active[:, t]
            if not heads.any():
                continue
            row = rec.weights[heads, t, :nv].astype(np.float64).mean(axis=0)
            sums = np.bincount(bins[t], weights=row, minlength=n_bins)
            counts = np.bincount(bins[t], minlength=n_bins)
            pts = [((b + 0.5) * width, float(sums[b] / counts[b])) for b in range(n_bins) if counts[b]]
            profile.profiles[(rec.layer, t)] = pts
    return profile


def cross_modal_profile(records: Sequence[AttentionRecord], layout: TokenLayout) -> CrossModalProfile:
    nv = layout.n_visual
    values = np.zeros((len(records), layout.n_text))
    if nv == 0:
        return CrossModalProfile(values)
    for i, rec in enumerate(records):
        text_rows = rec.weights[:, nv:, :nv].astype(np.float64)
        values[i] = text_rows.mean(axis=0).mean(axis=1)
    return CrossModalProfile(values)


def _activity_terms(rec: AttentionRecord, nv: int, mode: ActivityMode) -> tuple[np.ndarray, np.ndarray]:
    """Per-head (visual mean, text mean) for one layer of one sample."""
    if mode is ActivityMode.WEIGHT_MASS:
        received = rec.weights[:, nv:, :].astype(np.float64).mean(axis=1)
        vis = received[:, :nv].mean(axis=1) if nv else np.zeros(received.shape[0])
        return vis, received[:, nv:].mean(axis=1)
    norms = np.linalg.norm(rec.head_outputs.astype(np.float64), axis=2)
    vis = norms[:, :nv].mean(axis=1) if nv else np.zeros(norms.shape[0])
    return vis, norms[:, nv:].mean(axis=1)


def head_activity(
    records: Sequence[AttentionRecord] | Sequence[Sequence[AttentionRecord]],
    layout: TokenLayout,
    mode: ActivityMode | str = ActivityMode.WEIGHT_MASS,
) -> HeadActivity:
    """Ratio of a head's mean visual response to its mean text response.

    ``records`` is one forward pass (a list of per-layer records) or several;
    with several passes the visual and text means are averaged over passes
    before taking the ratio.
    """
    mode = ActivityMode(mode)
    samples = [records] if records and isinstance(records[0], AttentionRecord) else list(records)
    if not samples:
        raise ValueError("no records given")
    n_layers = len(samples[0])
    nv = layout.n_visual
    num = den = None
    for sample in samples:
        if len(sample) != n_layers:
            raise ValueError("samples cover different numbers of layers")
        terms = [_activity_terms(rec, nv, mode) for rec in sample]
        v = np.stack([t[0] for t in terms])
        t = np.stack([t[1] for t in terms])
        num = v if num is None else num + v
        den = t if den is None else den + t
    num /= len(samples)
    den /= len(samples)
    zero = np.argwhere(den <= 0)
    if zero.size:
        layer, head = (int(i) for i in zero[0])
        raise ZeroDivisionError(f"text response of layer {layer} head {head} is zero ({mode.value})")
    rho = num / den
    return HeadActivity(rho, mode.value)


def records_are_normalized(records: Sequence[AttentionRecord], tol: float = 1e-6) -> bool:
    for rec in records:
        sums = rec.weights.astype(np.float64).sum(axis=2)
        if not np.all(np.abs(sums[rec.row_active] - 1.0) <= tol):
            return False
        if np.any(sums[~rec.row_active] != 0):
            return False
    return True


def max_mass_beyond(profile: DistanceProfile, radius: float) -> float:
    """Largest mean weight in any bin lying entirely beyond ``radius``."""
    worst = 0.0
    half = profile.bin_width / 2
    for pts in profile.profiles.values():
        for center, mean in pts:
            if center - half > radius and not math.isclose(center - half, radius):
                worst = max(worst, mean)
    return worst
