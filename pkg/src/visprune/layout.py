"""Token layout: a row-major visual grid followed by a text suffix."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class DistanceMetric(str, enum.Enum):
    EUCLIDEAN_2D = "euclidean_2d"
    SEQUENCE_1D = "sequence_1d"


@dataclass(frozen=True)
class TokenLayout:
    grid_width: int
    grid_height: int
    n_text: int

    def __post_init__(self):
        if self.grid_width < 0 or self.grid_height < 0:
            raise ValueError("grid dimensions must be non-negative")
        if (self.grid_width == 0) != (self.grid_height == 0):
            raise ValueError("an empty grid needs both dimensions 0")
        if self.n_text < 1:
            raise ValueError("layout needs at least one text token")

    @property
    def n_visual(self) -> int:
        return self.grid_width * self.grid_height

    @property
    def n_tokens(self) -> int:
        return self.n_visual + self.n_text

    @property
    def visual(self) -> slice:
        return slice(0, self.n_visual)

    @property
    def text(self) -> slice:
        return slice(self.n_visual, self.n_tokens)

    @property
    def diagonal(self) -> float:
        if self.n_visual == 0:
            return 0.0
        return math.hypot(self.grid_width - 1, self.grid_height - 1)

    def coords(self, p: int) -> tuple[int, int]:
        self._check(p)
        return p % self.grid_width, p // self.grid_width

    def coord_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        idx = np.arange(self.n_visual)
        if self.n_visual == 0:
            return idx, idx
        return idx % self.grid_width, idx // self.grid_width

    def _check(self, p: int) -> None:
        if not 0 <= p < self.n_visual:
            raise IndexError(f"visual index {p} outside [0, {self.n_visual})")


def layout_for(n_visual: int, n_text: int, width: int | None = None) -> TokenLayout:
    """Build a grid holding ``n_visual`` tokens.

    Uses ``width`` when it divides ``n_visual``; otherwise the most square
    factorisation with width <= height.
    """
    if n_visual == 0:
        return TokenLayout(0, 0, n_text)
    if width is not None and width > 0 and n_visual % width == 0:
        return TokenLayout(width, n_visual // width, n_text)
    w = math.isqrt(n_visual)
    while n_visual % w:
        w -= 1
    return TokenLayout(w, n_visual // w, n_text)


def full_radius(layout: TokenLayout, metric: DistanceMetric = DistanceMetric.EUCLIDEAN_2D) -> float:
    """Smallest radius whose window covers every visual token."""
    if metric is DistanceMetric.SEQUENCE_1D:
        return float(max(layout.n_visual - 1, 0))
    return layout.diagonal


def distance(layout: TokenLayout, metric: DistanceMetric, i: int, j: int) -> float:
    layout._check(i)
    layout._check(j)
    if metric is DistanceMetric.SEQUENCE_1D:
        return float(abs(i - j))
    xi, yi = layout.coords(i)
    xj, yj = layout.coords(j)
    return math.sqrt((xi - xj) ** 2 + (yi - yj) ** 2)


def distance_matrix(layout: TokenLayout, metric: DistanceMetric = DistanceMetric.EUCLIDEAN_2D) -> np.ndarray:
    if metric is DistanceMetric.SEQUENCE_1D:
        idx = np.arange(layout.n_visual, dtype=np.float64)
        return np.abs(idx[:, None] - idx[None, :])
    x, y = layout.coord_arrays()
    dx = x[:, None] - x[None, :]
    dy = y[:, None] - y[None, :]
    return np.sqrt((dx * dx + dy * dy).astype(np.float64))


def neighbors_within(layout: TokenLayout, metric: DistanceMetric, i: int, radius: float) -> set[int]:
    if radius < 0:
        raise ValueError("radius must be non-negative")
    layout._check(i)
    return {j for j in range(layout.n_visual) if _pair_within(layout, metric, i, j, radius)}


def _pair_within(layout, metric, i, j, radius) -> bool:
    if metric is DistanceMetric.SEQUENCE_1D:
        return abs(i - j) <= radius
    xi, yi = layout.coords(i)
    xj, yj = layout.coords(j)
    return (xi - xj) ** 2 + (yi - yj) ** 2 <= radius * radius


def neighbor_matrix(layout: TokenLayout, metric: DistanceMetric, radius: float, causal: bool = False) -> np.ndarray:
    """Boolean (Nv, Nv) matrix: query i may attend visual key j."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if metric is DistanceMetric.SEQUENCE_1D:
        idx = np.arange(layout.n_visual)
        allowed = np.abs(idx[:, None] - idx[None, :]) <= radius
    else:
        x, y = layout.coord_arrays()
        dx = x[:, None] - x[None, :]
        dy = y[:, None] - y[None, :]
        allowed = dx * dx + dy * dy <= radius * radius
    if causal:
        allowed &= np.tri(layout.n_visual, dtype=bool)
    return allowed


@lru_cache(maxsize=4096)
def window_pair_count(layout: TokenLayout, metric: DistanceMetric, radius: float, causal: bool = False) -> int:
    """Number of (query, key) visual pairs inside the window, counted exactly.

    Sums over offsets instead of pairs so large grids stay cheap.
    """
    n, w, h = layout.n_visual, layout.grid_width, layout.grid_height
    if n == 0:
        return 0
    total = 0
    if metric is DistanceMetric.SEQUENCE_1D:
        reach = min(int(math.floor(radius)), n - 1)
        for k in range(-reach, reach + 1):
            if causal and k > 0:
                continue
            total += n - abs(k)
        return total
    ry = min(int(math.floor(radius)), h - 1)
    for dy in range(-ry, ry + 1):
        rem = radius * radius - dy * dy
        rx = min(int(math.floor(math.sqrt(rem))), w - 1)
        # guard the float sqrt at perfect squares
        while (rx + 1) <= w - 1 and (rx + 1) ** 2 <= rem:
            rx += 1
        while rx >= 0 and rx * rx > rem:
            rx -= 1
        for dx in range(-rx, rx + 1):
            # key = query + dy*w + dx; causal keeps keys at or before the query
            if causal and (dy > 0 or (dy == 0 and dx > 0)):
                continue
            total += (w - abs(dx)) * (h - abs(dy))
    return total
