import random

import numpy as np
import pytest

from visprune.config import ModelConfig, PruneConfig
from visprune.layout import DistanceMetric, TokenLayout, full_radius
from visprune.model import init_weights, random_input


def random_model(rng: random.Random, allow_empty_grid=True) -> ModelConfig:
    if allow_empty_grid and rng.random() < 0.08:
        w = h = 0
    else:
        w, h = rng.randint(1, 4), rng.randint(1, 4)
    H = rng.randint(1, 4)
    return ModelConfig(
        n_layers=rng.randint(1, 3),
        d_model=H * rng.randint(2, 4),
        n_heads=H,
        d_ffn=rng.randint(4, 12),
        layout=TokenLayout(w, h, rng.randint(1, 8)),
        causal_text=rng.random() < 0.5,
        causal_visual=rng.random() < 0.3,
        ffn_outer_activation=rng.random() < 0.7,
    )


def random_prune(rng: random.Random, config: ModelConfig) -> PruneConfig:
    L, H = config.n_layers, config.n_heads
    metric = rng.choice(list(DistanceMetric))
    radius = rng.choice([0.0, 1.0, 1.5, 2.0, 3.0, full_radius(config.layout, metric)])
    kept = None
    if rng.random() < 0.7:
        kept = tuple(tuple(sorted(rng.sample(range(H), rng.randint(1, H)))) for _ in range(L))
    block = None
    if rng.random() < 0.4:
        start = rng.randrange(L)
        block = (start, rng.randint(start + 1, L))
    return PruneConfig(
        radius=radius,
        last_visual_layer=rng.randint(0, L),
        metric=metric,
        kept_heads=kept,
        ffn_keep_ratio=rng.choice([0.25, 0.5, 0.75, 1.0]),
        ffn_neuron_seed=rng.randrange(1000),
        dropped_block=block,
    ).validate(config)


def random_instance(seed: int, allow_empty_grid=True):
    rng = random.Random(seed)
    config = random_model(rng, allow_empty_grid)
    prune = random_prune(rng, config)
    weights = init_weights(config, seed)
    x = random_input(config, seed + 1)
    return config, weights, x, prune


@pytest.fixture
def small_config():
    return ModelConfig(n_layers=2, d_model=8, n_heads=2, d_ffn=12, layout=TokenLayout(3, 3, 3), causal_text=True)


@pytest.fixture
def np_rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_results", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
