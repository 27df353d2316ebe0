"""Redundancy diagnostics on a random toy model.

Prints how attention mass falls off with grid distance, how much text
queries look at visual keys per layer, and the head activity ratio in both
modes. Everything runs unpruned so the redundancy is measured, not imposed.

Usage: python3 scripts/redundancy.py [--seed N] [--grid W] [--layers L]
"""

import argparse

import numpy as np

from visprune.analysis import cross_modal_profile, distance_profile, head_activity, select_query_tokens
from visprune.config import ModelConfig
from visprune.layout import TokenLayout
from visprune.model import forward, init_weights, random_input
from visprune.pruning import no_prune


def main():
    p = argparse.ArgumentParser(description="redundancy diagnostics")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int, default=8)
    p.add_argument("--layers", type=int, default=6)
    p.add_argument("--bins", type=int, default=6)
    args = p.parse_args()

    cfg = ModelConfig(n_layers=args.layers, d_model=64, n_heads=8, d_ffn=128,
                      layout=TokenLayout(args.grid, args.grid, 16), causal_text=True)
    weights = init_weights(cfg, args.seed)
    x = random_input(cfg, args.seed)
    records = forward(cfg, weights, x, no_prune(cfg), capture=True).attention_records

    tokens = select_query_tokens(cfg.layout, 10, args.seed)
    prof = distance_profile(records, cfg.layout, tokens, args.bins)
    print("mean attention by grid distance (averaged over query tokens)")
    for layer in range(cfg.n_layers):
        by_bin = {}
        for (l, _), pts in prof.profiles.items():
            if l == layer:
                for center, mean in pts:
                    by_bin.setdefault(center, []).append(mean)
        cells = "  ".join(f"{c:4.1f}:{np.mean(v):.4f}" for c, v in sorted(by_bin.items()))
        print(f"  layer {layer}: {cells}")

    cross = cross_modal_profile(records, cfg.layout).values
    print("text-to-visual mean weight per layer (uniform would be 1/N =", f"{1 / cfg.layout.n_tokens:.4f})")
    for layer, row in enumerate(cross):
        print(f"  layer {layer}: {row.mean():.4f}")

    for mode in ("weight_mass", "output_norm"):
        rho = head_activity(records, cfg.layout, mode).rho
        print(f"head activity rho ({mode}), rows are layers")
        for layer, row in enumerate(rho):
            print(f"  layer {layer}: " + " ".join(f"{v:5.2f}" for v in row))


if __name__ == "__main__":
    main()
