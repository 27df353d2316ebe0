"""Reproduce the LLaVA-1.5 FLOPs table with the analytical cost model.

Usage: python3 scripts/flops_table.py [--calibrate]
"""

import argparse

from visprune.flops import (
    CALIBRATED_N_TEXT, PUBLISHED_FLOPS, calibrate_n_text, flops_dense, flops_pruned, llava_config,
    published_prune,
)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--calibrate", action="store_true", help="re-run the text-token search")
    args = p.parse_args()

    n_text = CALIBRATED_N_TEXT
    if args.calibrate:
        n_text, errs = calibrate_n_text()
        print(f"calibrated n_text={n_text}: " + ", ".join(f"{k} {v:+.2%}" for k, v in errs.items()))

    print(f"{'model':<6} {'variant':<9} {'modeled':>10} {'published':>10} {'rel err':>8}")
    for size in ("7b", "13b"):
        cfg = llava_config(size, n_text)
        for variant in ("original", "ours_a", "ours_b"):
            if variant == "original":
                total = flops_dense(cfg).grand_total
            else:
                total = flops_pruned(cfg, published_prune(cfg, size, variant)).grand_total
            ref = PUBLISHED_FLOPS[(size, variant)]
            print(f"{size:<6} {variant:<9} {total / 1e12:>9.3f}T {ref / 1e12:>9.2f}T {total / ref - 1:>+8.1%}")


if __name__ == "__main__":
    main()
