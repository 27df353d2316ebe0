"""FLOPs versus visual token count for dense and pruned LLaVA-style models.

Writes CSV to stdout: n_visual, dense, pruned, pruned/dense.

Usage: python3 scripts/scaling_sweep.py [--size 7b|13b] [--radius R] [--nv 576,1024,...]
"""

import argparse
import csv
import sys
from dataclasses import replace

from visprune.flops import llava_config, published_prune, scaling_sweep


def main():
    p = argparse.ArgumentParser(description="FLOPs scaling sweep")
    p.add_argument("--size", choices=("7b", "13b"), default="7b")
    p.add_argument("--variant", choices=("ours_a", "ours_b"), default="ours_a")
    p.add_argument("--radius", type=float, help="override the published radius")
    p.add_argument("--nv", default="576,1152,2304,4608,9216")
    args = p.parse_args()

    cfg = llava_config(args.size)
    prune = published_prune(cfg, args.size, args.variant)
    if args.radius is not None:
        prune = replace(prune, radius=args.radius)
    nvs = [int(v) for v in args.nv.split(",")]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("n_visual", "dense", "pruned", "ratio"))
    for nv, dense, pruned in scaling_sweep(cfg, prune, nvs):
        w.writerow((nv, dense, pruned, f"{pruned / dense:.4f}"))


if __name__ == "__main__":
    main()
