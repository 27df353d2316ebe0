"""Command-line entry point: forward, analyze, flops, sweep, solve."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis
from .flops import flops_dense, flops_pruned, scaling_sweep
from .kernels import dtype_for
from .model import forward, init_weights, random_input
from .pruning import heads_by_count, heads_by_threshold, no_prune, solve_budget
from .runconfig import ConfigError, RunConfig, load

log = logging.getLogger("visprune")

# activity-based head selection runs a real forward pass; keep it to toy sizes
MAX_ACTIVITY_D_MODEL = 1024


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_all(out_dir: Path, files: dict[str, str]) -> None:
    """Write every artifact only after all of them were produced."""
    for name, text in files.items():
        write_atomic(out_dir / name, text)
        log.info("wrote %s", out_dir / name)


def distance_profile_csv(profile: analysis.DistanceProfile) -> str:
    return _csv_text(("layer", "query_token", "bin_center", "mean_weight"), profile.rows())


def cross_modal_csv(profile: analysis.CrossModalProfile) -> str:
    return _csv_text(("layer", "text_token", "mean_weight"), profile.rows())


def head_activity_csv(activity) -> str:
    L, H = activity.rho.shape
    rows = [(l, h, float(activity.rho[l, h]), activity.mode) for l in range(L) for h in range(H)]
    return _csv_text(("layer", "head", "rho", "mode"), rows)


def flops_csv(report) -> str:
    return _csv_text(("layer", "term", "count"), report.rows())


def sweep_csv(rows) -> str:
    return _csv_text(("n_visual", "dense", "pruned"), rows)


def _resolve_prune(rc: RunConfig):
    """Fill in activity-selected heads; returns (prune, flagged_layers)."""
    if rc.head_rule is None:
        return rc.prune, []
    if rc.model.d_model > MAX_ACTIVITY_D_MODEL:
        raise ConfigError("activity-based head selection needs a toy model (d_model <= 1024)")
    weights = init_weights(rc.model, rc.seed)
    x = random_input(rc.model, rc.seed)
    records = forward(rc.model, weights, x, no_prune(rc.model, rc.prune.metric), capture=True).attention_records
    activity = analysis.head_activity(records, rc.model.layout, rc.head_rule.mode)
    if rc.head_rule.count is not None:
        kept, flagged = heads_by_count(activity, rc.head_rule.count), []
    else:
        kept, flagged = heads_by_threshold(activity, rc.head_rule.alpha)
    for layer in flagged:
        log.warning("layer %d: every head below alpha, keeping the most active one", layer)
    return replace(rc.prune, kept_heads=kept, flagged_layers=tuple(flagged)).validate(rc.model), flagged


def _run_forward(rc: RunConfig, prune, capture: bool):
    dtype = dtype_for(rc.precision)
    weights = init_weights(rc.model, rc.seed).astype(dtype)
    x = random_input(rc.model, rc.seed, dtype)
    return forward(rc.model, weights, x, prune, capture=capture)


def cmd_forward(rc: RunConfig, args) -> int:
    prune, _ = _resolve_prune(rc)
    out = _run_forward(rc, prune, rc.capture)
    lay = rc.model.layout
    hidden = out.hidden.astype(np.float64)
    rows = [
        (t, "visual" if t < lay.n_visual else "text", float(np.linalg.norm(hidden[t])), float(hidden[t].mean()))
        for t in range(lay.n_tokens)
    ]
    files = {"hidden_summary.csv": _csv_text(("token", "kind", "l2_norm", "mean"), rows)}
    if rc.capture:
        att_rows = []
        for rec in out.attention_records:
            h, q, k = np.nonzero(rec.weights)
            att_rows += [(rec.layer, a, b, c, float(rec.weights[a, b, c])) for a, b, c in zip(h, q, k)]
        files["attention.csv"] = _csv_text(("layer", "head", "query", "key", "weight"), att_rows)
        tokens = analysis.select_query_tokens(lay, rc.n_tokens, rc.token_seed)
        profile = analysis.distance_profile(out.attention_records, lay, tokens, rc.n_bins)
        files["distance_profile.csv"] = distance_profile_csv(profile)
    write_all(rc.output_dir, files)
    return 0


def cmd_analyze(rc: RunConfig, args) -> int:
    prune, _ = _resolve_prune(rc)
    lay = rc.model.layout
    n_tokens = args.tokens if args.tokens is not None else rc.n_tokens
    if not 0 <= n_tokens <= lay.n_visual:
        raise ConfigError(f"--tokens must be in [0, {lay.n_visual}]")
    modes = tuple(args.mode) if args.mode else rc.modes
    records = _run_forward(rc, prune, True).attention_records
    tokens = analysis.select_query_tokens(lay, n_tokens, rc.token_seed)
    files = {
        "distance_profile.csv": distance_profile_csv(analysis.distance_profile(records, lay, tokens, rc.n_bins)),
        "cross_modal.csv": cross_modal_csv(analysis.cross_modal_profile(records, lay)),
    }
    for mode in modes:
        files[f"head_activity_{mode}.csv"] = head_activity_csv(analysis.head_activity(records, lay, mode))
    write_all(rc.output_dir, files)
    return 0


def cmd_flops(rc: RunConfig, args) -> int:
    prune, _ = _resolve_prune(rc)
    nv, nt = rc.flops_n_visual, rc.flops_n_text
    report = flops_pruned(rc.model, prune, nv, nt, accounting=rc.accounting)
    dense = flops_dense(rc.model, nv, nt).grand_total
    table = report.text_table() + f"dense total: {dense:.4e} FLOPs; pruned/dense = {report.grand_total / dense:.4f}\n"
    files = {"flops.csv": flops_csv(report), "flops.txt": table}
    write_all(rc.output_dir, files)
    sys.stdout.write(table)
    return 0


def cmd_sweep(rc: RunConfig, args) -> int:
    prune, _ = _resolve_prune(rc)
    nv_list = args.nv if args.nv is not None else rc.sweep_n_visual
    if not nv_list:
        raise ConfigError("sweep needs --nv or sweep.n_visual")
    rows = scaling_sweep(rc.model, prune, nv_list, rc.flops_n_text)
    text = sweep_csv(rows)
    write_all(rc.output_dir, {"sweep.csv": text})
    sys.stdout.write(text)
    return 0


def cmd_solve(rc: RunConfig, args) -> int:
    if rc.search is None:
        raise ConfigError("solve needs a [solve] section")
    target = args.target_flops if args.target_flops is not None else rc.target_flops
    if target is None:
        raise ConfigError("solve needs --target-flops or solve.target_flops")
    found = solve_budget(rc.model, target, rc.search, n_text=rc.flops_n_text, workers=args.workers)
    rows = [(c.flops, c.radius, c.n_heads, c.n_last, c.keep_ratio) for c in found]
    text = _csv_text(("flops", "radius", "heads_kept", "last_layers_dropped", "ffn_keep_ratio"), rows)
    write_all(rc.output_dir, {"solve.csv": text})
    if not found:
        print("no feasible configuration")
    else:
        for c in found:
            print(f"{c.flops:.4e}  radius={c.radius:g} heads={c.n_heads} "
                  f"last_dropped={c.n_last} keep={c.keep_ratio:g}")
    return 0


COMMANDS = {
    "forward": cmd_forward,
    "analyze": cmd_analyze,
    "flops": cmd_flops,
    "sweep": cmd_sweep,
    "solve": cmd_solve,
}


def _comma_ints(text: str) -> list[int]:
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma list of integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="visprune", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, type=Path)
        s.add_argument("--out", type=Path, help="output directory (overrides run.output_dir)")
        s.add_argument("--precision", choices=("single", "double"))
        s.add_argument("--seed", type=int)
        s.add_argument("--workers", type=int, default=1)
        if name == "analyze":
            s.add_argument("--tokens", type=int, help="number of seeded visual query tokens")
            s.add_argument("--mode", action="append", choices=("weight_mass", "output_norm"))
        if name == "sweep":
            s.add_argument("--nv", type=_comma_ints, help="comma list of visual token counts")
        if name == "solve":
            s.add_argument("--target-flops", type=float)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        rc = load(args.config)
        if args.out is not None:
            rc.output_dir = args.out
        if args.precision is not None:
            rc.precision = args.precision
        if args.seed is not None:
            rc.seed = args.seed
        return COMMANDS[args.command](rc, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
