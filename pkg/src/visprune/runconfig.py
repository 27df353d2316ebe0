"""YAML run configuration: parsing, key checking, and conversion to configs.

Errors carry the file name and 1-based line of the offending key.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .config import ModelConfig, PruneConfig
from .flops import CALIBRATED_N_TEXT, llava_config
from .layout import DistanceMetric, TokenLayout, full_radius
from .pruning import SearchSpace, first_heads

SECTIONS = {
    "model": {
        "preset", "n_layers", "d_model", "n_heads", "d_ffn", "grid_width", "grid_height", "n_text",
        "causal_text", "causal_visual", "ffn_outer_activation",
    },
    "prune": {
        "metric", "radius", "kept_heads", "heads_per_layer", "head_alpha", "head_activity_mode",
        "ffn_keep_ratio", "ffn_neuron_seed", "last_visual_layer", "n_last_dropped", "dropped_block",
    },
    "run": {"seed", "precision", "output_dir", "capture"},
    "analysis": {"n_tokens", "token_seed", "n_bins", "modes"},
    "flops": {"n_visual", "n_text", "accounting"},
    "sweep": {"n_visual"},
    "solve": {"target_flops", "radii", "head_counts", "suffix_drops", "keep_ratios"},
}


class ConfigError(Exception):
    pass


@dataclass
class HeadRule:
    """How kept heads are chosen when they depend on measured activity."""

    count: int | None = None
    alpha: float | None = None
    mode: str = "weight_mass"


@dataclass
class RunConfig:
    model: ModelConfig
    prune: PruneConfig
    head_rule: HeadRule | None = None
    seed: int = 0
    precision: str = "double"
    output_dir: Path = Path("out")
    capture: bool = False
    n_tokens: int = 10
    token_seed: int = 0
    n_bins: int = 8
    modes: tuple[str, ...] = ("weight_mass", "output_norm")
    flops_n_visual: int | None = None
    flops_n_text: int | None = None
    accounting: str = "modeled"
    sweep_n_visual: list[int] = field(default_factory=list)
    target_flops: float | None = None
    search: SearchSpace | None = None


class _Located:
    """Raw mapping plus key line numbers for error messages."""

    def __init__(self, source: str, data: dict, lines: dict):
        self.source = source
        self.data = data
        self.lines = lines

    def where(self, *path) -> str:
        line = self.lines.get(path)
        return f"{self.source}:{line}" if line else self.source

    def fail(self, path: tuple, msg: str):
        raise ConfigError(f"{self.where(*path)}: {'.'.join(path)}: {msg}")


def _key_lines(node, prefix=()) -> dict:
    lines = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (str(k.value),)
            lines[path] = k.start_mark.line + 1
            lines.update(_key_lines(v, path))
    return lines


def load_text(text: str, source: str = "<config>") -> RunConfig:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: invalid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping of sections")
    loc = _Located(source, data, _key_lines(node) if node is not None else {})

    for section, body in data.items():
        if section not in SECTIONS:
            loc.fail((section,), f"unknown section (expected one of {sorted(SECTIONS)})")
        if body is None:
            continue
        if not isinstance(body, dict):
            loc.fail((section,), "section must be a mapping")
        for key in body:
            if key not in SECTIONS[section]:
                loc.fail((section, str(key)), f"unknown key in section '{section}'")
    return _build(loc)


def load(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from None
    return load_text(text, str(path))


def _section(loc: _Located, name: str) -> dict:
    return loc.data.get(name) or {}


def _get(loc, section, key, kind, default=None):
    body = _section(loc, section)
    if key not in body:
        return default
    value = body[key]
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError("expected true/false")
            return value
        if kind is int:
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError("expected an integer")
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise TypeError("expected a number")
            return float(value)
        return kind(value)
    except (TypeError, ValueError) as exc:
        loc.fail((section, key), f"bad value {value!r}: {exc}")


def _int_list(loc, section, key, default=None):
    body = _section(loc, section)
    if key not in body:
        return default
    value = body[key]
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    if not isinstance(value, list):
        loc.fail((section, key), "expected a list")
    try:
        return [int(v) for v in value]
    except (TypeError, ValueError):
        loc.fail((section, key), f"expected integers, got {value!r}")


def _float_list(loc, section, key):
    body = _section(loc, section)
    value = body.get(key)
    if not isinstance(value, list) or not value:
        loc.fail((section, key), "expected a non-empty list")
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        loc.fail((section, key), f"expected numbers, got {value!r}")


def _model(loc: _Located) -> ModelConfig:
    preset = _get(loc, "model", "preset", str)
    try:
        if preset is not None:
            if preset not in ("llava-7b", "llava-13b"):
                loc.fail(("model", "preset"), "expected llava-7b or llava-13b")
            n_text = _get(loc, "model", "n_text", int, CALIBRATED_N_TEXT)
            base = llava_config(preset.split("-")[1], n_text)
            extra = {k for k in _section(loc, "model") if k not in ("preset", "n_text")}
            if extra:
                key = sorted(extra)[0]
                loc.fail(("model", key), "cannot be combined with a preset")
            return base
        required = ("n_layers", "d_model", "n_heads", "d_ffn", "grid_width", "grid_height", "n_text")
        for key in required:
            if key not in _section(loc, "model"):
                raise ConfigError(f"{loc.where('model')}: model.{key}: required")
        layout = TokenLayout(
            _get(loc, "model", "grid_width", int),
            _get(loc, "model", "grid_height", int),
            _get(loc, "model", "n_text", int),
        )
        return ModelConfig(
            n_layers=_get(loc, "model", "n_layers", int),
            d_model=_get(loc, "model", "d_model", int),
            n_heads=_get(loc, "model", "n_heads", int),
            d_ffn=_get(loc, "model", "d_ffn", int),
            layout=layout,
            causal_text=_get(loc, "model", "causal_text", bool, False),
            causal_visual=_get(loc, "model", "causal_visual", bool, False),
            ffn_outer_activation=_get(loc, "model", "ffn_outer_activation", bool, True),
        )
    except ValueError as exc:
        raise ConfigError(f"{loc.where('model')}: model: {exc}") from None


def _prune(loc: _Located, model: ModelConfig) -> tuple[PruneConfig, HeadRule | None]:
    body = _section(loc, "prune")
    try:
        metric = DistanceMetric(body.get("metric", DistanceMetric.EUCLIDEAN_2D.value))
    except ValueError:
        loc.fail(("prune", "metric"), f"expected one of {[m.value for m in DistanceMetric]}")
    raw_radius = body.get("radius", "full")
    radius = full_radius(model.layout, metric) if raw_radius == "full" else _get(loc, "prune", "radius", float)

    L = model.n_layers
    if "last_visual_layer" in body and "n_last_dropped" in body:
        loc.fail(("prune", "n_last_dropped"), "give either last_visual_layer or n_last_dropped, not both")
    if "n_last_dropped" in body:
        last = L - _get(loc, "prune", "n_last_dropped", int)
    else:
        last = _get(loc, "prune", "last_visual_layer", int, L)

    block = _int_list(loc, "prune", "dropped_block")
    if block is not None and len(block) != 2:
        loc.fail(("prune", "dropped_block"), "expected [start, end]")

    head_keys = [k for k in ("kept_heads", "heads_per_layer", "head_alpha") if k in body]
    if len(head_keys) > 1:
        loc.fail(("prune", head_keys[1]), f"conflicts with {head_keys[0]}")
    kept, rule = None, None
    if "kept_heads" in body:
        raw = body["kept_heads"]
        if not isinstance(raw, list) or not all(isinstance(r, list) for r in raw):
            loc.fail(("prune", "kept_heads"), "expected one list of head indices per layer")
        try:
            kept = tuple(tuple(int(h) for h in row) for row in raw)
        except (TypeError, ValueError):
            loc.fail(("prune", "kept_heads"), f"head indices must be integers, got {raw!r}")
    mode = _get(loc, "prune", "head_activity_mode", str)
    if mode is not None and mode not in ("weight_mass", "output_norm"):
        loc.fail(("prune", "head_activity_mode"), "expected weight_mass or output_norm")
    if "heads_per_layer" in body:
        k = _get(loc, "prune", "heads_per_layer", int)
        if mode is None:
            try:
                kept = first_heads(model, k)
            except ValueError as exc:
                loc.fail(("prune", "heads_per_layer"), str(exc))
        else:
            rule = HeadRule(count=k, mode=mode)
    if "head_alpha" in body:
        rule = HeadRule(alpha=_get(loc, "prune", "head_alpha", float), mode=mode or "weight_mass")

    prune = PruneConfig(
        radius=radius,
        last_visual_layer=last,
        metric=metric,
        kept_heads=kept,
        ffn_keep_ratio=_get(loc, "prune", "ffn_keep_ratio", float, 1.0),
        ffn_neuron_seed=_get(loc, "prune", "ffn_neuron_seed", int, 0),
        dropped_block=tuple(block) if block is not None else None,
    )
    try:
        prune.validate(model)
    except ValueError as exc:
        raise ConfigError(f"{loc.where('prune')}: prune: {exc}") from None
    if rule is not None and rule.count is not None and not 1 <= rule.count <= model.n_heads:
        loc.fail(("prune", "heads_per_layer"), f"must be in [1, {model.n_heads}]")
    return prune, rule


def _build(loc: _Located) -> RunConfig:
    model = _model(loc)
    prune, rule = _prune(loc, model)
    rc = RunConfig(model=model, prune=prune, head_rule=rule)

    rc.seed = _get(loc, "run", "seed", int, 0)
    rc.precision = _get(loc, "run", "precision", str, "double")
    if rc.precision not in ("single", "double"):
        loc.fail(("run", "precision"), "expected single or double")
    rc.output_dir = Path(_get(loc, "run", "output_dir", str, "out"))
    rc.capture = _get(loc, "run", "capture", bool, False)

    rc.n_tokens = _get(loc, "analysis", "n_tokens", int, min(10, model.layout.n_visual))
    if not 0 <= rc.n_tokens <= model.layout.n_visual:
        loc.fail(("analysis", "n_tokens"), f"must be in [0, {model.layout.n_visual}]")
    rc.token_seed = _get(loc, "analysis", "token_seed", int, 0)
    rc.n_bins = _get(loc, "analysis", "n_bins", int, 8)
    if rc.n_bins < 1:
        loc.fail(("analysis", "n_bins"), "must be >= 1")
    modes = _section(loc, "analysis").get("modes", list(rc.modes))
    if isinstance(modes, str):
        modes = [modes]
    if not modes or any(m not in ("weight_mass", "output_norm") for m in modes):
        loc.fail(("analysis", "modes"), "expected a list drawn from weight_mass, output_norm")
    rc.modes = tuple(modes)

    rc.flops_n_visual = _get(loc, "flops", "n_visual", int)
    rc.flops_n_text = _get(loc, "flops", "n_text", int)
    rc.accounting = _get(loc, "flops", "accounting", str, "modeled")
    if rc.accounting not in ("modeled", "dense-fallback"):
        loc.fail(("flops", "accounting"), "expected modeled or dense-fallback")

    rc.sweep_n_visual = _int_list(loc, "sweep", "n_visual", [])

    if _section(loc, "solve"):
        rc.target_flops = _get(loc, "solve", "target_flops", float)
        rc.search = SearchSpace(
            radii=_float_list(loc, "solve", "radii"),
            head_counts=[int(v) for v in _float_list(loc, "solve", "head_counts")],
            suffix_drops=[int(v) for v in _float_list(loc, "solve", "suffix_drops")],
            keep_ratios=_float_list(loc, "solve", "keep_ratios"),
            metric=prune.metric,
        )
        H, L = model.n_heads, model.n_layers
        if any(not 1 <= k <= H for k in rc.search.head_counts):
            loc.fail(("solve", "head_counts"), f"values must be in [1, {H}]")
        if any(not 0 <= n <= L for n in rc.search.suffix_drops):
            loc.fail(("solve", "suffix_drops"), f"values must be in [0, {L}]")
        if any(not 0 < k <= 1 for k in rc.search.keep_ratios):
            loc.fail(("solve", "keep_ratios"), "values must be in (0, 1]")
        if any(r < 0 for r in rc.search.radii):
            loc.fail(("solve", "radii"), "values must be >= 0")
    return rc
