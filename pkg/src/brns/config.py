"""Experiment configuration: a versioned YAML schema with line-precise errors.

Every paper hyperparameter is surfaced with its default (mu = lambda = 100,
archive cap 10000, growth 6, k = 15, lr 1e-2, warmup 15 epochs, 5 training
steps, 6x6 grid). Unknown keys are rejected so typos cannot silently fall
back to a default.
"""
from __future__ import annotations

import copy
from pathlib import Path

import yaml

from .evolution import EvolutionConfig
from .maze import MazeEnv, load_maze
from .novelty_archive import ArchiveNovelty
from .novelty_brns import BRNSNovelty

CONFIG_VERSION = 1


def _estimator_defaults(cls):
    params = cls().get_params()
    params.pop("random_state")
    return params


DEFAULTS = {
    "version": CONFIG_VERSION,
    "estimator": "brns",
    "replicates": 1,
    "seeds": None,
    "output": "runs",
    "search": {"mu": 100, "lambda": 100, "generations": 500, "eta_m": 15.0, "p_m": None,
               "gene_bounds": [-1.0, 1.0], "rescore_parents": True, "snapshot_interval": 1},
    "brns": _estimator_defaults(BRNSNovelty),
    "archive": _estimator_defaults(ArchiveNovelty),
    "env": {"kind": "maze", "maze": None, "steps": 400, "sensor_range_frac": 0.25, "v_max_frac": 0.01,
            "omega_max": 0.35, "slack_frac": 5e-5},
    "diagnostics": {"enabled": True, "grid": [6, 6], "resolution": 10},
    "bench": {"archive_sizes": [1000, 2500, 5000, 10000], "dims": [2, 8, 16, 32], "population": 100,
              "trials": 30, "warmup": 5, "k": 15, "brns_generations": [5, 500], "seed": 0},
}

# keys whose default is None but which take a value of this kind
NULLABLE = {("seeds",): list, ("search", "p_m"): float, ("brns", "bounds"): list, ("brns", "bias_std"): float, ("env", "maze"): str}
CHOICES = {("estimator",): ("brns", "archive"), ("env", "kind"): ("maze",),
           ("archive", "add_policy"): ("random", "most_novel"), ("archive", "prune_policy"): ("random",)}
POSITIVE_INTS = {("replicates",), ("search", "mu"), ("search", "lambda"), ("search", "generations"),
                 ("search", "snapshot_interval"), ("archive", "k"), ("archive", "max_size"),
                 ("brns", "embed_factor"), ("brns", "hidden_factor"), ("brns", "batch_size"),
                 ("env", "steps"), ("diagnostics", "resolution"), ("bench", "trials"), ("bench", "population")}


class ConfigError(ValueError):
    def __init__(self, message, line=None, source=None):
        self.line = line
        where = f"{source or '<config>'}:{line}: " if line is not None else f"{source or '<config>'}: "
        super().__init__(where + message)


def _line_map(node, path=(), out=None):
    """Map key paths to 1-based source lines using the YAML node tree."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            sub = path + (key_node.value,)
            out[sub] = key_node.start_mark.line + 1
            _line_map(value_node, sub, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            out[path + (i,)] = item.start_mark.line + 1
            _line_map(item, path + (i,), out)
    return out


def _check_value(path, value, default, line, source):
    name = ".".join(map(str, path))
    if path in CHOICES and value not in CHOICES[path]:
        raise ConfigError(f"{name} must be one of {list(CHOICES[path])}, got {value!r}", line, source)
    if default is None:
        kind = NULLABLE.get(path)
        if value is None or kind is None:
            return
        ok = isinstance(value, (int, float)) and not isinstance(value, bool) if kind is float else isinstance(value, kind)
        if not ok:
            raise ConfigError(f"{name} must be {kind.__name__} or null, got {value!r}", line, source)
        return
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, str):
        ok = isinstance(value, str) or (path == ("brns", "threshold") and isinstance(value, (int, float)))
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{name} has the wrong type: expected {type(default).__name__}, got {value!r}",
                          line, source)
    if path in POSITIVE_INTS and value < 1:
        raise ConfigError(f"{name} must be >= 1, got {value}", line, source)


def _merge(defaults, given, lines, source, path=()):
    out = copy.deepcopy(defaults)
    if not isinstance(given, dict):
        name = ".".join(map(str, path)) or "config"
        raise ConfigError(f"{name} must be a mapping", lines.get(path, 1), source)
    for key, value in given.items():
        sub = path + (key,)
        line = lines.get(sub)
        if key not in defaults:
            raise ConfigError(f"unknown key {'.'.join(map(str, sub))!r}", line, source)
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value if value is not None else {}, lines, source, sub)
        else:
            _check_value(sub, value, defaults[key], line, source)
            out[key] = value
    return out


def parse_config(text, source=None, base_dir=None):
    """Parse and validate YAML text into a fully populated config dict."""
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None, source) from None
    lines = _line_map(node) if node is not None else {}
    raw = {} if raw is None else raw
    if isinstance(raw, dict) and "version" not in raw:
        raise ConfigError("missing required key 'version'", 1, source)
    cfg = _merge(DEFAULTS, raw, lines, source)
    if cfg["version"] != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {cfg['version']} (expected {CONFIG_VERSION})",
                          lines.get(("version",)), source)
    if cfg["seeds"] is not None:
        if not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in cfg["seeds"]):
            raise ConfigError("seeds must be non-negative integers", lines.get(("seeds",)), source)
        if len(cfg["seeds"]) != cfg["replicates"]:
            raise ConfigError(f"{len(cfg['seeds'])} seeds given for {cfg['replicates']} replicates",
                              lines.get(("seeds",)), source)
        if len(set(cfg["seeds"])) != len(cfg["seeds"]):
            raise ConfigError("seeds must be distinct", lines.get(("seeds",)), source)
    lo, hi = cfg["search"]["gene_bounds"]
    if not lo < hi:
        raise ConfigError("search.gene_bounds needs lo < hi", lines.get(("search", "gene_bounds")), source)
    maze = cfg["env"]["maze"]
    if maze is not None:
        p = Path(maze)
        if not p.is_absolute() and base_dir is not None:
            p = Path(base_dir) / p
        if not p.exists():
            raise ConfigError(f"maze file {maze!r} does not exist", lines.get(("env", "maze")), source)
        cfg["env"]["maze"] = str(p)
    return cfg


def load_config(path):
    path = Path(path)
    return parse_config(path.read_text(), source=str(path), base_dir=path.parent)


def default_config():
    return copy.deepcopy(DEFAULTS)


def dump_config(cfg):
    """YAML text that :func:`parse_config` maps back to ``cfg``."""
    return yaml.safe_dump(cfg, sort_keys=False, default_flow_style=None)


def seeds_of(cfg):
    return list(cfg["seeds"]) if cfg["seeds"] is not None else list(range(cfg["replicates"]))


def evolution_config(cfg):
    s = cfg["search"]
    return EvolutionConfig(estimator=cfg["estimator"], mu=s["mu"], lambda_=s["lambda"], generations=s["generations"],
                           eta_m=float(s["eta_m"]), p_m=s["p_m"], gene_bounds=tuple(s["gene_bounds"]),
                           rescore_parents=s["rescore_parents"], snapshot_interval=s["snapshot_interval"],
                           novelty_params=dict(cfg[cfg["estimator"]]))


def make_env(cfg):
    e = cfg["env"]
    return MazeEnv(load_maze(e["maze"]), steps=e["steps"], sensor_range_frac=e["sensor_range_frac"],
                   v_max_frac=e["v_max_frac"], omega_max=e["omega_max"], slack_frac=e["slack_frac"])
