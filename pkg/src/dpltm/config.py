"""Run configuration: YAML or JSON files with a schema version and strict keys.

Layout (every section optional, missing keys take defaults)::

    schema_version: 1
    seed: 0
    simulate:  {n, r, case, beta0, censoring_target, c0, z2_sd, calibrate}
    fit:       {split, r_candidates, selection, train: {...}, grid: {axis: [values]}}
    infer:     {enabled, level, directions: {...}}
    evaluate:  {t0, wise_grid, true_r}
    benchmark: {replicates, test_fraction, threads}

``fit.train`` takes ``TrainConfig`` fields and ``infer.directions`` takes
``DirectionConfig`` fields, except ``seed``: every stream is derived from the
top-level seed.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .inference import DirectionConfig
from .simulator import CASES, SimDesign
from .trainer import SELECTION_STRATEGIES, TrainConfig, expand_grid

SCHEMA_VERSION = 1

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "simulate": {"n": 1000, "r": 0.0, "case": "deep", "beta0": [1.0, -1.0], "censoring_target": 0.4,
                 "c0": None, "z2_sd": 0.5, "calibrate": False},
    "fit": {"split": [0.8, 0.2], "r_candidates": [0.0], "selection": "shared", "train": {}, "grid": {}},
    "infer": {"enabled": True, "level": 0.95, "directions": {}},
    "evaluate": {"t0": None, "wise_grid": 1000, "true_r": None},
    "benchmark": {"replicates": 20, "test_fraction": 0.2, "threads": None},
}

_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}
_DIRECTION_KEYS = {f.name for f in fields(DirectionConfig)} - {"seed"}


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(d).__name__}")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


def _merge(base, over, where):
    _check_keys(over, base, where)
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(base[k], dict) and k not in ("train", "grid", "directions"):
            out[k] = _merge(base[k], v if v is not None else {}, f"{k}" if where == "config" else f"{where}.{k}")
        else:
            out[k] = v
    return out


def parse(doc: dict | None) -> dict:
    """Validate a raw config mapping and fill in defaults."""
    doc = {} if doc is None else doc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping at the top level")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (this build reads {SCHEMA_VERSION})")
    cfg = _merge(DEFAULTS, doc, "config")
    _validate(cfg)
    return cfg


def _validate(cfg):
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool) or cfg["seed"] < 0:
        raise ConfigError("seed must be a nonnegative integer")
    sim = cfg["simulate"]
    if sim["case"] not in CASES:
        raise ConfigError(f"simulate.case must be one of {CASES}")
    try:
        design = sim_design(cfg)
        if not sim["calibrate"]:
            design.censoring_bound()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"simulate: {exc}") from None
    fit = cfg["fit"]
    _check_keys(fit["train"], _TRAIN_KEYS, "fit.train")
    _check_keys(fit["grid"], _TRAIN_KEYS, "fit.grid")
    for k, v in fit["grid"].items():
        if not isinstance(v, list) or not v:
            raise ConfigError(f"fit.grid.{k} must be a nonempty list")
    if fit["selection"] not in SELECTION_STRATEGIES:
        raise ConfigError(f"fit.selection must be one of {SELECTION_STRATEGIES}")
    split = fit["split"]
    if not isinstance(split, list) or len(split) not in (2, 3) or abs(sum(split) - 1) > 1e-9 \
            or min(split) <= 0:
        raise ConfigError("fit.split must list 2 or 3 positive fractions summing to 1")
    rs = fit["r_candidates"]
    if not isinstance(rs, list) or not rs or any(not isinstance(r, (int, float)) or r < 0 for r in rs):
        raise ConfigError("fit.r_candidates must be a nonempty list of numbers >= 0")
    try:
        train_grid(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"fit.train/grid: {exc}") from None
    inf = cfg["infer"]
    _check_keys(inf["directions"], _DIRECTION_KEYS, "infer.directions")
    if not 0 < inf["level"] < 1:
        raise ConfigError("infer.level must lie in (0, 1)")
    try:
        direction_config(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"infer.directions: {exc}") from None
    ev = cfg["evaluate"]
    if ev["t0"] is not None and (not isinstance(ev["t0"], list) or any(not t > 0 for t in ev["t0"])):
        raise ConfigError("evaluate.t0 must be null or a list of positive times")
    if not isinstance(ev["wise_grid"], int) or ev["wise_grid"] < 2:
        raise ConfigError("evaluate.wise_grid must be an integer >= 2")
    bench = cfg["benchmark"]
    if not isinstance(bench["replicates"], int) or bench["replicates"] < 1:
        raise ConfigError("benchmark.replicates must be a positive integer")
    if not 0 < bench["test_fraction"] <= 1:
        raise ConfigError("benchmark.test_fraction must lie in (0, 1]")
    if bench["threads"] is not None and (not isinstance(bench["threads"], int) or bench["threads"] < 1):
        raise ConfigError("benchmark.threads must be null or a positive integer")


def load(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: not valid {'JSON' if path.suffix == '.json' else 'YAML'}: {exc}") from None
    return parse(doc)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def sim_design(cfg: dict, seed: int | None = None, n: int | None = None) -> SimDesign:
    s = cfg["simulate"]
    return SimDesign(n=int(s["n"] if n is None else n), r=float(s["r"]), case=s["case"],
                     beta0=tuple(s["beta0"]), censoring_target=s["censoring_target"], c0=s["c0"],
                     seed=cfg["seed"] if seed is None else seed, z2_sd=float(s["z2_sd"]))


def train_grid(cfg: dict, seed: int | None = None) -> list:
    seed = cfg["seed"] if seed is None else seed
    base = TrainConfig(**cfg["fit"]["train"], seed=seed)
    grid = cfg["fit"]["grid"]
    return expand_grid(base, **grid) if grid else [base]


def direction_config(cfg: dict, seed: int | None = None) -> DirectionConfig:
    return DirectionConfig(**cfg["infer"]["directions"], seed=cfg["seed"] if seed is None else seed)
