"""Declarative experiment configuration (YAML, versioned schema).

Unknown fields are errors: a config is a scientific record, not a hint.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigInvalid, InvalidMeasure, TrivialNonlinearityWarning
from .levy_measure import LevyMeasureSpec, moment_is_finite
from .solver import Nonlinearity

SCHEMA_VERSION = 1
KINDS = ("variance", "covariance", "lln", "clt", "asclt", "indep", "probe")
NEEDS_M4 = ("clt", "asclt", "indep")
TEST_FUNCTIONS = ("tanh", "sq_clip4", "one")

COMMON = {"schema_version", "experiment", "measure", "sigma", "n", "master_seed",
          "output", "workers", "expect", "t", "R_grid"}
EXTRA = {
    "variance": set(),
    "covariance": {"s"},
    "lln": set(),
    "clt": {"n_boot"},
    "asclt": {"R_min", "R_max", "n_R", "test_fn", "n_aux", "calibration_paths"},
    "indep": {"eval_points", "f1", "f2"},
    "probe": {"window", "n_skeletons", "n_xi"},
}

DEFAULT_MEASURE = {"kind": "discrete_atoms", "atoms": [[1.0, 1.0], [-1.0, 1.0]]}


@dataclass
class ExperimentConfig:
    experiment: str
    measure: dict = field(default_factory=lambda: dict(DEFAULT_MEASURE))
    sigma: dict = field(default_factory=lambda: {"kind": "identity"})
    t: float = 1.0
    R_grid: list = field(default_factory=lambda: [1.0])
    n: int = 1000
    master_seed: int = 20261015
    output: str = "levywave-out"
    workers: int = 1
    schema_version: int = SCHEMA_VERSION
    expect: list = field(default_factory=list)
    options: dict = field(default_factory=dict)

    def measure_spec(self) -> LevyMeasureSpec:
        return LevyMeasureSpec.from_config(self.measure)

    def nonlinearity(self) -> Nonlinearity:
        return Nonlinearity.from_config(self.sigma)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(d.pop("options"))
        if not d["expect"]:
            d.pop("expect")
        return d

    def digest(self) -> str:
        """Hash of the result-determining fields (output dir and workers excluded)."""
        d = self.to_dict()
        d.pop("output", None)
        d.pop("workers", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _number(errors, key, value, *, positive=False, integer=False, minimum=None):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    if ok and integer:
        ok = float(value).is_integer()
    if ok and not math.isfinite(value):
        ok = False
    if not ok:
        errors[key] = f"expected {'an integer' if integer else 'a number'}, got {value!r}"
        return None
    if positive and not value > 0:
        errors[key] = f"must be positive, got {value}"
    if minimum is not None and value < minimum:
        errors[key] = f"must be >= {minimum}, got {value}"
    return int(value) if integer else float(value)


def validate(raw: dict) -> ExperimentConfig:
    """Check a raw mapping field by field; raise ConfigInvalid listing every problem."""
    if not isinstance(raw, dict):
        raise ConfigInvalid({"<root>": "config must be a mapping"})
    errors: dict[str, str] = {}
    raw = dict(raw)

    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        errors["schema_version"] = f"expected {SCHEMA_VERSION}, got {version!r}"
    kind = raw.get("experiment")
    if kind not in KINDS:
        errors["experiment"] = f"must be one of {KINDS}, got {kind!r}"
        raise ConfigInvalid(errors)

    unknown = sorted(set(raw) - COMMON - EXTRA[kind])
    for key in unknown:
        errors[key] = f"unknown field for experiment {kind!r}"

    cfg = ExperimentConfig(kind)
    if "measure" in raw:
        cfg.measure = raw["measure"]
    if "sigma" in raw:
        cfg.sigma = raw["sigma"]

    measure = None
    try:
        measure = cfg.measure_spec()
    except (InvalidMeasure, TypeError, ValueError) as exc:
        errors["measure"] = str(exc)
    if measure is not None:
        if not measure.finite_activity:
            errors["measure"] = "infinite activity: give a truncation eps"
        elif measure.mean_jump != 0.0:
            errors["measure"] = (
                f"mean jump {measure.mean_jump:g} != 0; experiments use the exact "
                "solver, which needs a centered measure"
            )
        elif kind in NEEDS_M4 and not moment_is_finite(measure, 4):
            errors["measure"] = (
                f"m4 = inf for {measure.name}; the {kind} experiment assumes m4 < inf"
            )
    try:
        sigma = cfg.nonlinearity()
        if sigma.value_at_one == 0.0:
            warnings.warn(f"sigma(1) = 0 for {sigma.name}: the solution is u == 1",
                          TrivialNonlinearityWarning, stacklevel=2)
    except (KeyError, TypeError, ValueError) as exc:
        errors["sigma"] = str(exc)

    if "t" in raw:
        cfg.t = _number(errors, "t", raw["t"], positive=True)
    if "R_grid" in raw:
        grid = raw["R_grid"]
        if not isinstance(grid, list) or not grid:
            errors["R_grid"] = "must be a non-empty list"
        else:
            vals = [_number(errors, f"R_grid[{i}]", r, positive=True) for i, r in enumerate(grid)]
            if all(v is not None for v in vals):
                if any(b <= a for a, b in zip(vals, vals[1:])):
                    errors["R_grid"] = "must be strictly increasing"
                cfg.R_grid = vals
    if "n" in raw:
        cfg.n = _number(errors, "n", raw["n"], integer=True, minimum=2)
    if "master_seed" in raw:
        cfg.master_seed = _number(errors, "master_seed", raw["master_seed"], integer=True,
                                  minimum=0)
    if "workers" in raw:
        cfg.workers = _number(errors, "workers", raw["workers"], integer=True, minimum=1)
    if "output" in raw:
        if not isinstance(raw["output"], str):
            errors["output"] = "must be a path string"
        else:
            cfg.output = raw["output"]
    if "expect" in raw:
        cfg.expect = _validate_expect(errors, raw["expect"])

    opts = {k: raw[k] for k in EXTRA[kind] if k in raw}
    _validate_options(errors, kind, opts)
    cfg.options = opts

    if errors:
        raise ConfigInvalid(errors)
    return cfg


def _validate_expect(errors, expect):
    items = expect if isinstance(expect, list) else [expect]
    out = []
    for i, item in enumerate(items):
        key = f"expect[{i}]"
        if not isinstance(item, dict) or set(item) - {"statistic", "R", "value", "n_se"} \
                or "value" not in item:
            errors[key] = "needs {statistic, value[, R, n_se]}"
            continue
        out.append({"statistic": item.get("statistic"), "R": item.get("R"),
                    "value": float(item["value"]), "n_se": float(item.get("n_se", 3.0))})
    return out


def _validate_options(errors, kind, opts):
    if kind == "covariance":
        if "s" not in opts:
            errors["s"] = "covariance needs the second time s"
        else:
            _number(errors, "s", opts["s"], minimum=0.0)
    if kind == "clt" and "n_boot" in opts:
        _number(errors, "n_boot", opts["n_boot"], integer=True, minimum=2)
    if kind == "asclt":
        for key in ("R_min", "R_max"):
            if key in opts:
                _number(errors, key, opts[key], positive=True)
        if "n_R" in opts:
            _number(errors, "n_R", opts["n_R"], integer=True, minimum=2)
        if opts.get("test_fn", "tanh") not in TEST_FUNCTIONS:
            errors["test_fn"] = f"must be one of {TEST_FUNCTIONS}"
        if "calibration_paths" in opts:
            _number(errors, "calibration_paths", opts["calibration_paths"], integer=True,
                    minimum=2)
    if kind == "indep":
        pts = opts.get("eval_points")
        if not isinstance(pts, list) or not pts or not all(
            isinstance(p, (list, tuple)) and len(p) == 2 for p in pts
        ):
            errors["eval_points"] = "needs a non-empty list of [t, x] pairs"
        for key in ("f1", "f2"):
            if opts.get(key, "tanh") not in TEST_FUNCTIONS:
                errors[key] = f"must be one of {TEST_FUNCTIONS}"
    if kind == "probe" and "window" in opts:
        w = opts["window"]
        if not isinstance(w, list) or len(w) != 3:
            errors["window"] = "must be [t_max, x_min, x_max]"


def is_empty(path) -> bool:
    """True for a config file holding no mapping entries (selects the default suite)."""
    try:
        return not yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError:
        return False


def load(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigInvalid({"<file>": f"not valid YAML: {exc}"}) from None
    return validate(raw or {})


def apply_overrides(cfg: ExperimentConfig, seed=None, workers=None, output=None):
    """CLI flags win over environment variables, which win over the file."""
    env_seed = os.environ.get("LEVYWAVE_SEED")
    env_workers = os.environ.get("LEVYWAVE_WORKERS")
    if seed is not None:
        cfg.master_seed = int(seed)
    elif env_seed:
        cfg.master_seed = int(env_seed)
    if workers is not None:
        cfg.workers = int(workers)
    elif env_workers:
        cfg.workers = int(env_workers)
    if output is not None:
        cfg.output = str(output)
    return cfg
