"""Execute a validated experiment config and persist its outputs.

Output layout under ``cfg.output``::

    results.jsonl          one numeric record per line, each with seed lineage
    summary.csv            one row per (statistic, R)
    plotdata/<kind>.csv    x, y, y_err columns
    manifest.json          config hash, version, timestamps, seeds, file inventory

Everything but the manifest timestamps is a pure function of the config.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, statistics
from .config import ExperimentConfig
from .kernel import limit_covariance_constant_sigma, phi_sq_mass
from .malliavin import commutation_check, random_probe
from .skeleton import SpaceTimeWindow, make_rng, sample_skeleton, stream_key

SUMMARY_COLUMNS = ("experiment", "statistic", "t", "R", "estimate", "std_error", "n",
                   "master_seed", "measure", "sigma", "oracle")


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    started: str
    finished: str
    seeds: dict
    outputs: dict  # relative path -> sha256
    config: dict
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _clean(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _record(cfg: ExperimentConfig, statistic, estimate, std_error=None, R=None, **extra):
    rec = {
        "experiment": cfg.experiment,
        "statistic": statistic,
        "t": cfg.t,
        "R": R,
        "estimate": estimate,
        "std_error": std_error,
        "n": cfg.n,
        "master_seed": cfg.master_seed,
        "stream": cfg.experiment,
        "measure": cfg.measure_spec().name,
        "sigma": cfg.nonlinearity().name,
    }
    rec.update(extra)
    return {k: _clean(v) for k, v in rec.items()}


# experiment bodies: each returns (records, plot rows) -------------------------


def _variance(cfg):
    measure, sigma = cfg.measure_spec(), cfg.nonlinearity()
    reports, ratios = statistics.mc_variance_scaling(
        cfg.t, cfg.R_grid, sigma, measure, cfg.n, cfg.master_seed, cfg.workers,
        experiment=cfg.experiment)
    recs, plot = [], []
    for R, rep in zip(cfg.R_grid, reports):
        oracle = None
        if sigma.is_constant:
            oracle = sigma.p1**2 * measure.m2 * phi_sq_mass(cfg.t, R)
        recs.append(_record(cfg, "variance", rep.estimate, rep.std_error, R, oracle=oracle))
        plot.append((R, rep.estimate, rep.std_error))
    for R1, R2, ratio, se in ratios:
        recs.append(_record(cfg, "variance_ratio", ratio, se, R2, R_small=R1))
    return recs, plot


def _covariance(cfg):
    measure, sigma = cfg.measure_spec(), cfg.nonlinearity()
    s = float(cfg.options["s"])
    recs, plot = [], []
    for R in cfg.R_grid:
        cov = statistics.mc_limit_covariance(cfg.t, s, R, sigma, measure, cfg.n,
                                             cfg.master_seed, cfg.workers,
                                             experiment=cfg.experiment)
        oracle = None
        if sigma.is_constant:
            oracle = limit_covariance_constant_sigma(cfg.t, s, measure.m2, sigma.p1)
        recs.append(_record(cfg, "K_hat", cov.K_hat, cov.std_error, R, s=s, oracle=oracle))
        plot.append((R, cov.K_hat, cov.std_error))
    return recs, plot


def _lln(cfg):
    rows = statistics.lln_check(cfg.t, cfg.R_grid, cfg.nonlinearity(), cfg.measure_spec(),
                                cfg.n, cfg.master_seed, cfg.workers, experiment=cfg.experiment)
    recs = [_record(cfg, "mean_sq_F_over_R", r.estimate, r.std_error, R) for R, r in rows]
    return recs, [(R, r.estimate, r.std_error) for R, r in rows]


def _clt(cfg):
    res = statistics.clt_rate_experiment(
        cfg.t, cfg.R_grid, cfg.nonlinearity(), cfg.measure_spec(), cfg.n, cfg.master_seed,
        cfg.workers, n_boot=int(cfg.options.get("n_boot", 64)), experiment=cfg.experiment)
    recs = [
        _record(cfg, "w1", d, se, R, used_in_fit=bool(m))
        for R, d, se, m in zip(res.R_grid, res.distances, res.std_errors, res.fit_mask)
    ]
    recs.append(_record(cfg, "noise_floor", res.noise_floor))
    recs.append(_record(cfg, "loglog_slope", res.slope, degenerate=res.noise_floor_reached))
    return recs, list(zip(res.R_grid, res.distances, res.std_errors))


def _asclt(cfg):
    measure, sigma = cfg.measure_spec(), cfg.nonlinearity()
    o = cfg.options
    R_min, R_max = float(o.get("R_min", 1.0)), float(o.get("R_max", 1000.0))
    n_R = int(o.get("n_R", math.ceil(64 * math.log10(R_max / R_min)) + 1))
    test_fn = o.get("test_fn", "tanh")
    kw = {"n_aux": int(o.get("n_aux", 200)), "workers": cfg.workers}
    res = statistics.asclt_experiment(cfg.t, R_min, R_max, n_R, sigma, measure, test_fn,
                                      cfg.master_seed, experiment=cfg.experiment, **kw)
    recs = [
        _record(cfg, "log_average", res.log_average, R=R_max, test_fn=test_fn, n_R=n_R),
        _record(cfg, "gaussian_expectation", res.gaussian_expectation, test_fn=test_fn),
        _record(cfg, "deviation", res.deviation, R=R_max, test_fn=test_fn),
    ]
    if "calibration_paths" in o:
        cal = statistics.asclt_calibration(cfg.t, R_min, R_max, n_R, sigma, measure, test_fn,
                                           cfg.master_seed, n_paths=int(o["calibration_paths"]),
                                           experiment=cfg.experiment + "/calibration", **kw)
        recs.append(_record(cfg, "calibration_sd", cal["sd"], test_fn=test_fn,
                            n_paths=cal["n_paths"], mean_deviation=cal["mean_deviation"]))
    plot = list(zip(res.R_nodes.tolist(), res.normalized.tolist(), [0.0] * n_R))
    return recs, plot


def _indep(cfg):
    fns = statistics.TEST_FUNCTIONS
    f1 = fns[cfg.options.get("f1", "tanh")]
    f2 = statistics.first_coordinate(fns[cfg.options.get("f2", "tanh")])
    pts = [tuple(map(float, p)) for p in cfg.options["eval_points"]]
    rows = statistics.independence_experiment(cfg.t, cfg.R_grid, pts, f1, f2,
                                              cfg.nonlinearity(), cfg.measure_spec(), cfg.n,
                                              cfg.master_seed, cfg.workers,
                                              experiment=cfg.experiment)
    recs = [_record(cfg, "cov", c, se, R) for R, c, se in rows]
    return recs, [(R, c, se) for R, c, se in rows]


def probe_records(cfg) -> list[dict]:
    """Commutation-identity rows on random skeletons, one per (skeleton, xi)."""
    measure, sigma = cfg.measure_spec(), cfg.nonlinearity()
    t_max, x_min, x_max = map(float, cfg.options.get("window", [cfg.t, -4.0, 4.0]))
    window = SpaceTimeWindow(t_max, x_min, x_max)
    n_sk = int(cfg.options.get("n_skeletons", cfg.n))
    n_xi = int(cfg.options.get("n_xi", 5))
    key = stream_key(cfg.experiment)
    out = []
    for i in range(n_sk):
        sk = sample_skeleton(window, measure, (cfg.master_seed, key, i))
        rng = make_rng((cfg.master_seed, key, i, 1))
        for _ in range(n_xi):
            xi = random_probe(rng, window, measure)
            query = _random_query(rng, window, xi)
            rec = commutation_check(sk, xi, sigma, query).to_record()
            rec.update(skeleton=i, n=n_sk, master_seed=cfg.master_seed, stream=cfg.experiment,
                       measure=measure.name,
                       sigma=sigma.name)
            out.append(rec)
    return out


def _random_query(rng, window: SpaceTimeWindow, xi=None):
    """A point whose backward cone fits in the window; half the time inside xi's cone."""
    half = 0.5 * (window.x_max - window.x_min)
    mid = 0.5 * (window.x_max + window.x_min)
    if xi is not None and rng.random() < 0.5:
        r, y = xi[0], xi[1]
        for _ in range(32):
            t = rng.uniform(r, window.t_max)
            x = y + rng.uniform(-1.0, 1.0) * (t - r)
            if window.covers_cone(t, x):
                return t, x
    t = rng.uniform(0.0, min(window.t_max, half))
    x = rng.uniform(mid - (half - t), mid + (half - t))
    return t, x


def _probe(cfg):
    rows = probe_records(cfg)
    resid = np.array([r["residual"] for r in rows])
    recs = [_record(cfg, "max_residual", float(resid.max(initial=0.0)),
                    n_probes=len(rows), n_failed=sum(not r["ok"] for r in rows))]
    return recs, [(k, r["residual"], 0.0) for k, r in enumerate(rows)], rows


RUNNERS = {"variance": _variance, "covariance": _covariance, "lln": _lln, "clt": _clt,
           "asclt": _asclt, "indep": _indep}


def evaluate_expectations(cfg: ExperimentConfig, records: list[dict]) -> list[dict]:
    """Compare records against the config's ``expect`` block."""
    checks = []
    for exp in cfg.expect:
        hits = [r for r in records
                if (exp["statistic"] is None or r["statistic"] == exp["statistic"])
                and (exp["R"] is None or r["R"] == float(exp["R"]))]
        if not hits:
            checks.append({**exp, "observed": None, "passed": False, "reason": "no record"})
            continue
        for r in hits:
            se = r["std_error"] or 0.0
            ok = abs(r["estimate"] - exp["value"]) <= exp["n_se"] * se
            checks.append({**exp, "R": r["R"], "observed": r["estimate"], "std_error": se,
                           "passed": bool(ok)})
    return checks


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else ("" if v is None else v)
                        for v in row])


def run(cfg: ExperimentConfig, out_dir=None) -> RunManifest:
    """Run ``cfg`` and write its outputs; return the manifest (also written to disk)."""
    started = _now()
    out = Path(out_dir if out_dir is not None else cfg.output)
    (out / "plotdata").mkdir(parents=True, exist_ok=True)

    files = {}
    if cfg.experiment == "probe":
        records, plot, rows = _probe(cfg)
        probe_path = out / "probes.jsonl"
        probe_path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))
        files["probes.jsonl"] = probe_path
    else:
        records, plot = RUNNERS[cfg.experiment](cfg)

    res_path = out / "results.jsonl"
    res_path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))
    files["results.jsonl"] = res_path

    sum_path = out / "summary.csv"
    _write_csv(sum_path, SUMMARY_COLUMNS,
               [[r.get(c) for c in SUMMARY_COLUMNS] for r in records])
    files["summary.csv"] = sum_path

    plot_path = out / "plotdata" / f"{cfg.experiment}.csv"
    _write_csv(plot_path, ("x", "y", "y_err"), [tuple(map(float, p)) for p in plot])
    files[f"plotdata/{cfg.experiment}.csv"] = plot_path

    checks = evaluate_expectations(cfg, records)
    manifest = RunManifest(
        config_hash=cfg.digest(),
        tool_version=__version__,
        started=started,
        finished=_now(),
        seeds={cfg.experiment: {"master_seed": cfg.master_seed,
                                "stream": stream_key(cfg.experiment)}},
        outputs={name: _sha256(p) for name, p in sorted(files.items())},
        config=cfg.to_dict(),
        checks=checks,
    )
    (out / "manifest.json").write_text(manifest.to_json())
    return manifest
