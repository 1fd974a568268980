"""Experiment orchestration: validated configs in, CSV + JSON reports out.

Each experiment is one process invocation: validate the config (schema
plus label lookup) before any compute, run the matching module operation,
evaluate the pass/fail checks whose thresholds the config declares, and
emit write-once tables.  Emitted CSV bytes are a pure function of
(config, seed); wall time and versions live only in report.json.
"""

from __future__ import annotations

import json
import math
import platform
import time
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from . import __version__, averaging, ergodicity, errors, kernels, models
from . import poisson as poisson_mod
from . import rng, sde, stats

EXPERIMENTS = ("invariant", "mixing", "doeblin", "exit-probe", "sup-growth",
               "poisson", "residual", "effective", "green-kubo", "converge")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT = {"type": "integer", "minimum": 1}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_PTS = {"type": "array", "items": _VEC, "minItems": 1}

_MU = {"type": "object",
       "properties": {"burn_in": _POS, "n_samples": _INT, "thinning_time": _POS,
                      "dt": _POS},
       "required": ["burn_in", "n_samples", "thinning_time"],
       "additionalProperties": False}

_BINNING = {"type": "object",
            "properties": {"lo": _VEC, "hi": _VEC,
                           "n_bins": {"type": "array", "items": _INT}},
            "required": ["lo", "hi", "n_bins"],
            "additionalProperties": False}

_PARAMS_SCHEMAS = {
    "invariant": {"type": "object",
                  "properties": {"burn_in": _POS, "n_samples": _INT,
                                 "thinning_time": _POS, "dt": _POS},
                  "required": ["burn_in", "n_samples", "thinning_time"],
                  "additionalProperties": False},
    "mixing": {"type": "object",
               "properties": {"x0": _VEC, "times": _VEC, "n_paths": _INT,
                              "mu": _MU, "binning": _BINNING, "dt": _POS},
               "required": ["x0", "times", "n_paths", "mu"],
               "additionalProperties": False},
    "doeblin": {"type": "object",
                "properties": {"R": _POS, "t_B": _POS, "n0": _INT, "grid": _PTS,
                               "n_chains": _INT, "bandwidth": _POS, "dt": _POS,
                               "time_cap": _POS},
                "required": ["R", "t_B", "n0", "grid", "n_chains"],
                "additionalProperties": False},
    "exit-probe": {"type": "object",
                   "properties": {"R": _POS, "t0": _POS, "grid": _PTS,
                                  "n_paths": _INT, "dt": _POS},
                   "required": ["R", "t0", "grid", "n_paths"],
                   "additionalProperties": False},
    "sup-growth": {"type": "object",
                   "properties": {"p": _POS, "T": _POS, "eps_list": _VEC,
                                  "n_paths": _INT, "x0": _VEC, "dt": _POS},
                   "required": ["p", "T", "eps_list", "n_paths"],
                   "additionalProperties": False},
    "poisson": {"type": "object",
                "properties": {"f": {"type": "string"}, "query_points": _PTS,
                               "horizon_N": _POS, "n_paths": _INT, "dt": _POS,
                               "mu": _MU},
                "required": ["f", "query_points", "horizon_N", "n_paths", "dt",
                             "mu"],
                "additionalProperties": False},
    "residual": {"type": "object",
                 "properties": {"f": {"type": "string"}, "query_points": _PTS,
                                "horizon_N": _POS, "n_paths": _INT,
                                "n_residual_paths": _INT, "t": _POS, "dt": _POS,
                                "mu": _MU},
                 "required": ["f", "query_points", "horizon_N", "n_paths",
                              "n_residual_paths", "t", "dt", "mu"],
                 "additionalProperties": False},
    "effective": {"type": "object",
                  "properties": {"y_grid": _VEC, "n_mu": _INT, "n_paths": _INT,
                                 "horizon_N": _POS, "dt": _POS, "mu": _MU},
                  "required": ["y_grid", "n_mu", "n_paths", "horizon_N", "dt",
                               "mu"],
                  "additionalProperties": False},
    "green-kubo": {"type": "object",
                   "properties": {"y": _VEC, "run_T": _POS, "record_dt": _POS,
                                  "burn_in": _POS, "lag_max": _POS, "dt": _POS,
                                  "mu": _MU, "direct": {
                                      "type": "object",
                                      "properties": {"n_mu": _INT, "n_paths": _INT,
                                                     "horizon_N": _POS},
                                      "required": ["n_mu", "n_paths", "horizon_N"],
                                      "additionalProperties": False}},
                   "required": ["y", "run_T", "record_dt", "burn_in", "lag_max"],
                   "additionalProperties": False},
    "converge": {"type": "object",
                 "properties": {"y0": _VEC, "x0": _VEC, "eps_list": _VEC,
                                "times": _VEC, "n_paths": _INT, "fast_dt": _POS,
                                "limit": {"enum": ["effective", "analytic"]},
                                "mu": _MU,
                                "build": {"type": "object",
                                          "properties": {"y_grid": _VEC,
                                                         "n_mu": _INT,
                                                         "n_paths": _INT,
                                                         "horizon_N": _POS,
                                                         "dt": _POS},
                                          "required": ["y_grid", "n_mu", "n_paths",
                                                       "horizon_N", "dt"],
                                          "additionalProperties": False}},
                 "required": ["y0", "x0", "eps_list", "times", "n_paths",
                              "fast_dt", "limit"],
                 "additionalProperties": False},
}

_TOLERANCE_KEYS = {
    "invariant": {"mean_sigmas", "variance_target", "variance_rel_tol"},
    "mixing": {"tv_final_max", "exponent_min", "monotone_bands"},
    "doeblin": {"q_hat_min"},
    "exit-probe": {"p_min_gt"},
    "sup-growth": {"decreasing_sigmas"},
    "poisson": {"sigmas", "abs_floor"},
    "residual": {"sigmas", "abs_floor"},
    "effective": {"drift_tol_scale", "diff_tol_abs", "diff_tol_rel"},
    "green-kubo": {"sigmas"},
    "converge": {"ks_final_max", "trend_min"},
}

_SCHEMA = {
    "type": "object",
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "model": {"type": "string"},
        "model_params": {"type": "object"},
        "seed": {"type": "integer"},
        "output_dir": {"type": "string"},
        "params": {"type": "object"},
        "tolerances": {"type": "object"},
    },
    "required": ["experiment", "model", "seed", "params"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    model_label: str
    model_params: dict
    seed: int
    params: dict
    tolerances: dict
    output_dir: str = ""


@dataclass
class Table:
    name: str
    header: list
    rows: list
    figure_like: bool = False


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool


@dataclass
class Report:
    experiment: str
    model_label: str
    seed: int
    params: dict
    tables: list
    checks: list
    passed: bool
    wall_time_s: float
    backend: str
    versions: dict = field(default_factory=dict)


def validate_config(raw: dict) -> ExperimentConfig:
    """Schema validation plus label checks; raises ConfigError."""
    try:
        jsonschema.validate(raw, _SCHEMA)
        exp = raw["experiment"]
        jsonschema.validate(raw["params"], _PARAMS_SCHEMAS[exp])
    except jsonschema.ValidationError as e:
        raise errors.ConfigError(f"config failed validation: {e.message}") from e
    exp = raw["experiment"]
    label = raw["model"]
    registry = (models.SYSTEM_REGISTRY
                if exp in ("effective", "green-kubo", "converge")
                else models.MODEL_REGISTRY)
    if label not in registry:
        raise errors.ConfigError(f"unknown model label {label!r} for {exp}")
    tol = raw.get("tolerances", {})
    unknown = set(tol) - _TOLERANCE_KEYS[exp]
    if unknown:
        raise errors.ConfigError(f"unknown tolerance keys {sorted(unknown)}")
    if exp == "poisson" and raw["params"]["f"] not in models.FUNCTION_REGISTRY:
        raise errors.ConfigError(f"unknown function label {raw['params']['f']!r}")
    if exp == "residual" and raw["params"]["f"] not in models.FUNCTION_REGISTRY:
        raise errors.ConfigError(f"unknown function label {raw['params']['f']!r}")
    if exp == "converge" and raw["params"]["limit"] == "effective" \
            and "build" not in raw["params"]:
        raise errors.ConfigError("converge with limit=effective needs a build block")
    return ExperimentConfig(exp, label, raw.get("model_params", {}),
                            raw["seed"], raw["params"], tol,
                            raw.get("output_dir", ""))


def _build_measure(model, mu_params, seed):
    return ergodicity.estimate_invariant_measure(
        model, burn_in=mu_params["burn_in"], n_samples=mu_params["n_samples"],
        thinning_time=mu_params["thinning_time"], seed=seed,
        dt=mu_params.get("dt", 0.01))


def _check(checks, name, value, threshold, ok):
    checks.append(Check(name, float(value), float(threshold), bool(ok)))


def run_experiment(cfg: ExperimentConfig) -> Report:
    t0 = time.perf_counter()
    handler = _HANDLERS[cfg.experiment]
    exp_seed = cfg.seed
    if cfg.experiment in ("effective", "green-kubo", "converge"):
        system = models.SYSTEM_REGISTRY[cfg.model_label](cfg.model_params)
        tables, checks = handler(system, cfg.params, cfg.tolerances, exp_seed)
        backend = kernels.backend_for(system.fast)
    else:
        model = models.MODEL_REGISTRY[cfg.model_label](cfg.model_params)
        tables, checks = handler(model, cfg.model_label, cfg.params,
                                 cfg.tolerances, exp_seed)
        backend = kernels.backend_for(model)
    passed = all(c.passed for c in checks) if checks else True
    return Report(cfg.experiment, cfg.model_label, cfg.seed, cfg.params,
                  tables, checks, passed, time.perf_counter() - t0, backend,
                  versions={"ergodiff": __version__,
                            "numpy": np.__version__,
                            "python": platform.python_version()})


# ---------------------------------------------------------------------------
# per-experiment handlers

def _run_invariant(model, label, p, tol, seed):
    mu = ergodicity.estimate_invariant_measure(
        model, burn_in=p["burn_in"], n_samples=p["n_samples"],
        thinning_time=p["thinning_time"], seed=seed, dt=p.get("dt", 0.01))
    d = mu.dim
    rows = []
    mean_ok = True
    mean_vals = mu.mean()
    for c in range(d):
        se, _ = stats.batch_means_stderr(mu.samples[:, c])
        rows.append([f"mean_{c + 1}", float(mean_vals[c]), se])
        if "mean_sigmas" in tol and abs(mean_vals[c]) > tol["mean_sigmas"] * se:
            mean_ok = False
    m2, m2_se, _ = ergodicity.moment_estimate(mu, 2.0)
    var = m2 - float(mean_vals @ mean_vals)
    rows.append(["second_moment", m2, m2_se])
    rows.append(["variance", var, m2_se])
    tables = [Table("moments", ["quantity", "value", "stderr"], rows)]
    centers = [0.5 * (e[:-1] + e[1:]) for e in mu.spec.edges()]
    if d == 1:
        hrows = [[float(c), float(h)] for c, h in zip(centers[0], mu.histogram)]
        tables.append(Table("histogram", ["center", "mass"], hrows,
                            figure_like=True))
    checks = []
    if "mean_sigmas" in tol:
        _check(checks, "mean_within_sigmas", max(abs(mean_vals)),
               tol["mean_sigmas"], mean_ok)
    if "variance_target" in tol and "variance_rel_tol" in tol:
        target = tol["variance_target"]
        ok = abs(var - target) <= tol["variance_rel_tol"] * abs(target)
        _check(checks, "variance_close", var, target, ok)
    return tables, checks


def _run_mixing(model, label, p, tol, seed):
    mu = _build_measure(model, p["mu"], rng.derive_seed(seed, "mu"))
    binning = None
    if "binning" in p:
        binning = stats.HistogramSpec(tuple(p["binning"]["lo"]),
                                      tuple(p["binning"]["hi"]),
                                      tuple(p["binning"]["n_bins"]))
    rep = ergodicity.tv_decay_curve(model, np.array(p["x0"]), np.array(p["times"]),
                                    mu, n_paths=p["n_paths"], binning=binning,
                                    seed=seed, dt=p.get("dt", 0.01))
    rows = [[float(t), float(v), float(b)]
            for t, v, b in zip(rep.times, rep.tv_estimates, rep.noise_bands)]
    tables = [Table("curve", ["t", "tv", "noise_band"], rows, figure_like=True),
              Table("fit", ["C", "exponent"],
                    [[float(rep.fitted_rate[0]), float(rep.fitted_rate[1])]])]
    checks = []
    if "tv_final_max" in tol:
        v = float(rep.tv_estimates[-1])
        _check(checks, "tv_final_max", v, tol["tv_final_max"],
               v <= tol["tv_final_max"])
    if "exponent_min" in tol:
        e = float(rep.fitted_rate[1])
        _check(checks, "exponent_min", e, tol["exponent_min"],
               e >= tol["exponent_min"])
    if "monotone_bands" in tol:
        k = tol["monotone_bands"]
        tv, bands = rep.tv_estimates, rep.noise_bands
        ok = all(tv[i + 1] <= tv[i] + k * (bands[i] + bands[i + 1])
                 for i in range(len(tv) - 1))
        _check(checks, "tv_nonincreasing", 1.0 if ok else 0.0, 1.0, ok)
    return tables, checks


def _run_doeblin(model, label, p, tol, seed):
    est = ergodicity.doeblin_overlap_estimate(
        model, R=p["R"], t_B=p["t_B"], n0=p["n0"], grid=np.array(p["grid"]),
        n_chains=p["n_chains"], bandwidth=p.get("bandwidth"), seed=seed,
        dt=p.get("dt", 0.01), time_cap=p.get("time_cap"))
    m = len(est.grid_points)
    rows = [[i, j, float(est.overlap_matrix[i, j])]
            for i in range(m) for j in range(m)]
    tables = [Table("overlap", ["i", "j", "overlap"], rows),
              Table("summary", ["q_hat", "q_stderr", "bandwidth", "drop_fraction"],
                    [[est.q_hat, est.q_stderr, est.bandwidth, est.drop_fraction]])]
    checks = []
    if "q_hat_min" in tol:
        _check(checks, "q_hat_min", est.q_hat, tol["q_hat_min"],
               est.q_hat >= tol["q_hat_min"])
    return tables, checks


def _run_exit_probe(model, label, p, tol, seed):
    res = ergodicity.exit_time_probe(model, R=p["R"], t0=p["t0"],
                                     grid=np.array(p["grid"]),
                                     n_paths=p["n_paths"], seed=seed,
                                     dt=p.get("dt", 0.01))
    rows = [[*map(float, g), float(pv), float(se)]
            for g, pv, se in zip(res.grid, res.p_values, res.stderrs)]
    d = res.grid.shape[1]
    tables = [Table("probe", [f"x_{c + 1}" for c in range(d)] + ["p", "stderr"],
                    rows),
              Table("summary", ["p_min"], [[res.p_min]])]
    checks = []
    if "p_min_gt" in tol:
        _check(checks, "p_min_gt", res.p_min, tol["p_min_gt"],
               res.p_min > tol["p_min_gt"])
    return tables, checks


def _run_sup_growth(model, label, p, tol, seed):
    table = ergodicity.sup_growth_diagnostic(
        model, p=p["p"], T=p["T"], eps_list=np.array(p["eps_list"]),
        n_paths=p["n_paths"], seed=seed,
        x0=np.array(p["x0"]) if "x0" in p else None, dt=p.get("dt", 0.01))
    rows = [[float(e), float(v), float(s)]
            for e, v, s in zip(table.eps, table.values, table.stderrs)]
    tables = [Table("growth", ["eps", "value", "stderr"], rows, figure_like=True)]
    checks = []
    if "decreasing_sigmas" in tol:
        k = tol["decreasing_sigmas"]
        ok = all(table.values[i + 1] < table.values[i]
                 + k * math.hypot(table.stderrs[i], table.stderrs[i + 1])
                 for i in range(len(table.values) - 1))
        _check(checks, "scaled_sup_decreasing", 1.0 if ok else 0.0, 1.0, ok)
    return tables, checks


def _run_poisson(model, label, p, tol, seed):
    mu = _build_measure(model, p["mu"], rng.derive_seed(seed, "mu"))
    f = models.FUNCTION_REGISTRY[p["f"]]()
    fc = poisson_mod.center_function(f, mu)
    sol = poisson_mod.solve_poisson_mc(model, fc, np.array(p["query_points"]),
                                       horizon_N=p["horizon_N"],
                                       n_paths=p["n_paths"], dt=p["dt"],
                                       seed=seed)
    d = sol.query_points.shape[1]
    oracle = models.oracle_for(label)
    u_star = None
    if oracle is not None and p["f"] in ("coord", "square_centered"):
        key = "coord" if p["f"] == "coord" else "square_centered"
        u_star = oracle.poisson_solutions.get(key)
    rows = []
    worst = 0.0
    ok = True
    for q, u, se in zip(sol.query_points, sol.u_values, sol.stderrs):
        row = [*map(float, q), float(u), float(se)]
        if u_star is not None:
            err = abs(u - u_star(q[0]))
            row.append(float(err))
            worst = max(worst, err)
            if "sigmas" in tol and "abs_floor" in tol:
                if err > max(tol["sigmas"] * se, tol["abs_floor"]):
                    ok = False
        rows.append(row)
    head = [f"x_{c + 1}" for c in range(d)] + ["u", "stderr"]
    if u_star is not None:
        head.append("abs_error")
    tables = [Table("solution", head, rows),
              Table("meta", ["horizon_N", "tail_bound", "centering_constant"],
                    [[sol.horizon_N, sol.tail_bound_estimate, fc.mu_mean]])]
    checks = []
    if u_star is not None and "sigmas" in tol and "abs_floor" in tol:
        _check(checks, "oracle_max_error", worst, tol["abs_floor"], ok)
    return tables, checks


def _run_residual(model, label, p, tol, seed):
    mu = _build_measure(model, p["mu"], rng.derive_seed(seed, "mu"))
    f = models.FUNCTION_REGISTRY[p["f"]]()
    fc = poisson_mod.center_function(f, mu)
    sol = poisson_mod.solve_poisson_mc(model, fc, np.array(p["query_points"]),
                                       horizon_N=p["horizon_N"],
                                       n_paths=p["n_paths"], dt=p["dt"],
                                       seed=seed)
    res = poisson_mod.poisson_residual(model, sol, fc, t=p["t"],
                                       n_paths=p["n_residual_paths"],
                                       seed=rng.derive_seed(seed, "residual"))
    d = res.query_points.shape[1]
    rows = [[*map(float, q), float(r), float(se)]
            for q, r, se in zip(res.query_points, res.residuals, res.stderrs)]
    tables = [Table("residual", [f"x_{c + 1}" for c in range(d)]
                    + ["residual", "stderr"], rows)]
    checks = []
    if "sigmas" in tol and "abs_floor" in tol:
        ok = all(abs(r) <= max(tol["sigmas"] * se, tol["abs_floor"])
                 for r, se in zip(res.residuals, res.stderrs))
        _check(checks, "residual_zero", float(np.abs(res.residuals).max()),
               tol["abs_floor"], ok)
    return tables, checks


def _run_effective(system, p, tol, seed):
    mu = _build_measure(system.fast, p["mu"], rng.derive_seed(seed, "mu"))
    eff = averaging.build_effective_model(
        system, np.array(p["y_grid"]), mu, n_mu=p["n_mu"], n_paths=p["n_paths"],
        horizon_N=p["horizon_N"], dt=p["dt"], seed=seed)
    ys = eff.axes[0]
    rows = []
    oracle = models.oracle_for(system.label)
    drift_ok = True
    diff_ok = True
    for i, y in enumerate(ys):
        b = float(eff.b_bar[i, 0])
        a = float(eff.a_bar[i, 0, 0])
        row = [float(y), b, float(eff.b_stderr[i, 0]), a,
               float(eff.a_stderr[i, 0, 0])]
        if oracle is not None:
            b_star = float(oracle.effective_drift(y))
            a_star = float(oracle.effective_diffusion(y))
            row += [b_star, a_star]
            if "drift_tol_scale" in tol:
                if abs(b - b_star) > tol["drift_tol_scale"] * (1 + abs(y)):
                    drift_ok = False
            if "diff_tol_abs" in tol and abs(a - a_star) > tol["diff_tol_abs"]:
                diff_ok = False
            if "diff_tol_rel" in tol and abs(a - a_star) > tol["diff_tol_rel"] * a_star:
                diff_ok = False
        rows.append(row)
    head = ["y", "b_bar", "b_stderr", "a_bar", "a_stderr"]
    if oracle is not None:
        head += ["b_oracle", "a_oracle"]
    tables = [Table("coefficients", head, rows, figure_like=True)]
    checks = []
    if oracle is not None and "drift_tol_scale" in tol:
        _check(checks, "drift_matches_oracle", 1.0 if drift_ok else 0.0, 1.0,
               drift_ok)
    if oracle is not None and ("diff_tol_abs" in tol or "diff_tol_rel" in tol):
        _check(checks, "diffusion_matches_oracle", 1.0 if diff_ok else 0.0, 1.0,
               diff_ok)
    return tables, checks


def _run_green_kubo(system, p, tol, seed):
    y = np.array(p["y"])
    dt = p.get("dt", 0.01)
    thinning = round(p["record_dt"] / dt)
    if thinning < 1 or abs(thinning * dt - p["record_dt"]) > 1e-9:
        raise errors.ConfigError("record_dt must be a multiple of dt")
    burn_steps = round(p["burn_in"] / dt)
    x_burned = sde.run_final(system.fast, np.zeros((1, system.fast.dim_x)), dt,
                             burn_steps, rng.derive_seed(seed, "burn"))
    n_steps = round(p["run_T"] / dt)
    n_steps -= n_steps % thinning
    rec, _ = sde.run_recorded(system.fast, x_burned, dt, n_steps, thinning,
                              rng.derive_seed(seed, "run"))
    times = np.arange(1, rec.shape[1] + 1) * (thinning * dt)
    run = sde.Path(times, rec[0])
    gk = averaging.green_kubo_diffusion(system, y, run, lag_max=p["lag_max"])
    rows = [[float(l), float(gk.running[0, 0, i])]
            for i, l in enumerate(gk.lags)]
    tables = [Table("running_integral", ["lag", "running"], rows,
                    figure_like=True),
              Table("summary", ["a_gk", "stderr", "plateau_lag", "plateau_found"],
                    [[float(gk.a_gk[0, 0]), float(gk.stderr[0, 0]),
                      gk.plateau_lag, 1.0 if gk.plateau_found else 0.0]])]
    checks = []
    if "direct" in p:
        d = p["direct"]
        mu = _build_measure(system.fast, p["mu"], rng.derive_seed(seed, "mu"))
        co = averaging.effective_coefficients(
            system, y, mu, n_mu=d["n_mu"], n_paths=d["n_paths"],
            horizon_N=d["horizon_N"], dt=dt, seed=rng.derive_seed(seed, "direct"))
        tables.append(Table("direct", ["a_direct", "stderr"],
                            [[float(co.a_bar[0, 0]), float(co.a_stderr[0, 0])]]))
        if "sigmas" in tol:
            gap = abs(float(gk.a_gk[0, 0]) - float(co.a_bar[0, 0]))
            band = tol["sigmas"] * math.hypot(float(gk.stderr[0, 0]),
                                              float(co.a_stderr[0, 0]))
            _check(checks, "green_kubo_vs_direct", gap, band, gap <= band)
    return tables, checks


def _run_converge(system, p, tol, seed):
    times = np.array(p["times"])
    n_paths = p["n_paths"]
    if p["limit"] == "analytic":
        oracle = models.oracle_for(system.label)
        if oracle is None or oracle.limit_marginal is None:
            raise errors.ConfigError(
                "analytic limit is only available for benchmark systems with "
                "a known limit marginal")
        g = rng.stream(rng.derive_seed(seed, "analytic-limit"))
        snaps = np.empty((n_paths, len(times), system.dim_y))
        y0 = float(np.array(p["y0"])[0])
        for ti, t in enumerate(times):
            m, v = oracle.limit_marginal(y0, float(t))
            snaps[:, ti, 0] = m + math.sqrt(v) * g.standard_normal(n_paths)
        limit = snaps
    else:
        b = p["build"]
        mu = _build_measure(system.fast, p["mu"], rng.derive_seed(seed, "mu"))
        limit = averaging.build_effective_model(
            system, np.array(b["y_grid"]), mu, n_mu=b["n_mu"],
            n_paths=b["n_paths"], horizon_N=b["horizon_N"], dt=b["dt"],
            seed=rng.derive_seed(seed, "build"))
    rep = averaging.weak_convergence_report(
        system, limit, np.array(p["y0"]), np.array(p["x0"]),
        np.array(p["eps_list"]), times, n_paths=n_paths,
        fast_dt=p["fast_dt"], seed=seed)
    rows = [[float(e), float(t), float(rep.distances[i, j]), float(rep.trend[j])]
            for i, e in enumerate(rep.eps_list)
            for j, t in enumerate(rep.times)]
    tables = [Table("distances", ["eps", "t", "distance", "trend_stat"], rows,
                    figure_like=True)]
    checks = []
    if "ks_final_max" in tol:
        v = float(rep.distances[-1, -1])
        _check(checks, "distance_at_finest", v, tol["ks_final_max"],
               v <= tol["ks_final_max"])
    if "trend_min" in tol:
        ok = bool((rep.trend > tol["trend_min"]).all())
        _check(checks, "trend_positive", float(rep.trend.min()),
               tol["trend_min"], ok)
    return tables, checks


_HANDLERS = {
    "invariant": _run_invariant,
    "mixing": _run_mixing,
    "doeblin": _run_doeblin,
    "exit-probe": _run_exit_probe,
    "sup-growth": _run_sup_growth,
    "poisson": _run_poisson,
    "residual": _run_residual,
    "effective": _run_effective,
    "green-kubo": _run_green_kubo,
    "converge": _run_converge,
}


# ---------------------------------------------------------------------------
# emission

def _format_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return sde.format_float(float(v))
    return str(v)


def emit_report(report: Report, output_dir) -> list:
    """One CSV per table, long-format twins for figure-like tables, and
    report.json.  Files are write-once: existing targets raise."""
    import os

    os.makedirs(output_dir, exist_ok=True)
    written = []
    try:
        for table in report.tables:
            path = os.path.join(output_dir, f"{report.experiment}_{table.name}.csv")
            if os.path.exists(path):
                raise errors.IOFailure(f"refusing to overwrite {path}")
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(",".join(table.header) + "\n")
                for row in table.rows:
                    fh.write(",".join(_format_cell(v) for v in row) + "\n")
            written.append(path)
            if table.figure_like and len(table.header) >= 2:
                lf = os.path.join(output_dir,
                                  f"{report.experiment}_{table.name}_long.csv")
                if os.path.exists(lf):
                    raise errors.IOFailure(f"refusing to overwrite {lf}")
                with open(lf, "w", encoding="utf-8", newline="") as fh:
                    fh.write("series,x,y\n")
                    xname = table.header[0]
                    for row in table.rows:
                        for col, val in zip(table.header[1:], row[1:]):
                            fh.write(f"{col},{_format_cell(row[0])},"
                                     f"{_format_cell(val)}\n")
                written.append(lf)
        rp = os.path.join(output_dir, "report.json")
        if os.path.exists(rp):
            raise errors.IOFailure(f"refusing to overwrite {rp}")
        payload = {
            "experiment": report.experiment,
            "model": report.model_label,
            "seed": report.seed,
            "params": report.params,
            "checks": [{"name": c.name, "value": c.value,
                        "threshold": c.threshold, "pass": c.passed}
                       for c in report.checks],
            "pass": report.passed,
            "wall_time_s": report.wall_time_s,
            "backend": report.backend,
            "versions": report.versions,
            "tables": [os.path.basename(w) for w in written],
        }
        with open(rp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(rp)
    except OSError as e:
        raise errors.IOFailure(str(e)) from e
    return written
