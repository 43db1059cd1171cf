"""Experiment engine: seeded runs that emit plot-ready records.

Five experiments compose the library:

* ``gap_sweep``      -- operator-norm gap between a kernel matrix and its
                        linear surrogate across growing dimension;
* ``equivalence``    -- test error of kernel ridge regression vs the
                        matched affine model on teacher-generated data;
* ``gd_dynamics``    -- the same comparison along the closed-form
                        gradient-descent trajectories;
* ``gp_optimality``  -- Gaussian-process data: posterior mean (the Bayes
                        predictor), the matched affine model, and the
                        Bayes risk floor;
* ``counterexample`` -- the gp_optimality pipeline on low-rank mixture
                        inputs, where the matching breaks down and the
                        kernel model wins.

Every run is a pure function of (resolved config, master seed): child
seeds are derived per (p, n, trial, role), records are sorted on a fixed
key before writing, and the CSV body contains no timestamps.  A JSON
sidecar carries the full config, library version, and any per-trial
failures (a failing trial never aborts a run).
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import (
    FeatureModel,
    ReluTeacher,
    child_rng,
    child_seed,
    gp_teacher_outputs,
    mixture_covariance,
    sample_features,
)
from .estimators import (
    equivalent_regularizers,
    fit_krr,
    fit_linear_ridge,
    gd_kernel_trajectory,
    gd_linear_trajectory,
    gp_posterior,
    linear_risk,
    normalized_test_error,
    predict_linear,
)
from .kernels import cross_gram, gram, kernel_from_config
from .linearize import CovarianceSpec, coefficients, gap_sweep, write_gap_sweep_csv

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ExperimentRecord",
    "RunResult",
    "resolve_config",
    "run_equivalence",
    "run_gd_dynamics",
    "run_gp_optimality",
    "run_counterexample",
    "run_gap_sweep",
    "run_experiment",
    "write_records_csv",
    "read_records_csv",
    "write_sidecar",
]

EXPERIMENTS = ("gap_sweep", "equivalence", "gd_dynamics", "gp_optimality",
               "counterexample")

CSV_COLUMNS = ("experiment", "trial", "seed", "p", "n", "model", "t",
               "metric", "value")


class ConfigError(ValueError):
    """The configuration is unusable; nothing was run."""


@dataclass
class ExperimentConfig:
    """Fully-resolved experiment configuration (echoed into the sidecar)."""

    experiment: str
    kernel: dict = field(default_factory=lambda: {"type": "ntk", "params": {"depth": 3}})
    covariance: dict = field(default_factory=lambda: {"kind": "identity"})
    p: tuple = (250, 500, 1000)
    n_ratios: tuple | None = (0.25, 0.5, 1.0, 2.0, 4.0)
    n_list: tuple | None = None
    n_ts: int = 200
    sigma2: float = 0.1
    lam: float | None = 0.005
    eta: float | None = None
    t_list: tuple | None = None
    teacher: dict = field(default_factory=lambda: {"kind": "relu_net", "widths": (100, 100)})
    trials: int = 5
    master_seed: int = 42
    beta: float = 1.0
    output: str | None = None

    def n_values(self, p: int) -> list[int]:
        if self.n_list:
            return [int(n) for n in self.n_list]
        return [max(2, int(round(r * p))) for r in self.n_ratios]

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("p", "n_ratios", "n_list", "t_list"):
            if d[key] is not None:
                d[key] = list(d[key])
        if isinstance(d["teacher"].get("widths"), tuple):
            d["teacher"]["widths"] = list(d["teacher"]["widths"])
        return d


_EXPERIMENT_DEFAULTS = {
    "equivalence": {},
    "gd_dynamics": {
        "n_ratios": (0.5,),
        "t_list": (0, 1, 2, 5, 10, 20, 50, 100),
    },
    "gp_optimality": {
        "kernel": {"type": "polynomial", "params": {"c": 0.1, "d": 2}},
        "teacher": {"kind": "gp"},
        "lam": None,  # lam = sigma2 makes the posterior mean Bayes optimal
        "p": (250, 500),
        "n_ratios": (0.5, 1.0, 2.0),
    },
    "counterexample": {
        "kernel": {"type": "polynomial", "params": {"c": 0.1, "d": 2}},
        "teacher": {"kind": "gp"},
        "lam": None,
        "covariance": {"kind": "low_rank_mixture", "rank": 50, "components": 2},
        "p": (500,),
        "n_ratios": (1.0,),
    },
    "gap_sweep": {
        "p": (200, 400, 800),
        "beta": 1.0,
        "kernel": {"type": "polynomial", "params": {"c": 0.1, "d": 2}},
    },
}


def resolve_config(experiment: str, *overrides: dict) -> ExperimentConfig:
    """Merge defaults, experiment defaults, and override dicts (last wins)."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
    merged: dict = dict(_EXPERIMENT_DEFAULTS[experiment])
    for ov in overrides:
        if not ov:
            continue
        unknown = set(ov) - set(ExperimentConfig.__dataclass_fields__)
        if unknown - {"experiment"}:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        ov = dict(ov)
        ov.pop("experiment", None)
        merged.update(ov)
    for key in ("p", "n_ratios", "n_list", "t_list"):
        if key in merged and merged[key] is not None:
            value = merged[key]
            if np.isscalar(value):
                value = (value,)
            merged[key] = tuple(value)
    cfg = ExperimentConfig(experiment=experiment, **merged)
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: ExperimentConfig) -> None:
    try:
        kernel_from_config(cfg.kernel)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad kernel config: {exc}") from None
    if cfg.covariance.get("kind") not in ("identity", "diagonal", "dense",
                                          "low_rank_mixture"):
        raise ConfigError(f"bad covariance config: {cfg.covariance}")
    if not cfg.p or any(int(p) < 2 for p in cfg.p):
        raise ConfigError(f"p must be a list of dimensions >= 2, got {cfg.p}")
    if cfg.trials < 1:
        raise ConfigError(f"trials must be >= 1, got {cfg.trials}")
    if cfg.n_ts < 1:
        raise ConfigError(f"n_ts must be >= 1, got {cfg.n_ts}")
    if cfg.sigma2 < 0:
        raise ConfigError(f"sigma2 must be nonnegative, got {cfg.sigma2}")
    if cfg.lam is not None and cfg.lam <= 0:
        raise ConfigError(f"lam must be positive, got {cfg.lam}")
    if not cfg.n_list and not cfg.n_ratios:
        raise ConfigError("one of n_list / n_ratios is required")
    max_n = max(max(cfg.n_values(int(p))) for p in cfg.p)
    if cfg.n_ts > 4 * max_n:
        warnings.warn(
            f"n_ts={cfg.n_ts} is large relative to the biggest training size "
            f"{max_n}; per-point agreement guarantees assume n_ts = O(n_tr)",
            RuntimeWarning,
            stacklevel=2,
        )


@dataclass
class ExperimentRecord:
    """One (trial, n, model, t, metric) measurement."""

    experiment: str
    trial: int
    seed: int
    p: int
    n: int
    model: str
    t: int | None
    metric: str
    value: float


@dataclass
class RunResult:
    records: list
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures


def _cov_for_trial(cfg: ExperimentConfig, p: int, trial: int) -> CovarianceSpec:
    cov = cfg.covariance
    kind = cov["kind"]
    if kind == "identity":
        return CovarianceSpec.identity(p)
    if kind == "diagonal":
        values = np.asarray(cov["values"], dtype=np.float64).reshape(-1)
        if values.size == 1:
            values = np.full(p, values[0])
        return CovarianceSpec.diagonal(values)
    if kind == "dense":
        return CovarianceSpec.dense(np.asarray(cov["matrix"], dtype=np.float64))
    # low-rank mixture factors are redrawn per trial
    seed = child_seed(cfg.master_seed, "cov", p, trial)
    return mixture_covariance(p, int(cov["rank"]), int(cov.get("components", 2)),
                              seed=seed)


def _teacher_responses(cfg, kernel, X_tr, X_ts, p, n, trial):
    """(y_tr, y_ts) under the configured teacher.

    Fixed-function teachers (relu_net, oracle_linear) are seeded without
    n, so one trial sees the same ground truth along the whole n axis;
    a GP teacher is a fresh joint draw at the sampled points.
    """
    kind = cfg.teacher["kind"]
    fn_seed = child_seed(cfg.master_seed, "teacher", p, trial)
    if kind == "relu_net":
        teacher = ReluTeacher(cfg.teacher.get("widths", (100, 100)), p, seed=fn_seed)
        rng = child_rng(cfg.master_seed, "noise", p, n, trial)
        noise = np.sqrt(cfg.sigma2) * rng.standard_normal(n + X_ts.shape[0])
        return teacher(X_tr) + noise[:n], teacher(X_ts) + noise[n:]
    if kind == "gp":
        teacher_kernel = kernel
        if "kernel" in cfg.teacher:
            teacher_kernel = kernel_from_config(cfg.teacher["kernel"])
        X_all = np.vstack([X_tr, X_ts])
        return gp_teacher_outputs(teacher_kernel, X_all, n, cfg.sigma2,
                                  child_seed(cfg.master_seed, "teacher", p, n, trial))
    if kind == "oracle_linear":
        rng = np.random.default_rng(fn_seed)
        w = cfg.teacher.get("w")
        w = rng.standard_normal(p) / np.sqrt(p) if w is None else np.asarray(w)
        b = float(cfg.teacher.get("b", 0.0))
        rng_noise = child_rng(cfg.master_seed, "noise", p, n, trial)
        noise = np.sqrt(cfg.sigma2) * rng_noise.standard_normal(n + X_ts.shape[0])
        return (X_tr @ w + b + noise[:n], X_ts @ w + b + noise[n:])
    raise ConfigError(f"unknown teacher kind {kind!r}")


def _prediction_gap(f_ref: np.ndarray, f_other: np.ndarray) -> float:
    """median |f_ref - f_other| / std(f_ref)."""
    scale = float(np.std(f_ref))
    if scale == 0.0:
        return float("inf")
    return float(np.median(np.abs(f_ref - f_other))) / scale


def _check_equivalence_precondition(cfg, kernel):
    """Equivalence-style runs need finite coefficients with c1, c2 > 0."""
    p0 = int(cfg.p[0])
    cov = _cov_for_trial(cfg, p0, 0)
    lam = cfg.lam if cfg.lam is not None else cfg.sigma2
    try:
        coeffs = coefficients(kernel, cov)
        equivalent_regularizers(lam, coeffs, p0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _foreach_cell(cfg, body) -> RunResult:
    """Run ``body(p, n, trial, seed) -> list[ExperimentRecord]`` per cell.

    Single-trial failures are collected, not raised; determinism comes
    from the derived seeds, so execution order is irrelevant.
    """
    records: list[ExperimentRecord] = []
    failures: list[dict] = []
    for p in cfg.p:
        p = int(p)
        for n in cfg.n_values(p):
            for trial in range(int(cfg.trials)):
                seed = child_seed(cfg.master_seed, cfg.experiment, p, n, trial)
                try:
                    records.extend(body(p, n, trial, seed))
                except Exception as exc:
                    failures.append({
                        "p": p, "n": n, "trial": trial, "seed": seed,
                        "error": f"{type(exc).__name__}: {exc}",
                    })
    records.sort(key=lambda r: (r.p, r.n, r.trial, r.model,
                                -1 if r.t is None else r.t, r.metric))
    return RunResult(records=records, failures=failures)


def run_equivalence(cfg: ExperimentConfig) -> RunResult:
    """Kernel ridge regression vs the matched affine model (closed form)."""
    kernel = kernel_from_config(cfg.kernel)
    lam = cfg.lam if cfg.lam is not None else cfg.sigma2
    _check_equivalence_precondition(cfg, kernel)

    def body(p, n, trial, seed):
        cov = _cov_for_trial(cfg, p, trial)
        model = FeatureModel(cov=cov)
        X_tr = sample_features(model, n, child_seed(cfg.master_seed, "xtr", p, n, trial))
        X_ts = sample_features(model, cfg.n_ts, child_seed(cfg.master_seed, "xts", p, n, trial))
        y_tr, y_ts = _teacher_responses(cfg, kernel, X_tr, X_ts, p, n, trial)
        K = gram(kernel, X_tr)
        C = cross_gram(kernel, X_ts, X_tr)
        krr = fit_krr(K, y_tr, lam)
        f_krr = C @ krr.alpha
        coeffs = coefficients(kernel, cov)
        lam1, lam2 = equivalent_regularizers(lam, coeffs, p)
        lin = fit_linear_ridge(X_tr, y_tr, lam1, lam2)
        f_lin = predict_linear(lin, X_ts)
        noise_floor = cfg.sigma2 / float(np.mean(y_ts**2))
        rec = lambda model_name, metric, value, t=None: ExperimentRecord(
            cfg.experiment, trial, seed, p, n, model_name, t, metric, float(value))
        return [
            rec("krr", "test_error", normalized_test_error(y_ts, f_krr)),
            rec("linear", "test_error", normalized_test_error(y_ts, f_lin)),
            rec("oracle", "noise_floor", noise_floor),
            rec("gap", "prediction_gap", _prediction_gap(f_krr, f_lin)),
        ]

    return _foreach_cell(cfg, body)


def run_gd_dynamics(cfg: ExperimentConfig) -> RunResult:
    """Kernel vs scaled-linear gradient-descent trajectories."""
    kernel = kernel_from_config(cfg.kernel)
    lam = cfg.lam if cfg.lam is not None else cfg.sigma2
    _check_equivalence_precondition(cfg, kernel)
    t_list = cfg.t_list or (0, 1, 2, 5, 10, 20, 50, 100)

    def body(p, n, trial, seed):
        cov = _cov_for_trial(cfg, p, trial)
        model = FeatureModel(cov=cov)
        X_tr = sample_features(model, n, child_seed(cfg.master_seed, "xtr", p, n, trial))
        X_ts = sample_features(model, cfg.n_ts, child_seed(cfg.master_seed, "xts", p, n, trial))
        y_tr, y_ts = _teacher_responses(cfg, kernel, X_tr, X_ts, p, n, trial)
        K = gram(kernel, X_tr)
        C = cross_gram(kernel, X_ts, X_tr)
        coeffs = coefficients(kernel, cov)
        traj_k = gd_kernel_trajectory(K, C, y_tr, lam, cfg.eta, t_list)
        # the two dynamics are compared under one shared step size
        traj_l = gd_linear_trajectory(X_tr, X_ts, y_tr, coeffs, lam, traj_k.eta,
                                      t_list)
        out = []
        rec = lambda model_name, metric, value, t: ExperimentRecord(
            cfg.experiment, trial, seed, p, n, model_name, t, metric, float(value))
        for idx, t in enumerate(traj_k.steps):
            t = int(t)
            fk = traj_k.predictions[idx]
            fl = traj_l.predictions[idx]
            out.append(rec("gd_kernel_t", "test_error",
                           normalized_test_error(y_ts, fk), t))
            out.append(rec("gd_linear_t", "test_error",
                           normalized_test_error(y_ts, fl), t))
            out.append(rec("gap", "prediction_gap", _prediction_gap(fk, fl), t))
        return out

    return _foreach_cell(cfg, body)


def _run_gp_pipeline(cfg: ExperimentConfig) -> RunResult:
    """Shared engine for gp_optimality and counterexample."""
    kernel = kernel_from_config(cfg.kernel)
    sigma2 = cfg.sigma2
    lam = cfg.lam if cfg.lam is not None else sigma2

    def body(p, n, trial, seed):
        cov = _cov_for_trial(cfg, p, trial)
        model = FeatureModel(cov=cov)
        X_all = sample_features(model, n + cfg.n_ts,
                                child_seed(cfg.master_seed, "x", p, n, trial))
        X_tr, X_ts = X_all[:n], X_all[n:]
        y_tr, y_ts = _teacher_responses(cfg, kernel, X_tr, X_ts, p, n, trial)
        post = gp_posterior(kernel, X_tr, y_tr, X_ts, sigma2)
        coeffs = coefficients(kernel, cov)
        lam1, lam2 = equivalent_regularizers(lam, coeffs, p)
        lin = fit_linear_ridge(X_tr, y_tr, lam1, lam2)
        f_lin = predict_linear(lin, X_ts)
        e_opt = post.variance
        e_lin = linear_risk(post, f_lin)
        mean_sq = float(np.mean(y_ts**2))
        rec = lambda model_name, metric, value, t=None: ExperimentRecord(
            cfg.experiment, trial, seed, p, n, model_name, t, metric, float(value))
        return [
            rec("gp_opt", "test_error", normalized_test_error(y_ts, post.mean)),
            rec("linear", "test_error", normalized_test_error(y_ts, f_lin)),
            rec("oracle", "bayes_risk_normalized", float(np.mean(e_opt)) / mean_sq),
            rec("gap", "risk_gap_rel",
                (float(np.mean(e_lin)) - float(np.mean(e_opt))) / float(np.mean(e_opt))),
        ]

    return _foreach_cell(cfg, body)


def run_gp_optimality(cfg: ExperimentConfig) -> RunResult:
    """Bayes-optimal kernel model vs the matched affine model on GP data."""
    return _run_gp_pipeline(cfg)


def run_counterexample(cfg: ExperimentConfig) -> RunResult:
    """The gp_optimality pipeline on low-rank mixture inputs.

    Outside the uniform proportional regime the surrogate matching is
    inaccurate and the kernel model is expected to beat the affine one.
    """
    if cfg.covariance.get("kind") != "low_rank_mixture":
        raise ConfigError("counterexample requires a low_rank_mixture covariance")
    return _run_gp_pipeline(cfg)


def run_gap_sweep(cfg: ExperimentConfig) -> RunResult:
    """Thin wrapper over :func:`kerlin.linearize.gap_sweep`."""
    kernel = kernel_from_config(cfg.kernel)

    def cov_for_p(p: int) -> CovarianceSpec:
        return _cov_for_trial(cfg, p, 0)

    records = gap_sweep(kernel, cov_for_p, [int(p) for p in cfg.p],
                        cfg.beta, cfg.trials, cfg.master_seed)
    failures = [
        {"p": r.p, "n": r.n, "trial": r.trial, "seed": r.seed, "error": r.error}
        for r in records if r.error is not None
    ]
    return RunResult(records=records, failures=failures)


_RUNNERS = {
    "equivalence": run_equivalence,
    "gd_dynamics": run_gd_dynamics,
    "gp_optimality": run_gp_optimality,
    "counterexample": run_counterexample,
    "gap_sweep": run_gap_sweep,
}


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    return _RUNNERS[cfg.experiment](cfg)


def write_records_csv(records, path) -> None:
    """Records with the fixed column order; floats written round-trippably."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow([
                r.experiment, r.trial, r.seed, r.p, r.n, r.model,
                "" if r.t is None else r.t, r.metric, repr(r.value),
            ])


def read_records_csv(path) -> list[ExperimentRecord]:
    """Inverse of :func:`write_records_csv`."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV columns: {reader.fieldnames}")
        for row in reader:
            out.append(ExperimentRecord(
                experiment=row["experiment"],
                trial=int(row["trial"]),
                seed=int(row["seed"]),
                p=int(row["p"]),
                n=int(row["n"]),
                model=row["model"],
                t=None if row["t"] == "" else int(row["t"]),
                metric=row["metric"],
                value=float(row["value"]),
            ))
    return out


def write_sidecar(path, cfg: ExperimentConfig, result: RunResult) -> None:
    """Provenance sidecar: config, version, failures, timestamp."""
    payload = {
        "config": cfg.to_dict(),
        "library_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "n_records": len(result.records),
        "n_failures": len(result.failures),
        "failures": result.failures,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def write_outputs(cfg: ExperimentConfig, result: RunResult, out_path) -> tuple[Path, Path]:
    """Write the CSV (schema depends on the experiment) plus the sidecar."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if cfg.experiment == "gap_sweep":
        write_gap_sweep_csv(result.records, out_path)
    else:
        write_records_csv(result.records, out_path)
    sidecar = out_path.with_suffix(out_path.suffix + ".meta.json")
    write_sidecar(sidecar, cfg, result)
    return out_path, sidecar
