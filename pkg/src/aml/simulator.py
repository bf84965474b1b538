"""Simulation designs for average partial effects and a replication harness.

Every design draws ``X ~ N(0, I_d)``, a treatment ``W | X`` from a setup-specific
family and ``Y = mu(X) + W tau(X) + N(0, 1)``. Replication ``r`` of a
configuration uses its own RNG stream derived from ``(seed, setup, n, d, k, r)``,
so results do not depend on execution order or worker count.
"""

from __future__ import annotations

import csv
import json
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .basis import BasisSpec, ExtendedFeatureSpec, design_matrix, extended_features
from .data import Dataset, fmt, make_folds
from .estimand import EstimandKind, EstimandSpec, build_ape_clm
from .estimators import (aml_estimate, dr_oracle_estimate, dr_plugin_estimate, mlin_estimate,
                         plugin_weight_estimate)
from .nuisance import fit_regression_adjustment
from .solver import SolverConfig, solve_weights

METHODS = ("mlin", "aml", "mlin+", "aml+", "dr", "dr-oracle", "plugin-riesz")


@dataclass(frozen=True)
class SetupConfig:
    setup_id: int
    n: int
    d: int
    k: int
    seed: int = 0

    def __post_init__(self):
        if self.setup_id not in (1, 2, 3, 4):
            raise ValueError(f"setup_id must be in 1..4, got {self.setup_id}")
        if not 1 <= self.k <= self.d:
            raise ValueError(f"need 1 <= k <= d, got k={self.k}, d={self.d}")
        if self.n < 10:
            raise ValueError(f"n must be >= 10, got {self.n}")
        if self.setup_id == 2 and self.d < 2:
            raise ValueError("setup 2 uses x1 and x2 and needs d >= 2")


@dataclass(frozen=True, eq=False)
class OracleAnnotations:
    e: np.ndarray
    v: np.ndarray
    tau: np.ndarray
    mu: np.ndarray


def _logistic(z):
    return 1.0 / (1.0 + np.exp(-z))


def _zeta(X, k):
    return X[:, :k].sum(axis=1) / math.sqrt(k)


def signal(setup_id: int, X: np.ndarray, k: int) -> dict:
    """Design functions at the rows of ``X``: ``mu``, ``tau`` and the treatment parameters."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = X.shape[1]
    if setup_id == 1:
        zeta = _zeta(X, k)
        eta = np.sign(zeta) * zeta**2
        alpha = np.clip(_logistic(eta), 0.05, 0.95)
        return dict(mu=eta + 0.2 * (alpha - 0.5), tau=np.full(X.shape[0], -0.2), alpha=alpha)
    if setup_id == 2:
        eta = 2.0 ** (k - 1) * np.prod(X[:, :k], axis=1)
        mu = np.sign(eta) * np.sqrt(np.abs(eta))
        lam = 0.1 * np.sign(mu) + mu
        return dict(mu=mu, tau=np.maximum(X[:, 0] + X[:, 1], 0.0) / 2.0, lam=lam)
    if setup_id == 3:
        tau = np.cos(np.pi * X[:, :k] / 3.0).mean(axis=1)
        lam = 0.2 + tau**2
        return dict(mu=4.0 / d * X.sum(axis=1) + 2.0 * lam, tau=tau, lam=lam)
    if setup_id == 4:
        zeta = _zeta(X, k)
        lam = _logistic(np.sign(zeta) * zeta**2)
        return dict(mu=np.maximum(0.0, 2.0 * zeta), tau=np.sin(2.0 * np.pi * X[:, 0]), lam=lam)
    raise ValueError(f"unknown setup {setup_id}")


def oracle_moments(setup_id: int, x_row, d: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Conditional mean and variance of ``W`` given covariate rows."""
    X = np.atleast_2d(np.asarray(x_row, dtype=float))
    if X.shape[1] != d:
        raise ValueError(f"rows have {X.shape[1]} covariates, expected d={d}")
    s = signal(setup_id, X, k)
    if setup_id == 1:
        a = s["alpha"]
        return a, a * (1.0 - a) / 2.0
    if setup_id == 2:
        return s["lam"], s["lam"] ** 2
    if setup_id == 3:
        return s["lam"], s["lam"].copy()
    lam = s["lam"]
    return np.exp(lam + 1.0 / 18.0), (np.exp(1.0 / 9.0) - 1.0) * np.exp(2.0 * lam + 1.0 / 9.0)


def draw_treatment(setup_id: int, s: dict, rng: np.random.Generator) -> np.ndarray:
    if setup_id == 1:
        return rng.beta(s["alpha"], 1.0 - s["alpha"])
    if setup_id == 2:
        return rng.normal(s["lam"], np.abs(s["lam"]))
    if setup_id == 3:
        return rng.poisson(s["lam"]).astype(float)
    return np.exp(rng.normal(s["lam"], 1.0 / 3.0))


def rng_for(cfg: SetupConfig, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, cfg.setup_id, cfg.n, cfg.d, cfg.k, rep]))


def draw_dataset(cfg: SetupConfig, rep: int) -> tuple[Dataset, OracleAnnotations]:
    rng = rng_for(cfg, rep)
    X = rng.standard_normal((cfg.n, cfg.d))
    s = signal(cfg.setup_id, X, cfg.k)
    W = draw_treatment(cfg.setup_id, s, rng)
    Y = s["mu"] + W * s["tau"] + rng.standard_normal(cfg.n)
    e, v = oracle_moments(cfg.setup_id, X, cfg.d, cfg.k)
    return Dataset(X, W, Y), OracleAnnotations(e=e, v=v, tau=s["tau"], mu=s["mu"])


def true_psi(setup_id: int, d: int | None = None, k: int | None = None) -> float:
    """Population average partial effect ``E[tau(X)]`` (independent of d and k)."""
    if setup_id == 1:
        return -0.2
    if setup_id == 2:
        # x1 + x2 ~ N(0, 2) and E max(N(0, s^2), 0) = s / sqrt(2 pi)
        return 1.0 / (2.0 * math.sqrt(math.pi))
    if setup_id == 3:
        # E cos(a X) = exp(-a^2 / 2) for X ~ N(0, 1)
        return math.exp(-math.pi**2 / 18.0)
    if setup_id == 4:
        return 0.0
    raise ValueError(f"unknown setup {setup_id}")


@dataclass(frozen=True)
class HarnessConfig:
    """Method settings shared by every replication."""

    max_order: int = 3
    folds: int = 10
    n_lambda: int = 50
    alpha: float = 0.05
    solver: SolverConfig = SolverConfig()
    extended: ExtendedFeatureSpec = ExtendedFeatureSpec()
    coverage_target: str = "population"

    def __post_init__(self):
        if self.coverage_target not in ("population", "sample"):
            raise ValueError("coverage_target must be 'population' or 'sample'")


def run_one(cfg: SetupConfig, rep: int, methods, hc: HarnessConfig = HarnessConfig()) -> dict:
    """Estimates from every requested method on replication ``rep``."""
    ds, oracle = draw_dataset(cfg, rep)
    spec = EstimandSpec(EstimandKind.APE_CLM)
    Phi = design_matrix(ds.X, BasisSpec(cfg.d, hc.max_order))
    folds = make_folds(ds.n, hc.folds, int(rng_for(cfg, rep).integers(2**31)))
    fit = fit_regression_adjustment(ds, Phi, folds, EstimandKind.APE_CLM, n_lambda=hc.n_lambda)
    target = true_psi(cfg.setup_id) if hc.coverage_target == "population" else float(np.mean(oracle.tau))

    out = {}
    if {"mlin", "aml"} & set(methods):
        bp = build_ape_clm(ds, Phi)
        ws = solve_weights(bp, hc.solver)
        if "aml" in methods:
            out["aml"] = aml_estimate(ds, fit, ws, spec, hc.alpha, bp)
        if "mlin" in methods:
            out["mlin"] = mlin_estimate(ds, ws, bp)
    if {"mlin+", "aml+"} & set(methods):
        E = extended_features(ds.X, fit.e_hat, hc.extended)
        bp = build_ape_clm(ds, np.hstack([Phi, E]))
        ws = solve_weights(bp, hc.solver)
        if "aml+" in methods:
            out["aml+"] = aml_estimate(ds, fit, ws, spec, hc.alpha, bp, method="aml+")
        if "mlin+" in methods:
            out["mlin+"] = mlin_estimate(ds, ws, bp, method="mlin+")
    if "dr" in methods:
        out["dr"] = dr_plugin_estimate(ds, fit, spec, hc.alpha)
    if "dr-oracle" in methods:
        out["dr-oracle"] = dr_oracle_estimate(ds, fit, oracle.e, oracle.v, spec, hc.alpha)
    if "plugin-riesz" in methods:
        out["plugin-riesz"] = plugin_weight_estimate(ds, fit, spec)

    estimates = {m: {"psi_hat": r.psi_hat, "se": r.se, "covered": r.covers(target)} for m, r in out.items()}
    return {"target": target, "estimates": estimates}


def _run_one_safe(args):
    cfg, rep, methods, hc = args
    try:
        return rep, run_one(cfg, rep, methods, hc), None
    except Exception:  # recorded per replication and counted in the summary
        return rep, None, traceback.format_exc(limit=3)


@dataclass(frozen=True)
class SummaryRow:
    method: str
    setup: int
    n: int
    d: int
    k: int
    reps: int
    rmse: float
    bias: float
    coverage: float
    mean_se: float
    failures: int


SUMMARY_COLUMNS = [f for f in SummaryRow.__dataclass_fields__]


@dataclass
class SummaryTable:
    rows: list[SummaryRow]
    records: list[dict] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    def row(self, method: str) -> SummaryRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SUMMARY_COLUMNS)
            for r in self.rows:
                writer.writerow([format_cell(getattr(r, c)) for c in SUMMARY_COLUMNS])

    def records_to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["rep", "method", "psi_hat", "se", "covered", "true_psi"])
            for rec in self.records:
                writer.writerow([rec["rep"], rec["method"], format_cell(rec["psi_hat"]), format_cell(rec["se"]),
                                 format_cell(rec["covered"]), format_cell(rec["true_psi"])])

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "errors": list(self.errors)}


def format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return fmt(v)
    return str(v)


def summarize(cfg: SetupConfig, methods, records: list[dict], failures: int) -> list[SummaryRow]:
    rows = []
    for m in methods:
        recs = [r for r in records if r["method"] == m]
        err = np.array([r["psi_hat"] - r["true_psi"] for r in recs])
        cov = [r["covered"] for r in recs]
        ses = [r["se"] for r in recs]
        if recs:
            rmse, bias = float(np.sqrt(np.mean(err**2))), float(np.mean(err))
        else:
            rmse = bias = float("nan")
        coverage = float(np.mean(cov)) if cov and cov[0] is not None else float("nan")
        mean_se = float(np.mean(ses)) if ses and ses[0] is not None else float("nan")
        rows.append(SummaryRow(m, cfg.setup_id, cfg.n, cfg.d, cfg.k, len(recs), rmse, bias, coverage,
                               mean_se, failures))
    return rows


def default_threads() -> int:
    return int(os.environ.get("AML_THREADS", "1"))


def run_replications(cfg: SetupConfig, methods=("aml", "dr"), reps: int = 200, threads: int | None = None,
                     hc: HarnessConfig = HarnessConfig()) -> SummaryTable:
    """Replicate ``cfg`` and summarize each method by rmse, bias and coverage.

    Errors and coverage are measured against the population effect unless
    ``hc.coverage_target == "sample"``, in which case each replication is
    compared with the average of ``tau`` over its own sample. Failed
    replications are excluded from the statistics and counted.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    methods = list(methods)
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods: {unknown}")
    threads = default_threads() if threads is None else threads
    jobs = [(cfg, r, methods, hc) for r in range(reps)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_run_one_safe, jobs))
    else:
        outcomes = [_run_one_safe(j) for j in jobs]

    errors, records = [], []
    for rep, res, err in sorted(outcomes, key=lambda o: o[0]):
        if err is not None:
            errors.append(f"rep {rep}: {err}")
            continue
        for m in methods:
            records.append({"rep": rep, "method": m, "true_psi": res["target"], **res["estimates"][m]})
    return SummaryTable(rows=summarize(cfg, methods, records, len(errors)), records=records, errors=errors)


def config_json(cfg: SetupConfig, methods, reps: int, hc: HarnessConfig) -> str:
    return json.dumps({"setup": asdict(cfg), "methods": list(methods), "reps": reps, "harness": asdict(hc)},
                      indent=2, sort_keys=True)
