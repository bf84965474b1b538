"""Command-line interface: ``simulate``, ``estimate`` and ``weights``.

Exit codes: 0 success, 1 runtime failure, 2 invalid flags, config or input schema.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .basis import BasisSpec, ExtendedFeatureSpec, design_matrix, extended_features
from .data import DataError, Dataset, fmt, load_csv, make_folds
from .estimand import EstimandKind, EstimandSpec, build_problem, imbalance
from .estimators import aml_estimate, dr_plugin_estimate, mlin_estimate, plugin_weight_estimate, riesz_weights
from .nuisance import fit_regression_adjustment
from .simulator import METHODS, HarnessConfig, SetupConfig, config_json, default_threads, run_replications
from .solver import SolverConfig, solve_weights


class UsageError(Exception):
    """Bad flags, config or input schema (exit code 2)."""


@dataclass(frozen=True)
class RunConfig:
    sigma: float = 1.0
    tol_gap: float = 1e-7
    max_iter: int = 50000
    power_iter: int = 100
    max_order: int = 3
    normalize_weights: bool = True
    include_intercept: bool = True
    extended: bool = False
    strata_widths: tuple[float, ...] = (0.05, 0.1, 0.2)
    dyadic_depth: int = 3
    column_scale: str = "indicator"
    folds: int = 10
    n_lambda: int = 50
    alpha: float = 0.05
    seed: int = 0
    zero_outcome: bool = False
    coverage_target: str = "population"

    @classmethod
    def load(cls, path=None, **overrides) -> "RunConfig":
        values = {}
        if path is not None:
            try:
                values = json.loads(Path(path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read config {path}: {exc}") from None
            if not isinstance(values, dict):
                raise UsageError("config file must hold a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        values.update({k: v for k, v in overrides.items() if v is not None})
        if "strata_widths" in values:
            values["strata_widths"] = tuple(values["strata_widths"])
        try:
            cfg = cls(**values)
            cfg.solver(), cfg.basis(1), cfg.extended_spec()
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid config: {exc}") from None
        if not 0 < cfg.alpha < 1:
            raise UsageError("alpha must lie in (0, 1)")
        return cfg

    def solver(self) -> SolverConfig:
        return SolverConfig(sigma=self.sigma, tol_gap=self.tol_gap, max_iter=self.max_iter,
                            power_iter=self.power_iter)

    def basis(self, d: int) -> BasisSpec:
        return BasisSpec(d=d, max_order=self.max_order, normalize_weights=self.normalize_weights,
                         include_intercept=self.include_intercept)

    def extended_spec(self) -> ExtendedFeatureSpec:
        return ExtendedFeatureSpec(strata_widths=self.strata_widths, dyadic_depth=self.dyadic_depth,
                                   enabled=True, column_scale=self.column_scale)

    def harness(self) -> HarnessConfig:
        return HarnessConfig(max_order=self.max_order, folds=self.folds, n_lambda=self.n_lambda, alpha=self.alpha,
                             solver=self.solver(), extended=self.extended_spec(),
                             coverage_target=self.coverage_target)


def _dumps(obj) -> str:
    # json writes floats with the shortest repr that round-trips exactly
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _finite_or_none(x):
    if x is None:
        return None
    x = float(x)
    return x if np.isfinite(x) else None


def _sidecar(out: Path) -> Path:
    return out.with_suffix(".json") if out.suffix and out.suffix != ".json" else Path(str(out) + ".diag.json")


def _read_targets(path) -> np.ndarray:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read shift targets: {exc}") from None
    try:
        values = json.loads(text)
    except json.JSONDecodeError:
        values = text.replace(",", " ").split()
    try:
        arr = np.asarray(values, dtype=float).ravel()
    except (TypeError, ValueError):
        raise UsageError(f"{path}: shift targets must be numbers") from None
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{path}: shift targets must be finite")
    return arr


def _prepare(args, cfg: RunConfig):
    try:
        ds = load_csv(args.data)
    except OSError as exc:
        raise UsageError(f"cannot read data: {exc}") from None
    if args.standardize:
        ds = ds.standardized()
    kind = EstimandKind(args.estimand)
    Phi = design_matrix(ds.X, cfg.basis(ds.d))
    if kind is EstimandKind.DIST_SHIFT:
        if args.shift_targets is None:
            raise UsageError("--shift-targets is required for the shift estimand")
        targets = _read_targets(args.shift_targets)
        if targets.shape[0] != Phi.shape[1]:
            raise UsageError(f"shift targets have length {targets.shape[0]}; the basis has {Phi.shape[1]} terms")
        spec = EstimandSpec(kind, targets)
    else:
        if kind is EstimandKind.MAR_MEAN and not np.all((ds.W == 0) | (ds.W == 1)):
            raise UsageError("mar-mean requires w in {0, 1}")
        spec = EstimandSpec(kind)
    return ds, spec, Phi


def _balance(ds: Dataset, spec: EstimandSpec, Phi, cfg: RunConfig, fit=None):
    if cfg.extended and spec.kind is not EstimandKind.DIST_SHIFT:
        if fit is None or fit.e_hat is None:
            raise UsageError("extended balance features need a treatment-intensity fit")
        Phi = np.hstack([Phi, extended_features(ds.X, fit.e_hat, cfg.extended_spec())])
    if spec.kind is EstimandKind.DIST_SHIFT and cfg.extended:
        raise UsageError("extended balance features are not defined for the shift estimand")
    bp = build_problem(spec, ds, Phi)
    return bp, solve_weights(bp, cfg.solver())


def _fit(ds, spec, Phi, cfg):
    folds = make_folds(ds.n, min(cfg.folds, ds.n), cfg.seed)
    return fit_regression_adjustment(ds, Phi, folds, spec.kind, n_lambda=cfg.n_lambda,
                                     zero_outcome=cfg.zero_outcome)


def cmd_estimate(args) -> int:
    cfg = RunConfig.load(args.config)
    ds, spec, Phi = _prepare(args, cfg)
    if spec.kind is EstimandKind.DIST_SHIFT and args.method in ("dr", "plugin-riesz"):
        raise UsageError(f"method {args.method} is unavailable for the shift estimand: its Riesz representer "
                         "is a density ratio that is not estimated here; use aml or mlin")
    needs_fit = args.method != "mlin" or (cfg.extended and spec.kind is not EstimandKind.DIST_SHIFT)
    fit = _fit(ds, spec, Phi, cfg) if needs_fit else None

    bp = None
    if args.method in ("aml", "mlin"):
        bp, ws = _balance(ds, spec, Phi, cfg, fit)
        label = args.method + ("+" if cfg.extended else "")
        if args.method == "aml":
            report = aml_estimate(ds, fit, ws, spec, cfg.alpha, bp, method=label)
        else:
            report = mlin_estimate(ds, ws, bp, method=label)
        weights = ws.gamma
        gap = ws.gap
    else:
        report = dr_plugin_estimate(ds, fit, spec, cfg.alpha) if args.method == "dr" \
            else plugin_weight_estimate(ds, fit, spec)
        weights = riesz_weights(spec, ds, fit.e_hat, fit.v_hat)[0]
        bp = build_problem(spec, ds, Phi)
        gap = None

    diag = report.diagnostics
    out = {
        "psi_hat": report.psi_hat,
        "se": _finite_or_none(report.se),
        "ci": [_finite_or_none(report.ci_low), _finite_or_none(report.ci_high)],
        "method": report.method,
        "estimand": spec.kind.value,
        "n": ds.n,
        "diagnostics": {
            "imbalance": imbalance(bp, weights).I,
            "duality_gap": gap,
            "weight_l2": float(weights @ weights) / ds.n**2,
            "plugin_term": _finite_or_none(diag.get("plugin_term")),
            "correction_term": _finite_or_none(diag.get("correction_term")),
        },
        "config_echo": {**asdict(cfg), "data": str(args.data), "standardize": bool(args.standardize),
                        "shift_targets": None if args.shift_targets is None else str(args.shift_targets)},
    }
    Path(args.out).write_text(_dumps(out), encoding="utf-8")
    return 0


def cmd_weights(args) -> int:
    cfg = RunConfig.load(args.config)
    ds, spec, Phi = _prepare(args, cfg)
    fit = _fit(ds, spec, Phi, cfg) if cfg.extended and spec.kind is not EstimandKind.DIST_SHIFT else None
    bp, ws = _balance(ds, spec, Phi, cfg, fit)
    out = Path(args.out)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "gamma"])
        for i, g in enumerate(ws.gamma):
            writer.writerow([i, fmt(g)])
    diag = {
        "primal": ws.primal,
        "dual": ws.dual,
        "gap": ws.gap,
        "relative_gap": ws.relative_gap,
        "iterations": ws.iterations,
        "converged": ws.converged,
        "tol_gap": cfg.tol_gap,
        "per_block_imbalance": {b.label: v for b, v in zip(bp.blocks, imbalance(bp, ws.gamma).per_block)},
        "estimand": spec.kind.value,
        "n": ds.n,
    }
    _sidecar(out).write_text(_dumps(diag), encoding="utf-8")
    return 0


def cmd_simulate(args) -> int:
    cfg = RunConfig.load(args.config, seed=args.seed, coverage_target=args.coverage_target)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise UsageError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
    try:
        setup = SetupConfig(args.setup, args.n, args.d, args.k, cfg.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    threads = args.threads if args.threads is not None else default_threads()
    if threads < 1:
        raise UsageError("--threads must be >= 1")
    hc = cfg.harness()
    table = run_replications(setup, methods, args.reps, threads, hc)
    out = Path(args.out)
    table.to_csv(out)
    if args.records:
        table.records_to_csv(args.records)
    sidecar = json.loads(config_json(setup, methods, args.reps, hc))
    sidecar["summary"] = [{k: _finite_or_none(v) if isinstance(v, float) else v for k, v in asdict(r).items()}
                          for r in table.rows]
    sidecar["errors"] = table.errors
    _sidecar(out).write_text(_dumps(sidecar), encoding="utf-8")
    if table.errors:
        print(f"{len(table.errors)} replication(s) failed; see {_sidecar(out)}", file=sys.stderr)
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aml", description="Augmented minimax linear estimation of linear functionals.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="replicate a simulation design and summarize methods")
    sim.add_argument("--setup", type=int, required=True, choices=[1, 2, 3, 4])
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--d", type=int, required=True)
    sim.add_argument("--k", type=int, required=True)
    sim.add_argument("--reps", type=int, default=200)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--methods", default="aml,dr", help=f"comma-separated subset of {','.join(METHODS)}")
    sim.add_argument("--threads", type=int, default=None, help="worker processes (default: $AML_THREADS or 1)")
    sim.add_argument("--config", type=Path)
    sim.add_argument("--coverage-target", choices=["population", "sample"], default=None)
    sim.add_argument("--records", type=Path, help="optional per-replication CSV")
    sim.add_argument("--out", type=Path, required=True)
    sim.set_defaults(func=cmd_simulate)

    for name, func, helptext in (("estimate", cmd_estimate, "estimate a functional from a CSV dataset"),
                                 ("weights", cmd_weights, "solve and dump minimax balancing weights")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--data", type=Path, required=True)
        p.add_argument("--estimand", required=True, choices=[k.value for k in EstimandKind])
        p.add_argument("--shift-targets", type=Path)
        p.add_argument("--config", type=Path)
        p.add_argument("--standardize", action="store_true")
        p.add_argument("--out", type=Path, required=True)
        if name == "estimate":
            p.add_argument("--method", default="aml", choices=["aml", "mlin", "dr", "plugin-riesz"])
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse exits on --help and on bad flags
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, DataError) as exc:
        print(f"aml {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"aml {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
