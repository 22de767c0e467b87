"""Command-line interface: ``fcd fit | simulate | sweep | power-bound``.

Exit codes: 0 success, 2 usage or domain error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import DomainError, FCDError, ShapeError
from .pipeline import fit_fcd
from .power import power_lower_bound, unit_power_margin
from .simulate import (
    FAMILIES,
    NOISES,
    SWEEP_PARAMETERS,
    CovarianceSpec,
    SimConfig,
    precision_matrix,
    run_sweep,
    write_replicates_csv,
    write_sweep_csv,
)
from .solvers import default_lambda_bar

log = logging.getLogger("fcd")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------- CSV input

def read_matrix(path, header: bool = False) -> np.ndarray:
    """Read a numeric CSV into a 2-D float array.

    Errors name the file, the 1-based row (as counted in the file) and column.
    """
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise UsageError(f"cannot open {path}: {exc.strerror}") from exc
    rows = []
    width = None
    with fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if header and lineno == 1:
                continue
            if not rec or all(not c.strip() for c in rec):
                continue
            if width is None:
                width = len(rec)
            elif len(rec) != width:
                raise DomainError(f"{path}: row {lineno} has {len(rec)} columns, expected {width}")
            vals = []
            for col, cell in enumerate(rec, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise DomainError(
                        f"{path}: row {lineno}, column {col}: non-numeric value {cell.strip()!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DomainError(f"{path}: row {lineno}, column {col}: non-finite value {cell.strip()!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DomainError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def read_vector(path, header: bool = False) -> np.ndarray:
    A = read_matrix(path, header)
    if A.shape[1] != 1:
        raise ShapeError(f"{path}: expected a single column, got {A.shape[1]}")
    return A[:, 0]


# ---------------------------------------------------------------- config files

def read_config(path) -> dict[str, str]:
    """Flat ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}: line {lineno}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _apply_config(parser: argparse.ArgumentParser, argv, ns_first) -> argparse.Namespace:
    """Re-parse with config-file values installed as defaults, so flags win."""
    cfg = read_config(ns_first.config)
    actions = {a.dest: a for a in parser._actions if a.dest not in ("help", "config")}
    unknown = sorted(set(cfg) - set(actions))
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    defaults = {}
    for k, raw in cfg.items():
        act = actions[k]
        if isinstance(act, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            low = raw.lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise UsageError(f"config key {k}: expected a boolean, got {raw!r}")
            defaults[k] = low in ("1", "true", "yes")
        elif raw.lower() in ("", "none"):
            defaults[k] = None
        else:
            conv = act.type or str
            try:
                defaults[k] = conv(raw)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"config key {k}: invalid value {raw!r}") from exc
            if act.choices is not None and defaults[k] not in act.choices:
                raise UsageError(f"config key {k}: {raw!r} not in {list(act.choices)}")
    parser.set_defaults(**defaults)
    return parser.parse_args(argv)


# ---------------------------------------------------------------- subcommands

def cmd_fit(a) -> int:
    if a.x is None or a.y is None:
        raise UsageError("fit needs --x and --y")
    X = read_matrix(a.x, a.header)
    y = read_vector(a.y, a.header)
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    n, p = X.shape
    if p <= 2:
        raise DomainError(f"dimension below procedure's domain: p={p} (need p >= 3)")
    lambda_bar = a.lambda_bar if a.lambda_bar is not None else default_lambda_bar(n, p)
    fit = fit_fcd(X, y, a.q, lambda_bar=lambda_bar, lam=a.lam, mu_a=a.mu_a, beta=a.beta,
                  per_column_fallback=a.per_column_fallback)
    sel = fit.selection
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    chosen = np.zeros(p, dtype=int)
    chosen[sel.selected] = 1
    with open(out / "selection.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "T", "p_value", "selected", "sign"])
        for i in range(p):
            w.writerow([i, _fmt(fit.stats.T[i]), _fmt(sel.p_values[i]), chosen[i], int(sel.signs[i])])
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t0", "threshold_found", "sigma_hat", "n_selected", "q"])
        w.writerow([_fmt(sel.t0), int(sel.threshold_found), _fmt(fit.sigma_hat), sel.n_selected, _fmt(a.q)])
    if fit.decorrelator.fallback_identity:
        log.warning("decorrelator fell back to the identity")
    print(f"selected {sel.n_selected} of {p} coordinates (t0={sel.t0:.6g}); wrote {out}")
    return EXIT_OK


_SIM_FIELDS = [f.name for f in fields(SimConfig)]
_SIM_REQUIRED = ("n", "p", "s0", "amplitude")


def _sim_config(a) -> SimConfig:
    missing = [k for k in _SIM_REQUIRED if getattr(a, k) is None]
    if missing:
        raise UsageError(f"missing required field(s): {', '.join(missing)}")
    kw = {k: getattr(a, k) for k in _SIM_FIELDS if getattr(a, k, None) is not None}
    kw["normalize_columns"] = not a.no_normalize
    kw["per_column_fallback"] = a.per_column_fallback
    return SimConfig(**kw).validate()


def _parse_values(s: str) -> list[float]:
    try:
        vals = [float(v) for v in s.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"values: cannot parse {s!r} as a comma-separated list of numbers") from exc
    if not vals:
        raise UsageError("values: empty list")
    return vals


def _write_manifest(path, a, cfg: SimConfig, command: str) -> None:
    lines = [f"# fcd {__version__}", f"# command={command}"]
    for k in _SIM_FIELDS:
        v = getattr(cfg, k)
        if k == "normalize_columns":
            lines.append(f"no_normalize={'false' if v else 'true'}")
        elif v is None:
            lines.append(f"{k}=none")
        elif isinstance(v, float):
            lines.append(f"{k}={_fmt(v)}")
        else:
            lines.append(f"{k}={v}")
    if command == "sweep":
        lines.append(f"parameter={a.parameter}")
        lines.append(f"values={a.values}")
    Path(path).write_text("\n".join(lines) + "\n")


def _run_sim(a, parameter: str, values, command: str) -> int:
    cfg = _sim_config(a)
    res = run_sweep(cfg, parameter, values, n_jobs=a.jobs, keep_replicates=a.replicates)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(res, out / "sweep.csv")
    if a.replicates:
        write_replicates_csv(res, out / "replicates.csv")
    _write_manifest(out / "manifest.txt", a, cfg, command)
    for row in res.rows:
        print(f"{res.parameter}={row.swept_value:g}  fdr_dir={row.fdr_dir_mean:.4f}±{row.fdr_dir_se:.4f}"
              f"  power={row.power_mean:.4f}  bound={row.power_bound_mean:.4f}  reps={row.reps}")
    return EXIT_OK


def cmd_simulate(a) -> int:
    if a.amplitude is None:
        raise UsageError("missing required field(s): amplitude")
    return _run_sim(a, "amplitude", [a.amplitude], "simulate")


def cmd_sweep(a) -> int:
    if a.parameter is None or a.values is None:
        raise UsageError("sweep needs --parameter and --values")
    if a.amplitude is None and a.parameter == "amplitude":
        a.amplitude = 0.0  # placeholder, replaced by the swept values
    if a.s0 is None and a.parameter == "sparsity":
        a.s0 = 0
    return _run_sim(a, a.parameter, _parse_values(a.values), "sweep")


def cmd_power_bound(a) -> int:
    if a.n is None:
        raise UsageError("missing required field(s): n")
    if a.theta0 is not None:
        theta0 = read_vector(a.theta0, a.header)
    else:
        missing = [k for k in ("s0", "amplitude", "p") if getattr(a, k) is None]
        if missing:
            raise UsageError(f"missing required field(s): {', '.join(missing)} (or pass --theta0)")
        if not (0 <= a.s0 <= a.p):
            raise DomainError(f"s0 must lie in [0, p], got {a.s0}")
        theta0 = np.zeros(a.p)
        theta0[: a.s0] = a.amplitude
    p = theta0.size
    s0 = int(np.count_nonzero(theta0))
    if s0 == 0:
        raise DomainError("power bound undefined for s0 = 0")
    if a.omega_diag is not None:
        omega = read_vector(a.omega_diag, a.header)
        if omega.size != p:
            raise ShapeError(f"Omega diagonal has {omega.size} entries, theta0 has {p}")
    else:
        spec = CovarianceSpec(a.cov_family or "identity", p, eta=a.eta if a.eta is not None else 0.1,
                              r=a.r if a.r is not None else 0.5,
                              block_size=a.block_size if a.block_size is not None else 10,
                              within_corr=a.within_corr if a.within_corr is not None else 0.5)
        omega = np.diag(precision_matrix(spec))
    sigma = 1.0 if a.sigma is None else a.sigma
    bound = power_lower_bound(theta0, a.n, sigma, omega, a.q)
    theta_min = float(np.abs(theta0[theta0 != 0]).min())
    margin = unit_power_margin(theta_min, a.n, sigma, float(omega.max()), a.q, s0, p)
    print(f"power_lower_bound={_fmt(bound)}")
    print(f"unit_power_margin={_fmt(margin)}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _common(sp):
    sp.add_argument("--config", help="key=value file; explicit flags override its values")
    sp.add_argument("--q", type=float, default=0.1, help="target directional FDR (default 0.1)")
    sp.add_argument("--header", action="store_true", help="input CSVs start with a header row")
    sp.add_argument("-v", "--verbose", action="store_true")


def _sim_args(sp):
    sp.add_argument("--n", type=int)
    sp.add_argument("--p", type=int)
    sp.add_argument("--s0", type=int)
    sp.add_argument("--amplitude", type=float)
    sp.add_argument("--cov-family", choices=FAMILIES)
    sp.add_argument("--eta", type=float)
    sp.add_argument("--r", type=float)
    sp.add_argument("--block-size", type=int)
    sp.add_argument("--within-corr", type=float)
    sp.add_argument("--noise", choices=NOISES)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--df", type=float, help="degrees of freedom for student_t noise")
    sp.add_argument("--reps", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--lambda-bar-factor", type=float,
                    help="scaled-Lasso penalty is factor*sqrt(2 log p/n) (default 0.8)")
    sp.add_argument("--mu-a", type=float, help="decorrelator level mu = mu_a sqrt(log p/n) (default 2)")
    sp.add_argument("--beta", type=float, help="row cap exponent for heavy-tailed noise")
    sp.add_argument("--per-column-fallback", action="store_true")
    sp.add_argument("--no-normalize", action="store_true", help="keep raw (unit-variance) columns")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--replicates", action="store_true", help="also write per-replicate rows")
    sp.add_argument("--out", default="fcd_out")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fcd", description="FDR control via debiased Lasso statistics")
    ap.add_argument("--version", action="version", version=f"fcd {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="select variables in a data set")
    _common(f)
    f.add_argument("--x", help="design CSV, n rows by p columns")
    f.add_argument("--y", help="response CSV, n rows by 1 column")
    f.add_argument("--lambda-bar", type=float, help="scaled-Lasso penalty (default 10 sqrt(2 log p/n))")
    f.add_argument("--lam", type=float, help="explicit Lasso penalty for the estimate")
    f.add_argument("--mu-a", type=float, default=2.0)
    f.add_argument("--beta", type=float)
    f.add_argument("--per-column-fallback", action="store_true")
    f.add_argument("--out", default="fcd_out")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="Monte Carlo run of one configuration")
    _common(s)
    _sim_args(s)
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="Monte Carlo sweep over one parameter")
    _common(w)
    _sim_args(w)
    w.add_argument("--parameter", choices=sorted(SWEEP_PARAMETERS))
    w.add_argument("--values", help="comma-separated values of the swept parameter")
    w.set_defaults(func=cmd_sweep)

    b = sub.add_parser("power-bound", help="analytic power lower bound")
    _common(b)
    b.add_argument("--theta0", help="CSV with the true coefficient vector (one column)")
    b.add_argument("--s0", type=int)
    b.add_argument("--amplitude", type=float)
    b.add_argument("--p", type=int)
    b.add_argument("--n", type=int)
    b.add_argument("--sigma", type=float)
    b.add_argument("--omega-diag", help="CSV with the precision-matrix diagonal")
    b.add_argument("--cov-family", choices=FAMILIES)
    b.add_argument("--eta", type=float)
    b.add_argument("--r", type=float)
    b.add_argument("--block-size", type=int)
    b.add_argument("--within-corr", type=float)
    b.set_defaults(func=cmd_power_bound)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if a.config:
            sub = next(act for act in ap._actions if isinstance(act, argparse._SubParsersAction))
            a = _apply_config(sub.choices[a.command], argv[argv.index(a.command) + 1:], a)
        return a.func(a)
    except (UsageError, DomainError, ShapeError) as exc:
        print(f"fcd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FCDError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"fcd: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
