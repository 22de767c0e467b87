"""Synthetic designs, single-replicate runs and Monte Carlo sweeps.

Randomness
----------
Replicate ``r`` of a run with seed ``s`` draws from a Philox-4x64 counter
generator keyed by ``s XOR r`` (numpy's ``Philox``).  Normals come from
numpy's ziggurat transform of that stream.  Draw order within a replicate is
fixed: design (n x p normals), support, signs, noise.  The design is drawn
first so that configurations differing only in amplitude, sparsity or noise
share the same X for a given replicate.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .debias import bias_bound_diagnostic, constraint_violation, default_beta
from .exceptions import DomainError, FCDError, NumericalError
from .pipeline import PreparedDesign, fit_fcd, prepare_design
from .power import (
    DirectionalMetrics,
    GroundTruth,
    bound_precondition_holds,
    directional_metrics,
    power_lower_bound,
)
from .selection import SelectionResult
from .solvers import default_lambda_bar

__all__ = [
    "CovarianceSpec",
    "SimConfig",
    "Instance",
    "ReplicateResult",
    "SweepRow",
    "SweepResult",
    "build_covariance",
    "precision_matrix",
    "generate_instance",
    "run_replicate",
    "run_sweep",
    "bh_baseline",
    "write_sweep_csv",
    "write_replicates_csv",
    "SWEEP_PARAMETERS",
]

log = logging.getLogger(__name__)

FAMILIES = ("circulant", "equicorrelated", "block_diagonal", "identity")
NOISES = ("gaussian", "student_t")
SWEEP_PARAMETERS = {"amplitude": "amplitude", "correlation": "eta", "sparsity": "s0"}
_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class CovarianceSpec:
    family: str
    p: int
    eta: float = 0.1  # circulant decay
    r: float = 0.5  # equicorrelation
    block_size: int = 10
    within_corr: float = 0.5

    def validate(self) -> "CovarianceSpec":
        if self.family not in FAMILIES:
            raise DomainError(f"cov_family must be one of {FAMILIES}, got {self.family!r}")
        if self.p < 1:
            raise DomainError(f"p must be positive, got {self.p}")
        if self.family == "circulant" and not (0.0 < self.eta < 1.0):
            raise DomainError(f"eta must lie in (0, 1), got {self.eta}")
        if self.family == "equicorrelated" and not (0.0 < self.r < 1.0):
            raise DomainError(f"r must lie in (0, 1), got {self.r}")
        if self.family == "block_diagonal":
            if self.block_size < 1:
                raise DomainError(f"block_size must be >= 1, got {self.block_size}")
            if not (0.0 <= self.within_corr < 1.0):
                raise DomainError(f"within_corr must lie in [0, 1), got {self.within_corr}")
        return self


def build_covariance(spec: CovarianceSpec) -> np.ndarray:
    """Population covariance of the requested family (unit diagonal)."""
    spec.validate()
    p = spec.p
    if spec.family == "identity":
        return np.eye(p)
    if spec.family == "circulant":
        idx = np.arange(p)
        return spec.eta ** np.abs(idx[:, None] - idx[None, :]).astype(float)
    if spec.family == "equicorrelated":
        return (1.0 - spec.r) * np.eye(p) + spec.r * np.ones((p, p))
    Sigma = np.eye(p)
    for start in range(0, p, spec.block_size):
        stop = min(start + spec.block_size, p)
        Sigma[start:stop, start:stop] = spec.within_corr
    np.fill_diagonal(Sigma, 1.0)
    return Sigma


def equicorrelated_precision_coefficients(p: int, r: float) -> tuple[float, float]:
    """Diagonal ``a`` and off-diagonal ``b`` of ``((1-r)I + r 11')^{-1} = (a-b)I + b 11'``."""
    den = (p - 2) * r - (p - 1) * r * r + 1.0
    return ((p - 2) * r + 1.0) / den, -r / den


def precision_matrix(spec: CovarianceSpec) -> np.ndarray:
    """Inverse of :func:`build_covariance`; closed form for the equicorrelated family."""
    spec.validate()
    p = spec.p
    if spec.family == "identity":
        return np.eye(p)
    if spec.family == "equicorrelated":
        a, b = equicorrelated_precision_coefficients(p, spec.r)
        return (a - b) * np.eye(p) + b * np.ones((p, p))
    Sigma = build_covariance(spec)
    cond = np.linalg.cond(Sigma)
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericalError(f"covariance is near-singular (condition number {cond:.3g})")
    Omega = np.linalg.inv(Sigma)
    return 0.5 * (Omega + Omega.T)


@dataclass(frozen=True)
class SimConfig:
    n: int
    p: int
    s0: int
    amplitude: float
    cov_family: str = "circulant"
    eta: float = 0.1
    r: float = 0.5
    block_size: int = 10
    within_corr: float = 0.5
    q: float = 0.1
    noise: str = "gaussian"
    sigma: float = 1.0  # noise sd (gaussian) or scale (student_t)
    df: float = 5.0
    reps: int = 100
    seed: int = 0
    normalize_columns: bool = True
    # lambda_bar = factor * sqrt(2 log p / n). The proof constant 10 zeroes the Lasso at
    # simulation scale and leaves sigma_hat absorbing the signal; 0.8 keeps FDR_dir near q
    # while recovering power.
    lambda_bar_factor: float = 0.8
    mu_a: float = 2.0
    beta: float | None = None
    per_column_fallback: bool = False

    def cov_spec(self) -> CovarianceSpec:
        return CovarianceSpec(self.cov_family, self.p, self.eta, self.r,
                              self.block_size, self.within_corr)

    def validate(self) -> "SimConfig":
        if self.n < 2:
            raise DomainError(f"n must be >= 2, got {self.n}")
        if self.p < 3:
            raise DomainError(f"p must be >= 3, got {self.p}")
        if not (0 <= self.s0 <= self.p):
            raise DomainError(f"s0 must lie in [0, p], got {self.s0}")
        if not (self.amplitude >= 0 and math.isfinite(self.amplitude)):
            raise DomainError(f"amplitude must be finite and >= 0, got {self.amplitude}")
        if not (0.0 < self.q <= 1.0):
            raise DomainError(f"q must lie in (0, 1], got {self.q}")
        if self.noise not in NOISES:
            raise DomainError(f"noise must be one of {NOISES}, got {self.noise!r}")
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if self.noise == "student_t" and not self.df > 2:
            raise DomainError(f"df must exceed 2, got {self.df}")
        if self.noise == "student_t" and self.beta is None and not self.df > 4:
            raise DomainError(f"df must exceed 4 to derive beta, got {self.df}; pass beta")
        if self.reps < 1:
            raise DomainError(f"reps must be >= 1, got {self.reps}")
        if not (0 <= self.seed <= _U64):
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not self.lambda_bar_factor > 0:
            raise DomainError(f"lambda_bar_factor must be positive, got {self.lambda_bar_factor}")
        if not self.mu_a > 0:
            raise DomainError(f"mu_a must be positive, got {self.mu_a}")
        self.cov_spec().validate()
        return self

    @property
    def noise_sd(self) -> float:
        if self.noise == "gaussian":
            return self.sigma
        return self.sigma * math.sqrt(self.df / (self.df - 2.0))

    @property
    def row_cap_beta(self) -> float | None:
        """Row-cap exponent for the decorrelator; active only for non-Gaussian noise."""
        if self.noise == "gaussian":
            return None
        if self.beta is not None:
            return self.beta
        # moments of order < df exist, so the moment parameter is df - 2
        return default_beta(self.df - 2.0)

    def design_key(self) -> tuple:
        return (self.n, self.p, self.cov_spec(), self.seed, self.normalize_columns,
                self.mu_a, self.row_cap_beta, self.per_column_fallback)


def replicate_rng(seed: int, rep_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(seed) ^ int(rep_index)) & _U64))


@dataclass
class Instance:
    X: np.ndarray
    y: np.ndarray
    truth: GroundTruth
    noise_sd: float
    w: np.ndarray


def _draw_design(cfg: SimConfig, rng) -> np.ndarray:
    L = np.linalg.cholesky(build_covariance(cfg.cov_spec()))
    X = rng.standard_normal((cfg.n, cfg.p)) @ L.T
    if cfg.normalize_columns:
        X /= np.linalg.norm(X, axis=0)
    return X


def generate_instance(cfg: SimConfig, rep_index: int) -> Instance:
    """Draw (X, y, truth) for one replicate; bit-identical for equal (seed, rep_index)."""
    cfg.validate()
    rng = replicate_rng(cfg.seed, rep_index)
    try:
        X = _draw_design(cfg, rng)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"covariance is not positive definite: {exc}") from exc
    support = np.sort(rng.choice(cfg.p, size=cfg.s0, replace=False))
    signs = rng.choice(np.array([-1.0, 1.0]), size=cfg.s0)
    theta0 = np.zeros(cfg.p)
    if cfg.amplitude > 0:
        theta0[support] = cfg.amplitude * signs
    if cfg.noise == "gaussian":
        w = cfg.sigma * rng.standard_normal(cfg.n)
    else:
        w = cfg.sigma * rng.standard_t(cfg.df, size=cfg.n)
    return Instance(X=X, y=X @ theta0 + w, truth=GroundTruth(theta0), noise_sd=cfg.noise_sd, w=w)


def effective_coefficients(cfg: SimConfig, theta0: np.ndarray) -> np.ndarray:
    """Coefficients on the unit-variance column scale used by the power bound.

    Unit-norm columns carry ``1/sqrt(n)`` of a unit-variance column, so the
    amplitude enters the bound as ``A/sqrt(n)``.
    """
    if cfg.normalize_columns:
        return theta0 / math.sqrt(cfg.n)
    return theta0 * np.sqrt(np.diag(build_covariance(cfg.cov_spec())))


@dataclass
class ReplicateResult:
    rep_index: int
    metrics: DirectionalMetrics | None
    selection: SelectionResult | None
    diagnostics: dict = field(default_factory=dict)
    power_bound: float = float("nan")
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _prepare(cfg: SimConfig, X) -> PreparedDesign:
    return prepare_design(X, mu_a=cfg.mu_a, beta=cfg.row_cap_beta,
                          per_column_fallback=cfg.per_column_fallback)


def run_replicate(cfg: SimConfig, rep_index: int, *, design: PreparedDesign | None = None,
                  omega_diag: np.ndarray | None = None) -> ReplicateResult:
    """Generate one instance, run the FCD pipeline and score it against the truth.

    Failures inside the pipeline are caught and recorded on the result.
    """
    cfg.validate()
    inst = generate_instance(cfg, rep_index)
    n, p = cfg.n, cfg.p
    try:
        if design is None:
            design = _prepare(cfg, inst.X)
        fit = fit_fcd(inst.X, inst.y, cfg.q,
                      lambda_bar=default_lambda_bar(n, p, cfg.lambda_bar_factor),
                      design=design)
    except (FCDError, np.linalg.LinAlgError) as exc:
        log.warning("replicate %d failed: %s", rep_index, exc)
        return ReplicateResult(rep_index, None, None, error=f"{type(exc).__name__}: {exc}")

    metrics = directional_metrics(fit.selection, inst.truth)
    theta_eff = effective_coefficients(cfg, inst.truth.theta0)
    sl, dec = fit.scaled_lasso, fit.decorrelator
    resid_rms = float(np.linalg.norm(inst.y - design.X_std @ sl.theta_hat)) / math.sqrt(n)
    diag = {
        "sigma_ratio": fit.sigma_hat / inst.noise_sd,
        "t0": fit.selection.t0,
        "threshold_found": fit.selection.threshold_found,
        "bias_bound": bias_bound_diagnostic(dec, fit.Sigma_hat, fit.theta_hat, theta_eff, n),
        "lasso_converged": sl.converged,
        "lasso_kkt": sl.kkt_residual,
        "sigma_stationarity": abs(fit.sigma_hat - resid_rms) / fit.sigma_hat,
        "fallback_identity": dec.fallback_identity,
        "n_infeasible_columns": int((~dec.column_feasible).sum()),
        "mu": dec.mu,
        "max_constraint_excess": (float(constraint_violation(dec.M, fit.Sigma_hat).max() - dec.mu)
                                  if not dec.fallback_identity else float("nan")),
    }
    bound = float("nan")
    if inst.truth.s0 > 0:
        if omega_diag is None:
            omega_diag = np.diag(precision_matrix(cfg.cov_spec()))
        bound = power_lower_bound(theta_eff, n, inst.noise_sd, omega_diag, cfg.q)
        diag["bound_precondition"] = bound_precondition_holds(theta_eff, n, inst.noise_sd, omega_diag)
    return ReplicateResult(rep_index, metrics, fit.selection, diag, bound)


@dataclass
class SweepRow:
    swept_value: float
    fdr_dir_mean: float
    fdr_dir_se: float
    power_mean: float
    power_se: float
    power_bound_mean: float
    reps: int  # successful replicates
    fdr_classical_mean: float = float("nan")
    n_failed: int = 0


@dataclass
class SweepResult:
    parameter: str
    config: SimConfig
    rows: list[SweepRow]
    replicates: list[list[ReplicateResult]] | None = None


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(np.mean(x)), se


def _aggregate(value, results: list[ReplicateResult]) -> SweepRow:
    good = [r for r in results if r.ok]
    fdr_m, fdr_se = _mean_se([r.metrics.fdp_dir for r in good])
    pw_m, pw_se = _mean_se([r.metrics.power for r in good])
    bounds = [r.power_bound for r in good if not math.isnan(r.power_bound)]
    return SweepRow(
        swept_value=float(value),
        fdr_dir_mean=fdr_m,
        fdr_dir_se=fdr_se,
        power_mean=pw_m,
        power_se=pw_se,
        power_bound_mean=float(np.mean(bounds)) if bounds else float("nan"),
        reps=len(good),
        fdr_classical_mean=_mean_se([r.metrics.fdp_classical for r in good])[0],
        n_failed=len(results) - len(good),
    )


def _run_rep(args) -> list[ReplicateResult]:
    """All configs for one replicate index; designs shared across configs with equal X."""
    configs, rep = args
    designs: dict = {}
    omegas: dict = {}
    out = []
    for cfg in configs:
        key = cfg.design_key()
        if key not in designs:
            X = _draw_design(cfg, replicate_rng(cfg.seed, rep))
            try:
                designs[key] = _prepare(cfg, X)
            except (FCDError, np.linalg.LinAlgError):
                designs[key] = None  # run_replicate recomputes and records the error
        spec = cfg.cov_spec()
        if spec not in omegas:
            omegas[spec] = np.diag(precision_matrix(spec))
        out.append(run_replicate(cfg, rep, design=designs[key], omega_diag=omegas[spec]))
    return out


def sweep_configs(base: SimConfig, parameter: str, values) -> list[SimConfig]:
    if parameter not in SWEEP_PARAMETERS:
        raise DomainError(f"swept parameter must be one of {sorted(SWEEP_PARAMETERS)}, got {parameter!r}")
    values = list(values)
    if not values:
        raise DomainError("sweep values must be nonempty")
    name = SWEEP_PARAMETERS[parameter]
    cfgs = []
    for v in values:
        v = int(v) if name == "s0" else float(v)
        cfgs.append(replace(base, **{name: v}).validate())
    return cfgs


def run_sweep(base: SimConfig, parameter: str, values, *, n_jobs: int = 1,
              keep_replicates: bool = False) -> SweepResult:
    """Monte Carlo sweep over ``amplitude``, ``correlation`` (eta) or ``sparsity`` (s0).

    Every value is validated before any replicate runs.  Replicates are
    independent and may run in ``n_jobs`` processes; results are reduced in
    replicate order so the output does not depend on scheduling.
    """
    cfgs = sweep_configs(base, parameter, values)
    jobs = [(cfgs, rep) for rep in range(base.reps)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            per_rep = list(ex.map(_run_rep, jobs))
    else:
        per_rep = [_run_rep(j) for j in jobs]
    by_value = [[per_rep[r][k] for r in range(base.reps)] for k in range(len(cfgs))]
    name = SWEEP_PARAMETERS[parameter]
    rows = [_aggregate(getattr(c, name), res) for c, res in zip(cfgs, by_value)]
    return SweepResult(parameter, base, rows, by_value if keep_replicates else None)


def bh_baseline(p_values, q: float) -> np.ndarray:
    """Benjamini-Hochberg step-up selection at level ``q``; sorted 0-based indices."""
    pv = np.asarray(p_values, dtype=float).reshape(-1)
    m = pv.size
    if m == 0:
        return np.array([], dtype=np.int64)
    order = np.argsort(pv, kind="stable")
    ok = np.flatnonzero(pv[order] <= q * np.arange(1, m + 1) / m)
    if ok.size == 0:
        return np.array([], dtype=np.int64)
    return np.sort(order[: ok[-1] + 1])


SWEEP_COLUMNS = ("swept_value", "fdr_dir_mean", "fdr_dir_se", "power_mean", "power_se",
                 "power_bound_mean", "reps")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_sweep_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in result.rows:
            w.writerow([_fmt(getattr(row, c)) for c in SWEEP_COLUMNS])


REPLICATE_COLUMNS = ("swept_value", "rep", "fdp_dir", "fdp_classical", "power", "n_selected",
                     "t0", "threshold_found", "sigma_ratio", "bias_bound", "power_bound", "error")


def write_replicates_csv(result: SweepResult, path) -> None:
    if result.replicates is None:
        raise ValueError("sweep was run without keep_replicates=True")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPLICATE_COLUMNS)
        for row, reps in zip(result.rows, result.replicates):
            for r in reps:
                if r.ok:
                    m, d = r.metrics, r.diagnostics
                    w.writerow([_fmt(row.swept_value), r.rep_index, _fmt(m.fdp_dir),
                                _fmt(m.fdp_classical), _fmt(m.power), m.n_selected,
                                _fmt(d["t0"]), _fmt(d["threshold_found"]),
                                _fmt(d["sigma_ratio"]), _fmt(d["bias_bound"]),
                                _fmt(r.power_bound), ""])
                else:
                    w.writerow([_fmt(row.swept_value), r.rep_index] + [""] * 9 + [r.error])


def config_items(cfg: SimConfig) -> list[tuple[str, object]]:
    return list(asdict(cfg).items())


def config_field_types() -> dict[str, type]:
    return {f.name: f.type for f in fields(SimConfig)}
