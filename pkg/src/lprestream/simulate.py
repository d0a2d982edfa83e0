"""Monte Carlo apparatus: data generation, replication driver, and timing.

Covariates come in four flavours (AR(1)-correlated normal, a symmetric
two-component normal mixture, multivariate t with 5 degrees of freedom, and
iid unit exponentials); the multiplicative error is log-normal, log-uniform
on (-2, 2), or the degenerate unit error used as a noiseless test hook.

Randomness is counter-based: every batch is drawn from a Philox generator
keyed by (seed, batch index), so batches are pure functions of their index,
replications parallelize without coordination, and streaming a dataset batch
by batch produces exactly the rows a pooled generation would.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from . import estimators, inference, linalg, model
from .errors import EstimationError
from .estimators import Method

log = logging.getLogger(__name__)

DEFAULT_BETA = (0.2, -0.2, 0.2, -0.2, 0.2)
AR1_RHO = 0.5
T_DOF = 5.0


class CovariateCase(str, Enum):
    """Covariate designs, numbered 1-4 on the command line."""

    NORMAL_AR = "normal-ar"
    MIXTURE = "mixture"
    STUDENT_T5 = "t5"
    EXPONENTIAL = "exp"


class ErrorLaw(str, Enum):
    """Multiplicative error laws; UNIT is the noiseless test hook."""

    LOGNORMAL = "lognormal"
    LOGUNIFORM = "loguniform"
    UNIT = "unit"


@dataclass(frozen=True)
class DgpConfig:
    """Data-generating process: true coefficients, design, error law, seed.

    The first design column is always the intercept; ``beta_true`` therefore
    has length 1 + (number of raw covariates).
    """

    beta_true: tuple[float, ...] = DEFAULT_BETA
    covariate_case: CovariateCase = CovariateCase.NORMAL_AR
    error_law: ErrorLaw = ErrorLaw.LOGNORMAL
    seed: int = 0

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta_true)
        if len(beta) < 1:
            raise ValueError("beta_true needs at least the intercept coefficient")
        object.__setattr__(self, "beta_true", beta)
        object.__setattr__(self, "covariate_case", CovariateCase(self.covariate_case))
        object.__setattr__(self, "error_law", ErrorLaw(self.error_law))
        if int(self.seed) < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def p(self) -> int:
        return len(self.beta_true)


def ar1_covariance(dim: int, rho: float = AR1_RHO) -> np.ndarray:
    """Covariance with entries rho^|i-j|."""
    idx = np.arange(dim)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def _rng_for(seed: int, batch_index: int) -> np.random.Generator:
    # Philox is counter-based; keying the SeedSequence with (seed, index)
    # makes every batch an independent, reproducible stream.
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, batch_index))))


def gen_batch(cfg: DgpConfig, n: int, batch_index: int) -> model.Batch:
    """One simulated batch; a pure function of (cfg.seed, batch_index, n).

    Draw order within a batch is fixed: covariate normals (or exponentials),
    then the case's auxiliary draws (mixture signs, chi-square divisors),
    then the error draws.
    """
    if n < 1:
        raise ValueError(f"batch size must be >= 1, got {n}")
    if batch_index < 1:
        raise ValueError(f"batch index must be >= 1, got {batch_index}")
    rng = _rng_for(cfg.seed, batch_index)
    d = cfg.p - 1
    case = cfg.covariate_case
    if case is CovariateCase.EXPONENTIAL:
        raw = rng.exponential(1.0, size=(n, d))
    else:
        z = rng.standard_normal((n, d))
        lower = linalg.cholesky_spd(ar1_covariance(d)).lower if d else np.zeros((0, 0))
        raw = z @ lower.T
        if case is CovariateCase.MIXTURE:
            signs = rng.integers(0, 2, size=n) * 2.0 - 1.0
            raw = raw + signs[:, None]
        elif case is CovariateCase.STUDENT_T5:
            divisor = np.sqrt(rng.chisquare(T_DOF, size=n) / T_DOF)
            raw = raw / divisor[:, None]
    x = np.hstack([np.ones((n, 1)), raw])
    if cfg.error_law is ErrorLaw.LOGNORMAL:
        eps = np.exp(rng.standard_normal(n))
    elif cfg.error_law is ErrorLaw.LOGUNIFORM:
        eps = np.exp(rng.uniform(-2.0, 2.0, size=n))
    else:
        eps = np.ones(n)
    y = np.exp(x @ np.asarray(cfg.beta_true)) * eps
    return model.Batch(x=x, y=y, index=batch_index)


def batch_sizes(
    n_total: int, *, batch_size: int | None = None, n_batches: int | None = None
) -> list[int]:
    """Split ``n_total`` rows into batches; the last batch takes any remainder."""
    if (batch_size is None) == (n_batches is None):
        raise ValueError("exactly one of batch_size / n_batches is required")
    if n_total < 1:
        raise ValueError(f"n_total must be >= 1, got {n_total}")
    if batch_size is not None:
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        full, rest = divmod(n_total, batch_size)
        sizes = [batch_size] * full
        if rest:
            sizes.append(rest)
        return sizes
    if n_batches < 1:
        raise ValueError(f"n_batches must be >= 1, got {n_batches}")
    base = n_total // n_batches
    if base < 1:
        raise ValueError(f"{n_batches} batches cannot cover only {n_total} rows")
    sizes = [base] * n_batches
    sizes[-1] += n_total - base * n_batches
    return sizes


def estimate_stream(
    method: Method,
    batches: Sequence[model.Batch],
    cfg: estimators.SolverConfig = estimators.DEFAULT_SOLVER,
    *,
    level: float = 0.95,
) -> inference.EstimateReport:
    """Run one method over a batch sequence and return its final report."""
    method = Method(method)
    if method is Method.FULL_LPRE:
        beta = estimators.fit_full(batches, cfg)
        return inference.pooled_report(batches, beta, level=level)
    state = estimators.initial_state(method, batches[0].p)
    for batch in batches:
        state = estimators.update_state(state, batch, cfg)
    return inference.state_report(state, level=level)


@dataclass(frozen=True)
class McSummary:
    """Replication aggregates for one method.

    ``bias`` is the mean estimate minus the truth, ``sse`` the sampling
    standard deviation of the estimates (0 when only one replication
    survives), ``ese`` the mean of the estimated standard errors, and ``cp``
    the empirical coverage of nominal-level intervals. ``c_time`` covers data
    generation plus estimation; ``r_time`` estimation only (seconds summed
    over replications). Failed replications are excluded from the aggregates
    and counted in ``failures``.
    """

    bias: np.ndarray
    sse: np.ndarray
    ese: np.ndarray
    cp: np.ndarray
    replications: int
    failures: int
    c_time: float
    r_time: float


def _replication(
    cfg: DgpConfig,
    sizes: Sequence[int],
    methods: Sequence[Method],
    level: float,
    solver: estimators.SolverConfig,
    rep: int,
) -> tuple[float, dict]:
    """Worker for one replication; returns (generation seconds, per-method row).

    Each row is ("ok", beta, se, hits, seconds) or ("fail", message).
    """
    rep_cfg = replace(cfg, seed=cfg.seed ^ rep)
    target = np.asarray(rep_cfg.beta_true)
    t0 = time.perf_counter()
    batches = [gen_batch(rep_cfg, n, i + 1) for i, n in enumerate(sizes)]
    gen_elapsed = time.perf_counter() - t0
    out: dict = {}
    for method in methods:
        t1 = time.perf_counter()
        try:
            report = estimate_stream(method, batches, solver, level=level)
        except EstimationError as exc:
            out[method.value] = ("fail", f"{type(exc).__name__}: {exc}")
            continue
        elapsed = time.perf_counter() - t1
        hits = inference.cp_hit(report, target)
        out[method.value] = (
            "ok",
            report.beta.tolist(),
            report.se.tolist(),
            hits.tolist(),
            elapsed,
        )
    return gen_elapsed, out


def run_scenario(
    cfg: DgpConfig,
    *,
    n_total: int,
    batch_size: int | None = None,
    n_batches: int | None = None,
    methods: Sequence[Method] = (Method.RENEWABLE,),
    replications: int = 100,
    level: float = 0.95,
    solver: estimators.SolverConfig = estimators.DEFAULT_SOLVER,
    workers: int = 1,
) -> dict[Method, McSummary]:
    """Replicate a streaming scenario and aggregate BIAS/SSE/ESE/CP per method.

    Replication ``r`` regenerates everything from the derived seed
    ``cfg.seed ^ r``, so results are bit-reproducible for a fixed
    configuration and independent across replications. With ``workers > 1``
    replications run in a process pool; aggregation is reduced in replication
    order, so parallelism never changes the numbers (only the timing fields).
    """
    if replications < 1:
        raise ValueError(f"replications must be >= 1, got {replications}")
    sizes = batch_sizes(n_total, batch_size=batch_size, n_batches=n_batches)
    methods = tuple(Method(m) for m in methods)
    args = [(cfg, sizes, methods, level, solver, rep) for rep in range(replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_replication, *zip(*args)))
    else:
        rows = [_replication(*a) for a in args]

    target = np.asarray(cfg.beta_true)
    results: dict[Method, McSummary] = {}
    for method in methods:
        betas, ses, hits = [], [], []
        failures = 0
        c_time = 0.0
        r_time = 0.0
        for rep, (gen_elapsed, row) in enumerate(rows):
            cell = row[method.value]
            if cell[0] == "fail":
                failures += 1
                log.warning(
                    "replication %d failed for %s: %s", rep, method.value, cell[1]
                )
                continue
            _, beta, se, hit, elapsed = cell
            betas.append(beta)
            ses.append(se)
            hits.append(hit)
            c_time += gen_elapsed + elapsed
            r_time += elapsed
        if betas:
            beta_arr = np.asarray(betas)
            se_arr = np.asarray(ses)
            hit_arr = np.asarray(hits, dtype=float)
            bias = beta_arr.mean(axis=0) - target
            sse = (
                beta_arr.std(axis=0, ddof=1)
                if beta_arr.shape[0] > 1
                else np.zeros(cfg.p)
            )
            ese = se_arr.mean(axis=0)
            cp = hit_arr.mean(axis=0)
        else:
            bias = sse = ese = cp = np.full(cfg.p, np.nan)
        results[method] = McSummary(
            bias=bias,
            sse=sse,
            ese=ese,
            cp=cp,
            replications=replications,
            failures=failures,
            c_time=c_time,
            r_time=r_time,
        )
    return results


@dataclass(frozen=True)
class BenchResult:
    """Mean seconds per replication; wall clock plus process CPU time.

    ``c_time`` spans data generation and estimation, ``r_time`` the
    estimation alone.
    """

    c_time: float
    r_time: float
    c_cpu: float
    r_cpu: float
    replications: int


def bench(
    cfg: DgpConfig,
    *,
    n_total: int,
    batch_size: int | None = None,
    n_batches: int | None = None,
    methods: Sequence[Method] = tuple(Method),
    replications: int = 10,
    solver: estimators.SolverConfig = estimators.DEFAULT_SOLVER,
    level: float = 0.95,
) -> dict[Method, BenchResult]:
    """Time each method in isolation (each regenerates its own data).

    The clock is monotonic wall time; process CPU time is reported alongside.
    """
    if replications < 1:
        raise ValueError(f"replications must be >= 1, got {replications}")
    sizes = batch_sizes(n_total, batch_size=batch_size, n_batches=n_batches)
    out: dict[Method, BenchResult] = {}
    for method in (Method(m) for m in methods):
        c_wall = r_wall = c_cpu = r_cpu = 0.0
        for rep in range(replications):
            rep_cfg = replace(cfg, seed=cfg.seed ^ rep)
            w0, u0 = time.perf_counter(), time.process_time()
            batches = [gen_batch(rep_cfg, n, i + 1) for i, n in enumerate(sizes)]
            w1, u1 = time.perf_counter(), time.process_time()
            estimate_stream(method, batches, solver, level=level)
            w2, u2 = time.perf_counter(), time.process_time()
            c_wall += w2 - w0
            r_wall += w2 - w1
            c_cpu += u2 - u0
            r_cpu += u2 - u1
        out[method] = BenchResult(
            c_time=c_wall / replications,
            r_time=r_wall / replications,
            c_cpu=c_cpu / replications,
            r_cpu=r_cpu / replications,
            replications=replications,
        )
    return out


# ---------------------------------------------------------------------------
# Result tables
# ---------------------------------------------------------------------------

# Metric rows with their display scaling: printed value = raw value * scale.
_METRIC_ROWS = (
    ("BIASx1e-4", "bias", 1e4),
    ("SSEx1e-3", "sse", 1e3),
    ("ESEx1e-3", "ese", 1e3),
    ("CP", "cp", 1.0),
)


def _coef_names(p: int, names: Sequence[str] | None) -> list[str]:
    if names is None:
        return [f"b{j + 1}" for j in range(p)]
    if len(names) != p:
        raise ValueError(f"{len(names)} names for {p} coefficients")
    return [str(n) for n in names]


def summary_table_text(
    results: dict[Method, McSummary], coef_names: Sequence[str] | None = None
) -> str:
    """Aligned text table: one block per coefficient, metric rows, method columns."""
    methods = list(results)
    p = results[methods[0]].bias.shape[0]
    names = _coef_names(p, coef_names)
    header = ["metric"] + [m.value for m in methods]
    widths = [10] + [max(9, len(h) + 2) for h in header[1:]]
    lines = []
    for j, coef in enumerate(names):
        lines.append(f"coefficient {coef}")
        lines.append("  " + "".join(h.rjust(w) for h, w in zip(header, widths)))
        for label, field, scale in _METRIC_ROWS:
            cells = [label.rjust(widths[0])]
            for m, w in zip(methods, widths[1:]):
                value = getattr(results[m], field)[j] * scale
                cells.append(f"{value:.3f}".rjust(w))
            lines.append("  " + "".join(cells))
        failures = ", ".join(
            f"{m.value}={results[m].failures}" for m in methods if results[m].failures
        )
        if failures:
            lines.append(f"  failed replications: {failures}")
        lines.append("")
    return "\n".join(lines)


def summary_table_csv(
    results: dict[Method, McSummary], coef_names: Sequence[str] | None = None
) -> str:
    """CSV twin of ``summary_table_text`` (same rows, machine-readable)."""
    methods = list(results)
    p = results[methods[0]].bias.shape[0]
    names = _coef_names(p, coef_names)
    lines = ["coefficient,metric," + ",".join(m.value for m in methods)]
    for j, coef in enumerate(names):
        for label, field, scale in _METRIC_ROWS:
            cells = [coef, label]
            for m in methods:
                cells.append(f"{getattr(results[m], field)[j] * scale:.6g}")
            lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def bench_table_text(rows: Iterable[tuple[str, dict[Method, BenchResult]]]) -> str:
    """Aligned text: one row per scenario, C.Time/R.Time columns per method."""
    rows = list(rows)
    methods = list(rows[0][1]) if rows else []
    header = ["scenario"] + [
        f"{m.value} {kind}" for m in methods for kind in ("C.Time", "R.Time")
    ]
    widths = [12] + [max(12, len(h) + 2) for h in header[1:]]
    lines = ["".join(h.rjust(w) for h, w in zip(header, widths))]
    for label, per_method in rows:
        cells = [str(label).rjust(widths[0])]
        k = 1
        for m in methods:
            res = per_method[m]
            for value in (res.c_time, res.r_time):
                cells.append(f"{value:.3f}".rjust(widths[k]))
                k += 1
        lines.append("".join(cells))
    return "\n".join(lines) + "\n"


def bench_table_csv(rows: Iterable[tuple[str, dict[Method, BenchResult]]]) -> str:
    rows = list(rows)
    methods = list(rows[0][1]) if rows else []
    header = ["scenario"]
    for m in methods:
        header += [f"{m.value}_c_time", f"{m.value}_r_time"]
    lines = [",".join(header)]
    for label, per_method in rows:
        cells = [str(label)]
        for m in methods:
            res = per_method[m]
            cells += [f"{res.c_time:.6g}", f"{res.r_time:.6g}"]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
