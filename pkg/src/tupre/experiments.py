"""Experiment orchestration: table emission, sweeps, and Monte-Carlo runs.

All CSV output is deterministic for a fixed configuration and seed: floats
are printed with 17 significant digits, rows are written in a fixed order,
and wall-clock timings go to a separate JSON file so the CSVs stay
byte-identical across re-runs.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .algorithm import TupreConfig, TupreResult, run_tupre
from .decay import DecayModel, noise_index_bound, rank_bound
from .errors import InputError
from .estimators import (
    AlphaInterval,
    EstimatorInput,
    MinimizeResult,
    alpha_lower_bound,
    minimize_objective,
)
from .problems import (
    ProblemInstance,
    generate_blur_problem,
    generate_model_problem,
    rre,
    with_noise_level,
)
from .spectral import effective_rank, picard_data, solve_filtered

__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "quantile",
    "build_problem",
    "write_tables",
    "write_picard",
    "write_sweep",
    "write_estimate",
    "monte_carlo",
    "write_monte_carlo",
]

TABLE_TAUS = (1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0)
TABLE_NOISE_LEVELS = (1e-1, 1e-2, 1e-4, 1e-8)
TABLE_EPS = 1e-15
TABLE_DELTA = 0.5
TABLE_NU = 0.5

QUANTILE_NOTE = "# quantiles use linear interpolation between closest ranks"


@dataclass(frozen=True)
class RunRecord:
    """Per-run outcome of a Monte-Carlo experiment."""

    run_index: int
    seed: int
    noise_level: float
    k_opt: int
    alpha_opt: float
    alpha_star: float
    rre_truncated: float
    rre_full: float
    wall_time: float


@dataclass(frozen=True)
class ExperimentConfig:
    """A Monte-Carlo experiment: problem family, noise levels, and budget."""

    problem: dict
    noise_levels: tuple[float, ...]
    runs: int
    tupre: TupreConfig = field(default_factory=TupreConfig)
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.runs < 1:
            raise InputError("runs must be >= 1")
        if not self.noise_levels:
            raise InputError("at least one noise level is required")
        for level in self.noise_levels:
            if not 0.0 < level < 1.0:
                raise InputError("noise levels must lie in (0, 1)")
        if self.workers < 1:
            raise InputError("workers must be >= 1")


def quantile(values: Sequence[float], q: float) -> float:
    """Quantile with linear interpolation between closest ranks."""
    return float(np.quantile(np.asarray(values, dtype=float), q, method="linear"))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _write_csv(path: Path, header: Sequence[str], rows, comments: Sequence[str] = ()):
    lines = list(comments)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(cell) for cell in row))
    path.write_text("\n".join(lines) + "\n")


def build_problem(spec: dict) -> ProblemInstance:
    """Instantiate a problem from a plain configuration mapping.

    ``spec["kind"]`` selects the family: "model" takes decay (mild, moderate,
    severe), tau, n, nu, noise, seed; "blur" takes n_side, psf_width, noise,
    seed.
    """
    kind = spec.get("kind", "model")
    if kind == "model":
        model = DecayModel(kind=spec["decay"], tau=float(spec["tau"]))
        return generate_model_problem(
            model,
            n=int(spec["n"]),
            nu=float(spec["nu"]),
            noise_sigma=float(spec["noise"]),
            seed=int(spec["seed"]),
        )
    if kind == "blur":
        return generate_blur_problem(
            n_side=int(spec["n_side"]),
            psf_width=float(spec["psf_width"]),
            noise_sigma=float(spec["noise"]),
            seed=int(spec["seed"]),
        )
    raise InputError(f"unknown problem kind {kind!r}")


def _estimator_input(instance: ProblemInstance) -> EstimatorInput:
    return EstimatorInput.from_spectral(
        instance.system, instance.coefficients(), instance.noise_var_normalized
    )


def _search_floor(sigma_value: float) -> float:
    if sigma_value >= 1.0:
        return 1e-12
    return min(alpha_lower_bound(sigma_value), 1.0 - 1e-6)


def full_spectrum_minimizer(
    inp: EstimatorInput, objective: str = "upre"
) -> tuple[MinimizeResult, int]:
    """Minimize the objective over the whole effective spectrum."""
    eps = float(np.finfo(float).eps)
    k_eff = int(np.count_nonzero(inp.sigma > eps * inp.sigma[0]))
    lo = _search_floor(float(inp.sigma[k_eff - 1]))
    return minimize_objective(inp, k_eff, AlphaInterval(lo, 1.0), objective), k_eff


# Table emission -------------------------------------------------------------


def write_tables(out_dir) -> tuple[Path, Path]:
    """Emit the rank-bound and noise-index tables over the reference grids."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows1 = []
    rows2 = []
    for decay in ("moderate", "severe"):
        for tau in TABLE_TAUS:
            model = DecayModel(kind=decay, tau=tau)
            rows1.append((decay, tau, rank_bound(model, TABLE_EPS)))
            for noise in TABLE_NOISE_LEVELS:
                rows2.append(
                    (decay, tau, noise, noise_index_bound(model, noise, TABLE_DELTA, TABLE_NU))
                )
    path1 = out_dir / "table1.csv"
    path2 = out_dir / "table2.csv"
    _write_csv(path1, ("decay", "tau", "rank_bound"), rows1)
    _write_csv(path2, ("decay", "tau", "noise_sigma", "ell"), rows2)
    return path1, path2


# Picard diagnostics ----------------------------------------------------------


_PICARD_PLOT = """set datafile separator ","
set logscale y
set xlabel "index i"
set key outside
plot "picard.csv" skip 1 using 1:2 with lines title "sigma_i", \\
     "picard.csv" skip 1 using 1:3 with points pt 7 ps 0.3 title "|s_i|", \\
     "picard.csv" skip 1 using 1:4 with points pt 5 ps 0.3 title "|s_i|/sigma_i"
"""


def write_picard(instance: ProblemInstance, out_dir) -> Path:
    """Emit the Picard table (i, sigma, |s|, |s|/sigma) and a plot script."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = picard_data(instance.system, instance.coefficients())
    rows = [(int(i), sig, abs_s, ratio) for i, sig, abs_s, ratio in table]
    path = out_dir / "picard.csv"
    _write_csv(path, ("i", "sigma", "abs_s", "ratio"), rows)
    (out_dir / "picard.gp").write_text(_PICARD_PLOT)
    return path


# Alpha sweeps ----------------------------------------------------------------


_SWEEP_PLOT = """set datafile separator ","
set logscale y
set xlabel "TSVD size k"
set ylabel "alpha_k"
set key outside
plot "alpha_trace.csv" skip 1 using 1:2 with linespoints title "alpha_k", \\
     "alpha_trace.csv" skip 1 using 1:5 with lines dashtype 2 title "sigma_k"
"""


def write_sweep(
    instance: ProblemInstance, ks: Sequence[int], objective: str, out_dir
) -> Path:
    """Minimize the objective at each requested subspace size and emit a CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    inp = _estimator_input(instance)
    eps = float(np.finfo(float).eps)
    k_eff = effective_rank(instance.system, eps)
    rows = []
    for k in ks:
        k = int(k)
        if not 1 <= k <= k_eff:
            raise InputError(f"sweep size k = {k} exceeds the effective rank {k_eff}")
        lo = _search_floor(float(inp.sigma[k - 1]))
        result = minimize_objective(inp, k, AlphaInterval(lo, 1.0), objective)
        rows.append((k, result.alpha, result.value, result.at_boundary, inp.sigma[k - 1]))
    path = out_dir / "alpha_trace.csv"
    _write_csv(path, ("k", "alpha_k", "value", "at_boundary", "sigma_k"), rows)
    (out_dir / "alpha_trace.gp").write_text(_SWEEP_PLOT)
    return path


# Single estimation runs -------------------------------------------------------


def write_estimate(
    instance: ProblemInstance, config: TupreConfig, out_dir
) -> tuple[Path, Path, TupreResult]:
    """Run the iterative estimation once and persist result plus trace."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    inp = _estimator_input(instance)
    result = run_tupre(inp, config)
    payload = {
        "k_opt": result.k_opt,
        "alpha_opt": result.alpha_opt,
        "c_hat": result.c_hat if math.isfinite(result.c_hat) else None,
        "terminated_by": result.terminated_by,
        "config": {
            "k0": config.k0,
            "delta_k": config.delta_k,
            "k_max": config.k_max,
            "delta": config.delta,
            "w": config.w,
            "l_estimate": config.l_estimate,
        },
        "problem_seed": instance.seed,
        "noise_sigma": instance.noise_sigma,
        "l_true": instance.l_true,
    }
    json_path = out_dir / "estimate.json"
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    trace_path = out_dir / "trace.csv"
    _write_csv(
        trace_path,
        ("k", "alpha_k", "alpha_min", "c", "at_boundary"),
        [(t.k, t.alpha, t.alpha_min, t.change, t.at_boundary) for t in result.trace],
    )
    return json_path, trace_path, result


# Monte-Carlo experiments ------------------------------------------------------


def run_seed(base_seed: int, level_index: int, run_index: int) -> int:
    """Per-run seed: base + 1000 * noise-level index + run index."""
    return base_seed + 1000 * level_index + run_index


def _single_run(
    instance: ProblemInstance, tupre_cfg: TupreConfig, run_index: int, level: float
) -> tuple[RunRecord, TupreResult]:
    start = time.perf_counter()
    inp = _estimator_input(instance)
    result = run_tupre(inp, tupre_cfg)
    star, k_eff = full_spectrum_minimizer(inp)
    coeffs = instance.coefficients()
    x_trunc = solve_filtered(instance.system, coeffs, result.alpha_opt, result.k_opt).x
    x_full = solve_filtered(instance.system, coeffs, star.alpha, k_eff).x
    record = RunRecord(
        run_index=run_index,
        seed=instance.seed,
        noise_level=level,
        k_opt=result.k_opt,
        alpha_opt=result.alpha_opt,
        alpha_star=star.alpha,
        rre_truncated=rre(x_trunc, instance.x_true),
        rre_full=rre(x_full, instance.x_true),
        wall_time=time.perf_counter() - start,
    )
    return record, result


def monte_carlo(
    config: ExperimentConfig,
    base_instance: Optional[ProblemInstance] = None,
    keep_traces: bool = False,
    partial_sink: Optional[list] = None,
):
    """Run the Monte-Carlo experiment.

    One base problem is generated from the configuration seed; each run
    redraws the noise at its level with the per-run seed. Runs may execute
    on a thread pool; records are always returned in (level, run) order.
    Completed records are also appended to ``partial_sink`` (when given) so
    callers can flush partial results if a later run fails.

    Returns
    -------
    (records, traces)
        ``records`` is a flat list of RunRecord; ``traces`` maps
        (level_index, run_index) to TupreResult when ``keep_traces`` is set.
    """
    if base_instance is None:
        spec = dict(config.problem)
        spec.setdefault("noise", config.noise_levels[0])
        spec.setdefault("seed", config.seed)
        base_instance = build_problem(spec)
    jobs = [
        (li, r, level)
        for li, level in enumerate(config.noise_levels)
        for r in range(config.runs)
    ]

    def work(job):
        li, r, level = job
        seed = run_seed(config.seed, li, r)
        instance = with_noise_level(base_instance, level, seed)
        outcome = _single_run(instance, config.tupre, r, level)
        if partial_sink is not None:
            partial_sink.append(outcome[0])
        return outcome

    results: dict[tuple[int, int], tuple[RunRecord, TupreResult]] = {}
    if config.workers == 1:
        for job in jobs:
            results[(job[0], job[1])] = work(job)
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            for job, outcome in zip(jobs, pool.map(work, jobs)):
                results[(job[0], job[1])] = outcome

    records = [results[(li, r)][0] for li, r, _ in jobs]
    traces = {key: value[1] for key, value in results.items()} if keep_traces else {}
    return records, traces


_SUMMARY_METRICS = ("k_opt", "alpha_opt", "alpha_star", "rre_truncated", "rre_full")

_BOXPLOT = """set datafile separator ","
set style fill solid 0.4
set boxwidth 0.6
set xlabel "noise level"
set ylabel "k_opt quartiles"
plot "summary.csv" skip 2 using 0:3:2:4:4:xtic(1) with candlesticks title "k_opt IQR", \\
     "summary.csv" skip 2 using 0:3:3:3:3 with candlesticks lt -1 notitle
"""


def summarize(records: Sequence[RunRecord], noise_levels: Sequence[float]):
    """Per-noise-level quartiles of every recorded metric plus the mean gap."""
    rows = []
    for level in noise_levels:
        group = [rec for rec in records if rec.noise_level == level]
        if not group:
            continue
        row = [level, len(group)]
        for metric in _SUMMARY_METRICS:
            values = [getattr(rec, metric) for rec in group]
            row.extend([quantile(values, 0.25), quantile(values, 0.5), quantile(values, 0.75)])
        gaps = [abs(rec.alpha_opt - rec.alpha_star) / rec.alpha_star for rec in group]
        row.append(float(np.mean(gaps)))
        rows.append(tuple(row))
    return rows


def write_monte_carlo(config: ExperimentConfig, out_dir, **kwargs) -> dict:
    """Run the experiment and persist runs.csv, summary.csv, and plots.

    Partial results are flushed if a run fails. Wall times go to
    timings.json so the CSVs are byte-identical across repeated runs.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    completed: list[RunRecord] = []
    error = None
    try:
        records, traces = monte_carlo(config, partial_sink=completed, **kwargs)
    except Exception as exc:
        error = exc
        traces = {}
        records = sorted(completed, key=lambda rec: (rec.noise_level, rec.run_index))

    run_header = (
        "run_index",
        "seed",
        "noise_level",
        "k_opt",
        "alpha_opt",
        "alpha_star",
        "rre_truncated",
        "rre_full",
    )
    _write_csv(
        out_dir / "runs.csv",
        run_header,
        [
            (
                rec.run_index,
                rec.seed,
                rec.noise_level,
                rec.k_opt,
                rec.alpha_opt,
                rec.alpha_star,
                rec.rre_truncated,
                rec.rre_full,
            )
            for rec in records
        ],
    )
    if error is not None:
        raise error

    summary_header = ["noise_level", "runs"]
    for metric in _SUMMARY_METRICS:
        summary_header.extend([f"{metric}_q25", f"{metric}_q50", f"{metric}_q75"])
    summary_header.append("mean_rel_gap")
    summary_rows = summarize(records, config.noise_levels)
    _write_csv(
        out_dir / "summary.csv",
        summary_header,
        summary_rows,
        comments=(QUANTILE_NOTE,),
    )
    (out_dir / "boxplot.gp").write_text(_BOXPLOT)
    timings = {
        "total": sum(rec.wall_time for rec in records),
        "runs": {
            f"{rec.noise_level}/{rec.run_index}": rec.wall_time for rec in records
        },
    }
    (out_dir / "timings.json").write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n")
    return {"records": records, "traces": traces, "summary": summary_rows}
