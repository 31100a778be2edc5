"""Monte Carlo sweeps over transmit power, covariance and channel realizations.

Seeds are derived from ``(master_seed, stream, indices...)`` so every cell
draws from its own stream and results do not depend on execution order or
worker count. Covariance draws, channel draws and random RIS phases are
shared across variants (common random numbers); only the algorithm differs.
"""
from __future__ import annotations

import csv
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .channel import PhaseConfiguration, realization_from_parts, sample_channels, synthesize_covariances
from .config import ExperimentPlan, OptimizerConfig, ScenarioConfig, Variant, db2lin
from .eig import PowerIterationError
from .fp import DegenerateStateError
from .imperfect import AffineEstimate, ImperfectScenario, cascaded_ls_estimate, optimize_imperfect
from .rates import ergodic_sum_rate_mc, instantaneous_sum_rate
from .stat_csi import TraceEntry, optimize, write_trace

log = logging.getLogger(__name__)

STREAM_COV, STREAM_RANDRIS, STREAM_MC, STREAM_CHANNEL, STREAM_ESTIMATE = range(5)

RESULT_COLUMNS = ["variant", "Pt_dB", "mean", "stderr", "iters", "seconds"]


def cell_rng(master_seed: int, stream: int, *indices: int) -> np.random.Generator:
    return np.random.default_rng([master_seed, stream, *indices])


@dataclass
class CellResult:
    variant: Variant
    Pt_dB: float
    cov_index: int
    value: float
    stderr: float
    iterations: float
    seconds: float


@dataclass
class CellFailure:
    variant: Variant
    Pt_dB: float
    cov_index: int
    reason: str


@dataclass
class ResultRow:
    variant: str
    Pt_dB: float
    sum_rate_mean: float
    sum_rate_stderr: float
    mean_iterations: float
    wall_time: float
    values: Tuple[float, ...] = field(default=(), repr=False)


def _stat_cell(stats, variant: Variant, Pt_dB: float, plan: ExperimentPlan, c: int, rand_phi):
    st = stats if variant.ris != "none" else stats.without_ris()
    if variant.ris == "rand":
        phi0 = rand_phi
    else:
        phi0 = PhaseConfiguration.ones(st.N)
    cfg = OptimizerConfig(
        P_t=db2lin(Pt_dB), max_iters=plan.max_iters, rel_tol=plan.rel_tol,
        phase_update_enabled=variant.ris == "opt", rs_enabled=variant.rs,
    )
    sol = optimize(st, cfg, phi0=phi0)
    # one design per covariance realization, evaluated over fresh channel draws
    report = ergodic_sum_rate_mc(
        st, sol.phi, sol.P, plan.n_channel_realizations, cell_rng(plan.master_seed, STREAM_MC, c)
    )
    return report.sum_rate, report.stderr or 0.0, float(sol.iterations_used)


def _without_cascade(est: AffineEstimate) -> AffineEstimate:
    K, M, _ = est.cascade.shape
    return AffineEstimate(base=est.base, cascade=np.zeros((K, M, 0), dtype=complex), C_err=est.C_err)


def _imp_cell(stats, variant: Variant, Pt_dB: float, plan: ExperimentPlan, c: int, rand_phi):
    cfg = OptimizerConfig(
        P_t=db2lin(Pt_dB), max_iters=plan.max_iters, rel_tol=plan.rel_tol,
        phase_update_enabled=variant.ris == "opt", rs_enabled=variant.rs,
    )
    rates, iters = [], []
    for ch in range(plan.imp_channel_realizations):
        real = sample_channels(stats, PhaseConfiguration.ones(stats.N), cell_rng(plan.master_seed, STREAM_CHANNEL, c, ch))
        est = cascaded_ls_estimate(real, plan.error_variance, cell_rng(plan.master_seed, STREAM_ESTIMATE, c, ch))
        if variant.csi == "naive":
            # same noisy estimate, but designed as if it were the true channel
            est = AffineEstimate(base=est.base, cascade=est.cascade, C_err=np.zeros_like(est.C_err))
        if variant.ris == "none":
            est = _without_cascade(est)
            real = realization_from_parts(real.h_d, np.zeros((stats.K, 0)), np.zeros((0, stats.M)))
            phi0 = PhaseConfiguration.ones(0)
        elif variant.ris == "rand":
            phi0 = rand_phi
        else:
            phi0 = PhaseConfiguration.ones(stats.N)
        sol = optimize_imperfect(ImperfectScenario(h_true=real, estimate=est, cfg=cfg), phi0=phi0)
        # achieved rate on the true channel with the designed precoders and phases
        h_true = realization_from_parts(real.h_d, real.r, real.T, sol.phi).h_eff
        rates.append(instantaneous_sum_rate(h_true, sol.P).sum_rate)
        iters.append(sol.iterations_used)
    rates = np.asarray(rates)
    se = float(rates.std(ddof=1) / np.sqrt(rates.size)) if rates.size > 1 else 0.0
    return float(rates.mean()), se, float(np.mean(iters))


def _run_cov(plan: ExperimentPlan, c: int):
    """All (power, variant) cells of one covariance realization."""
    stats = synthesize_covariances(plan.scenario, cell_rng(plan.master_seed, STREAM_COV, c))
    rand_phi = PhaseConfiguration.random(stats.N, cell_rng(plan.master_seed, STREAM_RANDRIS, c))
    results, failures = [], []
    for Pt_dB in plan.Pt_grid_dB:
        for variant in plan.variants:
            t0 = time.perf_counter()
            try:
                fn = _stat_cell if variant.csi == "stat" else _imp_cell
                value, se, iters = fn(stats, variant, Pt_dB, plan, c, rand_phi)
            except (DegenerateStateError, PowerIterationError, np.linalg.LinAlgError) as exc:
                failures.append(CellFailure(variant, Pt_dB, c, f"{type(exc).__name__}: {exc}"))
                continue
            results.append(CellResult(variant, Pt_dB, c, value, se, iters, time.perf_counter() - t0))
    return results, failures


def run_cells(plan: ExperimentPlan, workers: int = 1):
    """Run every cell; returns ``(cells, failures)`` in deterministic order."""
    if not plan.variants:
        return [], []
    indices = list(range(plan.n_cov_realizations))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_cov, [plan] * len(indices), indices))
    else:
        chunks = [_run_cov(plan, c) for c in indices]
    cells = [r for res, _ in chunks for r in res]
    failures = [f for _, fail in chunks for f in fail]
    for f in failures:
        log.warning("cell failed: %s Pt=%s cov=%d: %s", f.variant.label, f.Pt_dB, f.cov_index, f.reason)
    return cells, failures


def aggregate(plan: ExperimentPlan, cells: List[CellResult]) -> List[ResultRow]:
    rows = []
    for variant in plan.variants:
        for Pt_dB in plan.Pt_grid_dB:
            sel = [c for c in cells if c.variant == variant and c.Pt_dB == Pt_dB]
            if not sel:
                continue
            vals = np.array([c.value for c in sel])
            if vals.size > 1:
                se = float(vals.std(ddof=1) / np.sqrt(vals.size))
            else:
                se = sel[0].stderr
            rows.append(ResultRow(
                variant=variant.label, Pt_dB=Pt_dB, sum_rate_mean=float(vals.mean()), sum_rate_stderr=se,
                mean_iterations=float(np.mean([c.iterations for c in sel])),
                wall_time=float(sum(c.seconds for c in sel)), values=tuple(vals),
            ))
    return rows


def run_plan(plan: ExperimentPlan, workers: int = 1) -> List[ResultRow]:
    cells, _ = run_cells(plan, workers)
    return aggregate(plan, cells)


def write_results(rows: List[ResultRow], path, with_timing: bool = False) -> None:
    """Comma-separated result table.

    Wall times are only written when ``with_timing`` is set so that repeated
    runs of one plan produce byte-identical tables.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([
                r.variant, f"{r.Pt_dB:g}", f"{r.sum_rate_mean:.10g}", f"{r.sum_rate_stderr:.10g}",
                f"{r.mean_iterations:.4g}", f"{r.wall_time:.3f}" if with_timing else "",
            ])


def write_manifest(plan: ExperimentPlan, rows: List[ResultRow], failures: List[CellFailure], path, workers: int = 1) -> None:
    manifest = {
        "plan": plan.to_dict(),
        "seed_scheme": "numpy default_rng([master_seed, stream, cov_index(, channel_index)]); "
        "streams: 0=covariance 1=random RIS phases 2=stat-CSI MC draws 3=imp-CSI channels 4=imp-CSI estimates",
        "workers": workers,
        "wall_time_seconds": {f"{r.variant} @ {r.Pt_dB:g} dB": round(r.wall_time, 3) for r in rows},
        "failures": [
            {"variant": f.variant.label, "Pt_dB": f.Pt_dB, "cov_index": f.cov_index, "reason": f.reason}
            for f in failures
        ],
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)


def convergence_experiment(
    scenario: ScenarioConfig, cfg: OptimizerConfig, seed: Optional[int] = None
) -> List[TraceEntry]:
    """Trace one statistical-CSI optimisation on a single covariance realization."""
    seed = scenario.seed if seed is None else seed
    stats = synthesize_covariances(scenario, cell_rng(seed, STREAM_COV, 0))
    cfg = OptimizerConfig(**{**cfg.__dict__, "trace_enabled": True})
    return optimize(stats, cfg).trace


__all__ = [
    "CellFailure", "CellResult", "ResultRow", "aggregate", "cell_rng", "convergence_experiment",
    "run_cells", "run_plan", "write_manifest", "write_results", "write_trace",
]
