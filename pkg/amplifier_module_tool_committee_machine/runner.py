"""
Sweep execution behind the command line and the host tools.

Each alpha (or alpha, seed pair) is an independent task. Tasks run inline or
on a process pool; rows are always assembled in grid order so that identical
configurations produce identical files.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .amp import amp_run, generate_instance, instance_spec
from .config import NumericsConfig, SweepConfig, ensure_valid
from .large_k import solve_scaled
from .models import (
    AmpInit,
    Branch,
    ChannelModel,
    InitKind,
    InstanceSpec,
    Mode,
    PriorModel,
    ResultRow,
    TransitionKind,
)
from .state_evolution import find_transition, gen_error_k2, mark_dominant, run_from
from .storage import ResultStorage

logger = logging.getLogger(__name__)


@dataclass
class SweepResult:
    """
    Outcome of a sweep.

    Attributes:
        rows: Result rows in grid order
        summary: Human-readable summary lines
        path: Result file, if one was written
        instances: Descriptors of the AMP instances the sweep ran on
    """
    rows: list[ResultRow]
    summary: list[str] = field(default_factory=list)
    path: Optional[Path] = None
    instances: list[InstanceSpec] = field(default_factory=list)


def _elapsed_ms(started: float, timing: bool) -> Optional[float]:
    return round(1000.0 * (time.perf_counter() - started), 3) if timing else None


# ---------------------------------------------------------------------------
# Tasks (module level so that they pickle)
# ---------------------------------------------------------------------------


def _se_task(alpha: float, prior: PriorModel, ch: ChannelModel, inits: Sequence[InitKind], numerics: NumericsConfig, timing: bool, mode: str = "se", mc_samples: int = 0) -> tuple[list[ResultRow], str]:
    rows = []
    points = []
    for init in inits:
        started = time.perf_counter()
        point = run_from(init, alpha, prior, ch, numerics)
        points.append(point)
        row = point.to_row(mode)
        if mode == Mode.GENERROR.value:
            overlap = point.committee
            row.gen_error = gen_error_k2(overlap.q_d, overlap.q_a, samples=mc_samples, seed=numerics.mc_seed)
        row.wall_time_ms = _elapsed_ms(started, timing)
        rows.append(row)
    mark_dominant(points, numerics.tie_tol)
    for row, point in zip(rows, points):
        row.branch = point.branch.value
    winners = [p for p in points if p.dominant]
    label = winners[0].branch.value if winners else Branch.DEGENERATE.value
    return rows, label


def _amp_task(alpha: float, seed: int, n: int, prior: PriorModel, ch: ChannelModel, init: AmpInit, numerics: NumericsConfig, n_test: int, timing: bool) -> ResultRow:
    started = time.perf_counter()
    inst = generate_instance(n, alpha, prior, ch, seed)
    _, report = amp_run(inst, init=init, numerics=numerics, n_test=n_test)
    row = report.to_row(alpha=float(alpha), seed=int(seed))
    row.init = init.value
    row.wall_time_ms = _elapsed_ms(started, timing)
    return row


def _largek_task(alpha_tilde: float, numerics: NumericsConfig, timing: bool) -> tuple[list[ResultRow], str]:
    started = time.perf_counter()
    branches = solve_scaled(float(alpha_tilde), numerics, stable_only=True)
    rows = [b.to_row() for b in branches]
    for row in rows:
        row.wall_time_ms = _elapsed_ms(started, timing)
    winners = [b for b in branches if b.dominant]
    return rows, winners[0].label.value if winners else Branch.DEGENERATE.value


def _dispatch(task: Callable, args: list, workers: int) -> list:
    """Apply task to every argument tuple, keeping input order."""
    if workers <= 1 or len(args) <= 1:
        return [task(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, *zip(*args)))


# ---------------------------------------------------------------------------
# Modes
# ---------------------------------------------------------------------------


def _summary_statistics(rows: list[ResultRow], alpha: float) -> list[ResultRow]:
    """Mean and standard error over seeds of the numeric AMP columns."""
    stats = {}
    for name in ("q00", "q01", "gen_error", "iterations"):
        values = np.array([getattr(r, name) for r in rows], dtype=float)
        mean = float(np.mean(values))
        stderr = float(np.std(values, ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
        stats[name] = (mean, stderr)
    converged = all(bool(r.converged) for r in rows)
    return [
        ResultRow(mode="amp", alpha=alpha, branch=kind, init=rows[0].init,
                  q00=stats["q00"][i], q01=stats["q01"][i], gen_error=stats["gen_error"][i],
                  iterations=None, converged=converged)
        for i, kind in enumerate(("mean", "stderr"))
    ]


def _run_se(config: SweepConfig, numerics: NumericsConfig) -> SweepResult:
    prior, ch = config.prior_model(), config.channel_model()
    task = partial(_se_task, prior=prior, ch=ch, inits=config.se_inits(), numerics=numerics, timing=config.timing,
                   mode=config.mode.value, mc_samples=config.mc_samples)
    alphas = [float(a) for a in config.alpha_grid()]
    results = _dispatch(task, [(a,) for a in alphas], config.workers)
    rows = [row for rs, _ in results for row in rs]
    summary = [f"{'alpha':>8}  {'dominant':<16} {'q00':>9} {'q01':>9} {'gen_error':>10}"]
    for alpha, (rs, label) in zip(alphas, results):
        best = next((r for r in rs if r.branch == label), rs[0])
        summary.append(f"{alpha:8.4f}  {label:<16} {best.q00:9.5f} {best.q01:9.5f} {best.gen_error:10.5f}")
    return SweepResult(rows=rows, summary=summary)


def _run_amp(config: SweepConfig, numerics: NumericsConfig) -> SweepResult:
    prior, ch = config.prior_model(), config.channel_model()
    task = partial(_amp_task, n=config.n, prior=prior, ch=ch, init=config.amp_init(), numerics=numerics,
                   n_test=config.n_test, timing=config.timing)
    alphas = [float(a) for a in config.alpha_grid()]
    args = [(a, s) for a in alphas for s in config.seeds]
    results = _dispatch(task, args, config.workers)
    rows: list[ResultRow] = []
    summary = [f"{'alpha':>8}  {'q00':>17} {'q01':>17} {'gen_error':>17}"]
    per_alpha = len(config.seeds)
    for i, alpha in enumerate(alphas):
        block = results[i * per_alpha : (i + 1) * per_alpha]
        mean, stderr = _summary_statistics(block, alpha)
        rows.extend(block)
        rows.extend([mean, stderr])
        summary.append(
            f"{alpha:8.4f}  {mean.q00:9.5f}+-{stderr.q00:.5f} {mean.q01:9.5f}+-{stderr.q01:.5f} "
            f"{mean.gen_error:9.5f}+-{stderr.gen_error:.5f}"
        )
    instances = [instance_spec(config.n, a, prior, ch, s) for a, s in args]
    return SweepResult(rows=rows, summary=summary, instances=instances)


def _run_largek(config: SweepConfig, numerics: NumericsConfig) -> SweepResult:
    task = partial(_largek_task, numerics=numerics, timing=config.timing)
    alphas = [float(a) for a in config.alpha_grid()]
    results = _dispatch(task, [(a,) for a in alphas], config.workers)
    rows = [row for rs, _ in results for row in rs]
    summary = [f"{'alpha/K':>8}  {'dominant':<16} {'q_d':>9} {'gen_error':>10}"]
    for alpha, (rs, label) in zip(alphas, results):
        best = next((r for r in rs if r.branch == label), rs[0])
        summary.append(f"{alpha:8.4f}  {label:<16} {best.q_d:9.5f} {best.gen_error:10.5f}")
    return SweepResult(rows=rows, summary=summary)


def _run_transition(config: SweepConfig, numerics: NumericsConfig) -> SweepResult:
    started = time.perf_counter()
    kind: TransitionKind = config.transition
    alpha = find_transition(kind, config.alpha_min, config.alpha_max, config.prior_model(), config.channel_model(), numerics=numerics)
    row = ResultRow(mode="transition", alpha=alpha, branch=kind.value, wall_time_ms=_elapsed_ms(started, config.timing))
    summary = [f"{kind.value} transition ({config.prior.value} prior, {config.channel.value} channel, K={config.k}): alpha = {alpha:.4f} +- {numerics.alpha_tol:g}"]
    return SweepResult(rows=[row], summary=summary)


_MODES = {
    Mode.SE: _run_se,
    Mode.GENERROR: _run_se,
    Mode.AMP: _run_amp,
    Mode.LARGEK: _run_largek,
    Mode.TRANSITION: _run_transition,
}


def default_output_name(config: SweepConfig) -> str:
    return f"{config.mode.value}_{config.prior.value}_{config.channel.value}_k{config.k}.{config.format}"


def run_sweep(config: SweepConfig, storage: Optional[ResultStorage] = None) -> SweepResult:
    """
    Validate and execute a sweep, writing the result file when storage is given.

    Raises:
        ConfigError: If the config does not validate
        NumericalError: If a numerical precondition fails inside a task
    """
    ensure_valid(config)
    numerics = config.effective_numerics()
    logger.info(f"Starting {config.mode.value} sweep ({config.prior.value} prior, {config.channel.value} channel, K={config.k})")
    started = time.perf_counter()
    result = _MODES[config.mode](config, numerics)
    if storage is not None:
        result.path = storage.write_rows(result.rows, config.out or default_output_name(config), config.format)
        if config.save_instances:
            for spec in result.instances:
                storage.save_instance(spec)
            logger.info(f"Saved {len(result.instances)} instance descriptors to {storage.data_dir}")
    logger.info(f"Finished {config.mode.value} sweep: {len(result.rows)} rows in {time.perf_counter() - started:.1f}s")
    return result
