"""Killed-path Monte Carlo for checking verdicts.

Paths follow Euler-Maruyama for ``dX = b(X) dt + dW``. At 0 they are
absorbed (with a Brownian-bridge crossing test inside each step), reflected,
or reflected and killed once their local time passes an ``Exp(1) / alpha``
draw. The killing rate runs a trapezoidal clock against an independent
``Exp(1)`` draw.

Paths are simulated in fixed-size blocks. Block ``k`` draws from a Philox
stream keyed by ``(seed, k)``, so results depend on the seed and the block
size but never on how many workers run the blocks.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Literal

import numpy as np
from scipy import stats as scipy_stats

from qsdiff._utils import parallel_map
from qsdiff.config import SimConfig
from qsdiff.exceptions import InsufficientSurvivors, StepTooCoarseWarning
from qsdiff.logging import get_logger
from qsdiff.model import DiffusionModel, SampledFunction

logger = get_logger(__name__)

MIN_SURVIVORS = 100
# Mean probability of touching 0 during the first step above which dt is too coarse.
CROSSING_THRESHOLD = 0.01
_PILOT_PATHS = 4096
_PILOT_QUANTILE = 0.999

EstimatorMethod = Literal['ratio', 'power-corrected']


def block_rng(seed: int, block_index: int) -> np.random.Generator:
    """Counter-based stream of one block of paths."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block_index,)))
    )


@dataclass(frozen=True, eq=False)
class SurvivorStats:
    """Survivor counts and histograms at each record time.

    ``histogram[i]`` bins the survivors at ``record_times[i]`` over
    ``bin_edges``; survivors outside the edges are counted in ``overflow``.
    """

    record_times: np.ndarray
    paths: int
    survivors: np.ndarray
    absorbed: np.ndarray
    bin_edges: np.ndarray
    histogram: np.ndarray
    overflow: np.ndarray
    block_survivors: np.ndarray
    dt: float
    t_final: float
    seed: int
    step_too_coarse: bool = False
    first_step_crossing: float = 0.0

    @property
    def survival_prob(self) -> np.ndarray:
        return self.survivors / self.paths

    def survival_ratio(self, i: int, j: int) -> float:
        """``a_hat(t_i, t_j - t_i)``, the conditional survival from ``t_i`` to ``t_j``."""
        if self.survivors[i] == 0:
            return math.nan
        return float(self.survivors[j] / self.survivors[i])


@dataclass(frozen=True, eq=False)
class _BlockResult:
    survivors: np.ndarray
    absorbed: np.ndarray
    histogram: np.ndarray
    overflow: np.ndarray
    crossing_sum: float
    size: int
    positions: list[np.ndarray] | None = None


def _initial_positions(cfg: SimConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    points = np.array([p for p, _ in cfg.initial], float)
    if points.size == 1:
        return np.full(n, points[0])
    weights = np.array([w for _, w in cfg.initial], float)
    return rng.choice(points, size=n, p=weights / weights.sum())


def _record_steps(times: np.ndarray, dt: float) -> np.ndarray:
    return np.maximum(np.rint(times / dt).astype(int), 1)


def _simulate_block(
    block: tuple[int, int],
    *,
    model: DiffusionModel,
    cfg: SimConfig,
    edges: np.ndarray | None,
    capture: bool = False,
) -> _BlockResult:
    index, n = block
    rng = block_rng(cfg.seed, index)
    dt = cfg.dt
    sqrt_dt = math.sqrt(dt)
    n_steps = int(round(cfg.t_final / dt))
    record_steps = _record_steps(cfg.resolved_record_times(), dt)
    records = record_steps.size
    bins = 0 if edges is None else edges.size - 1

    survivors = np.zeros(records, dtype=np.int64)
    absorbed = np.zeros(records, dtype=np.int64)
    histogram = np.zeros((records, bins), dtype=np.int64)
    overflow = np.zeros(records, dtype=np.int64)
    positions: list[np.ndarray] | None = [] if capture else None

    absorbing = math.isinf(model.alpha)
    elastic = 0.0 < model.alpha < math.inf
    killing = not model.killing_is_zero
    band = sqrt_dt

    ids = np.arange(n)
    x = _initial_positions(cfg, rng, n)
    clock = np.zeros(n)
    clock_limit = rng.standard_exponential(n) if killing else None
    local_time = np.zeros(n)
    local_limit = rng.standard_exponential(n) / model.alpha if elastic else None
    kappa_prev = np.asarray(model.kappa(x), float) if killing else None
    absorbed_total = 0
    crossing_sum = 0.0

    record = 0
    for step in range(1, n_steps + 1):
        z = rng.standard_normal(n)
        u = rng.random(n) if absorbing else None
        if ids.size:
            with np.errstate(over='ignore', under='ignore'):
                drift = np.asarray(model.b(x), float)
                x_new = x + drift * dt + sqrt_dt * z[ids]
                crossing = np.where(
                    x_new <= 0.0, 1.0, np.exp(-2.0 * x * np.maximum(x_new, 0.0) / dt)
                )
            if step == 1:
                crossing_sum = float(crossing.sum())

            if absorbing:
                hit = (x_new <= 0.0) | (u[ids] < crossing)
            else:
                x_new = np.abs(x_new)
                hit = np.zeros(ids.size, dtype=bool)
                if elastic:
                    local_time += dt * (x_new < band) / (2.0 * band)
                    hit = local_time > local_limit[ids]
            dead = hit
            if killing:
                kappa_new = np.asarray(model.kappa(np.where(hit, x, x_new)), float)
                clock += 0.5 * (kappa_prev + kappa_new) * dt
                dead = hit | (clock > clock_limit[ids])
                kappa_prev = kappa_new[~dead]
            absorbed_total += int(hit.sum())

            keep = ~dead
            ids, x = ids[keep], x_new[keep]
            clock, local_time = clock[keep], local_time[keep]

        while record < records and record_steps[record] == step:
            survivors[record] = ids.size
            absorbed[record] = absorbed_total
            if edges is not None:
                histogram[record] = np.histogram(x, bins=edges)[0]
                overflow[record] = ids.size - histogram[record].sum()
            if positions is not None:
                positions.append(x.copy())
            record += 1
        if record == records:
            break

    return _BlockResult(
        survivors=survivors,
        absorbed=absorbed,
        histogram=histogram,
        overflow=overflow,
        crossing_sum=crossing_sum,
        size=n,
        positions=positions,
    )


def _blocks(paths: int, block_size: int) -> list[tuple[int, int]]:
    full, rest = divmod(paths, block_size)
    blocks = [(k, block_size) for k in range(full)]
    if rest:
        blocks.append((full, rest))
    return blocks


def _pilot_x_hi(model: DiffusionModel, cfg: SimConfig) -> float:
    """Right end of the histogram from a small deterministic run of block 0."""
    size = min(cfg.paths, cfg.block_size, _PILOT_PATHS)
    result = _simulate_block((0, size), model=model, cfg=cfg, edges=None, capture=True)
    samples = np.concatenate(result.positions) if result.positions else np.empty(0)
    start = max(p for p, _ in cfg.initial)
    if samples.size == 0:
        return 2.0 * start
    return max(float(np.quantile(samples, _PILOT_QUANTILE)), start)


def resolve_edges(model: DiffusionModel, cfg: SimConfig) -> np.ndarray:
    """Histogram edges: explicit, or ``bins`` equal bins on ``[0, x_hi]``."""
    if not isinstance(cfg.bins, int):
        return np.asarray(cfg.bins, float)
    x_hi = cfg.x_hi if cfg.x_hi is not None else _pilot_x_hi(model, cfg)
    return np.linspace(0.0, x_hi, cfg.bins + 1)


def simulate(model: DiffusionModel, cfg: SimConfig) -> SurvivorStats:
    """Simulate ``cfg.paths`` killed paths and record the survivors.

    Warns:
        StepTooCoarseWarning: when the mean probability of touching 0 in the
            first step exceeds ``CROSSING_THRESHOLD``.

    """
    edges = resolve_edges(model, cfg)
    blocks = _blocks(cfg.paths, cfg.block_size)
    run = partial(_simulate_block, model=model, cfg=cfg, edges=edges)
    results = parallel_map(run, blocks, cfg.max_workers)

    # Reduce in block order so sums do not depend on scheduling.
    survivors = np.sum([r.survivors for r in results], axis=0)
    absorbed = np.sum([r.absorbed for r in results], axis=0)
    histogram = np.sum([r.histogram for r in results], axis=0)
    overflow = np.sum([r.overflow for r in results], axis=0)
    crossing = sum(r.crossing_sum for r in results) / cfg.paths

    too_coarse = crossing > CROSSING_THRESHOLD
    if too_coarse:
        warnings.warn(
            f'dt={cfg.dt} is coarse near 0: mean first-step crossing '
            f'probability {crossing:.3g}',
            StepTooCoarseWarning,
            stacklevel=2,
        )
    stats = SurvivorStats(
        record_times=cfg.resolved_record_times(),
        paths=cfg.paths,
        survivors=survivors,
        absorbed=absorbed,
        bin_edges=edges,
        histogram=histogram,
        overflow=overflow,
        block_survivors=np.array([r.survivors for r in results]),
        dt=cfg.dt,
        t_final=cfg.t_final,
        seed=cfg.seed,
        step_too_coarse=too_coarse,
        first_step_crossing=crossing,
    )
    logger.info(
        'simulation finished',
        extra={
            'paths': cfg.paths,
            'blocks': len(blocks),
            'final_survivors': int(survivors[-1]),
            'absorbed': int(absorbed[-1]),
        },
    )
    return stats


# Estimators --------------------------------------------------------------


def _usable_pairs(stats: SurvivorStats, r: float) -> list[tuple[int, int]]:
    times = stats.record_times
    pairs = []
    for i, t in enumerate(times):
        match = np.flatnonzero(np.isclose(times, t + r, rtol=0.0, atol=0.5 * stats.dt))
        if match.size and stats.survivors[match[0]] > MIN_SURVIVORS:
            pairs.append((i, int(match[0])))
    return pairs


def _ratio_rate(survivors: np.ndarray, pairs: list[tuple[int, int]], r: float) -> float:
    return float(np.mean([-math.log(survivors[j] / survivors[i]) / r for i, j in pairs]))


def _power_corrected_fit(times: np.ndarray, log_values: np.ndarray) -> tuple[float, float]:
    """Fit ``log f = a - eta t + beta log t``; return ``eta`` and its standard error."""
    design = np.column_stack([np.ones_like(times), times, np.log(times)])
    coef, _, rank, _ = np.linalg.lstsq(design, log_values, rcond=None)
    dof = times.size - design.shape[1]
    if rank < design.shape[1] or dof <= 0:
        return -float(coef[1]), math.nan
    residual = log_values - design @ coef
    sigma2 = float(residual @ residual) / dof
    cov = sigma2 * np.linalg.inv(design.T @ design)
    return -float(coef[1]), math.sqrt(max(cov[1, 1], 0.0))


def estimate_mortality(
    stats: SurvivorStats, r: float, *, method: EstimatorMethod = 'power-corrected'
) -> tuple[float, float]:
    """Estimate the asymptotic mortality rate and its standard error.

    ``'power-corrected'``, the default, fits ``log P(tau > t)`` from
    ``t_final / 4`` on with a ``log t`` term, which removes the polynomial
    prefactor of survival at the edge of the spectrum. It needs 4 such record
    times with more than ``MIN_SURVIVORS`` survivors and falls back to the
    ratio otherwise. ``'ratio'`` averages ``-log(a_hat(t, r)) / r`` over the
    later half of the usable pairs, with a jackknife over blocks for the
    error; the prefactor biases it upward.

    Raises:
        InsufficientSurvivors: with fewer than 3 pairs ``(t, t + r)`` holding
            more than ``MIN_SURVIVORS`` survivors at ``t + r``.

    """
    pairs = _usable_pairs(stats, r)
    if len(pairs) < 3:
        raise InsufficientSurvivors(
            f'Need 3 record-time pairs with more than {MIN_SURVIVORS} survivors',
            pairs=len(pairs),
        )
    if method == 'power-corrected':
        usable = np.flatnonzero(
            (stats.survivors > MIN_SURVIVORS) & (stats.record_times >= stats.t_final / 4)
        )
        if usable.size >= 4:
            return _power_corrected_fit(
                stats.record_times[usable], np.log(stats.survival_prob[usable])
            )

    later = pairs[len(pairs) // 2 :]
    estimate = _ratio_rate(stats.survivors, later, r)

    blocks = stats.block_survivors
    if blocks.shape[0] >= 2:
        replicates = []
        for k in range(blocks.shape[0]):
            rest = stats.survivors - blocks[k]
            if np.all(rest[[j for _, j in later]] > 0):
                replicates.append(_ratio_rate(rest, later, r))
        count = len(replicates)
        if count >= 2:
            spread = np.asarray(replicates) - np.mean(replicates)
            return estimate, math.sqrt((count - 1) / count * float(spread @ spread))

    # Binomial delta method for a single block.
    variances = [
        (1 - stats.survivors[j] / stats.survivors[i]) / stats.survivors[j] / r**2
        for i, j in later
    ]
    return estimate, math.sqrt(float(np.mean(variances)) / len(later))


def conditioned_subz_fraction(stats: SurvivorStats, z: float) -> np.ndarray:
    """``P(X_t <= z | tau > t)`` at each record time from the histograms.

    The bin holding ``z`` contributes linearly. NaN where no path survives.
    """
    edges = stats.bin_edges
    left, right = edges[:-1], edges[1:]
    share = np.clip((z - left) / (right - left), 0.0, 1.0)
    below = stats.histogram @ share
    if z >= edges[-1]:
        below = below + stats.overflow
    with np.errstate(invalid='ignore', divide='ignore'):
        return np.where(stats.survivors > 0, below / stats.survivors, np.nan)


def estimate_escape_rate(
    stats: SurvivorStats, z: float, *, method: EstimatorMethod = 'power-corrected'
) -> tuple[float, float]:
    """Fit the exponential decay rate of ``P(X_t <= z | tau > t)``.

    Uses record times from ``t_final / 4`` on. ``'power-corrected'``, the
    default, adds a ``log t`` term to the fit when 4 times are usable;
    ``'ratio'`` is the negated least-squares slope of the log fraction.

    Raises:
        InsufficientSurvivors: with survivors below ``z`` at fewer than 3
            record times.

    """
    fraction = conditioned_subz_fraction(stats, z)
    usable = np.flatnonzero(
        (stats.record_times >= stats.t_final / 4) & np.isfinite(fraction) & (fraction > 0)
    )
    if usable.size < 3:
        raise InsufficientSurvivors(
            f'Need survivors below z={z} at 3 record times', usable=int(usable.size)
        )
    times = stats.record_times[usable]
    log_fraction = np.log(fraction[usable])
    if method == 'power-corrected' and usable.size >= 4:
        return _power_corrected_fit(times, log_fraction)
    fit = scipy_stats.linregress(times, log_fraction)
    return -float(fit.slope), float(fit.stderr)


def bin_probabilities(qsd: SampledFunction, edges: np.ndarray) -> np.ndarray:
    """Mass of a density in each bin, renormalized on the histogram support."""
    cumulative = qsd.cumulative()
    at_edges = np.interp(edges, qsd.grid, cumulative)
    mass = np.diff(at_edges)
    total = mass.sum()
    return mass / total if total > 0 else mass


def compare_qsd(stats: SurvivorStats, qsd: SampledFunction) -> np.ndarray:
    """Total-variation distance between survivors and ``qsd`` at each record time.

    Survivors outside the histogram count fully toward the distance.
    """
    q = bin_probabilities(qsd, stats.bin_edges)
    survivors = stats.survivors.astype(float)
    with np.errstate(invalid='ignore', divide='ignore'):
        empirical = stats.histogram / survivors[:, None]
        tv = 0.5 * np.abs(empirical - q[None, :]).sum(axis=1) + 0.5 * stats.overflow / survivors
    return np.where(survivors > 0, tv, np.nan)


def absorbed_fraction(stats: SurvivorStats) -> tuple[float, float]:
    """Fraction of paths absorbed at 0 by the last record time, with its binomial error."""
    p = float(stats.absorbed[-1]) / stats.paths
    return p, math.sqrt(max(p * (1.0 - p), 0.0) / stats.paths)


def stats_rows(stats: SurvivorStats) -> list[list[object]]:
    """CSV rows: header then one row per record time."""
    bins = stats.histogram.shape[1]
    header = ['t', 'survivors', 'survival_prob', *[f'bin_{k}' for k in range(bins)], 'overflow']
    rows: list[list[object]] = [header]
    for i, t in enumerate(stats.record_times):
        rows.append(
            [
                repr(float(t)),
                int(stats.survivors[i]),
                repr(float(stats.survival_prob[i])),
                *(int(c) for c in stats.histogram[i]),
                int(stats.overflow[i]),
            ]
        )
    return rows


def write_stats_csv(stats: SurvivorStats, path: str | Path) -> Path:
    path = Path(path)
    with path.open('w', newline='') as handle:
        csv.writer(handle, lineterminator='\n').writerows(stats_rows(stats))
    return path
