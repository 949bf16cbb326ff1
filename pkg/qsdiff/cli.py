"""Command line interface of qsdiff.

Data goes to files or standard output; logs and errors go to standard
error. The exit code follows ``qsdiff.status``.
"""

from __future__ import annotations

import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import click
import numpy as np
from pydantic import ValidationError

from qsdiff._utils import dumps_json
from qsdiff.config import SimConfig, load_model_spec
from qsdiff.exceptions import (
    DefaultFormatter,
    InsufficientSurvivors,
    QsdError,
    SimpleFormatter,
    StepTooCoarseWarning,
)
from qsdiff.logging import configure_logger, get_logger
from qsdiff.model import DiffusionModel, build_scale_speed
from qsdiff.montecarlo import (
    CROSSING_THRESHOLD,
    SurvivorStats,
    absorbed_fraction,
    compare_qsd,
    estimate_escape_rate,
    estimate_mortality,
    simulate,
    write_stats_csv,
)
from qsdiff.plotting import density_script, survivors_script, write_script
from qsdiff.schemas import SCHEMAS, CheckDocument, EigenDocument, VerifyDocument
from qsdiff.serialization import (
    eigen_document,
    render_json,
    verdict_document,
    write_csv,
    write_json,
)
from qsdiff.spectral import eigenvalue_search, lambda0, qsd_density
from qsdiff.status import EXIT_INTERNAL, EXIT_OK, EXIT_PRECONDITION, EXIT_UNDETERMINED
from qsdiff.verdict import Outcome, Verdict, decide, htransform

logger = get_logger(__name__)

MORTALITY_TOLERANCE = 0.10
ESCAPE_TOLERANCE = 0.15
ABSORBED_SE = 3.0
TV_SETTLED = 0.05


def _load_model(path: str, tol: float | None) -> DiffusionModel:
    model = DiffusionModel.from_spec(load_model_spec(path))
    if tol is not None:
        model = replace(model, numerics=model.numerics.model_copy(update={'tol': tol}))
    return model


def _emit(payload: bytes, out: str | None) -> None:
    if out is None:
        click.echo(payload.decode(), nl=False)
    else:
        Path(out).write_bytes(payload)
        logger.info('artifact written', extra={'path': out})


def _parse_times(value: str | None) -> list[float] | None:
    if value is None:
        return None
    try:
        return [float(item) for item in value.split(',') if item.strip()]
    except ValueError as exc:
        raise click.BadParameter(f'not a list of numbers: {value!r}') from exc


def _sim_config(
    *,
    paths: int,
    t_final: float,
    dt: float,
    seed: int,
    bins: int,
    x_hi: float | None,
    record_times: str | None,
    x0: tuple[float, ...],
    block_size: int,
    workers: int | None,
) -> SimConfig:
    starts = x0 or (1.0,)
    try:
        return SimConfig(
            paths=paths,
            t_final=t_final,
            dt=dt,
            seed=seed,
            initial=[(point, 1.0) for point in starts],
            bins=bins,
            x_hi=x_hi,
            record_times=_parse_times(record_times),
            block_size=block_size,
            max_workers=workers,
        )
    except ValidationError as exc:
        messages = '; '.join(err['msg'] for err in exc.errors())
        raise click.UsageError(f'invalid simulation settings: {messages}') from exc


def model_option(func):
    return click.option(
        '--model',
        'model_path',
        required=True,
        type=click.Path(dir_okay=False),
        help='Model file (JSON).',
    )(func)


def tol_option(func):
    return click.option(
        '--tol',
        default=None,
        type=click.FloatRange(min=0, min_open=True),
        help='Bisection tolerance for eigenvalues.',
    )(func)


_POSITIVE = click.FloatRange(min=0, min_open=True)

_SIMULATION_OPTIONS = [
    click.option(
        '--paths', default=100_000, type=click.IntRange(1), help='Number of paths.'
    ),
    click.option('--t', 't_final', default=8.0, type=_POSITIVE, help='Horizon.'),
    click.option('--dt', default=1e-3, type=_POSITIVE, help='Time step.'),
    click.option(
        '--seed', default=0, type=click.IntRange(0, 2**64 - 1), help='Random seed.'
    ),
    click.option('--bins', default=100, type=click.IntRange(1), help='Histogram bins.'),
    click.option(
        '--x-hi',
        default=None,
        type=_POSITIVE,
        help='Right end of the histogram; a pilot run estimates it when absent.',
    ),
    click.option(
        '--record-times', default=None, help='Comma separated observation times.'
    ),
    click.option(
        '--x0',
        multiple=True,
        type=_POSITIVE,
        help='Starting point; repeat for a uniform mixture (default 1).',
    ),
    click.option(
        '--block-size',
        default=8192,
        type=click.IntRange(1),
        help='Paths per random stream block.',
    ),
    click.option(
        '--workers',
        default=None,
        type=click.IntRange(1),
        help='Worker threads; results do not depend on it.',
    ),
]


def simulation_options(func):
    """Options shared by ``simulate`` and ``verify``."""
    for option in reversed(_SIMULATION_OPTIONS):
        func = option(func)
    return func


@click.group()
@click.option(
    '--log-level',
    default='WARNING',
    type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']),
    help='Logging level.',
)
@click.option(
    '--log-format',
    default='text',
    type=click.Choice(['text', 'json']),
    help='Log format.',
)
@click.option('--log-file', default='qsdiff.log', help='Log file path.')
@click.option('--log-to-file', is_flag=True, help='Enable logging to file.')
@click.option(
    '--error-format',
    default='default',
    type=click.Choice(['default', 'simple']),
    help='Shape of error reports on standard error.',
)
def cli(log_level, log_format, log_file, log_to_file, error_format):
    """Classify killed diffusions on (0, inf) and check the verdicts by simulation."""
    configure_logger(
        log_file=log_file,
        level=log_level,
        log_format=log_format,
        log_to_file=log_to_file,
    )
    QsdError.set_formatter(
        SimpleFormatter() if error_format == 'simple' else DefaultFormatter()
    )


@cli.command()
@model_option
@tol_option
@click.option('--out', default=None, help='Output file; standard output when absent.')
@click.pass_context
def classify(ctx, model_path, tol, out):
    """Decide between convergence to the QSD and escape to infinity."""
    verdict = decide(_load_model(model_path, tol))
    _emit(render_json(verdict), out)
    ctx.exit(verdict.exit_code)


@cli.command()
@model_option
@tol_option
@click.option('--index', default=0, type=click.IntRange(0), help='Eigenvalue index n.')
@click.option('--out', default=None, help='Output file; standard output when absent.')
@click.option(
    '--csv', 'csv_path', default=None,
    help='Eigenfunction samples; next to --out when absent.',
)
def eigen(model_path, tol, index, out, csv_path):
    """Report the n-th eigenvalue; for n = 0 also the eigenfunction and its masses."""
    model = _load_model(model_path, tol)
    if index > 0:
        found = eigenvalue_search(model, index, tol)
        document = EigenDocument(
            index=index,
            lambda_=found.estimate,
            bracket=found.bracket,
            x_max_used=found.x_max_used,
            schedule=list(found.schedule),
        )
        _emit(render_json(document), out)
        return

    result = lambda0(model, tol)
    if csv_path is None and out is not None:
        csv_path = str(Path(out).with_suffix('.csv'))
    if csv_path is not None:
        write_csv(csv_path, ['x', 'phi'], [result.grid, result.phi.values])
    _emit(render_json(eigen_document(result, phi_csv=csv_path)), out)


@cli.command()
@model_option
@tol_option
@click.option('--out', default='qsd.csv', show_default=True, help='Density CSV.')
@click.option('--plot', is_flag=True, help='Write a gnuplot script next to the CSV.')
def qsd(model_path, tol, out, plot):
    """Write the quasistationary density at the bottom of the spectrum."""
    density = qsd_density(lambda0(_load_model(model_path, tol), tol))
    write_csv(out, ['x', 'density'], [density.grid, density.values])
    if plot:
        write_script(density_script(out), out)
    logger.info('artifact written', extra={'path': out})


@cli.command(name='simulate')
@model_option
@simulation_options
@click.option(
    '--out',
    default='survivors.csv',
    show_default=True,
    help='Survivor CSV; the JSON document is written next to it.',
)
@click.option('--plot', is_flag=True, help='Write a gnuplot script next to the CSV.')
def simulate_cmd(model_path, out, plot, **options):
    """Run the killed-path Monte Carlo and record survivors."""
    model = _load_model(model_path, None)
    stats = simulate(model, _sim_config(**options))
    write_stats_csv(stats, out)
    write_json(stats, Path(out).with_suffix('.json'))
    if plot:
        write_script(survivors_script(out, stats.bin_edges.tolist()), out)
    logger.info('artifact written', extra={'path': out})


def _within(
    name: str, estimate: float, se: float, expected: float, allowed: float
) -> CheckDocument:
    return CheckDocument(
        name=name,
        passed=abs(estimate - expected) <= allowed,
        estimate=estimate,
        standard_error=None if math.isnan(se) else se,
        expected=expected,
        tolerance=allowed,
    )


def _hitting_probability(model: DiffusionModel, cfg: SimConfig) -> float | None:
    """``P(T_0 < inf)`` averaged over the initial law; None unless the scale tail is finite."""
    table = build_scale_speed(model)
    total = table.scale_tail.log_value
    if total is None or not table.scale_tail.is_finite:
        return None
    points = np.array([p for p, _ in cfg.initial])
    weights = np.array([w for _, w in cfg.initial])
    log_scale = np.asarray(table.log_scale_at(points), float)
    hit = -np.expm1(log_scale - total)
    return float(weights @ hit / weights.sum())


def _mortality_check(
    stats: SurvivorStats, verdict: Verdict, lag: float
) -> CheckDocument:
    expected = float(verdict.mortality_rate or 0.0)
    # An escaping process may have K = 0; the tolerance then scales with lambda0.
    scale = max(expected, verdict.evidence.lambda0 or 0.0, 1e-3)
    try:
        estimate, se = estimate_mortality(stats, lag)
    except InsufficientSurvivors as exc:
        return CheckDocument(name='mortality_rate', passed=False, detail=exc.message)
    return _within(
        'mortality_rate', estimate, se, expected, MORTALITY_TOLERANCE * scale
    )


def _tv_check(
    stats: SurvivorStats, verdict: Verdict
) -> tuple[CheckDocument, list[float | None]]:
    distances = compare_qsd(stats, verdict.qsd)
    tv = [None if math.isnan(d) else float(d) for d in distances]
    finite = distances[np.isfinite(distances)]
    if finite.size < 2:
        return CheckDocument(
            name='tv_trend', passed=False, detail='too few record times with survivors'
        ), tv
    early = float(finite[len(finite) // 4])
    last = float(finite[-1])
    return CheckDocument(
        name='tv_trend',
        passed=last <= early or last <= TV_SETTLED,
        estimate=last,
        expected=early,
        tolerance=TV_SETTLED,
        detail='distance at the last record time against the first quarter',
    ), tv


def _escape_checks(
    stats: SurvivorStats,
    model: DiffusionModel,
    verdict: Verdict,
    cfg: SimConfig,
    z: float,
) -> list[CheckDocument]:
    checks = []
    expected = float(verdict.escape_rate or 0.0)
    try:
        estimate, se = estimate_escape_rate(stats, z)
        checks.append(
            _within(
                'escape_rate',
                estimate,
                se,
                expected,
                ESCAPE_TOLERANCE * max(expected, 1e-3),
            )
        )
    except InsufficientSurvivors as exc:
        checks.append(CheckDocument(name='escape_rate', passed=False, detail=exc.message))

    if model.killing_is_zero and math.isinf(model.alpha):
        hit = _hitting_probability(model, cfg)
        if hit is not None:
            fraction, se = absorbed_fraction(stats)
            checks.append(_within('absorbed_fraction', fraction, se, hit, ABSORBED_SE * se))
    return checks


@cli.command()
@model_option
@tol_option
@simulation_options
@click.option(
    '--z',
    default=2.0,
    type=_POSITIVE,
    help='Right end of the compact set used for the escape rate.',
)
@click.option(
    '--r',
    'lag',
    default=None,
    type=_POSITIVE,
    help='Lag of the survival ratios; a quarter of the horizon by default.',
)
@click.option('--out', default=None, help='Output file; standard output when absent.')
@click.pass_context
def verify(ctx, model_path, tol, z, lag, out, **options):
    """Classify, then check the verdict against a simulation."""
    model = _load_model(model_path, tol)
    verdict = decide(model)
    if verdict.outcome is Outcome.UNDETERMINED:
        document = VerifyDocument(
            verdict=verdict_document(verdict), checks=[], agreement=False
        )
        _emit(render_json(document), out)
        ctx.exit(EXIT_UNDETERMINED)

    cfg = _sim_config(**options)
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', StepTooCoarseWarning)
        stats = simulate(model, cfg)

    checks = [_mortality_check(stats, verdict, cfg.t_final / 4 if lag is None else lag)]
    tv = None
    if verdict.outcome is Outcome.CONVERGES and verdict.qsd is not None:
        check, tv = _tv_check(stats, verdict)
        checks.append(check)
    if verdict.outcome is Outcome.ESCAPES:
        checks.extend(_escape_checks(stats, model, verdict, cfg, z))
    if stats.step_too_coarse:
        checks.append(
            CheckDocument(
                name='step_size',
                passed=False,
                estimate=stats.first_step_crossing,
                tolerance=CROSSING_THRESHOLD,
                detail='time step is coarse near 0',
            )
        )

    agreement = all(check.passed for check in checks)
    if not agreement:
        logger.warning(
            'simulation disagrees with the verdict',
            extra={'failed': [c.name for c in checks if not c.passed]},
        )
    document = VerifyDocument(
        verdict=verdict_document(verdict),
        checks=checks,
        agreement=agreement,
        tv_distance=tv,
    )
    _emit(render_json(document), out)


@cli.command(name='htransform')
@model_option
@click.option('--out', required=True, help='Transformed model file.')
@click.option(
    '--lenient',
    is_flag=True,
    help='Write a recurrent model unchanged instead of failing.',
)
def htransform_cmd(model_path, out, lenient):
    """Condition a transient unkilled model on hitting 0."""
    result = htransform(_load_model(model_path, None), strict=not lenient)
    write_json(result.model, out)
    if result.trivial:
        click.echo('model is recurrent; written unchanged', err=True)


@cli.command()
@click.argument('name', type=click.Choice(sorted(SCHEMAS)))
def schema(name):
    """Print the JSON Schema of an artifact."""
    click.echo(dumps_json(SCHEMAS[name].model_json_schema()).decode(), nl=False)


def run(argv: list[str] | None = None) -> int:
    """Run the CLI and return its exit code instead of exiting."""
    try:
        result = cli.main(args=argv, prog_name='qsd', standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return EXIT_PRECONDITION
    except click.Abort:
        click.echo('Aborted!', err=True)
        return EXIT_PRECONDITION
    except QsdError as exc:
        click.echo(dumps_json(exc.to_dict()).decode(), err=True, nl=False)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        logger.exception('internal failure')
        click.echo(f'internal error: {exc}', err=True)
        return EXIT_INTERNAL
    return result if isinstance(result, int) else EXIT_OK


def entrypoint() -> None:
    sys.exit(run())
