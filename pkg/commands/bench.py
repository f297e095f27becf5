"""
Bench and batch commands for the optimization toolkit.
bench prints bound-estimate tables for the strongly convex test problems;
batch runs a JSON list of experiments in worker slots.
"""
import logging
import os

import click

from commands import fail, settings_for
from services.bench_service import format_table
from services.experiment_service import load_batch, run_batch, run_bench_experiment
from utils.errors import ToolkitError

logger = logging.getLogger(__name__)


@click.command('bench')
@click.option('--example', type=click.IntRange(1, 2), default=1, show_default=True)
@click.option('--method', type=click.Choice(['fixed', 'adaptive', 'adaptive-sc']), default='adaptive-sc',
              show_default=True)
@click.option('--iters', type=int, default=None, help='Single checkpoint k instead of the default table.')
@click.option('--out', 'out_dir', type=click.Path(), default=None, help='Output directory.')
@click.option('--plot', is_flag=True, help='Also write estimate.html.')
@click.pass_context
def bench_command(ctx, example, method, iters, out_dir, plot):
    """Bound estimates of the fixed and adaptive gradient methods."""
    cfg = ctx.obj['config']
    out_dir = out_dir or os.path.join(cfg.OUTPUT_DIR, f"bench{example}")
    params = {'example': example, 'method': method, 'iters': iters, 'plot': plot}
    try:
        summary = run_bench_experiment(params, out_dir, settings_for(ctx))
    except ToolkitError as e:
        fail(ctx, e)
        return
    rows = [{**row, 'wall_time': t} for row, t in zip(summary['rows'], summary['wall_times'])]
    header, cells = format_table(rows)
    click.echo('  '.join(f"{h:>12}" for h in header))
    for line in cells:
        click.echo('  '.join(f"{c:>12}" for c in line))


@click.command('batch')
@click.argument('batch_file', type=click.Path())
@click.option('--workers', type=int, default=None, help='Worker slots (default from OPTKIT_WORKERS).')
@click.option('--out', 'out_dir', type=click.Path(), default=None, help='Root directory for the runs.')
@click.pass_context
def batch_command(ctx, batch_file, workers, out_dir):
    """Run every experiment of a JSON batch file."""
    cfg = ctx.obj['config']
    try:
        specs = load_batch(batch_file, out_dir or cfg.OUTPUT_DIR)
        outcomes = run_batch(specs, workers or cfg.WORKERS, settings_for(ctx))
    except ToolkitError as e:
        fail(ctx, e)
        return
    worst = 0
    for outcome in outcomes:
        status = 'ok' if outcome.success else f"exit {outcome.exit_code}: {outcome.message}"
        click.echo(f"{outcome.experiment_id}: {status}")
        worst = max(worst, outcome.exit_code)
    ctx.exit(worst)
