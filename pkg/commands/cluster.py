"""
Cluster command for the optimization toolkit.
Minimizes the electoral clustering potential with a gradient method.
"""
import logging
import os

import click

from commands import echo_summary, fail, settings_for
from services.experiment_service import build_clustering_problem, run_cluster
from utils.errors import ToolkitError

logger = logging.getLogger(__name__)


@click.command('cluster')
@click.option('--opinions', type=click.Path(), default=None, help='Opinion matrix CSV (parties x issues).')
@click.option('--n', type=int, default=5, show_default=True, help='Parties of a random opinion matrix.')
@click.option('--m', type=int, default=3, show_default=True, help='Issues of a random opinion matrix.')
@click.option('--g', 'g_name', type=click.Choice(['zero', 'linear', 'quadratic']), default='quadratic',
              show_default=True)
@click.option('--scale', type=float, default=1.0, show_default=True, help='Scale of the quadratic g.')
@click.option('--mu1', type=float, default=None, help='Entropy weight (default 2 Lg).')
@click.option('--mu2', type=float, default=None, help='Quadratic weight (default 2 Lg).')
@click.option('--method', type=click.Choice(['fixed', 'adaptive', 'adaptive-sc']), default='fixed',
              show_default=True)
@click.option('--iters', type=int, default=100, show_default=True)
@click.option('--out', 'out_dir', type=click.Path(), default=None, help='Output directory.')
@click.option('--seed', type=int, default=None, help='Seed for the start point and random opinions.')
@click.option('--plot', is_flag=True, help='Also write trace.html.')
@click.pass_context
def cluster_command(ctx, opinions, n, m, g_name, scale, mu1, mu2, method, iters, out_dir, seed, plot):
    """Find party masses z and positions p minimizing the clustering potential."""
    cfg = ctx.obj['config']
    out_dir = out_dir or os.path.join(cfg.OUTPUT_DIR, 'cluster')
    seed = cfg.SEED if seed is None else seed
    params = {
        'opinions': opinions, 'n': n, 'm': m, 'g': g_name, 'scale': scale, 'mu1': mu1, 'mu2': mu2,
        'method': method, 'iters': iters, 'plot': plot,
    }
    try:
        prob = build_clustering_problem(params, seed)
        summary = run_cluster(prob, params, out_dir, seed, settings_for(ctx))
    except ToolkitError as e:
        fail(ctx, e)
        return
    echo_summary(summary, ('method', 'potential', 'z', 'p'))
    click.echo(f"Artifacts written to {out_dir}")
