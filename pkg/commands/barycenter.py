"""
Barycenter command for the optimization toolkit.
Computes Wasserstein barycenters with IBP or Proximal IBP.
"""
import logging
import os

import click

from commands import echo_summary, fail, settings_for
from services.experiment_service import load_barycenter_instance, run_barycenter
from utils.errors import ToolkitError

logger = logging.getLogger(__name__)


@click.command('barycenter')
@click.option('--measures', type=click.Path(), help='Directory of measure CSVs on a shared grid.')
@click.option('--gaussians', type=int, default=None, help='Generate this many truncated Gaussians instead.')
@click.option('--weights', default='uniform', show_default=True, help="'uniform' or a weights CSV.")
@click.option('--metric', type=click.Choice(['euclid', 'sqeuclid']), default='sqeuclid', show_default=True)
@click.option('--method', type=click.Choice(['ibp', 'prox-ibp']), default='prox-ibp', show_default=True)
@click.option('--epsilon', type=float, default=0.1, show_default=True, help='Target accuracy.')
@click.option('--L', 'L', type=float, default=None, help='Proximal constant (default max ||C_l||_inf).')
@click.option('--adaptive-L', 'adaptive_L', is_flag=True, help='Choose L by halving until IBP sweeps blow up.')
@click.option('--gamma', type=float, default=None, help='IBP regularization (default eps / (4 ln n)).')
@click.option('--inner-accuracy', type=float, default=None, help='Inner IBP accuracy (default from eps).')
@click.option('--outer-iters', type=int, default=None, help='Outer iterations (default from eps).')
@click.option('--out', 'out_dir', type=click.Path(), default=None, help='Output directory.')
@click.option('--seed', type=int, default=None, help='Generator seed.')
@click.option('--plot', is_flag=True, help='Also write profiles.html.')
@click.pass_context
def barycenter_command(ctx, measures, gaussians, weights, metric, method, epsilon, L, adaptive_L, gamma,
                       inner_accuracy, outer_iters, out_dir, seed, plot):
    """Compute the weighted Wasserstein barycenter of several measures."""
    cfg = ctx.obj['config']
    settings = settings_for(ctx)
    out_dir = out_dir or os.path.join(cfg.OUTPUT_DIR, 'barycenter')
    seed = cfg.SEED if seed is None else seed
    params = {
        'epsilon': epsilon, 'method': method, 'L': L, 'adaptive_L': adaptive_L, 'gamma': gamma,
        'inner_accuracy': inner_accuracy, 'outer_iters': outer_iters, 'plot': plot,
    }
    try:
        instance, grid = load_barycenter_instance(measures, gaussians, seed, weights, metric,
                                                  settings['marginal_floor'])
        summary = run_barycenter(instance, params, out_dir, seed, settings, grid)
    except ToolkitError as e:
        fail(ctx, e)
        return
    echo_summary(summary, ('method', 'n', 'm', 'objective', 'outer_iters', 'sweeps', 'L'))
    click.echo(f"Artifacts written to {out_dir}")
