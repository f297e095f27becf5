"""
OT command for the optimization toolkit.
Computes transport plans with plain Sinkhorn or Proximal Sinkhorn.
"""
import logging
import os

import click

from commands import echo_summary, fail, settings_for
from services.experiment_service import load_ot_instance, run_ot
from utils.errors import ToolkitError

logger = logging.getLogger(__name__)


@click.command('ot')
@click.option('--cost', type=click.Path(), help='Cost matrix CSV (n x n).')
@click.option('--images', nargs=2, type=click.Path(), help='Two grayscale image CSVs of equal shape.')
@click.option('--metric', type=click.Choice(['euclid', 'sqeuclid']), default='euclid', show_default=True,
              help='Pixel-grid distance used with --images.')
@click.option('--p', 'p_path', type=click.Path(), help='Row marginal CSV (default uniform).')
@click.option('--q', 'q_path', type=click.Path(), help='Column marginal CSV (default uniform).')
@click.option('--epsilon', type=float, default=0.1, show_default=True, help='Target accuracy of the OT value.')
@click.option('--method', type=click.Choice(['sinkhorn', 'prox-sinkhorn']), default='prox-sinkhorn',
              show_default=True)
@click.option('--L', 'L', type=float, default=None, help='Proximal constant (default ||C||_inf).')
@click.option('--adaptive-L', 'adaptive_L', is_flag=True, help='Choose L by halving until inner iterations blow up.')
@click.option('--gamma', type=float, default=None, help='Sinkhorn regularization (default eps / (4 ln n)).')
@click.option('--inner-accuracy', type=float, default=None, help='Inner Sinkhorn accuracy (default from eps).')
@click.option('--outer-iters', type=int, default=None, help='Outer iterations (default from eps).')
@click.option('--precision-floor/--no-precision-floor', default=True, show_default=True,
              help='Clamp proximal anchors at eps / (4 n^2).')
@click.option('--floor-plans', is_flag=True, help='Also floor plans at eps / (2 n^2 ||C||_inf) when cbar degrades.')
@click.option('--out', 'out_dir', type=click.Path(), default=None, help='Output directory.')
@click.option('--seed', type=int, default=None, help='Seed recorded with the run.')
@click.option('--plot', is_flag=True, help='Also write trace.html.')
@click.pass_context
def ot_command(ctx, cost, images, metric, p_path, q_path, epsilon, method, L, adaptive_L, gamma, inner_accuracy,
               outer_iters, precision_floor, floor_plans, out_dir, seed, plot):
    """Approximate the optimal transport plan between two measures."""
    cfg = ctx.obj['config']
    settings = settings_for(ctx)
    out_dir = out_dir or os.path.join(cfg.OUTPUT_DIR, 'ot')
    seed = cfg.SEED if seed is None else seed
    params = {
        'epsilon': epsilon, 'method': method, 'L': L, 'adaptive_L': adaptive_L, 'gamma': gamma,
        'inner_accuracy': inner_accuracy, 'outer_iters': outer_iters, 'precision_floor': precision_floor,
        'floor_plans': floor_plans, 'plot': plot,
    }
    try:
        instance = load_ot_instance(cost, images or None, p_path, q_path, metric, settings['marginal_floor'])
        summary = run_ot(instance, params, out_dir, seed, settings)
    except ToolkitError as e:
        fail(ctx, e)
        return
    echo_summary(summary, ('method', 'n', 'transport_cost', 'outer_iters', 'iterations', 'L'))
    click.echo(f"Artifacts written to {out_dir}")
