"""
Optimization Toolkit - Main Command Line Application

Gradient methods with inexact models of the objective, applied to electoral
clustering, optimal transport (Sinkhorn and Proximal Sinkhorn) and
Wasserstein barycenters (IBP and Proximal IBP).
"""

import logging
import os

import click

from config import config
from commands.barycenter import barycenter_command
from commands.bench import batch_command, bench_command
from commands.cluster import cluster_command
from commands.ot import ot_command


def configure_logging(level: str) -> None:
    """Route module loggers to stderr at the configured level."""
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        force=True,
    )


def create_app(config_name='default'):
    """
    Application factory pattern for creating the command group.

    Args:
        config_name: Configuration name to use

    Returns:
        click command group
    """
    if config_name not in config:
        raise click.BadParameter(f"Unknown configuration: {config_name}")
    app_config = config[config_name]

    @click.group(name='optkit')
    @click.option('--log-level', default=None, help='Override the configured log level.')
    @click.pass_context
    def app(ctx, log_level):
        """Inexact-model gradient methods and entropic optimal transport."""
        ctx.ensure_object(dict)
        ctx.obj['config'] = app_config
        configure_logging((log_level or app_config.LOG_LEVEL).upper())

    # Register commands
    app.add_command(ot_command)
    app.add_command(barycenter_command)
    app.add_command(cluster_command)
    app.add_command(bench_command)
    app.add_command(batch_command)

    return app


def main():
    """Main application entry point."""
    # Get configuration from environment
    config_name = os.environ.get('OPTKIT_CONFIG', 'default')

    app = create_app(config_name)
    app(obj={})


if __name__ == '__main__':
    main()
