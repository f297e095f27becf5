"""
Command line commands for the optimization toolkit.
Each command parses its options, calls one service runner and maps toolkit
errors to exit codes (2 malformed input, 3 nonconvergence).
"""
import click

from services.experiment_service import settings_from_config
from utils.errors import ToolkitError


def settings_for(ctx: click.Context):
    """Solver settings of the configuration attached to the context."""
    return settings_from_config(ctx.obj['config'])


def fail(ctx: click.Context, error: ToolkitError) -> None:
    """Report a toolkit error and exit with its code."""
    click.echo(f"Error: {error}", err=True)
    ctx.exit(error.exit_code)


def echo_summary(summary, keys) -> None:
    for key in keys:
        if key in summary:
            click.echo(f"{key}: {summary[key]}")
