"""
Plot-data emission with plotly.
Figures are written as standalone HTML next to the run artifacts.
"""
import os
from typing import Optional, Sequence

import numpy as np
import plotly.graph_objects as go

from utils.helpers import atomic_write_text
from utils.trace import RunTrace


def trace_figure(trace: RunTrace, metric: str, log_y: bool = False, title: Optional[str] = None) -> go.Figure:
    """Line chart of one trace metric against the iteration index."""
    ks = [r.k for r in trace.records if metric in r.metrics]
    values = trace.column(metric)
    fig = go.Figure(go.Scatter(x=ks, y=values, mode='lines', name=metric))
    fig.update_layout(
        title=title or f"{trace.solver}: {metric}",
        xaxis_title='iteration',
        yaxis_title=metric,
        template='plotly_white',
    )
    if log_y:
        fig.update_yaxes(type='log')
    return fig


def profile_figure(grid: Sequence[float], profiles: Sequence[np.ndarray], names: Sequence[str],
                   title: str = 'Barycenter') -> go.Figure:
    """Overlay of 1-d measures (input measures and their barycenter)."""
    fig = go.Figure()
    for profile, name in zip(profiles, names):
        fig.add_trace(go.Scatter(x=list(grid), y=np.asarray(profile), mode='lines', name=name))
    fig.update_layout(title=title, xaxis_title='x', yaxis_title='mass', template='plotly_white')
    return fig


def write_figure(fig: go.Figure, out_dir: str, name: str) -> str:
    """Write a figure as HTML and return its path."""
    path = os.path.join(out_dir, f"{name}.html")
    atomic_write_text(path, fig.to_html(include_plotlyjs='cdn', full_html=True))
    return path
