"""
Experiment harness module for the optimization toolkit.
Handles instance loading, per-kind runners that write the run artifacts, and
batches of independent experiments executed in worker slots.
"""
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from services.barycenter import BarycenterInstance, barycenter_objective, ibp, prox_ibp
from services.bench_service import run_bench
from services.bregman_core import ProductPoint
from services.clustering import ClusteringProblem, make_g, potential, random_product_point, solve_clustering
from services.gradient_methods import GMConfig
from services.ot_core import OTInstance, sinkhorn, transport_cost
from services.prox_sinkhorn import ProxConfig, prox_sinkhorn
from utils.errors import InvalidInputError, ToolkitError
from utils.helpers import (
    as_float_list, floor_and_normalize, grid_cost_matrix, line_cost_matrix, list_csv_files, read_csv_array,
    read_csv_vector, truncated_gaussians, weights_from_spec, write_csv_array, write_json,
)
from utils.plots import profile_figure, trace_figure, write_figure
from utils.trace import RunTrace

logger = logging.getLogger(__name__)

KINDS = ('ot', 'barycenter', 'cluster', 'bench')

DEFAULT_SETTINGS = {
    'sinkhorn_max_iters': 10 ** 6,
    'ibp_max_iters': 10 ** 5,
    'gm_max_inner_attempts': 64,
    'inner_accuracy_constant': 1.0,
    'marginal_floor': 1e-3,
    'adaptive_L_blowup': 10.0,
    'plain_domain_threshold': 30.0,
}


def settings_from_config(config_class) -> Dict[str, float]:
    """Plain solver settings taken from a configuration class."""
    return {
        'sinkhorn_max_iters': config_class.SINKHORN_MAX_ITERS,
        'ibp_max_iters': config_class.IBP_MAX_ITERS,
        'gm_max_inner_attempts': config_class.GM_MAX_INNER_ATTEMPTS,
        'inner_accuracy_constant': config_class.INNER_ACCURACY_CONSTANT,
        'marginal_floor': config_class.MARGINAL_FLOOR,
        'adaptive_L_blowup': config_class.ADAPTIVE_L_BLOWUP,
        'plain_domain_threshold': config_class.PLAIN_DOMAIN_THRESHOLD,
    }


@dataclass
class ExperimentSpec:
    """One independent run: kind, its parameters, seed and output directory."""

    experiment_id: str
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    output_dir: str = 'runs'

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"Unknown experiment kind: {self.kind}")

    @property
    def run_dir(self) -> str:
        return os.path.join(self.output_dir, self.experiment_id)


@dataclass
class ExperimentOutcome:
    """Status of a finished experiment."""

    experiment_id: str
    exit_code: int
    summary: Dict[str, Any] = field(default_factory=dict)
    message: str = ''

    @property
    def success(self) -> bool:
        return self.exit_code == 0


def load_ot_instance(cost: Optional[str] = None, images: Optional[Sequence[str]] = None, p: Optional[str] = None,
                     q: Optional[str] = None, metric: str = 'euclid', floor: float = 1e-3) -> OTInstance:
    """
    Build an OT instance from a cost CSV with optional marginal CSVs, or from
    two grayscale image CSVs with a pixel-grid cost.

    Zero entries of every marginal are replaced by floor before normalizing.
    """
    if images:
        if len(images) != 2:
            raise InvalidInputError("Image mode needs exactly two images")
        first, second = read_csv_array(images[0]), read_csv_array(images[1])
        if first.shape != second.shape:
            raise InvalidInputError(f"Images differ in shape: {first.shape} vs {second.shape}")
        return OTInstance.from_arrays(
            grid_cost_matrix(first.shape, metric),
            floor_and_normalize(first, floor),
            floor_and_normalize(second, floor),
        )
    if cost is None:
        raise InvalidInputError("Either a cost matrix or two images are required")
    matrix = read_csv_array(cost)
    n = matrix.shape[0]
    row = floor_and_normalize(read_csv_vector(p), floor) if p else np.full(n, 1.0 / n)
    col = floor_and_normalize(read_csv_vector(q), floor) if q else np.full(matrix.shape[1], 1.0 / matrix.shape[1])
    return OTInstance.from_arrays(matrix, row, col)


def load_barycenter_instance(measures: Optional[str] = None, gaussians: Optional[int] = None, seed: int = 0,
                             weights: str = 'uniform', metric: str = 'sqeuclid',
                             floor: float = 1e-3):
    """
    Build a barycenter instance from a directory of measure CSVs (one per file,
    shared grid) or from generated truncated Gaussians.

    Returns:
        Tuple of (instance, plotting grid)
    """
    if gaussians:
        grid, dists, uniform = truncated_gaussians(int(gaussians), seed)
        chosen = uniform if weights == 'uniform' else weights_from_spec(weights, len(dists))
        cost = line_cost_matrix(grid, metric)
        return BarycenterInstance.from_arrays(dists, [cost] * len(dists), chosen), grid
    if measures is None:
        raise InvalidInputError("Either a measures directory or a Gaussian count is required")
    arrays = [read_csv_array(path) for path in list_csv_files(measures)]
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise InvalidInputError("All measures must share one grid")
    if 1 in shape:
        grid = np.arange(max(shape), dtype=float)
        cost = line_cost_matrix(grid, metric)
    else:
        grid = np.arange(shape[0] * shape[1], dtype=float)
        cost = grid_cost_matrix(shape, metric)
    dists = [floor_and_normalize(a, floor) for a in arrays]
    chosen = weights_from_spec(weights, len(dists))
    return BarycenterInstance.from_arrays(dists, [cost] * len(dists), chosen), grid


def default_gamma(epsilon: float, n: int) -> float:
    """gamma = eps / (4 ln n)."""
    return epsilon / (4.0 * math.log(n)) if n > 1 else epsilon


def run_ot(instance: OTInstance, params: Dict[str, Any], out_dir: str, seed: int = 0,
           settings: Optional[Dict[str, float]] = None) -> Dict[str, Any]:
    """
    Solve an OT instance with plain or proximal Sinkhorn and write
    plan.csv, trace.txt and result.json (plus trace.html with plot).
    """
    settings = {**DEFAULT_SETTINGS, **(settings or {})}
    epsilon = float(params.get('epsilon', 0.1))
    method = params.get('method', 'prox-sinkhorn')
    n = instance.n
    if method == 'sinkhorn':
        gamma = float(params.get('gamma') or default_gamma(epsilon, n))
        plan, _, trace = sinkhorn(instance, gamma, epsilon / 2.0, max_iters=int(settings['sinkhorn_max_iters']),
                                  plain_threshold=settings['plain_domain_threshold'])
        trace.seed = seed
        summary = {'method': method, 'gamma': gamma, 'iterations': len(trace), 'outer_iters': 1}
        metric, log_y = 'residual', True
    elif method == 'prox-sinkhorn':
        config = ProxConfig(
            epsilon=epsilon,
            L=params.get('L'),
            inner_accuracy=params.get('inner_accuracy'),
            outer_iters=params.get('outer_iters'),
            adaptive_L=bool(params.get('adaptive_L', False)),
            blowup=settings['adaptive_L_blowup'],
            inner_constant=settings['inner_accuracy_constant'],
            max_inner_iters=int(settings['sinkhorn_max_iters']),
            precision_floor=bool(params.get('precision_floor', True)),
            floor_plans=bool(params.get('floor_plans', False)),
        )
        plan, _, trace = prox_sinkhorn(instance, config, seed=seed)
        summary = {
            'method': method,
            'L': trace.config.get('L'),
            'outer_iters': len(trace),
            'inner_accuracy': trace.config.get('inner_accuracy'),
            'total_inner_iters': float(trace.column('inner_iters').sum()) if len(trace) else 0.0,
        }
        metric, log_y = 'inner_iters', False
    else:
        raise InvalidInputError(f"Unknown OT method: {method}")

    summary.update({
        'n': n,
        'epsilon': epsilon,
        'seed': seed,
        'transport_cost': transport_cost(plan, instance.cost),
        'feasibility_gap': plan.feasibility_gap,
    })
    write_csv_array(os.path.join(out_dir, 'plan.csv'), plan.matrix)
    trace.write(os.path.join(out_dir, 'trace.txt'))
    write_json(os.path.join(out_dir, 'result.json'), summary)
    if params.get('plot') and len(trace):
        write_figure(trace_figure(trace, metric, log_y=log_y), out_dir, 'trace')
    return summary


def run_barycenter(instance: BarycenterInstance, params: Dict[str, Any], out_dir: str, seed: int = 0,
                   settings: Optional[Dict[str, float]] = None, grid: Optional[np.ndarray] = None) -> Dict[str, Any]:
    """
    Compute a barycenter with IBP or Proximal IBP and write barycenter.csv,
    objective_log.csv, trace.txt and result.json (plus profiles.html with plot).
    """
    settings = {**DEFAULT_SETTINGS, **(settings or {})}
    epsilon = float(params.get('epsilon', 0.1))
    method = params.get('method', 'prox-ibp')
    if method == 'ibp':
        gamma = float(params.get('gamma') or default_gamma(epsilon, instance.n))
        q, stack, trace = ibp(instance, gamma, epsilon / 2.0, max_iters=int(settings['ibp_max_iters']))
        log_column = 'spread'
        objective = barycenter_objective(stack, instance.active())
        summary = {'method': method, 'gamma': gamma, 'sweeps': len(trace)}
    elif method == 'prox-ibp':
        config = ProxConfig(
            epsilon=epsilon,
            L=params.get('L'),
            inner_accuracy=params.get('inner_accuracy'),
            outer_iters=params.get('outer_iters'),
            adaptive_L=bool(params.get('adaptive_L', False)),
            blowup=settings['adaptive_L_blowup'],
            inner_constant=settings['inner_accuracy_constant'],
            max_inner_iters=int(settings['ibp_max_iters']),
        )
        q, stack, objective, trace = prox_ibp(instance, config, seed=seed)
        log_column = 'objective'
        summary = {'method': method, 'L': trace.config.get('L'), 'outer_iters': len(trace),
                   'total_inner_iters': float(trace.column('inner_iters').sum())}
    else:
        raise InvalidInputError(f"Unknown barycenter method: {method}")

    summary.update({'n': instance.n, 'm': instance.m, 'epsilon': epsilon, 'seed': seed, 'objective': objective,
                    'max_feasibility_gap': stack.max_residual()})
    log = np.column_stack([trace.indices(), trace.column(log_column)]) if len(trace) else np.zeros((0, 2))
    write_csv_array(os.path.join(out_dir, 'barycenter.csv'), q.entries)
    write_csv_array(os.path.join(out_dir, 'objective_log.csv'), log)
    trace.write(os.path.join(out_dir, 'trace.txt'))
    write_json(os.path.join(out_dir, 'result.json'), summary)
    if params.get('plot'):
        axis = grid if grid is not None else np.arange(instance.n)
        profiles = [measure.entries for measure in instance.measures] + [q.entries]
        names = [f"measure {l}" for l in range(instance.m)] + ['barycenter']
        write_figure(profile_figure(axis, profiles, names), out_dir, 'profiles')
    return summary


def build_clustering_problem(params: Dict[str, Any], seed: int = 0) -> ClusteringProblem:
    """
    Clustering problem from an opinion CSV (n parties x m issues) or from a
    seeded random opinion matrix; mu1 and mu2 default to twice Lg.
    """
    g_name = params.get('g', 'quadratic')
    if params.get('opinions'):
        opinions = read_csv_array(params['opinions'])
    else:
        rng = np.random.default_rng(seed)
        opinions = rng.uniform(0.0, 1.0, size=(int(params.get('n', 5)), int(params.get('m', 3))))
    n, m = opinions.shape
    g, grad, Lg = make_g(g_name, n, m, opinions=opinions, scale=float(params.get('scale', 1.0)))
    mu1 = float(params.get('mu1') or 2.0 * Lg)
    mu2 = float(params.get('mu2') or 2.0 * Lg)
    return ClusteringProblem(g, grad, Lg, mu1, mu2, n, m, name=g_name)


def run_cluster(prob: ClusteringProblem, params: Dict[str, Any], out_dir: str, seed: int = 0,
                settings: Optional[Dict[str, float]] = None) -> Dict[str, Any]:
    """Minimize the clustering potential and write z.csv, p.csv, trace.txt and result.json."""
    settings = {**DEFAULT_SETTINGS, **(settings or {})}
    method = params.get('method', 'fixed').replace('-', '_').replace('adaptive_sc', 'adaptive_strongly_convex')
    iters = int(params.get('iters', 100))
    start = random_product_point(np.random.default_rng(seed), prob.n, prob.m)
    x0 = ProductPoint.from_vector(start, prob.n)
    config = GMConfig(L0=float(params.get('L0') or 2.0 * prob.Lg),
                      max_inner_attempts=int(settings['gm_max_inner_attempts']))
    result = solve_clustering(prob, x0, config, method=method, n_iters=iters)
    z, p = prob.split(result.last_iterate)
    result.trace.seed = seed
    summary = {
        'method': method,
        'g': prob.name,
        'n': prob.n,
        'm': prob.m,
        'Lg': prob.Lg,
        'mu1': prob.mu1,
        'mu2': prob.mu2,
        'iterations': iters,
        'potential': potential(prob, result.last_iterate),
        'Lhat': result.Lhat,
        'z': as_float_list(z),
        'p': as_float_list(p),
    }
    write_csv_array(os.path.join(out_dir, 'z.csv'), z)
    write_csv_array(os.path.join(out_dir, 'p.csv'), p)
    result.trace.write(os.path.join(out_dir, 'trace.txt'))
    write_json(os.path.join(out_dir, 'result.json'), summary)
    if params.get('plot'):
        write_figure(trace_figure(result.trace, 'f'), out_dir, 'trace')
    return summary


def run_bench_experiment(params: Dict[str, Any], out_dir: str,
                         settings: Optional[Dict[str, float]] = None) -> Dict[str, Any]:
    """
    Bound-estimate table for one benchmark example; bench.csv holds k,
    estimate, v_ref and Lhat. Wall times are returned but not written.
    """
    settings = {**DEFAULT_SETTINGS, **(settings or {})}
    example = int(params.get('example', 1))
    method = params.get('method', 'adaptive-sc')
    checkpoints = params.get('checkpoints')
    if params.get('iters'):
        checkpoints = [int(params['iters'])]
    rows = run_bench(example, method, checkpoints, max_inner_attempts=int(settings['gm_max_inner_attempts']))
    table = np.array([[row['k'], row['estimate'], row['v_ref'], row['Lhat']] for row in rows])
    write_csv_array(os.path.join(out_dir, 'bench.csv'), table)
    summary = {
        'example': example,
        'method': method,
        'rows': [{key: row[key] for key in ('k', 'estimate', 'v_ref', 'Lhat')} for row in rows],
    }
    write_json(os.path.join(out_dir, 'result.json'), summary)
    if params.get('plot'):
        trace = RunTrace(solver=f"bench_{example}_{method}")
        for row in rows:
            trace.append(int(row['k']), estimate=row['estimate'])
        write_figure(trace_figure(trace, 'estimate', log_y=True), out_dir, 'estimate')
    return {**summary, 'wall_times': [row['wall_time'] for row in rows]}


def _run_ot_spec(spec: ExperimentSpec, settings) -> Dict[str, Any]:
    p = spec.params
    instance = load_ot_instance(p.get('cost'), p.get('images'), p.get('p'), p.get('q'), p.get('metric', 'euclid'),
                                settings['marginal_floor'])
    return run_ot(instance, p, spec.run_dir, spec.seed, settings)


def _run_barycenter_spec(spec: ExperimentSpec, settings) -> Dict[str, Any]:
    p = spec.params
    instance, grid = load_barycenter_instance(p.get('measures'), p.get('gaussians'), spec.seed,
                                              p.get('weights', 'uniform'), p.get('metric', 'sqeuclid'),
                                              settings['marginal_floor'])
    return run_barycenter(instance, p, spec.run_dir, spec.seed, settings, grid)


def _run_cluster_spec(spec: ExperimentSpec, settings) -> Dict[str, Any]:
    return run_cluster(build_clustering_problem(spec.params, spec.seed), spec.params, spec.run_dir, spec.seed,
                       settings)


def _run_bench_spec(spec: ExperimentSpec, settings) -> Dict[str, Any]:
    return run_bench_experiment(spec.params, spec.run_dir, settings)


RUNNERS: Dict[str, Callable[[ExperimentSpec, Dict[str, float]], Dict[str, Any]]] = {
    'ot': _run_ot_spec,
    'barycenter': _run_barycenter_spec,
    'cluster': _run_cluster_spec,
    'bench': _run_bench_spec,
}


def run_experiment(spec: ExperimentSpec, settings: Optional[Dict[str, float]] = None) -> ExperimentOutcome:
    """
    Run one experiment, mapping toolkit errors to their exit codes.

    Unexpected exceptions propagate.
    """
    settings = {**DEFAULT_SETTINGS, **(settings or {})}
    logger.info("Running experiment %s (%s)", spec.experiment_id, spec.kind)
    try:
        summary = RUNNERS[spec.kind](spec, settings)
    except ToolkitError as e:
        logger.error("Experiment %s failed: %s", spec.experiment_id, e)
        return ExperimentOutcome(spec.experiment_id, e.exit_code, message=str(e))
    return ExperimentOutcome(spec.experiment_id, 0, summary=summary)


def run_batch(specs: Sequence[ExperimentSpec], workers: int = 1,
              settings: Optional[Dict[str, float]] = None) -> List[ExperimentOutcome]:
    """
    Run independent experiments, in a process pool when workers > 1.

    Outcomes are returned in the order of specs.
    """
    ids = [spec.experiment_id for spec in specs]
    if len(set(ids)) != len(ids):
        raise InvalidInputError("Experiment ids must be unique within a batch")
    if workers <= 1 or len(specs) <= 1:
        return [run_experiment(spec, settings) for spec in specs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_experiment, specs, [settings] * len(specs)))


def load_batch(path: str, output_dir: str = 'runs') -> List[ExperimentSpec]:
    """
    Read a JSON batch file: a list of objects with id, kind, params and seed.
    """
    if not os.path.isfile(path):
        raise InvalidInputError(f"File not found: {path}")
    try:
        with open(path, encoding='utf-8') as handle:
            entries = json.load(handle)
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"Malformed batch file {path}: {e}") from e
    if not isinstance(entries, list):
        raise InvalidInputError("A batch file must hold a list of experiments")
    specs = []
    for index, entry in enumerate(entries):
        if not isinstance(entry, dict) or 'kind' not in entry:
            raise InvalidInputError(f"Batch entry {index} needs a kind")
        specs.append(ExperimentSpec(
            experiment_id=str(entry.get('id', f"run{index:03d}")),
            kind=entry['kind'],
            params=dict(entry.get('params', {})),
            seed=int(entry.get('seed', 0)),
            output_dir=output_dir,
        ))
    return specs
