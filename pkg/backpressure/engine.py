"""Run orchestration: coupled and mean-field runs, summaries, comparisons."""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    QueueState, ResidualAccumulator, inflow_operator, route_departures, service_rate, step_coupled,
)
from .meanfield import DEFAULT_BLOCK, run_meanfield
from .schedulers import schedule
from .stochastic import KeyedStreams, RngStream, draw_node_params
from .topology import Topology, TopologyError, build_directed_grid, uniform_routing, validate
from .trajectory import TrajectoryRecorder, active_fraction, recorded_nodes

logger = logging.getLogger(__name__)


class SimulationError(Exception):
    pass


def build_topology(config):
    if config.topology_file:
        topology = Topology.load(config.topology_file)
    else:
        topology = build_directed_grid(config.rows, config.cols)
    problems = validate(topology)
    if problems:
        raise TopologyError("; ".join(problems))
    return topology


def run(config, workers=1, block=None):
    if config.mode.value == 'meanfield':
        return run_meanfield(config, workers=workers, block=block or DEFAULT_BLOCK)
    return run_coupled(config)


def run_coupled(config, topology=None):
    """scheduler -> step -> record, K times, on the full coupled network."""
    started = time.perf_counter()
    topology = topology or build_topology(config)
    weights = uniform_routing(topology)
    operator = inflow_operator(topology, weights, config.routing)
    params = config.global_params
    n = topology.num_nodes
    sinks = topology.sink_ids()
    live = ~topology.sink_mask()

    logger.info("coupled run: N=%d K=%d seed=%d scheduler=%s routing=%s",
                n, config.K, config.seed, config.scheduler.value, config.routing.value)

    node_params = draw_node_params(RngStream(config.seed), n, config.param_ranges)
    streams = KeyedStreams(config.seed, n)
    state = QueueState.zeros(n, config.initial_queue, sinks)
    chi = schedule(config.scheduler, state, topology, weights, node_params, params)

    recorder = TrajectoryRecorder(config.K, recorded_nodes(n, config.per_node, config.node_subsample))
    residuals = ResidualAccumulator(n, params.beta, live)
    throughput, truncations = 0.0, 0
    recorder.record(state.q, live, active_fraction(chi, live), throughput, truncations)

    progress_every = max(1, config.K // 10)
    for k in range(1, config.K + 1):
        start = state
        state, flows = step_coupled(start, chi, topology, weights, params, node_params, streams,
                                    config.routing, operator)
        lam_dt = np.where(live, node_params.arrival_rate(start.step), 0.0) * params.dt
        rate_dt = np.where(live, service_rate(node_params.m, params.alpha, start.q) * chi, 0.0) * params.dt
        residuals.add(flows.arrivals, lam_dt, flows.departures, rate_dt,
                      flows.forwarded, route_departures(rate_dt, operator))
        throughput += flows.delivered
        truncations += flows.truncated
        chi = schedule(config.scheduler, state, topology, weights, node_params, params, previous=chi)
        recorder.record(state.q, live, active_fraction(chi, live), throughput, truncations,
                        residuals.latest)
        if k % progress_every == 0 and live.any():
            logger.debug("step %d/%d mean queue %.4f", k, config.K, float(state.q[live].mean()))

    logger.info("coupled run finished in %.2fs (%d truncated departures)",
                time.perf_counter() - started, truncations)
    return recorder.finish(residuals.result())


def stabilization_stat(trajectory, window):
    """|mean(last window) - mean(previous window)| / mean(whole series)."""
    series = getattr(trajectory, 'mean_queue', trajectory)
    series = np.asarray(series, dtype=np.float64)
    steps = series.size - 1
    if window < 1 or steps < 2 * window:
        raise SimulationError(f"need at least {2 * window} steps for window {window}, have {steps}")
    drift = abs(series[-window:].mean() - series[-2 * window:-window].mean())
    overall = series.mean()
    if drift == 0.0:
        return 0.0
    return float(drift / overall) if overall > 0 else math.inf


def summarize(trajectory, window):
    """Scalar summary of one run, as written to the JSON summary."""
    series = trajectory.mean_queue
    tail = series[-window:] if series.size > window else series
    try:
        stat = stabilization_stat(trajectory, window)
    except SimulationError:
        stat = None
    summary = {
        'steps': trajectory.num_steps,
        'final_mean_queue': float(series[-1]),
        'plateau': float(tail.mean()),
        'stabilization_stat': None if stat is None or math.isinf(stat) else stat,
        'sink_throughput': float(trajectory.sink_throughput[-1]),
        'truncated_departures': int(trajectory.truncations[-1]),
        'final_active_fraction': float(trajectory.active_fraction[-1]),
    }
    if trajectory.residuals is not None:
        summary['residuals'] = residual_summary(trajectory.residuals)
    return summary


def residual_summary(diagnostics):
    """Across-element mean and standard error of the time-averaged compensated
    increments; both means should sit within a few standard errors of zero."""
    arrival, departure = diagnostics.time_averaged()
    live = np.asarray(diagnostics.arrival_variance > 0) | np.asarray(diagnostics.departure_variance > 0)
    result = {}
    for name, values in (('arrival', arrival), ('departure', departure)):
        picked = values[live] if live.any() else values.ravel()
        count = picked.size
        mean = float(picked.mean()) if count else 0.0
        stderr = float(picked.std(ddof=1) / math.sqrt(count)) if count > 1 else 0.0
        result[name] = {'mean': mean, 'stderr': stderr}
    return result


@dataclass(eq=False)
class Comparison:
    labels: list
    steps: np.ndarray
    series: dict
    summaries: list = field(default_factory=list)


def compare_runs(configs, labels=None, workers=1):
    """Run every config and align their mean-queue series step by step."""
    if len(configs) < 2:
        raise SimulationError("comparison needs at least two configs")
    labels = list(labels) if labels else [f"run{i}" for i in range(len(configs))]
    if len(labels) != len(configs) or len(set(labels)) != len(labels):
        raise SimulationError("need one distinct label per config")
    sizes = {(c.N, c.K) for c in configs}
    if len(sizes) != 1:
        raise SimulationError(f"configs disagree on N/K: {sorted(sizes)}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajectories = list(pool.map(run, configs))
    else:
        trajectories = [run(c) for c in configs]

    comparison = Comparison(labels=labels, steps=trajectories[0].steps, series={})
    for label, config, trajectory in zip(labels, configs, trajectories):
        comparison.series[label] = trajectory.mean_queue
        comparison.summaries.append({'label': label, **summarize(trajectory, config.window)})
    return comparison
