"""Mean-field ensemble engine.

Each node carries M sample queues. Nodes interact only through their own
ensemble statistics: the mean Q-bar_i steers the shared control chi_i and the
forwarded inflow is estimated from mu*chi, either per sample or as the
ensemble mean.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dynamics import DynamicsError, ResidualAccumulator, service_rate
from .schedulers import SchedulerKind, meanfield_controls
from .stochastic import KeyedStreams, Purpose, RngStream, draw_node_params, poisson_inverse
from .topology import build_directed_grid, uniform_routing
from .trajectory import TrajectoryRecorder, active_fraction, recorded_nodes

logger = logging.getLogger(__name__)

DEFAULT_BLOCK = 16384


class EstimatorMode(str, Enum):
    PER_SAMPLE = 'per-sample'
    ENSEMBLE_MEAN = 'ensemble-mean'


class ControlRule(str, Enum):
    REPRESENTATIVE = 'representative'
    MAJORITY = 'majority'


@dataclass(eq=False)
class EnsembleState:
    q: np.ndarray
    chi: np.ndarray
    step: int = 0

    @property
    def num_samples(self):
        return self.q.shape[0]

    @property
    def num_nodes(self):
        return self.q.shape[1]


@dataclass(frozen=True, eq=False)
class MeanFieldEstimate:
    qbar: np.ndarray
    muchi_bar: np.ndarray


@dataclass(frozen=True, eq=False)
class EnsembleFlows:
    arrivals: np.ndarray
    departures: np.ndarray
    forwarded: np.ndarray
    rate_dt: np.ndarray
    truncated: int = 0


def sample_mean(q):
    """Per-node mean over samples.

    Samples are summed in sorted order, so relabelling them cannot change the
    result.
    """
    return np.add.reduce(np.sort(q, axis=0), axis=0) / q.shape[0]


def init_ensemble(num_nodes, num_samples, ranges, master_seed, sinks=(), initial_queue=0.0):
    if num_nodes < 1 or num_samples < 1:
        raise ValueError("need at least one node and one sample")
    node_params = draw_node_params(RngStream(master_seed), num_nodes, ranges)
    sinks = list(sinks)
    q = np.full((num_samples, num_nodes), float(initial_queue))
    q[:, sinks] = 0.0
    chi = np.ones(num_nodes, dtype=np.int8)
    chi[sinks] = 0
    return EnsembleState(q=q, chi=chi, step=0), node_params


def update_control(q, qbar, rule, representative_uniforms=None, sinks=()):
    """Shared per-node control from the ensemble.

    REPRESENTATIVE compares one sample r ~ U{0..M-1} per node with Q-bar;
    MAJORITY switches on when more than half of the samples exceed it.
    """
    rule = ControlRule(rule)
    num_samples, num_nodes = q.shape
    if rule is ControlRule.REPRESENTATIVE:
        r = np.minimum((representative_uniforms * num_samples).astype(np.int64), num_samples - 1)
        chi = meanfield_controls(q[r, np.arange(num_nodes)], qbar)
    else:
        above = np.count_nonzero(q > qbar, axis=0)
        chi = (2 * above > num_samples).astype(np.int8)
    chi[list(sinks)] = 0
    return chi


def ensemble_step(es, node_params, params, streams, sinks=(), mode=EstimatorMode.PER_SAMPLE,
                  rule=ControlRule.REPRESENTATIVE, fixed_control=None, workers=1,
                  block=DEFAULT_BLOCK, executor=None):
    """One step for every (sample, node), then Q-bar and the control update.

    Node blocks may run on several threads; every draw is keyed, so the
    result does not depend on ``workers`` or ``block``. A long-lived
    ``executor`` is used when given, otherwise a pool is opened for the step.
    """
    mode = EstimatorMode(mode)
    step = es.step + 1
    shape = es.q.shape
    out = {
        'q': np.empty(shape), 'arrivals': np.empty(shape, dtype=np.int64),
        'departures': np.empty(shape, dtype=np.int64), 'forwarded': np.empty(shape),
        'rate_dt': np.empty(shape),
    }
    slices = [slice(lo, min(lo + block, es.num_nodes)) for lo in range(0, es.num_nodes, block)]

    def advance(cols):
        return _advance_block(es, node_params, params, streams, mode, step, cols, out)

    if executor is not None and len(slices) > 1:
        truncated = sum(executor.map(advance, slices))
    elif workers > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            truncated = sum(pool.map(advance, slices))
    else:
        truncated = sum(advance(cols) for cols in slices)

    sinks = list(sinks)
    for name in ('q', 'arrivals', 'departures', 'forwarded', 'rate_dt'):
        out[name][:, sinks] = 0
    if out['q'].min(initial=0.0) < 0.0:
        raise DynamicsError(f"ensemble queue went negative at step {step}")

    qbar = sample_mean(out['q'])
    if fixed_control is not None:
        chi = np.asarray(fixed_control, dtype=np.int8).copy()
        chi[sinks] = 0
    else:
        u = streams.node_uniforms(Purpose.REPRESENTATIVE, step)
        chi = update_control(out['q'], qbar, rule, u, sinks)

    flows = EnsembleFlows(arrivals=out['arrivals'], departures=out['departures'],
                          forwarded=out['forwarded'], rate_dt=out['rate_dt'], truncated=truncated)
    current = MeanFieldEstimate(qbar=qbar, muchi_bar=sample_mean(out['rate_dt']) / params.dt)
    return EnsembleState(q=out['q'], chi=chi, step=step), flows, current


def _advance_block(es, node_params, params, streams, mode, step, cols, out):
    q = es.q[:, cols]
    lam_dt = node_params.arrival_rate(es.step)[cols] * params.dt
    arrivals = poisson_inverse(streams.uniforms(Purpose.ARRIVAL, step, cols), lam_dt)

    rate_dt = service_rate(node_params.m[cols], params.alpha, q) * es.chi[cols] * params.dt
    raw = poisson_inverse(streams.uniforms(Purpose.DEPARTURE, step, cols), rate_dt)
    cap = np.floor(q).astype(np.int64)
    departures = np.minimum(raw, cap)

    if mode is EstimatorMode.PER_SAMPLE:
        forwarded = rate_dt
    else:
        forwarded = np.broadcast_to(sample_mean(rate_dt), rate_dt.shape)

    out['q'][:, cols] = q + (1.0 - params.beta) * (arrivals + forwarded) - departures
    out['arrivals'][:, cols] = arrivals
    out['departures'][:, cols] = departures
    out['forwarded'][:, cols] = forwarded
    out['rate_dt'][:, cols] = rate_dt
    return int(np.count_nonzero(raw > cap))


def run_meanfield(config, workers=1, block=DEFAULT_BLOCK, sample_labels=None):
    """Initialise the ensemble and run ``config.K`` steps, recording each one."""
    started = time.perf_counter()
    topology = build_directed_grid(config.rows, config.cols)
    weights = uniform_routing(topology)
    sinks = topology.sink_ids()
    live = ~topology.sink_mask()
    sink_share = np.asarray(weights.matrix[:, sinks].sum(axis=1)).ravel()
    params = config.global_params
    n, m = topology.num_nodes, config.M

    logger.info("mean-field run: N=%d M=%d K=%d seed=%d estimator=%s rule=%s",
                n, m, config.K, config.seed, config.estimator.value, config.control_rule.value)

    es, node_params = init_ensemble(n, m, config.param_ranges, config.seed, sinks, config.initial_queue)
    streams = KeyedStreams(config.seed, n, m, sample_labels=sample_labels)
    fixed = None
    if config.scheduler is SchedulerKind.ALWAYS_ON:
        fixed = np.ones(n, dtype=np.int8)
    elif config.scheduler is SchedulerKind.ALWAYS_OFF:
        fixed = np.zeros(n, dtype=np.int8)
    if fixed is not None:
        es.chi = fixed.copy()
        es.chi[sinks] = 0

    recorder = TrajectoryRecorder(config.K, recorded_nodes(n, config.per_node, config.node_subsample))
    residuals = ResidualAccumulator(es.q.shape, params.beta, live[None, :])
    throughput, truncations = 0.0, 0

    recorder.record(sample_mean(es.q), live, active_fraction(es.chi, live), throughput, truncations)
    progress_every = max(1, config.K // 10)
    with ThreadPoolExecutor(max_workers=workers) if workers > 1 else nullcontext() as executor:
        for k in range(1, config.K + 1):
            es, flows, est = ensemble_step(
                es, node_params, params, streams, sinks, config.estimator, config.control_rule,
                fixed_control=fixed, workers=workers, block=block, executor=executor,
            )
            lam_dt = np.where(live, node_params.arrival_rate(k - 1), 0.0) * params.dt
            residuals.add(flows.arrivals, lam_dt, flows.departures, flows.rate_dt)
            throughput += float(np.dot(sink_share, sample_mean(flows.departures.astype(np.float64))))
            truncations += flows.truncated
            recorder.record(est.qbar, live, active_fraction(es.chi, live), throughput, truncations,
                            residuals.latest)
            if k % progress_every == 0:
                logger.debug("step %d/%d mean queue %.4f", k, config.K, float(est.qbar[live].mean()))

    logger.info("mean-field run finished in %.2fs (%d truncated departures)",
                time.perf_counter() - started, truncations)
    return recorder.finish(residuals.result())
