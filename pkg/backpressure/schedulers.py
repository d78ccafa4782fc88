"""On-off transmission policies.

All policies are pure functions of the queue state. Ties (zero backpressure)
resolve to "stay idle" unless ``transmit_on_tie`` is set.
"""
import itertools
import logging
import math
from enum import Enum

import numpy as np

from .dynamics import service_rate

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 20


class SchedulerError(ValueError):
    pass


class SchedulerKind(str, Enum):
    COOPERATIVE = 'coop'
    BEST_RESPONSE = 'br'
    MEAN_FIELD = 'mft'
    ALWAYS_ON = 'on'
    ALWAYS_OFF = 'off'


def backpressure_weights(q, topology, weights, node_params, params):
    """sum_j w(i,j) (q_i - q_j) mu_i(q_i) for every node; zero at sinks.

    Per-edge terms are accumulated with ``bincount`` in edge order, so the
    result for node i does not depend on how many nodes are evaluated.
    """
    q = np.asarray(q, dtype=np.float64)
    src, dst = topology.edges[:, 0], topology.edges[:, 1]
    terms = weights.edge_weights(topology) * (q[src] - q[dst])
    differential = np.bincount(src, weights=terms, minlength=topology.num_nodes)
    result = differential * service_rate(node_params.m, params.alpha, q)
    result[topology.sink_ids()] = 0.0
    return result


def backpressure_weight(i, state, topology, weights, node_params, params):
    if i in topology.sinks:
        raise SchedulerError(f"node {i} is a sink and never transmits")
    q = state.q
    total = 0.0
    for j in topology.out_neighbors(i):
        total += weights.weight(i, j) * (q[i] - q[j])
    return total * service_rate(node_params.m[i], params.alpha, q[i])


def cooperative_objective(chi, bp_weights):
    # fsum is order independent, so schedules differing only on zero weights tie exactly
    return math.fsum(np.asarray(bp_weights)[np.asarray(chi) == 1].tolist())


def cooperative_schedule(state, topology, weights, node_params, params, transmit_on_tie=False):
    """argmax over {0,1}^N of sum_i bp_i chi_i.

    The objective is separable, so node i transmits iff its weight is
    positive.
    """
    bp = backpressure_weights(state.q, topology, weights, node_params, params)
    chi = (bp >= 0.0) if transmit_on_tie else (bp > 0.0)
    chi = chi.astype(np.int8)
    chi[topology.sink_ids()] = 0
    return chi


def brute_force_schedule(bp_weights, sink_mask):
    """Exhaustive search over every schedule of the non-sink nodes.

    Returns the optimal objective and, among the maximizers, the one with the
    fewest active nodes (lexicographically first on ties).
    """
    free = np.flatnonzero(~np.asarray(sink_mask))
    if free.size > BRUTE_FORCE_LIMIT:
        raise SchedulerError(f"brute force over {free.size} nodes is not tractable")
    best_value, best_chi = -np.inf, None
    for bits in itertools.product((0, 1), repeat=free.size):
        chi = np.zeros(len(bp_weights), dtype=np.int8)
        chi[free] = bits
        value = cooperative_objective(chi, bp_weights)
        if value > best_value or (value == best_value and chi.sum() < best_chi.sum()):
            best_value, best_chi = value, chi
    return best_value, best_chi


def best_response_utility(i, chi_i, state, topology, weights, node_params, params, chi_others):
    """Instantaneous utility of node i. ``chi_others`` only steers future
    states, so it does not enter the value at the current step."""
    del chi_others
    return backpressure_weight(i, state, topology, weights, node_params, params) * chi_i


def best_response(i, state, topology, weights, node_params, params, chi_others,
                  transmit_on_tie=False):
    on = best_response_utility(i, 1, state, topology, weights, node_params, params, chi_others)
    off = best_response_utility(i, 0, state, topology, weights, node_params, params, chi_others)
    if on == off:
        return int(transmit_on_tie)
    return int(on > off)


def best_response_schedule(state, topology, weights, node_params, params, chi_others=None,
                           transmit_on_tie=False):
    """Every node's simultaneous best response, vectorised."""
    bp = backpressure_weights(state.q, topology, weights, node_params, params)
    chi = ((bp >= 0.0) if transmit_on_tie else (bp > 0.0)).astype(np.int8)
    chi[topology.sink_ids()] = 0
    return chi


def meanfield_control(q_sample, mean_estimate):
    """1 iff the sample sits strictly above the mean-field estimate."""
    return int(q_sample > mean_estimate)


def meanfield_controls(q_samples, mean_estimates):
    return (np.asarray(q_samples) > np.asarray(mean_estimates)).astype(np.int8)


def constant_schedule(topology, on):
    chi = np.full(topology.num_nodes, 1 if on else 0, dtype=np.int8)
    chi[topology.sink_ids()] = 0
    return chi


def schedule(kind, state, topology, weights, node_params, params, previous=None):
    """Dispatch a coupled-network scheduler by kind."""
    kind = SchedulerKind(kind)
    if kind is SchedulerKind.COOPERATIVE:
        return cooperative_schedule(state, topology, weights, node_params, params)
    if kind is SchedulerKind.BEST_RESPONSE:
        return best_response_schedule(state, topology, weights, node_params, params, previous)
    if kind is SchedulerKind.ALWAYS_ON:
        return constant_schedule(topology, True)
    if kind is SchedulerKind.ALWAYS_OFF:
        return constant_schedule(topology, False)
    raise SchedulerError("the mean-field threshold scheduler needs an ensemble estimate; "
                         "use mode=meanfield")
