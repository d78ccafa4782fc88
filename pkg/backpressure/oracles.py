"""Built-in correctness checks run by ``manage.py validate``.

Each check returns a ``CheckResult``. Random instances come from seeded numpy
generators; sampler checks draw from the keyed streams themselves.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from .config import parse_config
from .dynamics import GlobalParams, QueueState, inflow_operator, step_coupled
from .engine import residual_summary, run
from .schedulers import (
    backpressure_weights, best_response, brute_force_schedule, cooperative_objective,
    cooperative_schedule,
)
from .stochastic import (
    KeyedStreams, ParamRanges, Purpose, RngStream, draw_node_params, poisson_inverse, sample_uniform,
)
from .topology import Topology, build_directed_grid, uniform_routing

logger = logging.getLogger(__name__)

FAULTS = ('tie-break',)
MAX_ORACLE_NODES = 12
POISSON_MEANS = (0.1, 1.0, 10.0)
SAMPLER_DRAWS = 10**6
SIGMA_BOUND = 4.0
RESIDUAL_SIGMA_BOUND = 3.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ''


def random_dag(rng, max_nodes=MAX_ORACLE_NODES):
    """Random DAG on 2..max_nodes nodes whose only sink is the last node.

    Edges point from lower to higher ids and every non-sink node gets at least
    one, so every node reaches the sink.
    """
    n = int(rng.integers(2, max_nodes + 1))
    edges = []
    for i in range(n - 1):
        later = np.arange(i + 1, n)
        chosen = later[rng.random(later.size) < 0.4]
        if chosen.size == 0:
            chosen = rng.choice(later, size=1)
        edges.extend((i, int(j)) for j in chosen)
    return Topology(num_nodes=n, edges=edges, sinks=(n - 1,))


def random_instance(rng, equal_queues=False):
    """A random DAG with integer queues in [0, 50]. With ``equal_queues`` the
    graph is a 3x4 grid whose non-sink queues all match, so nodes without a
    sink neighbour sit exactly on a tie."""
    if equal_queues:
        topology = build_directed_grid(3, 4)
        q = np.full(topology.num_nodes, 7.0)
    else:
        topology = random_dag(rng)
        q = rng.integers(0, 51, topology.num_nodes).astype(float)
    q[topology.sink_ids()] = 0.0
    node_params = draw_node_params(RngStream(int(rng.integers(2**63))), topology.num_nodes, ParamRanges())
    return topology, uniform_routing(topology), QueueState(q=q), node_params


def check_scheduler_oracle(trials, seed, inject_fault=None):
    """Cooperative schedule against exhaustive search, plus an all-ties instance."""
    rng = np.random.default_rng(seed)
    params = GlobalParams()
    tie = inject_fault == 'tie-break'
    failures = []
    for trial in range(trials + 1):
        topology, weights, state, node_params = random_instance(rng, equal_queues=trial == trials)
        bp = backpressure_weights(state.q, topology, weights, node_params, params)
        chi = cooperative_schedule(state, topology, weights, node_params, params, transmit_on_tie=tie)
        best, best_chi = brute_force_schedule(bp, topology.sink_mask())
        value = cooperative_objective(chi, bp)
        if not math.isclose(value, best, rel_tol=1e-9, abs_tol=1e-12) or not np.array_equal(chi, best_chi):
            failures.append(trial)
    detail = f"{trials + 1} instances"
    if failures:
        detail += f", {len(failures)} mismatched (first: instance {failures[0]})"
    return CheckResult('scheduler oracle', not failures, detail)


def check_best_response(trials, seed, inject_fault=None):
    """Each node's best response ignores the others' controls and matches the
    cooperative choice."""
    rng = np.random.default_rng(seed + 1)
    params = GlobalParams()
    tie = inject_fault == 'tie-break'
    mismatches = 0
    for trial in range(max(1, trials // 10) + 1):
        topology, weights, state, node_params = random_instance(rng, equal_queues=trial == 0)
        coop = cooperative_schedule(state, topology, weights, node_params, params)
        for i in np.flatnonzero(~topology.sink_mask()):
            answers = {
                best_response(i, state, topology, weights, node_params, params,
                              rng.integers(0, 2, topology.num_nodes), transmit_on_tie=tie)
                for _ in range(3)
            }
            if answers != {int(coop[i])}:
                mismatches += 1
    return CheckResult('best-response independence', mismatches == 0, f"{mismatches} mismatching nodes")


def check_poisson_moments(seed, draws=SAMPLER_DRAWS):
    base = RngStream(seed, purpose=Purpose.ORACLE)
    worst = 0.0
    for index, mean in enumerate(POISSON_MEANS):
        x = poisson_inverse(base.derive(node=index).uniforms(draws), mean).astype(np.float64)
        z_mean = abs(x.mean() - mean) / math.sqrt(mean / draws)
        # var of the sample variance for Poisson: (mu4 - sigma^4)/n with mu4 = m + 3m^2
        z_var = abs(x.var(ddof=1) - mean) / math.sqrt((mean + 2 * mean * mean) / draws)
        worst = max(worst, z_mean, z_var)
    return CheckResult('poisson moments', worst < SIGMA_BOUND, f"worst deviation {worst:.2f} SE")


def check_uniform_mean(seed, draws=SAMPLER_DRAWS):
    ranges = ParamRanges()
    base = RngStream(seed, purpose=Purpose.ORACLE, sample=1)
    worst = 0.0
    for index, (lo, hi) in enumerate(((ranges.lambda_min, ranges.lambda_max), (ranges.m_min, ranges.m_max))):
        x = sample_uniform(base.derive(node=index), lo, hi, size=draws)
        z = abs(x.mean() - (lo + hi) / 2) / ((hi - lo) / math.sqrt(12 * draws))
        worst = max(worst, z)
    return CheckResult('uniform mean', worst < SIGMA_BOUND, f"worst deviation {worst:.2f} SE")


def check_stream_independence(seed, nodes=1000, steps=1000):
    """Correlation between neighbouring node streams and consecutive steps."""
    streams = KeyedStreams(seed, nodes)
    u = np.stack([streams.uniforms(Purpose.ARRIVAL, k)[0] for k in range(1, steps + 1)])
    d = np.stack([streams.uniforms(Purpose.DEPARTURE, k)[0] for k in range(1, steps + 1)])
    pairs = {
        'adjacent nodes': (u[:, :-1], u[:, 1:]),
        'consecutive steps': (u[:-1], u[1:]),
        'arrival/departure': (u, d),
    }
    worst_name, worst = '', 0.0
    for name, (a, b) in pairs.items():
        r = abs(np.corrcoef(a.ravel(), b.ravel())[0, 1]) * math.sqrt(a.size)
        if r > worst:
            worst_name, worst = name, r
    return CheckResult('stream independence', worst < SIGMA_BOUND, f"worst |r|*sqrt(n) {worst:.2f} ({worst_name})")


def check_conservation(seed, rows=10, cols=10, steps=1000):
    """beta = 0 with sender-conserving routing: queues plus delivered equal arrivals."""
    topology = build_directed_grid(rows, cols)
    weights = uniform_routing(topology)
    operator = inflow_operator(topology, weights)
    params = GlobalParams(beta=0.0)
    node_params = draw_node_params(RngStream(seed), topology.num_nodes, ParamRanges())
    streams = KeyedStreams(seed, topology.num_nodes)
    state = QueueState.zeros(topology.num_nodes, sinks=topology.sink_ids())
    arrived = delivered = 0.0
    for _ in range(steps):
        chi = cooperative_schedule(state, topology, weights, node_params, params)
        state, flows = step_coupled(state, chi, topology, weights, params, node_params, streams,
                                    operator=operator)
        arrived += float(flows.arrivals.sum())
        delivered += flows.delivered
    gap = abs(float(state.q.sum()) + delivered - arrived)
    return CheckResult('conservation', gap <= 1e-6, f"gap {gap:.3g} after {steps} steps")


def check_residuals(seed, steps=100):
    """Compensated arrival and departure increments average to zero."""
    config = parse_config(overrides={
        'mode': 'coupled', 'scheduler': 'on', 'K': steps, 'seed': seed, 'initial_queue': 1000,
    })
    trajectory = run(config)
    truncations = int(trajectory.truncations[-1])
    summary = residual_summary(trajectory.residuals)
    worst = max(abs(s['mean']) / s['stderr'] if s['stderr'] else 0.0 for s in summary.values())
    passed = truncations == 0 and worst < RESIDUAL_SIGMA_BOUND
    return CheckResult('residuals', passed, f"worst {worst:.2f} SE, {truncations} truncations")


def check_invariants(seed, steps=200):
    """Non-negative queues and empty sinks on every scheduler and both modes."""
    variants = [{'mode': 'coupled', 'scheduler': s} for s in ('coop', 'br', 'on', 'off')]
    variants += [{'mode': 'meanfield', 'scheduler': 'mft', 'M': 20, 'estimator': e}
                 for e in ('per-sample', 'ensemble-mean')]
    violations = []
    for variant in variants:
        config = parse_config(overrides={
            **variant, 'rows': 5, 'cols': 5, 'K': steps, 'seed': seed, 'per_node': True,
        })
        trajectory = run(config)
        sink = config.N - 1
        if trajectory.node_queues.min() < 0 or np.any(trajectory.node_queues[:, sink] != 0):
            violations.append(f"{variant['mode']}/{variant['scheduler']}")
    return CheckResult('invariants', not violations,
                       f"{len(variants)} runs" + (f", violated by {', '.join(violations)}" if violations else ''))


def run_checks(trials=100, seed=0, inject_fault=None):
    if inject_fault is not None and inject_fault not in FAULTS:
        raise ValueError(f"unknown fault {inject_fault!r}; choose from {', '.join(FAULTS)}")
    if trials < 1:
        raise ValueError("need at least one trial")
    checks = [
        lambda: check_scheduler_oracle(trials, seed, inject_fault),
        lambda: check_best_response(trials, seed, inject_fault),
        lambda: check_poisson_moments(seed),
        lambda: check_uniform_mean(seed),
        lambda: check_stream_independence(seed),
        lambda: check_conservation(seed),
        lambda: check_residuals(seed),
        lambda: check_invariants(seed),
    ]
    results = []
    for check in checks:
        result = check()
        logger.info("%s: %s (%s)", result.name, 'pass' if result.passed else 'FAIL', result.detail)
        results.append(result)
    return results
