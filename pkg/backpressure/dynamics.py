"""Finite-N coupled queue dynamics and compensated-residual diagnostics."""
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import sparse

from .stochastic import Purpose, poisson_inverse

logger = logging.getLogger(__name__)


class DynamicsError(RuntimeError):
    """An update produced a state that must be impossible (negative queue,
    non-zero sink)."""


class RoutingMode(str, Enum):
    # F_i = sum_j w(j, i) D_j with w = 1/|out(j)|: every departed unit lands somewhere
    SENDER_CONSERVING = 'sender-conserving'
    # F_i = (1/|in(i)|) sum_{j in in(i)} D_j: inflow normalised by the receiver's in-degree
    RECEIVER_DEGREE = 'receiver-degree'

    @classmethod
    def aliases(cls):
        return ROUTING_ALIASES

    @classmethod
    def _missing_(cls, value):
        return ROUTING_ALIASES.get(value)


# alternate spellings accepted on input; they render as the canonical value
ROUTING_ALIASES = {'paper-literal': RoutingMode.RECEIVER_DEGREE}


@dataclass(frozen=True)
class GlobalParams:
    alpha: float = 0.01
    beta: float = 0.7
    dt: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")


@dataclass(eq=False)
class QueueState:
    q: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, num_nodes, level=0.0, sinks=()):
        q = np.full(num_nodes, float(level))
        q[list(sinks)] = 0.0
        return cls(q=q, step=0)


@dataclass(frozen=True, eq=False)
class StepFlows:
    arrivals: np.ndarray
    departures: np.ndarray
    forwarded: np.ndarray
    processed: np.ndarray
    truncated: int = 0
    delivered: float = 0.0


def service_rate(m, alpha, q):
    """mu(q) = m / (1 + alpha q); works on scalars and arrays."""
    rate = np.divide(m, 1.0 + alpha * np.asarray(q, dtype=np.float64))
    return float(rate) if np.ndim(rate) == 0 else rate


def inflow_operator(topology, weights, mode=RoutingMode.SENDER_CONSERVING):
    """Sparse operator ``R`` with forwarded inflow ``F = R @ D``."""
    mode = RoutingMode(mode)
    n = topology.num_nodes
    if mode is RoutingMode.SENDER_CONSERVING:
        operator = weights.matrix.T.tocsr()
    else:
        src, dst = topology.edges[:, 0], topology.edges[:, 1]
        in_degree = topology.in_degree()
        operator = sparse.csr_matrix((1.0 / in_degree[dst], (dst, src)), shape=(n, n))
    operator.sort_indices()
    return operator


def route_departures(departures, operator):
    """Forwarded inflow per receiver. CSR rows are summed in fixed index order."""
    return operator @ np.asarray(departures, dtype=np.float64)


def enforce_sink(state, topology):
    q = state.q.copy()
    q[topology.sink_ids()] = 0.0
    return QueueState(q=q, step=state.step)


def step_coupled(state, control, topology, weights, params, node_params, streams,
                 routing_mode=RoutingMode.SENDER_CONSERVING, operator=None):
    """Advance the coupled network by one step of length ``params.dt``.

    Departures are sampled against the step-start queue and truncated to
    ``floor(q)`` so the integer departure count never exceeds what is buffered.
    Forwarded inflow comes from this step's departures.
    """
    if operator is None:
        operator = inflow_operator(topology, weights, routing_mode)
    q = state.q
    step = state.step + 1
    sinks = topology.sink_ids()
    chi = np.asarray(control, dtype=np.float64).copy()
    chi[sinks] = 0.0

    lam = node_params.arrival_rate(state.step)
    arrivals = poisson_inverse(streams.uniforms(Purpose.ARRIVAL, step)[0], lam * params.dt)
    arrivals[sinks] = 0

    mu = service_rate(node_params.m, params.alpha, q)
    raw = poisson_inverse(streams.uniforms(Purpose.DEPARTURE, step)[0], mu * chi * params.dt)
    cap = np.floor(q).astype(np.int64)
    departures = np.minimum(raw, cap)
    departures[sinks] = 0
    truncated = int(np.count_nonzero(raw > cap))

    forwarded = route_departures(departures, operator)
    delivered = float(forwarded[sinks].sum())
    inflow = arrivals + forwarded
    processed = params.beta * inflow

    new_state = enforce_sink(QueueState(q=q + (1.0 - params.beta) * inflow - departures, step=step), topology)
    if new_state.q.min(initial=0.0) < 0.0:
        bad = int(np.argmin(new_state.q))
        raise DynamicsError(f"queue {bad} went negative ({new_state.q[bad]!r}) at step {step}")

    flows = StepFlows(arrivals=arrivals, departures=departures, forwarded=forwarded,
                      processed=processed, truncated=truncated, delivered=delivered)
    return new_state, flows


@dataclass(eq=False)
class ResidualDiagnostics:
    """Cumulative compensated sums (process minus compensator) per element."""

    arrival: np.ndarray
    departure: np.ndarray
    forwarded: np.ndarray
    arrival_variance: np.ndarray
    departure_variance: np.ndarray
    steps: int = 0
    standardized_arrival: list = field(default_factory=list)
    standardized_departure: list = field(default_factory=list)

    @property
    def queue(self):
        return self.arrival - self.departure + self.forwarded

    def time_averaged(self):
        steps = max(self.steps, 1)
        return self.arrival / steps, self.departure / steps


class ResidualAccumulator:
    """Running compensated sums for A, D and F.

    ``mask`` selects the elements that enter the per-step standardized
    summaries (sinks are left out).
    """

    def __init__(self, shape, beta, mask=None):
        self.beta = beta
        self.mask = np.ones(shape, dtype=bool) if mask is None else np.broadcast_to(mask, shape)
        self._diag = ResidualDiagnostics(
            arrival=np.zeros(shape), departure=np.zeros(shape), forwarded=np.zeros(shape),
            arrival_variance=np.zeros(shape), departure_variance=np.zeros(shape),
        )

    def add(self, arrivals, arrival_rate_dt, departures, departure_rate_dt,
            forwarded=None, forwarded_compensator=None):
        d = self._diag
        scale = 1.0 - self.beta
        d.arrival += scale * (arrivals - arrival_rate_dt)
        d.arrival_variance += scale * scale * arrival_rate_dt
        d.departure += departures - departure_rate_dt
        d.departure_variance += departure_rate_dt
        if forwarded is not None:
            d.forwarded += scale * (forwarded - forwarded_compensator)
        d.steps += 1
        d.standardized_arrival.append(_standardized_mean(d.arrival, d.arrival_variance, self.mask))
        d.standardized_departure.append(_standardized_mean(d.departure, d.departure_variance, self.mask))

    @property
    def latest(self):
        d = self._diag
        if not d.steps:
            return 0.0, 0.0
        return d.standardized_arrival[-1], d.standardized_departure[-1]

    def result(self):
        return self._diag


def _standardized_mean(residual, variance, mask):
    live = mask & (variance > 0)
    if not live.any():
        return 0.0
    return float(np.mean(residual[live] / np.sqrt(variance[live])))


def compensated_residuals(flows, params, node_params, controls, states, topology, operator):
    """Replay an aligned history and return the compensated sums.

    ``states[k]`` and ``controls[k]`` are the step-start state and the control
    used to produce ``flows[k]``.
    """
    if not len(flows) == len(controls) == len(states):
        raise ValueError(
            f"misaligned history: {len(flows)} flows, {len(controls)} controls, {len(states)} states"
        )
    live = ~topology.sink_mask()
    acc = ResidualAccumulator(topology.num_nodes, params.beta, live)
    for flow, chi, state in zip(flows, controls, states):
        lam_dt = node_params.arrival_rate(state.step) * params.dt
        rate_dt = service_rate(node_params.m, params.alpha, state.q) * np.asarray(chi) * params.dt
        lam_dt = np.where(live, lam_dt, 0.0)
        rate_dt = np.where(live, rate_dt, 0.0)
        acc.add(flow.arrivals, lam_dt, flow.departures, rate_dt,
                flow.forwarded, route_departures(rate_dt, operator))
    return acc.result()
