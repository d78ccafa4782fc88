"""Keyed random streams and exact samplers.

Every uniform is a pure function of ``(master_seed, purpose, sample, node,
counter)``: the key is folded through SplitMix64 finalizers and the counter
(usually the time step) is mixed in last. Nothing is drawn from shared
mutable generator state, so results do not depend on evaluation order or on
how work is split between threads.
"""
import logging
import math
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_MASK64 = (1 << 64) - 1
_UNIT = 1.0 / float(1 << 53)

# above this mean the sequential CDF search gets long; scipy's exact quantile takes over
INVERSION_LIMIT = 30.0


class Purpose(IntEnum):
    MASTER = 0
    ARRIVAL = 1
    DEPARTURE = 2
    REPRESENTATIVE = 3
    PARAM_LAMBDA = 4
    PARAM_M = 5
    ORACLE = 6


def _mix(z):
    with np.errstate(over='ignore'):
        z = z + _GOLDEN
        z = (z ^ (z >> _S30)) * _MIX1
        z = (z ^ (z >> _S27)) * _MIX2
        return z ^ (z >> _S31)


def stream_keys(master_seed, purpose, samples, nodes):
    """uint64 keys for every (sample, node) pair; broadcasts like numpy."""
    seed = np.asarray(int(master_seed) & _MASK64, dtype=np.uint64)
    h = _mix(_mix(seed) ^ np.uint64(int(purpose)))
    samples = np.asarray(samples, dtype=np.uint64)
    nodes = np.asarray(nodes, dtype=np.uint64)
    return _mix(_mix(h ^ samples) ^ nodes)


def counter_uniforms(keys, counter):
    """Uniforms in [0, 1) for ``keys`` at ``counter`` (scalar or broadcastable array)."""
    bits = _mix(keys ^ _mix(np.asarray(counter, dtype=np.uint64)))
    return (bits >> _S11).astype(np.float64) * _UNIT


@dataclass(frozen=True)
class RngStream:
    """A single keyed stream; cheap to derive, never mutated."""

    master_seed: int
    node: int = 0
    sample: int = 0
    purpose: Purpose = Purpose.MASTER

    def derive(self, node=None, sample=None, purpose=None):
        return RngStream(
            master_seed=self.master_seed,
            node=self.node if node is None else node,
            sample=self.sample if sample is None else sample,
            purpose=self.purpose if purpose is None else purpose,
        )

    @cached_property
    def key(self):
        return stream_keys(self.master_seed, self.purpose, self.sample, self.node)

    def uniforms(self, count, start=0):
        counters = np.arange(start, start + count, dtype=np.uint64)
        return counter_uniforms(self.key, counters)


class KeyedStreams:
    """Pre-folded keys for a (samples x nodes) block of streams.

    ``sample_labels`` lets callers relabel samples (the key of row j is built
    from ``sample_labels[j]``).
    """

    def __init__(self, master_seed, num_nodes, num_samples=1, sample_labels=None,
                 purposes=(Purpose.ARRIVAL, Purpose.DEPARTURE)):
        self.master_seed = int(master_seed)
        self.num_nodes = int(num_nodes)
        self.num_samples = int(num_samples)
        if sample_labels is None:
            sample_labels = np.arange(self.num_samples)
        labels = np.asarray(sample_labels, dtype=np.int64)
        if labels.shape != (self.num_samples,):
            raise ValueError("sample_labels must hold one label per sample")
        nodes = np.arange(self.num_nodes)
        self._keys = {
            Purpose(p): stream_keys(self.master_seed, p, labels[:, None], nodes[None, :])
            for p in purposes
        }
        self._node_keys = {}

    def uniforms(self, purpose, step, columns=slice(None)):
        """(samples x nodes[columns]) uniforms for ``purpose`` at ``step``."""
        return counter_uniforms(self._keys[purpose][:, columns], step)

    def node_uniforms(self, purpose, step):
        """One uniform per node, keyed on sample 0; used for per-node draws."""
        keys = self._node_keys.get(purpose)
        if keys is None:
            keys = stream_keys(self.master_seed, purpose, 0, np.arange(self.num_nodes))
            self._node_keys[purpose] = keys
        return counter_uniforms(keys, step)


def poisson_inverse(u, mean):
    """Exact Poisson quantile of uniforms ``u`` (one uniform per draw).

    Small means use a sequential CDF search; larger ones go through
    ``scipy.stats.poisson.ppf``. Both are inversions, so each output depends
    only on its own (u, mean) pair.
    """
    u, mean = np.broadcast_arrays(np.asarray(u, dtype=np.float64),
                                  np.asarray(mean, dtype=np.float64))
    shape = u.shape
    u = u.ravel()
    mean = mean.ravel()
    out = np.zeros(u.size, dtype=np.int64)

    small = np.flatnonzero(mean <= INVERSION_LIMIT)
    if small.size:
        out[small] = _search_cdf(u[small], mean[small])

    large = np.flatnonzero(mean > INVERSION_LIMIT)
    if large.size:
        q = stats.poisson.ppf(u[large], mean[large])
        out[large] = np.maximum(q, 0).astype(np.int64)
    return out.reshape(shape)


def _search_cdf(u, mean):
    k = np.zeros(u.size, dtype=np.int64)
    p = np.exp(-mean)
    cdf = p.copy()
    idx = np.flatnonzero(u >= cdf)
    tiny = np.finfo(np.float64).tiny
    while idx.size:
        k[idx] += 1
        p[idx] *= mean[idx] / k[idx]
        cdf[idx] += p[idx]
        # p underflowing means cdf has saturated below u by rounding only
        idx = idx[(u[idx] >= cdf[idx]) & (p[idx] > tiny)]
    return k


def sample_poisson(stream, mean, size=None, start=0):
    """Poisson(mean) counts from ``stream``; ``size`` draws use counters start.."""
    mean = float(mean)
    if not math.isfinite(mean) or mean < 0:
        raise ValueError(f"Poisson mean must be finite and non-negative, got {mean}")
    draws = poisson_inverse(stream.uniforms(1 if size is None else size, start), mean)
    return int(draws[0]) if size is None else draws


def sample_uniform(stream, lo, hi, size=None, start=0):
    lo, hi = float(lo), float(hi)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("uniform bounds must be finite")
    if lo > hi:
        raise ValueError(f"uniform lower bound {lo} exceeds upper bound {hi}")
    u = stream.uniforms(1 if size is None else size, start)
    values = _scale(u, lo, hi)
    return float(values[0]) if size is None else values


def _scale(u, lo, hi):
    if lo == hi:
        return np.full(np.shape(u), lo)
    values = lo + (hi - lo) * u
    # rounding may land on hi; keep the interval half-open
    return np.minimum(values, np.nextafter(hi, lo))


@dataclass(frozen=True)
class ParamRanges:
    lambda_min: float = 0.1
    lambda_max: float = 0.5
    m_min: float = 1.0
    m_max: float = 5.0
    m_max_cap: float = 1e6

    def __post_init__(self):
        values = (self.lambda_min, self.lambda_max, self.m_min, self.m_max, self.m_max_cap)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("parameter ranges must be finite")
        if not 0 <= self.lambda_min <= self.lambda_max:
            raise ValueError("need 0 <= lambda_min <= lambda_max")
        if not 0 <= self.m_min <= self.m_max <= self.m_max_cap:
            raise ValueError("need 0 <= m_min <= m_max <= m_max_cap")


@dataclass(frozen=True, eq=False)
class NodeParams:
    """Per-node arrival rates and base service rates.

    ``lambda_schedule`` is an optional hook ``f(step, lam) -> rates``; the
    default keeps each node's rate constant for the whole run.
    """

    lam: np.ndarray
    m: np.ndarray
    lambda_schedule: object = None

    def __post_init__(self):
        if self.lam.shape != self.m.shape:
            raise ValueError("lam and m must have one entry per node")

    @property
    def num_nodes(self):
        return self.lam.shape[0]

    def arrival_rate(self, step):
        if self.lambda_schedule is None:
            return self.lam
        return np.asarray(self.lambda_schedule(step, self.lam), dtype=np.float64)


def draw_node_params(master, num_nodes, ranges):
    """One lambda_i and one m_i per node, each from its own keyed stream."""
    if num_nodes < 1:
        raise ValueError("need at least one node")
    nodes = np.arange(num_nodes)
    u_lam = counter_uniforms(stream_keys(master.master_seed, Purpose.PARAM_LAMBDA, 0, nodes), 0)
    u_m = counter_uniforms(stream_keys(master.master_seed, Purpose.PARAM_M, 0, nodes), 0)
    params = NodeParams(
        lam=_scale(u_lam, ranges.lambda_min, ranges.lambda_max),
        m=_scale(u_m, ranges.m_min, ranges.m_max),
    )
    logger.debug("drew parameters for %d nodes (seed=%d)", num_nodes, master.master_seed)
    return params
