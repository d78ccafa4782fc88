"""Directed network graphs with sinks, neighbour sets and routing weights."""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-12


class TopologyError(ValueError):
    """Raised for structurally unusable graphs or malformed edge lists."""


@dataclass(frozen=True, eq=False)
class Topology:
    """Immutable directed graph over dense node ids 0..N-1.

    Neighbour sets are stored in CSR form: ``out_neighbors(i)`` are the nodes
    ``i`` can transmit to, ``in_neighbors(i)`` the nodes that transmit to ``i``.
    """

    num_nodes: int
    edges: np.ndarray
    sinks: frozenset
    _out_ptr: np.ndarray = field(init=False, repr=False)
    _out_idx: np.ndarray = field(init=False, repr=False)
    _in_ptr: np.ndarray = field(init=False, repr=False)
    _in_idx: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.num_nodes < 1:
            raise TopologyError("a topology needs at least one node")
        edges = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= self.num_nodes):
            raise TopologyError(f"edge endpoint outside [0, {self.num_nodes})")
        sinks = frozenset(int(s) for s in self.sinks)
        for s in sinks:
            if not 0 <= s < self.num_nodes:
                raise TopologyError(f"sink {s} is not a node id")
        # duplicates collapse; edges end up sorted by (src, dst)
        edges = np.unique(edges, axis=0) if edges.size else edges
        edges.setflags(write=False)
        object.__setattr__(self, 'edges', edges)
        object.__setattr__(self, 'sinks', sinks)

        out_ptr, out_idx = _csr(edges[:, 0], edges[:, 1], self.num_nodes)
        in_ptr, in_idx = _csr(edges[:, 1], edges[:, 0], self.num_nodes)
        object.__setattr__(self, '_out_ptr', out_ptr)
        object.__setattr__(self, '_out_idx', out_idx)
        object.__setattr__(self, '_in_ptr', in_ptr)
        object.__setattr__(self, '_in_idx', in_idx)

    @property
    def num_edges(self):
        return int(self.edges.shape[0])

    def out_neighbors(self, i):
        return tuple(int(j) for j in self._out_idx[self._out_ptr[i]:self._out_ptr[i + 1]])

    def in_neighbors(self, i):
        return tuple(int(j) for j in self._in_idx[self._in_ptr[i]:self._in_ptr[i + 1]])

    def out_degree(self):
        return np.diff(self._out_ptr)

    def in_degree(self):
        return np.diff(self._in_ptr)

    def sink_mask(self):
        mask = np.zeros(self.num_nodes, dtype=bool)
        mask[list(self.sinks)] = True
        return mask

    def sink_ids(self):
        return np.array(sorted(self.sinks), dtype=np.int64)

    def to_edge_list(self):
        sinks = ' '.join(str(s) for s in sorted(self.sinks))
        lines = [f"N {self.num_nodes} SINKS {sinks}"]
        lines.extend(f"{i} {j}" for i, j in self.edges.tolist())
        return '\n'.join(lines) + '\n'

    @classmethod
    def from_edge_list(cls, text):
        lines = [line.strip() for line in text.splitlines()]
        lines = [line for line in lines if line and not line.startswith('#')]
        if not lines:
            raise TopologyError("empty edge list")
        header = lines[0].split()
        if len(header) < 4 or header[0] != 'N' or header[2] != 'SINKS':
            raise TopologyError("edge list must start with 'N <num_nodes> SINKS <id...>'")
        try:
            num_nodes = int(header[1])
            sinks = [int(tok) for tok in header[3:]]
            edges = [tuple(int(tok) for tok in line.split()) for line in lines[1:]]
        except ValueError as exc:
            raise TopologyError(f"non-integer token in edge list: {exc}") from exc
        if any(len(e) != 2 for e in edges):
            raise TopologyError("every edge line must hold exactly two node ids")
        return cls(num_nodes=num_nodes, edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
                   sinks=frozenset(sinks))

    @classmethod
    def load(cls, path):
        return cls.from_edge_list(Path(path).read_text(encoding='utf-8'))


def _csr(src, dst, n):
    order = np.lexsort((dst, src))
    counts = np.bincount(src, minlength=n)
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return ptr, np.ascontiguousarray(dst[order])


@dataclass(frozen=True, eq=False)
class RoutingWeights:
    """Sparse routing matrix, ``matrix[i, j]`` = share of i's departures sent to j."""

    matrix: sparse.csr_matrix

    def weight(self, i, j):
        return float(self.matrix[i, j])

    def row_sums(self):
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def edge_weights(self, topology):
        """Weights aligned with ``topology.edges``."""
        src, dst = topology.edges[:, 0], topology.edges[:, 1]
        return np.asarray(self.matrix[src, dst]).ravel()


def build_directed_grid(rows, cols):
    """Row-major grid with edges right and down; the last node is the sink."""
    if rows < 1 or cols < 1:
        raise TopologyError(f"grid dimensions must be positive, got {rows}x{cols}")
    n = rows * cols
    if n < 2:
        raise TopologyError("a grid needs at least two nodes (one sink, one sensor)")

    ids = np.arange(n, dtype=np.int64).reshape(rows, cols)
    right = np.stack([ids[:, :-1].ravel(), ids[:, 1:].ravel()], axis=1)
    down = np.stack([ids[:-1, :].ravel(), ids[1:, :].ravel()], axis=1)
    edges = np.concatenate([right, down]) if down.size else right
    topology = Topology(num_nodes=n, edges=edges, sinks=frozenset({n - 1}))
    logger.debug("built %dx%d grid: %d nodes, %d edges", rows, cols, n, topology.num_edges)
    return topology


def grid_shape_for(n):
    """Most-square factorisation rows x cols = n with rows <= cols."""
    if n < 2:
        raise TopologyError(f"a grid needs at least two nodes, got N={n}")
    rows = math.isqrt(n)
    while n % rows:
        rows -= 1
    return rows, n // rows


def uniform_routing(topology):
    """weight(i, j) = 1/|out(i)| on every out-edge."""
    src, dst = topology.edges[:, 0], topology.edges[:, 1]
    degree = topology.out_degree()
    data = 1.0 / degree[src]
    matrix = sparse.csr_matrix((data, (src, dst)), shape=(topology.num_nodes, topology.num_nodes))
    matrix.sort_indices()
    return RoutingWeights(matrix=matrix)


def validate(topology):
    """Return the list of violated invariants; empty means the graph is usable."""
    violations = []
    sink_mask = topology.sink_mask()
    degree = topology.out_degree()

    if not topology.sinks:
        violations.append("no sinks: at least one sink is required")

    loops = topology.edges[topology.edges[:, 0] == topology.edges[:, 1], 0]
    for i in loops.tolist():
        violations.append(f"self-loop at node {i}")

    for s in sorted(topology.sinks):
        if degree[s]:
            violations.append(f"sink out-degree: sink {s} has {degree[s]} outgoing edge(s)")

    for i in np.flatnonzero((degree == 0) & ~sink_mask).tolist():
        violations.append(f"node {i} has no out-neighbors")

    if topology.sinks:
        reached = _reaches_sink(topology)
        for i in np.flatnonzero(~reached & ~sink_mask).tolist():
            violations.append(f"unreachable sink: node {i} has no directed path to a sink")

    return violations


def _reaches_sink(topology):
    """Nodes with a directed path to a sink, via BFS on the reversed graph
    from a virtual super-source attached to every sink."""
    n = topology.num_nodes
    sinks = topology.sink_ids()
    src = np.concatenate([topology.edges[:, 1], np.full(sinks.size, n)])
    dst = np.concatenate([topology.edges[:, 0], sinks])
    reverse = sparse.csr_matrix((np.ones(src.size), (src, dst)), shape=(n + 1, n + 1))
    order = csgraph.breadth_first_order(reverse, n, directed=True, return_predecessors=False)
    reached = np.zeros(n + 1, dtype=bool)
    reached[order] = True
    return reached[:n]
