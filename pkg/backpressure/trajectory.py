"""Per-step run records shared by the coupled and mean-field engines."""
from dataclasses import dataclass, field

import numpy as np


@dataclass(eq=False)
class Trajectory:
    """Columnar per-step series; row k describes the state after step k.

    Cross-node statistics leave sinks out. ``active_fraction`` is the share of
    non-sink nodes whose control is on for the following step.
    """

    steps: np.ndarray
    mean_queue: np.ndarray
    std_queue: np.ndarray
    active_fraction: np.ndarray
    sink_throughput: np.ndarray
    residual_arrival: np.ndarray
    residual_departure: np.ndarray
    truncations: np.ndarray
    node_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    node_queues: np.ndarray = None
    residuals: object = None

    def __len__(self):
        return int(self.steps.shape[0])

    @property
    def num_steps(self):
        return len(self) - 1

    def check(self):
        """Record-count and step-order invariants."""
        if len(self) < 1:
            raise ValueError("a trajectory holds at least the initial record")
        if np.any(np.diff(self.steps) <= 0):
            raise ValueError("step indices must be strictly increasing")
        return self


class TrajectoryRecorder:
    """Preallocates K+1 rows and fills them as the run advances."""

    def __init__(self, num_steps, node_ids=()):
        rows = num_steps + 1
        self._rows = rows
        self._next = 0
        self.node_ids = np.asarray(node_ids, dtype=np.int64)
        self.columns = {
            name: np.zeros(rows) for name in (
                'mean_queue', 'std_queue', 'active_fraction', 'sink_throughput',
                'residual_arrival', 'residual_departure',
            )
        }
        self.truncations = np.zeros(rows, dtype=np.int64)
        self.node_queues = np.zeros((rows, self.node_ids.size)) if self.node_ids.size else None

    def record(self, queues, live, active_fraction, sink_throughput, truncations,
               residual=(0.0, 0.0)):
        """``queues`` is the per-node queue (or per-node ensemble mean) vector."""
        k = self._next
        values = queues[live]
        cols = self.columns
        cols['mean_queue'][k] = values.mean() if values.size else 0.0
        cols['std_queue'][k] = values.std() if values.size else 0.0
        cols['active_fraction'][k] = active_fraction
        cols['sink_throughput'][k] = sink_throughput
        cols['residual_arrival'][k], cols['residual_departure'][k] = residual
        self.truncations[k] = truncations
        if self.node_queues is not None:
            self.node_queues[k] = queues[self.node_ids]
        self._next += 1

    def finish(self, residuals=None):
        if self._next != self._rows:
            raise ValueError(f"recorded {self._next} of {self._rows} rows")
        return Trajectory(
            steps=np.arange(self._rows, dtype=np.int64),
            truncations=self.truncations,
            node_ids=self.node_ids,
            node_queues=self.node_queues,
            residuals=residuals,
            **self.columns,
        ).check()


def recorded_nodes(num_nodes, per_node, subsample):
    """All nodes with ``per_node``, else ``subsample`` evenly spaced ids."""
    if per_node:
        return np.arange(num_nodes, dtype=np.int64)
    if subsample <= 0:
        return np.zeros(0, dtype=np.int64)
    count = min(subsample, num_nodes)
    return np.unique(np.linspace(0, num_nodes - 1, count).round().astype(np.int64))


def active_fraction(chi, live):
    """Share of non-sink nodes whose control is on."""
    return float(chi[live].mean()) if live.any() else 0.0
