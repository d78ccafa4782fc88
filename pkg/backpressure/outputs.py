"""Run artifacts: the trajectory CSV, the JSON summary and comparison tables."""
import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from django.conf import settings
from rest_framework.renderers import JSONRenderer

from .config import output_dir
from .engine import compare_runs, run, summarize
from .serializers import SimConfigSerializer

logger = logging.getLogger(__name__)

AGGREGATE_COLUMNS = ('step', 'mean_queue', 'std_queue', 'active_fraction', 'sink_throughput')


@dataclass
class OutputBundle:
    csv_path: Path
    summary_path: Path
    config: dict
    summary: dict = field(default_factory=dict)


def run_name(config):
    return f"{config.mode.value}_{config.scheduler.value}_N{config.N}_seed{config.seed}"


def _number_format():
    return f"%.{settings.SIMULATION.get('CSV_SIGNIFICANT_DIGITS', 9)}g"


def write_trajectory_csv(trajectory, path):
    """Aggregate series, then one ``q_<id>`` column per recorded node.

    Sinks are left out of mean_queue and std_queue; their queues are always 0.
    """
    fmt = _number_format()
    header = list(AGGREGATE_COLUMNS) + [f"q_{i}" for i in trajectory.node_ids]
    columns = [trajectory.mean_queue, trajectory.std_queue,
               trajectory.active_fraction, trajectory.sink_throughput]
    path = Path(path)
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for k, step in enumerate(trajectory.steps):
            row = [int(step)] + [fmt % float(column[k]) for column in columns]
            if trajectory.node_queues is not None:
                row.extend(fmt % float(v) for v in trajectory.node_queues[k])
            writer.writerow(row)
    return path


def render_json(data):
    return JSONRenderer().render(data, renderer_context={'indent': 2}).decode('utf-8')


def write_json(data, path):
    path = Path(path)
    path.write_bytes(render_json(data).encode('utf-8') + b'\n')
    return path


def simulate(config, workers=1, out_dir=None, name=None):
    """Run one config and write its CSV and summary. Returns an ``OutputBundle``."""
    target = Path(out_dir) if out_dir else output_dir(config)
    target.mkdir(parents=True, exist_ok=True)
    name = name or run_name(config)

    started = time.perf_counter()
    trajectory = run(config, workers=workers, block=settings.SIMULATION.get('NODE_BLOCK'))
    elapsed = time.perf_counter() - started

    echo = dict(SimConfigSerializer(config).data)
    summary = {
        **summarize(trajectory, config.window),
        'window': config.window,
        'wall_clock_seconds': round(elapsed, 3),
        'workers': workers,
        'config': echo,
    }
    csv_path = write_trajectory_csv(trajectory, target / f"{name}.csv")
    summary_path = write_json(summary, target / f"{name}.summary.json")
    logger.info("wrote %s and %s", csv_path, summary_path)
    return OutputBundle(csv_path=csv_path, summary_path=summary_path, config=echo, summary=summary)


def write_comparison_csv(comparison, path):
    fmt = _number_format()
    path = Path(path)
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(['step', *comparison.labels])
        for k, step in enumerate(comparison.steps):
            writer.writerow([int(step)] + [fmt % float(comparison.series[label][k])
                                           for label in comparison.labels])
    return path


def compare(configs, labels, workers=1, out_dir=None, name='comparison'):
    """Run every variant and write ``<name>.csv`` plus ``<name>.summary.json``."""
    target = Path(out_dir) if out_dir else output_dir(configs[0])
    target.mkdir(parents=True, exist_ok=True)
    comparison = compare_runs(configs, labels, workers=workers)
    rows = [
        {**row, 'config': dict(SimConfigSerializer(config).data)}
        for row, config in zip(comparison.summaries, configs)
    ]
    csv_path = write_comparison_csv(comparison, target / f"{name}.csv")
    summary_path = write_json({'runs': rows}, target / f"{name}.summary.json")
    logger.info("wrote comparison of %d runs to %s", len(configs), csv_path)
    bundles = [
        OutputBundle(csv_path=csv_path, summary_path=summary_path, config=row['config'], summary=row)
        for row in rows
    ]
    return comparison, bundles
