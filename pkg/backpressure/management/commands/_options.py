"""Flags shared by the ``simulate`` and ``compare`` commands."""
from django.core.management.base import CommandError

from backpressure.config import ConfigError, parse_config

# (flag, dest, type, help)
CONFIG_FLAGS = (
    ('--mode', 'mode', str, "coupled or meanfield"),
    ('--scheduler', 'scheduler', str, "coop, br, mft, on or off"),
    ('--estimator', 'estimator', str, "per-sample or ensemble-mean"),
    ('--control-rule', 'control_rule', str, "representative or majority"),
    ('--routing', 'routing', str, "sender-conserving or receiver-degree (alias paper-literal)"),
    ('--rows', 'rows', int, "grid rows"),
    ('--cols', 'cols', int, "grid columns"),
    ('--N', 'N', int, "number of nodes (most-square grid unless rows/cols are given)"),
    ('--topology-file', 'topology_file', str, "edge-list file (coupled mode)"),
    ('--K', 'K', int, "number of time steps"),
    ('--M', 'M', int, "ensemble samples per node (meanfield mode)"),
    ('--dt', 'dt', float, "time step length"),
    ('--alpha', 'alpha', float, "service-rate decay"),
    ('--beta', 'beta', float, "aggregation factor"),
    ('--seed', 'seed', int, "master seed"),
    ('--initial-queue', 'initial_queue', float, "initial queue level Q(0)"),
    ('--node-subsample', 'node_subsample', int, "record this many evenly spaced node queues"),
    ('--window', 'window', int, "stabilization window"),
    ('--out-dir', 'out_dir', str, "output directory"),
)


def add_config_arguments(parser):
    parser.add_argument('--config', help="flat key = value config file")
    for flag, dest, kind, text in CONFIG_FLAGS:
        parser.add_argument(flag, dest=dest, type=kind, help=text)
    parser.add_argument('--per-node', dest='per_node', action='store_const', const=True,
                        help="record every node's queue")
    parser.add_argument('--workers', type=int, help="worker threads (default: SIM_THREADS)")
    parser.add_argument('--no-record', action='store_true', help="do not add the run to the registry")


def config_overrides(options):
    keys = [dest for _, dest, _, _ in CONFIG_FLAGS] + ['per_node']
    return {key: options[key] for key in keys if options.get(key) is not None}


def load_config(path, overrides):
    try:
        return parse_config(path, overrides)
    except ConfigError as exc:
        raise CommandError(f"invalid configuration: {exc}") from exc
