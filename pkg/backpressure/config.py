"""Simulation configuration: the resolved ``SimConfig`` and the flat key-value
file format it is read from.

Precedence is defaults < config file < command flags. Defaults are the
simulation parameters of the reference experiment (10x10 grid, K=1000, M=100,
alpha=0.01, beta=0.7, lambda ~ U[0.1, 0.5], m ~ U[1, 5], Q(0)=0).
"""
import logging
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

from django.conf import settings
from dotenv.parser import parse_stream

from .dynamics import GlobalParams, RoutingMode
from .meanfield import ControlRule, EstimatorMode
from .schedulers import SchedulerKind
from .stochastic import ParamRanges

logger = logging.getLogger(__name__)

DEFAULT_GRID = (10, 10)
# keys that pin the network size, each with the lower-layer keys it overrides
SIZE_CONFLICTS = {
    'rows': ('N', 'topology_file'),
    'cols': ('N', 'topology_file'),
    'N': ('rows', 'cols', 'topology_file'),
    'topology_file': ('rows', 'cols', 'N'),
}


class ConfigError(ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class Mode(str, Enum):
    COUPLED = 'coupled'
    MEANFIELD = 'meanfield'


@dataclass(frozen=True)
class SimConfig:
    mode: Mode
    rows: int
    cols: int
    N: int
    topology_file: str
    K: int
    dt: float
    M: int
    scheduler: SchedulerKind
    estimator: EstimatorMode
    control_rule: ControlRule
    routing: RoutingMode
    lambda_min: float
    lambda_max: float
    m_min: float
    m_max: float
    alpha: float
    beta: float
    seed: int
    initial_queue: float
    per_node: bool
    node_subsample: int
    window: int
    out_dir: str

    @property
    def param_ranges(self):
        return ParamRanges(self.lambda_min, self.lambda_max, self.m_min, self.m_max)

    @property
    def global_params(self):
        return GlobalParams(alpha=self.alpha, beta=self.beta, dt=self.dt)

    def to_dict(self):
        return {key: (value.value if isinstance(value, Enum) else value)
                for key, value in asdict(self).items()}


def normalize_key(key):
    return key.strip().replace('-', '_')


def read_config_file(path):
    """Parse ``key = value`` lines with the dotenv grammar: ``#`` comments,
    optional ``export`` prefix, single or double quoted values."""
    try:
        with open(path, encoding='utf-8') as stream:
            bindings = list(parse_stream(stream))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    values = {}
    for binding in bindings:
        if binding.error or (binding.key is not None and binding.value is None):
            raw = binding.original.string.strip()
            raise ConfigError(f"{path}:{binding.original.line}: expected 'key = value', got {raw!r}")
        if binding.key is not None:
            values[normalize_key(binding.key)] = binding.value
    return values


def merge_layers(*layers):
    """Overlay layers left to right. A size key in a higher layer drops the
    lower size keys it conflicts with: ``N`` or ``topology_file`` clears the
    grid below, ``rows`` or ``cols`` clears ``N`` and ``topology_file`` but
    keeps the other grid dimension."""
    merged = {}
    for layer in layers:
        layer = {normalize_key(k): v for k, v in layer.items() if v is not None}
        for key, conflicts in SIZE_CONFLICTS.items():
            if layer.get(key, '') != '':
                for dropped in conflicts:
                    merged.pop(dropped, None)
        merged.update(layer)
    return merged


def parse_config(path=None, overrides=None):
    """Resolve a validated ``SimConfig`` from an optional file and flag overrides."""
    from .serializers import SimConfigSerializer

    file_values = read_config_file(path) if path else {}
    data = merge_layers(file_values, overrides or {})

    unknown = sorted(set(data) - set(SimConfigSerializer().fields))
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}", key=unknown[0])

    serializer = SimConfigSerializer(data=data)
    if not serializer.is_valid():
        raise ConfigError(*_first_error(serializer.errors))
    config = serializer.save()
    logger.debug("resolved config: %s", config.to_dict())
    return config


def _first_error(errors):
    messages = []
    first_key = None
    for key, details in errors.items():
        first_key = first_key or key
        for detail in details if isinstance(details, list) else [details]:
            messages.append(f"{key}: {detail}")
    return '; '.join(messages), first_key


def resolve_workers(workers=None):
    if workers is not None:
        return max(1, int(workers))
    return max(1, int(settings.SIMULATION.get('THREADS', 1)))


def output_dir(config):
    return Path(config.out_dir) if config.out_dir else Path(settings.SIMULATION['OUTPUT_DIR'])
