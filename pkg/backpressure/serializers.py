from django.conf import settings
from rest_framework import serializers

from .config import DEFAULT_GRID, Mode, SimConfig
from .dynamics import RoutingMode
from .meanfield import ControlRule, EstimatorMode
from .schedulers import SchedulerKind
from .stochastic import ParamRanges
from .topology import Topology, TopologyError, grid_shape_for, validate

COUPLED_ONLY = {SchedulerKind.COOPERATIVE, SchedulerKind.BEST_RESPONSE}


class EnumChoiceField(serializers.ChoiceField):
    """ChoiceField that hands back enum members and renders their values."""

    def __init__(self, enum, **kwargs):
        self.enum = enum
        aliases = list(enum.aliases()) if hasattr(enum, 'aliases') else []
        super().__init__(choices=[member.value for member in enum] + aliases, **kwargs)

    def to_internal_value(self, data):
        if isinstance(data, self.enum):
            return data
        return self.enum(super().to_internal_value(data))

    def to_representation(self, value):
        return None if value is None else self.enum(value).value


class SimConfigSerializer(serializers.Serializer):
    mode = EnumChoiceField(Mode, default=Mode.MEANFIELD)
    rows = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    cols = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    N = serializers.IntegerField(min_value=2, required=False, allow_null=True)
    topology_file = serializers.CharField(required=False, allow_blank=True, default='')
    K = serializers.IntegerField(min_value=0, default=1000)
    dt = serializers.FloatField(default=1.0)
    M = serializers.IntegerField(min_value=1, default=100)
    scheduler = EnumChoiceField(SchedulerKind, required=False, allow_null=True)
    estimator = EnumChoiceField(EstimatorMode, default=EstimatorMode.PER_SAMPLE)
    control_rule = EnumChoiceField(ControlRule, default=ControlRule.REPRESENTATIVE)
    routing = EnumChoiceField(RoutingMode, default=RoutingMode.SENDER_CONSERVING)
    lambda_min = serializers.FloatField(min_value=0.0, default=0.1)
    lambda_max = serializers.FloatField(min_value=0.0, default=0.5)
    m_min = serializers.FloatField(min_value=0.0, default=1.0)
    m_max = serializers.FloatField(min_value=0.0, max_value=ParamRanges.m_max_cap, default=5.0)
    alpha = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.01)
    beta = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.7)
    seed = serializers.IntegerField(min_value=0, max_value=2**64 - 1, required=False, allow_null=True)
    initial_queue = serializers.FloatField(min_value=0.0, default=0.0)
    per_node = serializers.BooleanField(default=False)
    node_subsample = serializers.IntegerField(min_value=0, default=0)
    window = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    out_dir = serializers.CharField(required=False, allow_blank=True, default='')

    def validate_dt(self, value):
        if not value > 0:
            raise serializers.ValidationError("Time step must be positive.")
        return value

    def validate(self, attrs):
        mode = attrs['mode']

        if attrs['lambda_min'] > attrs['lambda_max']:
            raise serializers.ValidationError({'lambda_min': "Must not exceed lambda_max."})
        if attrs['m_min'] > attrs['m_max']:
            raise serializers.ValidationError({'m_min': "Must not exceed m_max."})

        scheduler = attrs.get('scheduler')
        if scheduler is None:
            scheduler = SchedulerKind.MEAN_FIELD if mode is Mode.MEANFIELD else SchedulerKind.COOPERATIVE
        if mode is Mode.COUPLED and scheduler is SchedulerKind.MEAN_FIELD:
            raise serializers.ValidationError(
                {'scheduler': "The mean-field threshold scheduler needs mode=meanfield."})
        if mode is Mode.MEANFIELD and scheduler in COUPLED_ONLY:
            raise serializers.ValidationError(
                {'scheduler': f"Scheduler '{scheduler.value}' needs neighbour queues; use mode=coupled."})
        attrs['scheduler'] = scheduler

        if attrs.get('seed') is None:
            attrs['seed'] = settings.SIMULATION['DEFAULT_SEED']
        if attrs.get('window') is None:
            attrs['window'] = settings.SIMULATION['STABILIZATION_WINDOW']

        attrs.update(self._resolve_size(attrs, mode))
        return attrs

    def _resolve_size(self, attrs, mode):
        rows, cols, n = attrs.get('rows'), attrs.get('cols'), attrs.get('N')
        path = attrs.get('topology_file')

        if path:
            if mode is not Mode.COUPLED:
                raise serializers.ValidationError({'topology_file': "Only supported in coupled mode."})
            try:
                topology = Topology.load(path)
            except (OSError, TopologyError) as exc:
                raise serializers.ValidationError({'topology_file': str(exc)})
            problems = validate(topology)
            if problems:
                raise serializers.ValidationError({'topology_file': problems})
            if n is not None and n != topology.num_nodes:
                raise serializers.ValidationError({'N': "Does not match the topology file."})
            return {'rows': None, 'cols': None, 'N': topology.num_nodes}

        if rows is None and cols is None:
            rows, cols = DEFAULT_GRID if n is None else grid_shape_for(n)
        elif rows is None or cols is None:
            raise serializers.ValidationError({'rows' if rows is None else 'cols': "Give both rows and cols."})
        if rows * cols < 2:
            raise serializers.ValidationError({'rows': "A grid needs at least two nodes."})
        if n is not None and n != rows * cols:
            raise serializers.ValidationError({'N': f"Must equal rows*cols = {rows * cols}."})
        return {'rows': rows, 'cols': cols, 'N': rows * cols}

    def create(self, validated_data):
        return SimConfig(**validated_data)
