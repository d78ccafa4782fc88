from django.core.management.base import BaseCommand, CommandError

from backpressure.config import ConfigError, merge_layers, normalize_key, resolve_workers
from backpressure.dynamics import DynamicsError
from backpressure.engine import SimulationError
from backpressure.models import SimulationRun
from backpressure.outputs import compare
from backpressure.topology import TopologyError

from ._options import add_config_arguments, config_overrides, load_config


def parse_variant(text):
    """``key=value,key=value`` -> dict"""
    variant = {}
    for part in text.split(','):
        if '=' not in part:
            raise CommandError(f"bad variant {text!r}: expected key=value[,key=value...]")
        key, value = part.split('=', 1)
        variant[normalize_key(key)] = value.strip()
    return variant


class Command(BaseCommand):
    help = "Run several variants of one base config and write an aligned mean-queue table"

    def add_arguments(self, parser):
        add_config_arguments(parser)
        parser.add_argument('--variant', action='append', default=[],
                            help="key=value[,key=value...]; give at least two")
        parser.add_argument('--name', default='comparison', help="output file stem")

    def handle(self, *args, **options):
        variants = options['variant']
        if len(variants) < 2:
            raise CommandError("give at least two --variant options")

        base = config_overrides(options)
        configs = [load_config(options['config'], merge_layers(base, parse_variant(v))) for v in variants]
        workers = resolve_workers(options['workers'])

        try:
            comparison, bundles = compare(configs, variants, workers=workers, name=options['name'])
        except OSError as exc:
            raise CommandError(f"cannot write output: {exc}") from exc
        except (SimulationError, DynamicsError, TopologyError, ConfigError) as exc:
            raise CommandError(str(exc)) from exc

        if not options['no_record']:
            for bundle in bundles:
                SimulationRun.record(bundle)

        for row in comparison.summaries:
            stat = row['stabilization_stat']
            self.stdout.write(
                f"{row['label']}: final {row['final_mean_queue']:.4f}, plateau {row['plateau']:.4f}, "
                f"stabilization {'n/a' if stat is None else f'{stat:.4f}'}, "
                f"throughput {row['sink_throughput']:.2f}"
            )
        self.stdout.write(self.style.SUCCESS(f"Wrote {bundles[0].csv_path} and {bundles[0].summary_path}"))
