from django.core.management.base import BaseCommand, CommandError

from backpressure.config import resolve_workers
from backpressure.dynamics import DynamicsError
from backpressure.engine import SimulationError
from backpressure.models import SimulationRun
from backpressure.outputs import render_json, simulate
from backpressure.topology import TopologyError

from ._options import add_config_arguments, config_overrides, load_config


class Command(BaseCommand):
    help = "Run one simulation and write its trajectory CSV and JSON summary"

    def add_arguments(self, parser):
        add_config_arguments(parser)

    def handle(self, *args, **options):
        config = load_config(options['config'], config_overrides(options))
        workers = resolve_workers(options['workers'])

        try:
            bundle = simulate(config, workers=workers)
        except OSError as exc:
            raise CommandError(f"cannot write output: {exc}") from exc
        except (SimulationError, DynamicsError, TopologyError) as exc:
            raise CommandError(str(exc)) from exc

        if not options['no_record']:
            run = SimulationRun.record(bundle)
            self.stdout.write(f"Recorded run {run.pk} ({run.config_hash[:12]})")

        summary = {key: value for key, value in bundle.summary.items() if key != 'config'}
        self.stdout.write(render_json(summary))
        self.stdout.write(self.style.SUCCESS(f"Wrote {bundle.csv_path} and {bundle.summary_path}"))
