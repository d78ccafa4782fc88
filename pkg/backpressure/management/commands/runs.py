from django.core.management.base import BaseCommand, CommandError

from backpressure.models import SimulationRun
from backpressure.outputs import render_json


class Command(BaseCommand):
    help = "List recorded simulation runs, newest first, with optional filters"

    def add_arguments(self, parser):
        parser.add_argument('--mode')
        parser.add_argument('--scheduler')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--hash', dest='config_hash', help="config hash or a prefix of it")
        parser.add_argument('--limit', type=int, default=20)
        parser.add_argument('--delete', action='store_true', help="delete the matching runs instead")

    def handle(self, *args, **options):
        queryset = SimulationRun.objects.all()
        filters_applied = {}

        for key in ('mode', 'scheduler', 'seed'):
            if options[key] is not None:
                queryset = queryset.filter(**{key: options[key]})
                filters_applied[key] = options[key]
        if options['config_hash']:
            queryset = queryset.filter(config_hash__startswith=options['config_hash'])
            filters_applied['config_hash'] = options['config_hash']

        if options['delete']:
            if not filters_applied:
                raise CommandError("refusing to delete every run; give at least one filter")
            deleted, _ = queryset.delete()
            self.stdout.write(self.style.SUCCESS(f"Deleted {deleted} run(s)"))
            return

        if options['limit'] < 1:
            raise CommandError("--limit must be positive")
        data = [run.to_dict() for run in queryset[:options['limit']]]
        self.stdout.write(render_json({
            'data': data,
            'count': len(data),
            'filters_applied': filters_applied,
        }))
