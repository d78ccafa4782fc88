from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from backpressure.oracles import FAULTS, run_checks


class Command(BaseCommand):
    help = "Run the built-in oracle suite and report pass/fail per check"

    def add_arguments(self, parser):
        parser.add_argument('--trials', type=int, default=100, help="random scheduler instances")
        parser.add_argument('--seed', type=int, help="seed for instances and sampler checks")
        parser.add_argument('--inject-fault', choices=FAULTS, help="flip a known behaviour to test the oracles")

    def handle(self, *args, **options):
        seed = options['seed']
        if seed is None:
            seed = settings.SIMULATION['DEFAULT_SEED']
        try:
            results = run_checks(trials=options['trials'], seed=seed, inject_fault=options['inject_fault'])
        except ValueError as exc:
            raise CommandError(str(exc)) from exc

        for result in results:
            style = self.style.SUCCESS if result.passed else self.style.ERROR
            status = 'PASS' if result.passed else 'FAIL'
            self.stdout.write(style(f"[{status}] {result.name}: {result.detail}"))

        failed = [r.name for r in results if not r.passed]
        if failed:
            raise CommandError(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        self.stdout.write(self.style.SUCCESS(f"All {len(results)} checks passed"))
