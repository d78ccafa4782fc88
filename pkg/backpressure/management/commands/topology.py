from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from backpressure.config import DEFAULT_GRID
from backpressure.topology import Topology, TopologyError, build_directed_grid, grid_shape_for, validate


class Command(BaseCommand):
    help = "Dump a directed grid as an edge list, or check an edge-list file"

    def add_arguments(self, parser):
        parser.add_argument('--rows', type=int)
        parser.add_argument('--cols', type=int)
        parser.add_argument('--N', dest='N', type=int)
        parser.add_argument('--out', help="write the edge list here instead of stdout")
        parser.add_argument('--check', metavar='FILE', help="validate an existing edge-list file")

    def handle(self, *args, **options):
        if options['check']:
            return self.check_file(options['check'])

        rows, cols = options['rows'], options['cols']
        if rows is None and cols is None:
            rows, cols = grid_shape_for(options['N']) if options['N'] else DEFAULT_GRID
        elif rows is None or cols is None:
            raise CommandError("give both --rows and --cols")
        try:
            topology = build_directed_grid(rows, cols)
        except TopologyError as exc:
            raise CommandError(str(exc)) from exc

        text = topology.to_edge_list()
        if options['out']:
            Path(options['out']).write_text(text, encoding='utf-8')
            self.stdout.write(self.style.SUCCESS(
                f"Wrote {rows}x{cols} grid ({topology.num_edges} edges) to {options['out']}"))
        else:
            self.stdout.write(text, ending='')

    def check_file(self, path):
        try:
            topology = Topology.load(path)
        except (OSError, TopologyError) as exc:
            raise CommandError(f"cannot load {path}: {exc}") from exc
        problems = validate(topology)
        for problem in problems:
            self.stdout.write(self.style.ERROR(problem))
        if problems:
            raise CommandError(f"{path}: {len(problems)} problem(s)")
        self.stdout.write(self.style.SUCCESS(
            f"{path}: {topology.num_nodes} nodes, {topology.num_edges} edges, sinks {sorted(topology.sinks)}"))
