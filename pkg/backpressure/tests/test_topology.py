import numpy as np
from django.test import SimpleTestCase

from backpressure.topology import (
    WEIGHT_TOLERANCE, Topology, TopologyError, build_directed_grid, grid_shape_for, uniform_routing,
    validate,
)


class DirectedGridTests(SimpleTestCase):
    def test_ten_by_ten_grid(self):
        grid = build_directed_grid(10, 10)
        self.assertEqual(grid.num_nodes, 100)
        self.assertEqual(grid.sinks, frozenset({99}))
        self.assertEqual(grid.out_neighbors(0), (1, 10))

    def test_smallest_grid(self):
        grid = build_directed_grid(1, 2)
        self.assertEqual(grid.edges.tolist(), [[0, 1]])
        self.assertEqual(grid.sinks, frozenset({1}))
        self.assertEqual(len(grid.out_neighbors(0)), 1)

    def test_two_by_two_adjacency(self):
        grid = build_directed_grid(2, 2)
        self.assertEqual(grid.out_neighbors(0), (1, 2))
        self.assertEqual(grid.out_neighbors(1), (3,))
        self.assertEqual(grid.out_neighbors(2), (3,))
        self.assertEqual(grid.out_neighbors(3), ())
        self.assertEqual(grid.in_neighbors(3), (1, 2))

    def test_closed_form_counts_and_validity(self):
        for rows in range(1, 21):
            for cols in range(1, 21):
                if rows * cols < 2:
                    continue
                grid = build_directed_grid(rows, cols)
                self.assertEqual(grid.num_nodes, rows * cols)
                self.assertEqual(grid.num_edges, rows * (cols - 1) + cols * (rows - 1))
                self.assertEqual(grid.sinks, frozenset({rows * cols - 1}))
                self.assertEqual(validate(grid), [], f"{rows}x{cols}")

    def test_rejects_degenerate_grid(self):
        with self.assertRaises(TopologyError):
            build_directed_grid(1, 1)
        with self.assertRaises(TopologyError):
            build_directed_grid(0, 5)

    def test_grid_shape_for(self):
        self.assertEqual(grid_shape_for(100), (10, 10))
        self.assertEqual(grid_shape_for(250000), (500, 500))
        self.assertEqual(grid_shape_for(12), (3, 4))
        self.assertEqual(grid_shape_for(7), (1, 7))


class UniformRoutingTests(SimpleTestCase):
    def test_two_equal_out_edges(self):
        weights = uniform_routing(build_directed_grid(2, 2))
        self.assertEqual(weights.weight(0, 1), 0.5)
        self.assertEqual(weights.weight(0, 2), 0.5)

    def test_single_out_edge(self):
        self.assertEqual(uniform_routing(build_directed_grid(1, 2)).weight(0, 1), 1.0)

    def test_interior_node(self):
        grid = build_directed_grid(10, 10)
        weights = uniform_routing(grid)
        self.assertEqual([weights.weight(55, j) for j in grid.out_neighbors(55)], [0.5, 0.5])

    def test_rows_sum_to_one_on_random_grids(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            rows, cols = rng.integers(1, 15, size=2)
            if rows * cols < 2:
                continue
            grid = build_directed_grid(int(rows), int(cols))
            sums = uniform_routing(grid).row_sums()
            live = ~grid.sink_mask()
            np.testing.assert_allclose(sums[live], 1.0, rtol=0, atol=WEIGHT_TOLERANCE)
            self.assertEqual(sums[~live].tolist(), [0.0])


class ValidateTests(SimpleTestCase):
    def test_isolated_node_is_unreachable(self):
        topology = Topology(num_nodes=3, edges=[(0, 2)], sinks={2})
        report = validate(topology)
        self.assertTrue(any(line.startswith("unreachable sink: node 1") for line in report))
        self.assertIn("node 1 has no out-neighbors", report)

    def test_sink_with_out_edge(self):
        topology = Topology(num_nodes=2, edges=[(0, 1), (1, 0)], sinks={1})
        self.assertTrue(any(line.startswith("sink out-degree") for line in validate(topology)))

    def test_no_sinks_and_self_loop(self):
        report = validate(Topology(num_nodes=2, edges=[(0, 1), (1, 1)], sinks=()))
        self.assertTrue(any(line.startswith("no sinks") for line in report))
        self.assertIn("self-loop at node 1", report)

    def test_multiple_sinks(self):
        topology = Topology(num_nodes=4, edges=[(0, 1), (0, 2), (1, 3)], sinks={2, 3})
        self.assertEqual(validate(topology), [])
        self.assertEqual(topology.sink_ids().tolist(), [2, 3])


class TopologyConstructionTests(SimpleTestCase):
    def test_rejects_out_of_range_endpoint(self):
        with self.assertRaises(TopologyError):
            Topology(num_nodes=2, edges=[(0, 2)], sinks={1})
        with self.assertRaises(TopologyError):
            Topology(num_nodes=2, edges=[(0, 1)], sinks={5})

    def test_duplicate_edges_collapse(self):
        topology = Topology(num_nodes=3, edges=[(1, 2), (0, 1), (1, 2)], sinks={2})
        self.assertEqual(topology.edges.tolist(), [[0, 1], [1, 2]])
        self.assertFalse(topology.edges.flags.writeable)

    def test_edge_list_text(self):
        grid = build_directed_grid(2, 3)
        text = grid.to_edge_list()
        self.assertTrue(text.startswith("N 6 SINKS 5\n"))
        loaded = Topology.from_edge_list("# comment\n" + text)
        self.assertEqual(loaded.num_nodes, 6)
        self.assertEqual(loaded.sinks, grid.sinks)
        self.assertTrue(np.array_equal(loaded.edges, grid.edges))

    def test_malformed_edge_list(self):
        with self.assertRaises(TopologyError):
            Topology.from_edge_list("")
        with self.assertRaises(TopologyError):
            Topology.from_edge_list("nodes 3\n0 1\n")
        with self.assertRaises(TopologyError):
            Topology.from_edge_list("N 3 SINKS 2\n0 1 2\n")
