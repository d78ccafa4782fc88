import numpy as np
from django.test import SimpleTestCase

from backpressure.dynamics import (
    GlobalParams, QueueState, RoutingMode, compensated_residuals, enforce_sink,
    inflow_operator, route_departures, service_rate, step_coupled,
)
from backpressure.schedulers import cooperative_schedule
from backpressure.stochastic import KeyedStreams, NodeParams, ParamRanges, RngStream, draw_node_params
from backpressure.topology import build_directed_grid, uniform_routing

SEED = 4242


def fixed_params(lam, m):
    return NodeParams(lam=np.asarray(lam, dtype=float), m=np.asarray(m, dtype=float))


class ServiceRateTests(SimpleTestCase):
    def test_examples(self):
        self.assertEqual(service_rate(2.0, 0.01, 0.0), 2.0)
        self.assertEqual(service_rate(2.0, 0.01, 100.0), 1.0)
        self.assertEqual(service_rate(5.0, 0.0, 1e6), 5.0)

    def test_monotone(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            m, alpha = rng.uniform(0, 5), rng.uniform(0, 1)
            q1, q2 = np.sort(rng.uniform(0, 1000, 2))
            self.assertGreaterEqual(service_rate(m, alpha, q1), service_rate(m, alpha, q2))
            self.assertLessEqual(service_rate(m, alpha, q1), service_rate(m + 1.0, alpha, q1))

    def test_vectorised(self):
        rates = service_rate(np.array([2.0, 4.0]), 0.01, np.array([0.0, 100.0]))
        self.assertEqual(rates.tolist(), [2.0, 2.0])


class GlobalParamsTests(SimpleTestCase):
    def test_ranges(self):
        with self.assertRaises(ValueError):
            GlobalParams(beta=1.5)
        with self.assertRaises(ValueError):
            GlobalParams(alpha=-0.1)
        with self.assertRaises(ValueError):
            GlobalParams(dt=0.0)


class StepCoupledTests(SimpleTestCase):
    def test_sink_absorbs(self):
        grid = build_directed_grid(1, 2)
        weights = uniform_routing(grid)
        state = QueueState(q=np.array([5.0, 0.0]))
        params = GlobalParams(alpha=0.0, beta=0.0)
        new, flows = step_coupled(state, [1, 0], grid, weights, params, fixed_params([0.0, 0.0], [1e3, 1e3]),
                                  KeyedStreams(SEED, 2))
        self.assertEqual(new.q[0], 5.0 - flows.departures[0])
        self.assertEqual(new.q[1], 0.0)
        self.assertEqual(flows.delivered, float(flows.departures[0]))
        # mean 1000 against 5 buffered units: always truncated
        self.assertEqual(flows.departures[0], 5)
        self.assertEqual(flows.truncated, 1)
        self.assertEqual(new.step, 1)

    def test_no_flows_leaves_state_unchanged(self):
        grid = build_directed_grid(3, 3)
        q = np.arange(9, dtype=float)
        q[8] = 0.0
        new, flows = step_coupled(QueueState(q=q.copy()), np.zeros(9), grid, uniform_routing(grid),
                                  GlobalParams(), fixed_params(np.zeros(9), np.full(9, 3.0)),
                                  KeyedStreams(SEED, 9))
        self.assertTrue(np.array_equal(new.q, q))
        self.assertEqual(flows.arrivals.sum(), 0)
        self.assertEqual(flows.departures.sum(), 0)

    def test_forced_departure_splits_evenly(self):
        grid = build_directed_grid(2, 2)
        operator = inflow_operator(grid, uniform_routing(grid), RoutingMode.SENDER_CONSERVING)
        forwarded = route_departures(np.array([2, 0, 0, 0]), operator)
        self.assertEqual(forwarded.tolist(), [0.0, 1.0, 1.0, 0.0])

    def test_receiver_degree_routing_scales_by_in_degree(self):
        grid = build_directed_grid(2, 2)
        operator = inflow_operator(grid, uniform_routing(grid), RoutingMode.RECEIVER_DEGREE)
        # node 3 hears from 1 and 2, each counted with 1/|in(3)| = 1/2
        forwarded = route_departures(np.array([2, 4, 6, 0]), operator)
        self.assertEqual(forwarded.tolist(), [0.0, 2.0, 2.0, 5.0])

    def test_alternate_routing_spelling(self):
        self.assertIs(RoutingMode('paper-literal'), RoutingMode.RECEIVER_DEGREE)
        grid = build_directed_grid(2, 2)
        operator = inflow_operator(grid, uniform_routing(grid), 'paper-literal')
        self.assertEqual(route_departures(np.array([2, 4, 6, 0]), operator).tolist(), [0.0, 2.0, 2.0, 5.0])
        with self.assertRaises(ValueError):
            RoutingMode('literal')

    def test_aggregation_identity_and_invariants(self):
        rng = np.random.default_rng(11)
        for trial in range(10):
            rows, cols = (int(v) for v in rng.integers(2, 8, size=2))
            grid = build_directed_grid(rows, cols)
            weights = uniform_routing(grid)
            params = GlobalParams(beta=float(rng.uniform(0, 1)))
            node_params = draw_node_params(RngStream(trial), grid.num_nodes, ParamRanges())
            streams = KeyedStreams(trial, grid.num_nodes)
            state = QueueState.zeros(grid.num_nodes, sinks=grid.sink_ids())
            for _ in range(100):
                chi = rng.integers(0, 2, grid.num_nodes)
                state, flows = step_coupled(state, chi, grid, weights, params, node_params, streams)
                self.assertGreaterEqual(state.q.min(), 0.0)
                self.assertEqual(state.q[grid.sink_ids()].tolist(), [0.0])
                np.testing.assert_allclose(flows.processed, params.beta * (flows.arrivals + flows.forwarded),
                                           rtol=0, atol=0)

    def test_full_aggregation_never_grows(self):
        grid = build_directed_grid(4, 4)
        params = GlobalParams(beta=1.0)
        node_params = draw_node_params(RngStream(SEED), 16, ParamRanges())
        state = QueueState.zeros(16, level=3.0, sinks=grid.sink_ids())
        streams = KeyedStreams(SEED, 16)
        for _ in range(50):
            new, _ = step_coupled(state, np.zeros(16), grid, uniform_routing(grid), params, node_params, streams)
            self.assertTrue(np.all(new.q <= state.q))
            state = new

    def test_conservation_with_no_aggregation(self):
        grid = build_directed_grid(10, 10)
        weights = uniform_routing(grid)
        operator = inflow_operator(grid, weights)
        params = GlobalParams(beta=0.0)
        node_params = draw_node_params(RngStream(SEED), 100, ParamRanges())
        streams = KeyedStreams(SEED, 100)
        state = QueueState.zeros(100, sinks=grid.sink_ids())
        arrived = delivered = 0.0
        for _ in range(1000):
            chi = cooperative_schedule(state, grid, weights, node_params, params)
            state, flows = step_coupled(state, chi, grid, weights, params, node_params, streams,
                                        operator=operator)
            arrived += flows.arrivals.sum()
            delivered += flows.delivered
        self.assertLessEqual(abs(state.q.sum() + delivered - arrived), 1e-6)

    def test_fractional_queue_cannot_depart(self):
        grid = build_directed_grid(1, 2)
        state = QueueState(q=np.array([0.5, 0.0]))
        new, flows = step_coupled(state, [1, 0], grid, uniform_routing(grid), GlobalParams(),
                                  fixed_params([0.0, 0.0], [100.0, 100.0]), KeyedStreams(SEED, 2))
        self.assertEqual(flows.departures[0], 0)
        self.assertEqual(new.q[0], 0.5)
        self.assertEqual(flows.truncated, 1)


class EnforceSinkTests(SimpleTestCase):
    def test_clears_sink(self):
        grid = build_directed_grid(1, 2)
        self.assertEqual(enforce_sink(QueueState(q=np.array([3.0, 7.0])), grid).q.tolist(), [3.0, 0.0])
        self.assertEqual(enforce_sink(QueueState(q=np.zeros(2)), grid).q.tolist(), [0.0, 0.0])

    def test_coupled_step_clears_a_loaded_sink(self):
        grid = build_directed_grid(1, 2)
        new, _ = step_coupled(QueueState(q=np.array([4.0, 9.0])), [0, 1], grid, uniform_routing(grid),
                              GlobalParams(), fixed_params([0.3, 0.3], [1.0, 1.0]), KeyedStreams(SEED, 2))
        self.assertEqual(new.q[1], 0.0)
        self.assertEqual(new.step, 1)


class ResidualTests(SimpleTestCase):
    def setUp(self):
        self.grid = build_directed_grid(3, 3)
        self.weights = uniform_routing(self.grid)
        self.operator = inflow_operator(self.grid, self.weights)

    def history(self, node_params, params, steps, control):
        streams = KeyedStreams(SEED, self.grid.num_nodes)
        state = QueueState.zeros(self.grid.num_nodes, sinks=self.grid.sink_ids())
        states, controls, flows = [], [], []
        for _ in range(steps):
            chi = control(state)
            new, flow = step_coupled(state, chi, self.grid, self.weights, params, node_params, streams,
                                     operator=self.operator)
            states.append(state)
            controls.append(chi)
            flows.append(flow)
            state = new
        return flows, controls, states

    def test_empty_history(self):
        node_params = fixed_params(np.full(9, 0.3), np.full(9, 2.0))
        diag = compensated_residuals([], GlobalParams(), node_params, [], [], self.grid, self.operator)
        self.assertEqual(diag.steps, 0)
        self.assertFalse(diag.arrival.any() or diag.departure.any() or diag.forwarded.any())

    def test_silent_history_is_exactly_zero(self):
        node_params = fixed_params(np.zeros(9), np.full(9, 2.0))
        params = GlobalParams()
        flows, controls, states = self.history(node_params, params, 20, lambda s: np.zeros(9))
        diag = compensated_residuals(flows, params, node_params, controls, states, self.grid, self.operator)
        self.assertEqual(diag.steps, 20)
        self.assertFalse(diag.arrival.any() or diag.departure.any() or diag.queue.any())

    def test_misaligned_history(self):
        node_params = fixed_params(np.zeros(9), np.full(9, 2.0))
        with self.assertRaises(ValueError):
            compensated_residuals([None], GlobalParams(), node_params, [], [], self.grid, self.operator)

    def test_arrival_residuals_centre_on_zero(self):
        grid = build_directed_grid(10, 10)
        operator = inflow_operator(grid, uniform_routing(grid))
        node_params = draw_node_params(RngStream(SEED), 100, ParamRanges())
        params = GlobalParams()
        streams = KeyedStreams(SEED, 100)
        state = QueueState.zeros(100, sinks=grid.sink_ids())
        states, controls, flows = [], [], []
        for _ in range(1000):
            chi = np.zeros(100)
            new, flow = step_coupled(state, chi, grid, uniform_routing(grid), params, node_params, streams,
                                     operator=operator)
            states.append(state)
            controls.append(chi)
            flows.append(flow)
            state = new
        diag = compensated_residuals(flows, params, node_params, controls, states, grid, operator)
        averaged, _ = diag.time_averaged()
        live = averaged[:99]
        stderr = live.std(ddof=1) / np.sqrt(live.size)
        self.assertLess(abs(live.mean()), 3 * stderr)
        self.assertEqual(diag.departure.tolist(), [0.0] * 100)
