import numpy as np
from django.test import SimpleTestCase

from backpressure.dynamics import GlobalParams, QueueState
from backpressure.oracles import random_instance
from backpressure.schedulers import (
    SchedulerError, SchedulerKind, backpressure_weight, backpressure_weights, best_response,
    best_response_schedule, best_response_utility, brute_force_schedule, cooperative_objective,
    cooperative_schedule, meanfield_control, meanfield_controls, schedule,
)
from backpressure.stochastic import NodeParams, ParamRanges, RngStream, draw_node_params
from backpressure.topology import build_directed_grid, uniform_routing


def two_node_case(q, m0=2.0, alpha=0.0):
    grid = build_directed_grid(1, 2)
    node_params = NodeParams(lam=np.zeros(2), m=np.array([m0, m0]))
    return grid, uniform_routing(grid), QueueState(q=np.asarray(q, dtype=float)), node_params, GlobalParams(alpha=alpha)


class BackpressureWeightTests(SimpleTestCase):
    def test_single_edge(self):
        grid, weights, state, node_params, params = two_node_case([4.0, 0.0])
        self.assertEqual(backpressure_weight(0, state, grid, weights, node_params, params), 8.0)
        self.assertEqual(backpressure_weights(state.q, grid, weights, node_params, params).tolist(), [8.0, 0.0])

    def test_equal_queues_give_zero(self):
        grid = build_directed_grid(3, 3)
        node_params = draw_node_params(RngStream(1), 9, ParamRanges())
        q = np.full(9, 6.0)
        bp = backpressure_weights(q, grid, uniform_routing(grid), node_params, GlobalParams())
        self.assertEqual(bp.tolist(), [0.0] * 9)

    def test_lower_than_neighbours_is_negative(self):
        grid = build_directed_grid(2, 2)
        node_params = draw_node_params(RngStream(1), 4, ParamRanges())
        state = QueueState(q=np.array([1.0, 5.0, 5.0, 0.0]))
        self.assertLess(backpressure_weight(0, state, grid, uniform_routing(grid), node_params, GlobalParams()), 0.0)

    def test_vector_matches_scalar(self):
        rng = np.random.default_rng(5)
        grid = build_directed_grid(6, 7)
        weights = uniform_routing(grid)
        node_params = draw_node_params(RngStream(2), grid.num_nodes, ParamRanges())
        params = GlobalParams()
        q = rng.uniform(0, 50, grid.num_nodes)
        q[41] = 0.0
        bp = backpressure_weights(q, grid, weights, node_params, params)
        state = QueueState(q=q)
        for i in range(41):
            self.assertAlmostEqual(bp[i], backpressure_weight(i, state, grid, weights, node_params, params), places=9)

    def test_sink_has_no_weight(self):
        grid, weights, state, node_params, params = two_node_case([4.0, 0.0])
        with self.assertRaises(SchedulerError):
            backpressure_weight(1, state, grid, weights, node_params, params)


class CooperativeScheduleTests(SimpleTestCase):
    def test_all_queues_equal(self):
        grid = build_directed_grid(4, 4)
        node_params = draw_node_params(RngStream(3), 16, ParamRanges())
        chi = cooperative_schedule(QueueState(q=np.full(16, 9.0)), grid, uniform_routing(grid),
                                   node_params, GlobalParams())
        self.assertEqual(chi.tolist(), [0] * 16)

    def test_positive_weight_transmits(self):
        grid, weights, state, node_params, params = two_node_case([4.0, 0.0])
        self.assertEqual(cooperative_schedule(state, grid, weights, node_params, params).tolist(), [1, 0])

    def test_matches_exhaustive_search(self):
        rng = np.random.default_rng(2024)
        params = GlobalParams()
        for _ in range(100):
            topology, weights, state, node_params = random_instance(rng)
            bp = backpressure_weights(state.q, topology, weights, node_params, params)
            chi = cooperative_schedule(state, topology, weights, node_params, params)
            best, best_chi = brute_force_schedule(bp, topology.sink_mask())
            value = cooperative_objective(chi, bp)
            self.assertLessEqual(abs(value - best), 1e-9 * max(1.0, abs(best)))
            self.assertTrue(np.array_equal(chi, best_chi))

    def test_tie_break_flip_breaks_oracle(self):
        rng = np.random.default_rng(1)
        topology, weights, state, node_params = random_instance(rng, equal_queues=True)
        params = GlobalParams()
        bp = backpressure_weights(state.q, topology, weights, node_params, params)
        _, best_chi = brute_force_schedule(bp, topology.sink_mask())
        flipped = cooperative_schedule(state, topology, weights, node_params, params, transmit_on_tie=True)
        self.assertFalse(np.array_equal(flipped, best_chi))

    def test_scaling_invariance_without_congestion(self):
        rng = np.random.default_rng(9)
        params = GlobalParams(alpha=0.0)
        for _ in range(20):
            topology, weights, state, node_params = random_instance(rng)
            scale = float(rng.choice([0.25, 0.5, 2.0, 8.0]))
            scaled_state = QueueState(q=state.q * scale)
            scaled_params = NodeParams(lam=node_params.lam, m=node_params.m * scale)
            self.assertTrue(np.array_equal(
                cooperative_schedule(state, topology, weights, node_params, params),
                cooperative_schedule(scaled_state, topology, weights, scaled_params, params),
            ))

    def test_brute_force_refuses_large_instances(self):
        with self.assertRaises(SchedulerError):
            brute_force_schedule(np.ones(30), np.zeros(30, dtype=bool))


class BestResponseTests(SimpleTestCase):
    def test_sign_decides(self):
        grid, weights, state, node_params, params = two_node_case([4.0, 0.0])
        self.assertEqual(best_response(0, state, grid, weights, node_params, params, [0, 0]), 1)
        grid, weights, state, node_params, params = two_node_case([0.0, 0.0])
        self.assertEqual(best_response(0, state, grid, weights, node_params, params, [1, 0]), 0)

    def test_negative_weight_stays_idle(self):
        grid = build_directed_grid(2, 2)
        node_params = draw_node_params(RngStream(1), 4, ParamRanges())
        state = QueueState(q=np.array([1.0, 5.0, 5.0, 0.0]))
        self.assertEqual(best_response(0, state, grid, uniform_routing(grid), node_params, GlobalParams(),
                                       np.ones(4)), 0)

    def test_independent_of_others(self):
        rng = np.random.default_rng(77)
        params = GlobalParams()
        for _ in range(20):
            topology, weights, state, node_params = random_instance(rng)
            for i in np.flatnonzero(~topology.sink_mask()):
                responses = set()
                for _ in range(10):
                    others = rng.integers(0, 2, topology.num_nodes)
                    responses.add(best_response(i, state, topology, weights, node_params, params, others))
                    for chi_i in (0, 1):
                        self.assertEqual(
                            best_response_utility(i, chi_i, state, topology, weights, node_params, params, others),
                            best_response_utility(i, chi_i, state, topology, weights, node_params, params,
                                                  np.zeros(topology.num_nodes)),
                        )
                self.assertEqual(len(responses), 1)

    def test_schedule_matches_cooperative(self):
        rng = np.random.default_rng(8)
        params = GlobalParams()
        for _ in range(20):
            topology, weights, state, node_params = random_instance(rng)
            self.assertTrue(np.array_equal(
                best_response_schedule(state, topology, weights, node_params, params),
                cooperative_schedule(state, topology, weights, node_params, params),
            ))


class MeanFieldControlTests(SimpleTestCase):
    def test_strict_threshold(self):
        self.assertEqual(meanfield_control(5.0, 3.0), 1)
        self.assertEqual(meanfield_control(3.0, 3.0), 0)
        self.assertEqual(meanfield_control(0.0, 0.0), 0)

    def test_monotone(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            q, qbar, bump = rng.uniform(0, 10, 3)
            self.assertGreaterEqual(meanfield_control(q + bump, qbar), meanfield_control(q, qbar))
            self.assertLessEqual(meanfield_control(q, qbar + bump), meanfield_control(q, qbar))

    def test_vectorised(self):
        self.assertEqual(meanfield_controls([1.0, 3.0, 5.0], [3.0, 3.0, 3.0]).tolist(), [0, 0, 1])


class DispatchTests(SimpleTestCase):
    def test_sinks_never_transmit(self):
        grid = build_directed_grid(3, 3)
        weights = uniform_routing(grid)
        node_params = draw_node_params(RngStream(6), 9, ParamRanges())
        state = QueueState(q=np.linspace(20, 0, 9))
        for kind in ('coop', 'br', 'on', 'off'):
            chi = schedule(kind, state, grid, weights, node_params, GlobalParams())
            self.assertEqual(chi[8], 0, kind)
        self.assertEqual(schedule(SchedulerKind.ALWAYS_ON, state, grid, weights, node_params,
                                  GlobalParams()).tolist(), [1] * 8 + [0])
        self.assertEqual(schedule(SchedulerKind.ALWAYS_OFF, state, grid, weights, node_params,
                                  GlobalParams()).tolist(), [0] * 9)

    def test_meanfield_scheduler_needs_ensemble(self):
        grid = build_directed_grid(1, 2)
        with self.assertRaises(SchedulerError):
            schedule('mft', QueueState(q=np.zeros(2)), grid, uniform_routing(grid),
                     NodeParams(lam=np.zeros(2), m=np.ones(2)), GlobalParams())
