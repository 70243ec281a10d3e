import numpy as np
import pytest

from conftest import make_graph, with_lct
from oracles import fd_loss_gradients
from mecsched import rng as rngmod
from mecsched.baselines import (
    DuelingNetwork,
    GreedyEftScheduler,
    HeftStyleScheduler,
    RandomScheduler,
    make_dueling_learner,
    upward_rank,
)
from mecsched.dqn_core import TrainConfig, loss_and_grads, select_action
from mecsched.experiment import TopologyConfig, build_chains, build_devices, build_topology
from mecsched.sim_engine import DecisionContext, ScriptedScheduler, run
from mecsched.mdp_agent import StateVector


def ctx_with_costs(costs, observation=None):
    return DecisionContext(
        now=0.0, app_id=1, task_id=1, workload=100.0, lct=1.0,
        observation=observation or StateVector(0, 0, 0, 0, 0),
        valid_actions=tuple(sorted(costs)),
        finish_if=lambda m: costs[m],
    )


class TestRandomScheduler:
    def test_uniform_over_devices(self):
        sched = RandomScheduler(4, np.random.default_rng(0))
        counts = np.zeros(5)
        n = 1_000_000
        ctx = ctx_with_costs({1: 0, 2: 0, 3: 0, 4: 0})
        for _ in range(n):
            counts[sched.decide(ctx)] += 1
        assert counts[0] == 0
        assert np.abs(counts[1:] / n - 0.25).max() < 0.005

    def test_single_device(self):
        sched = RandomScheduler(1, np.random.default_rng(1))
        assert sched.decide(ctx_with_costs({1: 0.0})) == 1

    def test_zero_devices_rejected(self):
        with pytest.raises(ValueError):
            RandomScheduler(0, np.random.default_rng(2))


class TestGreedyEft:
    def test_tie_goes_to_lowest_id(self):
        sched = GreedyEftScheduler()
        assert sched.decide(ctx_with_costs({1: 1.0, 2: 1.0, 3: 1.0, 4: 1.0})) == 1

    def test_picks_minimizer(self):
        sched = GreedyEftScheduler()
        assert sched.decide(ctx_with_costs({1: 3.0, 2: 0.5, 3: 1.0, 4: 2.0})) == 2

    def test_avoids_busy_device_in_simulation(self, topology):
        # two equal tasks, device 1 busy until t=10 -> both land on device 2
        graph = with_lct(make_graph({}, {1: 100.0, 2: 100.0}), topology)
        tc = TopologyConfig(n_devices=2)
        topo2 = build_topology(tc)
        devices = build_devices(tc)
        devices[0].queue_free_at = 10.0
        trace = run([graph], topo2, devices, GreedyEftScheduler(),
                    build_chains(tc, 0, "c", 0))
        assert set(trace.decisions.values()) == {2}

    def test_prefers_colocation_with_heavy_parent_data(self, topology):
        # child of a task on device 2 with huge edge data -> device 2 wins
        graph = with_lct(make_graph({(1, 2): 4000.0}, {1: 100.0, 2: 100.0}), topology)
        trace = run([graph], topology,
                    build_devices(TopologyConfig()),
                    _ForceThenGreedy({(1, 1): 2}),
                    build_chains(TopologyConfig(), 0, "c", 0))
        assert trace.decisions[(1, 2)] == 2


class _ForceThenGreedy(GreedyEftScheduler):
    """Pins listed decisions, greedy elsewhere; test helper."""

    def __init__(self, forced):
        self.forced = forced

    def decide(self, ctx):
        key = (ctx.app_id, ctx.task_id)
        if key in self.forced:
            return self.forced[key]
        return super().decide(ctx)


class TestHeftStyle:
    def test_upward_rank_decreases_along_paths(self, topology):
        graph = with_lct(make_graph({(1, 2): 10.0, (2, 3): 10.0},
                                    {1: 100.0, 2: 200.0, 3: 300.0}), topology)
        ranks = upward_rank(graph, 5000.0, 520.0)
        assert ranks[1] > ranks[2] > ranks[3] > ranks[4]

    def test_orders_ready_queue_by_descending_rank(self, topology):
        tc = TopologyConfig()
        sched = HeftStyleScheduler(topology, tc.capability_levels)
        graph = with_lct(make_graph({}, {1: 100.0, 2: 400.0}), topology)
        sched.on_app_arrival(graph)
        from mecsched.sim_engine import ReadyItem
        items = [ReadyItem(1, 1, 0.0, 100.0), ReadyItem(1, 2, 0.0, 400.0)]
        keys = [sched.ready_sort_key(it) for it in items]
        assert keys[1] < keys[0]  # heavier task has larger rank -> earlier

    def test_runs_end_to_end(self, topology):
        tc = TopologyConfig()
        rng = np.random.default_rng(3)
        from conftest import random_app
        graphs = [with_lct(random_app(rng, n, 6, release=0.1 * n), topology)
                  for n in (1, 2)]
        sched = HeftStyleScheduler(topology, tc.capability_levels)
        trace = run(graphs, topology, build_devices(tc), sched,
                    build_chains(tc, 4, "c", 0))
        assert len(trace.app_makespans) == 2


class TestDuelingNetwork:
    def test_equal_advantages_reduce_to_value(self):
        net = DuelingNetwork([5, 8, 4], rng=np.random.default_rng(5))
        net.adv_w[:] = 0.0
        net.adv_b[:] = 2.0  # constant advantage across actions
        q = net.forward(np.ones(5))
        assert np.allclose(q, q[0])
        mask = np.array([False, True, True, True])
        assert select_action(q, mask, 0.0, None) == 1

    def test_hand_built_aggregation(self):
        net = DuelingNetwork([2, 2, 2], hidden_activation="linear",
                             rng=np.random.default_rng(6))
        net.trunk_weights[0][:] = np.eye(2)
        net.trunk_biases[0][:] = 0.0
        net.value_w[:] = np.array([[1.0], [0.0]])
        net.value_b[:] = 0.5
        net.adv_w[:] = np.array([[1.0, -1.0], [0.0, 0.0]])
        net.adv_b[:] = 0.0
        q = net.forward(np.array([2.0, 7.0]))
        # V = 2.5, A = (2, -2), mean A = 0 -> Q = (4.5, 0.5)
        assert np.allclose(q, [4.5, 0.5])

    def test_gradients_match_finite_differences(self):
        net = DuelingNetwork([4, 6, 3], rng=np.random.default_rng(7))
        r = np.random.default_rng(8)
        states = r.normal(size=(5, 4))
        actions = r.integers(0, 3, size=5)
        targets = r.normal(size=5)
        _, grads = loss_and_grads(net, states, actions, targets)
        fd = fd_loss_gradients(net, states, actions, targets)
        for g, pairs in zip(grads, fd):
            flat = g.ravel()
            for idx, fd_val in pairs:
                denom = max(abs(fd_val), abs(flat[idx]), 1e-8)
                assert abs(flat[idx] - fd_val) / denom < 1e-4

    def test_learner_trains_in_simulation(self, topology):
        config = TrainConfig(batch=16, buffer_capacity=2000, planned_steps=500,
                             hidden_sizes=(8, 8), episodes=2)
        learner = make_dueling_learner(config, 5, rngmod.stream(0, "w"),
                                       rngmod.stream(0, "e"), rngmod.stream(0, "r"))
        from conftest import random_app
        from mecsched.mdp_agent import DqnScheduler
        tc = TopologyConfig()
        rng = np.random.default_rng(9)
        sched = DqnScheduler(learner, 4, training=True)
        for episode in range(2):
            graphs = [with_lct(random_app(rng, n, 6, release=0.05 * n), topology)
                      for n in (1, 2, 3)]
            run(graphs, topology, build_devices(tc), sched,
                build_chains(tc, episode, "c", 0))
        assert learner.last_loss is not None
        assert np.isfinite(learner.last_loss)
