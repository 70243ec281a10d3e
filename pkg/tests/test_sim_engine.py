import itertools

import numpy as np
import pytest

from conftest import make_chain_graph, make_graph, random_app, with_lct
from oracles import evaluate_schedule
from mecsched import rng as rngmod
from mecsched.experiment import TopologyConfig, build_chains, build_devices, build_topology
from mecsched.mec_model import CapabilityChain, EdgeDevice, NetworkTopology
from mecsched.sim_engine import (
    DeadlockError,
    ReadyItem,
    SchedulerPort,
    SchedulingError,
    ScriptedScheduler,
    SimulationTrace,
    collect_ready,
    observe_state,
    run,
)
from mecsched.task_graph import compute_lct


def identity_chains(n, levels=1):
    return [CapabilityChain(np.eye(levels), np.random.default_rng(m))
            for m in range(n)]


def simple_devices(mips_list):
    return [EdgeDevice(m + 1, (mips,)) for m, mips in enumerate(mips_list)]


class TestCollectReady:
    def test_blocked_head_stays(self, topology):
        graph = with_lct(make_chain_graph([100.0, 200.0]), topology)
        lists = {1: [1, 2]}
        ready = collect_ready(lists, {(1, 0)}, {1: graph})
        assert [r.task_id for r in ready] == [1]
        assert lists[1] == [2]  # child blocked until task 1 completes

    def test_diamond_pops_both_branches(self, topology):
        edges = {(1, 2): 1.0, (1, 3): 1.0, (2, 4): 1.0, (3, 4): 1.0}
        loads = {1: 100.0, 2: 200.0, 3: 300.0, 4: 100.0}
        graph = with_lct(make_graph(edges, loads), topology)
        lists = {1: [2, 3, 4]}  # task 1 already dispatched and completed
        ready = collect_ready(lists, {(1, 0), (1, 1)}, {1: graph})
        ids = [r.task_id for r in ready]
        assert set(ids) == {2, 3}
        assert lists[1] == [4]
        lcts = [r.lct for r in ready]
        assert lcts == sorted(lcts)

    def test_everything_consumed_gives_empty(self, topology):
        graph = with_lct(make_chain_graph([100.0]), topology)
        assert collect_ready({1: []}, {(1, 0)}, {1: graph}) == []

    def test_merge_across_apps_orders_by_lct(self, topology):
        # shorter deadline -> smaller lct -> first in the merged queue
        g1 = with_lct(make_chain_graph([100.0], app_id=1, deadline=20.0), topology)
        g2 = with_lct(make_chain_graph([100.0], app_id=2, deadline=5.0), topology)
        ready = collect_ready({1: [1], 2: [1]}, {(1, 0), (2, 0)}, {1: g1, 2: g2})
        assert [(r.app_id, r.task_id) for r in ready] == [(2, 1), (1, 1)]


class TestObserveState:
    def test_capability_sum(self, topology):
        devices = simple_devices([6000.0] * 4)
        s = observe_state(0.0, topology, devices, [])
        assert s.sum_capability == pytest.approx(24000.0)

    def test_idle_system_zero_workloads(self, topology):
        s = observe_state(0.0, topology, simple_devices([6000.0] * 4), [])
        assert s.ready_workload == 0.0
        assert s.queued_workload == 0.0

    def test_full_mesh_rate_sum(self, topology):
        s = observe_state(0.0, topology, simple_devices([6000.0] * 4), [])
        assert s.sum_inter_rate == pytest.approx(12 * 440.0)
        assert s.uplink_rate == pytest.approx(1000.0)

    def test_workload_accounting(self, topology):
        devices = simple_devices([6000.0] * 4)
        devices[1].queue.append((1, 3, 400.0))
        devices[2].queue.append((1, 4, 100.0))
        ready = [ReadyItem(1, 5, 1.0, 250.0)]
        s = observe_state(0.0, topology, devices, ready)
        assert s.queued_workload == pytest.approx(500.0)
        assert s.ready_workload == pytest.approx(250.0)


class TestRun:
    def test_minimal_run_three_assignments(self, topology):
        graph = with_lct(make_graph({}, {1: 100.0}), topology)
        trace = run([graph], topology, simple_devices([5000.0]),
                    ScriptedScheduler({(1, 1): 1}), identity_chains(1))
        assert set(trace.assignments) == {(1, 0), (1, 1), (1, 2)}
        assert 1 in trace.app_makespans

    def test_two_apps_same_release_merge_ready(self, topology):
        g1 = with_lct(make_chain_graph([100.0], app_id=1, deadline=9.0), topology)
        g2 = with_lct(make_chain_graph([100.0], app_id=2, deadline=8.0), topology)
        trace = run([g1, g2], topology, simple_devices([5000.0, 5000.0]),
                    ScriptedScheduler({(1, 1): 1, (2, 1): 2}), identity_chains(2))
        assert len(trace.app_makespans) == 2

    def test_fcfs_starts_follow_enqueue_order(self, topology):
        rng = np.random.default_rng(11)
        graphs = [with_lct(random_app(rng, n, 6, release=0.1 * n), topology)
                  for n in (1, 2)]
        decisions = {(g.app_id, t.task_id): 1 for g in graphs for t in g.real_tasks()}
        trace = run(graphs, topology, simple_devices([5000.0]),
                    ScriptedScheduler(decisions), identity_chains(1))
        ordered = sorted(
            (a for key, a in trace.assignments.items() if a.ecd_id == 1),
            key=lambda a: a.start,
        )
        for earlier, later in zip(ordered, ordered[1:]):
            assert earlier.finish <= later.start + 1e-12

    def test_every_real_task_assigned_once(self, topology):
        rng = np.random.default_rng(12)
        graphs = [with_lct(random_app(rng, n, int(rng.integers(1, 8)), release=0.05 * n),
                           topology) for n in (1, 2, 3)]
        decisions = {(g.app_id, t.task_id): int(rng.integers(1, 5))
                     for g in graphs for t in g.real_tasks()}
        tc = TopologyConfig()
        trace = run(graphs, topology, build_devices(tc), ScriptedScheduler(decisions),
                    build_chains(tc, 5, "cap", 0))
        for g in graphs:
            for t in g.real_tasks():
                assert (g.app_id, t.task_id) in trace.assignments
        assert len(trace.decisions) == sum(len(g.real_tasks()) for g in graphs)

    def test_invalid_device_rejected(self, topology):
        graph = with_lct(make_graph({}, {1: 100.0}), topology)

        class Bad(SchedulerPort):
            def decide(self, ctx):
                return 0

        with pytest.raises(SchedulingError):
            run([graph], topology, simple_devices([5000.0]), Bad(), identity_chains(1))

    def test_same_seed_identical_traces(self, topology):
        rng = np.random.default_rng(13)
        graphs = [with_lct(random_app(rng, n, 5, release=0.02 * n), topology)
                  for n in (1, 2)]
        tc = TopologyConfig()

        def one(seed):
            from mecsched.baselines import RandomScheduler
            sched = RandomScheduler(4, rngmod.stream(seed, "p"))
            return run(graphs, topology, build_devices(tc), sched,
                       build_chains(tc, seed, "cap", 0))

        a, b = one(9), one(9)
        assert a.rows == b.rows
        assert a.app_makespans == b.app_makespans

    def test_replay_reproduces_finish_times(self, topology):
        rng = np.random.default_rng(14)
        graphs = [with_lct(random_app(rng, n, 6, release=0.03 * n), topology)
                  for n in (1, 2)]
        tc = TopologyConfig()
        from mecsched.baselines import RandomScheduler
        first = run(graphs, topology, build_devices(tc),
                    RandomScheduler(4, rngmod.stream(21, "p")),
                    build_chains(tc, 21, "cap", 0))
        second = run(graphs, topology, build_devices(tc),
                     ScriptedScheduler(first.decisions), build_chains(tc, 21, "cap", 0))
        assert first.assignments == second.assignments

    def test_dependency_gap_detected_as_deadlock(self, topology):
        # a priority list referencing a never-completing parent cannot drain
        graph = with_lct(make_chain_graph([100.0, 200.0]), topology)
        lists_probe = {1: [2]}  # head depends on task 1 which never runs
        ready = collect_ready(lists_probe, {(1, 0)}, {1: graph})
        assert ready == []

    def test_degenerate_app_without_real_tasks(self, topology):
        from mecsched.task_graph import Edge, Task, TaskGraph
        graph = TaskGraph(1, 1.0, 2.0, 1, (Task(1, 0, 0.0), Task(1, 1, 0.0)),
                          (Edge(0, 1, 0.0),))
        graph = compute_lct(graph, 6000.0, topology.max_rate, topology.uplink_rate)
        trace = run([graph], topology, simple_devices([5000.0]),
                    ScriptedScheduler({}), identity_chains(1))
        assert trace.app_makespans[1] == pytest.approx(0.0)

    def test_trace_csv_round_layout(self, topology, tmp_path):
        graph = with_lct(make_graph({}, {1: 100.0}), topology)
        trace = run([graph], topology, simple_devices([5000.0]),
                    ScriptedScheduler({(1, 1): 1}), identity_chains(1))
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("time,event,app,task,device")
        assert len(lines) == len(trace.rows) + 1


class TestStartTimeBounds:
    def test_no_start_before_parent_data_arrives(self, topology):
        from mecsched.baselines import RandomScheduler
        from mecsched.mec_model import transfer_time
        from mecsched.task_graph import Edge

        rng = np.random.default_rng(31)
        tc = TopologyConfig()
        graphs = [with_lct(random_app(rng, n, int(rng.integers(2, 8)),
                                      release=0.05 * n), topology)
                  for n in (1, 2, 3)]
        trace = run(graphs, topology, build_devices(tc),
                    RandomScheduler(4, rngmod.stream(33, "p")),
                    build_chains(tc, 33, "cap", 0))
        for g in graphs:
            for t in g.real_tasks():
                a = trace.assignments[(g.app_id, t.task_id)]
                for p in g.parents_of(t.task_id):
                    pa = trace.assignments[(g.app_id, p)]
                    hop = transfer_time(Edge(p, t.task_id, g.edge_data(p, t.task_id)),
                                        pa.ecd_id, a.ecd_id, topology, g.home_ecd)
                    assert a.start >= pa.finish + hop - 1e-12

    def test_untrained_agent_never_picks_masked_action(self, topology):
        from mecsched.dqn_core import DqnLearner, TrainConfig
        from mecsched.mdp_agent import DqnScheduler

        rng = np.random.default_rng(34)
        tc = TopologyConfig()
        graphs = [with_lct(random_app(rng, n, 6, release=0.02 * n), topology)
                  for n in (1, 2)]
        config = TrainConfig(batch=8, buffer_capacity=512, planned_steps=100,
                             hidden_sizes=(8, 8), episodes=1)
        learner = DqnLearner(config, 5, rngmod.stream(35, "w"),
                             rngmod.stream(35, "e"), rngmod.stream(35, "r"))
        sched = DqnScheduler(learner, 4, training=True)
        trace = run(graphs, topology, build_devices(tc), sched,
                    build_chains(tc, 35, "cap", 0))
        assert 0 not in set(trace.decisions.values())
        assert set(trace.decisions.values()) <= {1, 2, 3, 4}


class TestOracleAgreement:
    def test_multi_app_interleaving_matches_direct_evaluation(self, topology):
        rng = np.random.default_rng(77)
        for trial in range(15):
            n_dev = 2
            graphs = [
                with_lct(random_app(rng, n, int(rng.integers(2, 6)),
                                    release=float(rng.uniform(0.0, 0.3))), topology)
                for n in (1, 2, 3)
            ]
            assignment = {
                (g.app_id, t.task_id): int(rng.integers(1, n_dev + 1))
                for g in graphs for t in g.real_tasks()
            }
            matrix = np.full((n_dev, n_dev), 440.0)
            np.fill_diagonal(matrix, 0.0)
            topo2 = NetworkTopology(matrix, 1000.0)
            rates = {(a, b): 440.0 for a in (1, 2) for b in (1, 2) if a != b}
            devices = simple_devices([6000.0, 4500.0])
            trace = run(graphs, topo2, devices, ScriptedScheduler(assignment),
                        identity_chains(n_dev), record_rows=False)
            finish, makespans = evaluate_schedule(
                graphs, assignment, rates, 1000.0, {1: [6000.0], 2: [4500.0]})
            for key, a in trace.assignments.items():
                assert finish[key] == pytest.approx(a.finish, abs=1e-9)
            for app_id, mk in makespans.items():
                assert mk == pytest.approx(trace.app_makespans[app_id], abs=1e-9)

    def test_simulator_matches_direct_evaluation(self, topology):
        rng = np.random.default_rng(42)
        tc = TopologyConfig()
        for trial in range(8):
            n_real = int(rng.integers(2, 6))
            graphs = [with_lct(random_app(rng, 1, n_real,
                                          release=float(rng.uniform(0, 0.5))), topology)]
            n_dev = 2
            real_tasks = [t.task_id for t in graphs[0].real_tasks()]
            rates = {(a, b): 440.0 for a in range(1, n_dev + 1)
                     for b in range(1, n_dev + 1) if a != b}
            for combo in itertools.product(range(1, n_dev + 1), repeat=len(real_tasks)):
                assignment = dict(zip(((1, t) for t in real_tasks), combo))
                matrix = np.full((n_dev, n_dev), 440.0)
                np.fill_diagonal(matrix, 0.0)
                topo2 = NetworkTopology(matrix, 1000.0)
                devices = simple_devices([6000.0, 4000.0][:n_dev])
                trace = run(graphs, topo2, devices, ScriptedScheduler(assignment),
                            identity_chains(n_dev))
                finish, makespans = evaluate_schedule(
                    graphs, assignment, rates, 1000.0,
                    {1: [6000.0], 2: [4000.0]},
                )
                for key, a in trace.assignments.items():
                    assert finish[key] == pytest.approx(a.finish, abs=1e-9)
                assert makespans[1] == pytest.approx(trace.app_makespans[1], abs=1e-9)
