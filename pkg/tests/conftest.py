from __future__ import annotations

import numpy as np
import pytest

from mecsched.experiment import ExperimentConfig, TopologyConfig, build_topology
from mecsched.task_graph import Edge, Task, TaskGraph, augment_with_dummies, compute_lct


@pytest.fixture
def topo_config() -> TopologyConfig:
    return TopologyConfig()


@pytest.fixture
def topology(topo_config):
    return build_topology(topo_config)


@pytest.fixture
def default_config() -> ExperimentConfig:
    return ExperimentConfig()


def make_graph(edges, workloads, app_id=1, release=0.0, deadline=10.0, home=1,
               dummy_data=10.0):
    """Small-graph builder: real tasks 1..K, dummies and deadline attached.

    ``edges`` maps (src, dst) -> megabits between real tasks; ``workloads``
    maps real task id -> MI.
    """
    tasks = tuple(Task(app_id, i, float(workloads[i])) for i in sorted(workloads))
    raw = TaskGraph(
        app_id=app_id,
        release_time=release,
        deadline=deadline,
        home_ecd=home,
        tasks=tasks,
        edges=tuple(Edge(s, d, float(v)) for (s, d), v in sorted(edges.items())),
    )
    entries = [i for i in sorted(workloads) if not raw.parents_of(i)]
    exits = [i for i in sorted(workloads) if not raw.children_of(i)]
    return augment_with_dummies(
        raw,
        offload_sizes=[dummy_data] * len(entries),
        result_sizes=[dummy_data] * len(exits),
    )


def make_chain_graph(workloads, app_id=1, release=0.0, deadline=10.0, home=1,
                     edge_data=0.0, dummy_data=0.0):
    """Linear chain of real tasks with uniform edge sizes."""
    n = len(workloads)
    loads = {i + 1: w for i, w in enumerate(workloads)}
    edges = {(i, i + 1): edge_data for i in range(1, n)}
    return make_graph(edges, loads, app_id=app_id, release=release,
                      deadline=deadline, home=home, dummy_data=dummy_data)


def random_app(rng: np.random.Generator, app_id: int, n_real: int,
               release: float = 0.0) -> TaskGraph:
    """Random DAG with positive workloads and random transfer sizes."""
    workloads = {i: float(rng.uniform(50.0, 500.0)) for i in range(1, n_real + 1)}
    edges = {}
    for i in range(2, n_real + 1):
        if rng.random() < 0.75:
            k = int(rng.integers(1, min(i - 1, 3) + 1))
            for p in rng.choice(np.arange(1, i), size=k, replace=False):
                edges[(int(p), i)] = float(rng.uniform(0.0, 200.0))
    graph = make_graph(
        edges, workloads, app_id=app_id, release=release,
        deadline=release + float(rng.uniform(1.0, 20.0)),
        home=1, dummy_data=float(rng.uniform(0.0, 100.0)),
    )
    return graph


def with_lct(graph: TaskGraph, topo, max_capability=6000.0) -> TaskGraph:
    return compute_lct(graph, max_capability=max_capability,
                       max_rate=topo.max_rate, uplink_rate=topo.uplink_rate)
