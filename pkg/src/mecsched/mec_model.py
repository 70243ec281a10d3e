"""Edge device fleet: capability Markov chains, FCFS queues, timing rules.

Devices are indexed 1..M; index 0 is the fictitious device standing in for
the mobile user, which hosts only the two dummy tasks. Each device has a
single processing element serving its queue FCFS, and a capability (MIPS)
that walks a Markov chain over discrete levels, stepping when the device
completes a task.

Timing rules, all in seconds:
  execution      workload / capability (0 for dummies)
  transfer       0 on the same device; data/uplink for home-device uploads
                 and downloads; data/uplink + data/inter_rate when the
                 upload/download is relayed through the home device;
                 data/inter_rate between two real devices
  completion     max(device free time, latest input arrival, now) + execution
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .task_graph import Edge, Task, TaskGraph

__all__ = [
    "EdgeDevice",
    "CapabilityChain",
    "NetworkTopology",
    "Assignment",
    "execution_time",
    "transfer_time",
    "completion_time",
    "makespan",
    "transition_capability",
]

MU_DEVICE = 0  # pseudo-device hosting dummy tasks


@dataclass
class EdgeDevice:
    """One edge device: a single FCFS processing element."""

    ecd_id: int
    capability_levels: tuple[float, ...]  # MIPS, level 0 first
    current_level: int = 0
    queue_free_at: float = 0.0
    queue: list[tuple[int, int, float]] = field(default_factory=list)  # (app, task, MI)

    def __post_init__(self) -> None:
        if self.ecd_id < 1:
            raise ValueError("real devices are numbered from 1")
        if not self.capability_levels or min(self.capability_levels) <= 0:
            raise ValueError("capability levels must be positive")
        if not 0 <= self.current_level < len(self.capability_levels):
            raise ValueError("current_level out of range")

    @property
    def capability(self) -> float:
        return self.capability_levels[self.current_level]

    def queued_workload(self) -> float:
        return sum(w for _, _, w in self.queue)


class CapabilityChain:
    """Markov chain over capability levels, sampled from a private stream."""

    def __init__(self, transition_matrix, rng: np.random.Generator):
        matrix = np.asarray(transition_matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("transition matrix must be square")
        if (matrix < 0).any():
            raise ValueError("transition probabilities must be non-negative")
        rowsum = matrix.sum(axis=1)
        if np.abs(rowsum - 1.0).max() > 1e-12:
            raise ValueError("transition matrix rows must sum to 1")
        self.transition_matrix = matrix
        self.rng = rng

    def sample_next(self, level: int) -> int:
        row = self.transition_matrix[level]
        return int(self.rng.choice(len(row), p=row))


def transition_capability(device: EdgeDevice, chain: CapabilityChain) -> int:
    """Step the device's capability level; affects only later starts."""
    device.current_level = chain.sample_next(device.current_level)
    return device.current_level


@dataclass(frozen=True)
class NetworkTopology:
    """Transmission rates of the fleet, Mbps.

    ``inter_ecd_rate[m-1, mp-1]`` is the directed rate between real devices
    m and m'; the diagonal is unused. ``uplink_rate`` connects each mobile
    user to its home device.
    """

    inter_ecd_rate: np.ndarray
    uplink_rate: float

    def __post_init__(self) -> None:
        matrix = np.asarray(self.inter_ecd_rate, dtype=float)
        object.__setattr__(self, "inter_ecd_rate", matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("inter_ecd_rate must be square")
        off = ~np.eye(matrix.shape[0], dtype=bool)
        if matrix.shape[0] > 1 and (matrix[off] <= 0).any():
            raise ValueError("all inter-device rates must be positive")
        if self.uplink_rate <= 0:
            raise ValueError("uplink rate must be positive")

    @property
    def n_devices(self) -> int:
        return self.inter_ecd_rate.shape[0]

    def rate(self, m: int, mp: int) -> float:
        if m == mp or not (1 <= m <= self.n_devices and 1 <= mp <= self.n_devices):
            raise KeyError(f"no link rate for device pair ({m}, {mp})")
        return float(self.inter_ecd_rate[m - 1, mp - 1])

    @property
    def sum_rate(self) -> float:
        """Sum over ordered pairs m != m' of the full mesh."""
        off = ~np.eye(self.n_devices, dtype=bool)
        return float(self.inter_ecd_rate[off].sum())

    @property
    def max_rate(self) -> float:
        """Fastest link in the system, uplink included."""
        if self.n_devices < 2:
            return float(self.uplink_rate)
        off = ~np.eye(self.n_devices, dtype=bool)
        return float(max(self.inter_ecd_rate[off].max(), self.uplink_rate))


@dataclass(frozen=True)
class Assignment:
    app_id: int
    task_id: int
    ecd_id: int  # 0 only for dummies
    start: float
    finish: float

    def __post_init__(self) -> None:
        if self.finish < self.start:
            raise ValueError("finish before start")


def execution_time(task: Task, device: EdgeDevice | None) -> float:
    if task.workload == 0:
        return 0.0
    if device is None:
        raise ValueError("real task requires a device")
    return task.workload / device.capability


def transfer_time(
    edge: Edge,
    src_ecd: int,
    dst_ecd: int,
    topo: NetworkTopology,
    home_ecd: int,
) -> float:
    """Data transfer delay for one edge given both endpoint devices."""
    if src_ecd == dst_ecd:
        return 0.0
    data = edge.data_size
    if src_ecd == MU_DEVICE:  # upload from the mobile user
        if dst_ecd == home_ecd:
            return data / topo.uplink_rate
        return data / topo.uplink_rate + data / topo.rate(home_ecd, dst_ecd)
    if dst_ecd == MU_DEVICE:  # result download to the mobile user
        if src_ecd == home_ecd:
            return data / topo.uplink_rate
        return data / topo.uplink_rate + data / topo.rate(src_ecd, home_ecd)
    return data / topo.rate(src_ecd, dst_ecd)


def completion_time(
    task: Task,
    target: EdgeDevice,
    parent_arrivals: Sequence[float],
    now: float,
) -> Assignment:
    """Commit a real task to a device and derive its start/finish."""
    if not parent_arrivals:
        raise ValueError(f"task {task.task_id} has no resolved parent arrivals")
    start = max(target.queue_free_at, max(parent_arrivals), now)
    finish = start + execution_time(task, target)
    return Assignment(task.app_id, task.task_id, target.ecd_id, start, finish)


def makespan(app: TaskGraph, sink_assignment: Assignment) -> float:
    if sink_assignment.app_id != app.app_id or sink_assignment.task_id != app.sink_id:
        raise ValueError("assignment does not describe this application's sink")
    return sink_assignment.finish - app.release_time
