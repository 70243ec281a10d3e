"""MDP layer between the simulator and a value learner.

Each scheduling decision is one MDP step: the agent observes a five-component
summary of the system, picks a target device for the ready task at hand, and
one step later receives the reward for that pick. The reward trades off a
log-workload utility against a normalized delay term and a normalized
lateness penalty relative to the task's latest completion time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "StateVector",
    "StateNorms",
    "RewardParams",
    "MdpTransition",
    "ActionSpace",
    "compute_reward",
    "normalize_state",
    "DqnScheduler",
]


@dataclass(frozen=True)
class StateVector:
    """(sum of inter-device rates, uplink rate, sum of capabilities,
    ready-queue workload, device-queue workload)."""

    sum_inter_rate: float  # Mbps
    uplink_rate: float  # Mbps
    sum_capability: float  # MIPS
    ready_workload: float  # MI
    queued_workload: float  # MI

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.sum_inter_rate,
                self.uplink_rate,
                self.sum_capability,
                self.ready_workload,
                self.queued_workload,
            ],
            dtype=float,
        )


@dataclass(frozen=True)
class StateNorms:
    """Per-component scales applied before feeding the network."""

    rate: float = 1000.0  # Mbps
    capability: float = 24000.0  # MIPS
    workload: float = 10000.0  # MI

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.rate, self.rate, self.capability, self.workload, self.workload],
            dtype=float,
        )


def normalize_state(raw: StateVector, norms: StateNorms) -> np.ndarray:
    scales = norms.as_array()
    if (scales <= 0).any():
        raise ValueError("normalization scales must be positive")
    return raw.as_array() / scales


@dataclass(frozen=True)
class RewardParams:
    beta: float = 0.6  # utility weight
    psi: float = 5.0  # duration weight
    eta: float = 40.0  # lateness weight
    clamp_early: bool = False  # if True, early finishes earn no bonus


def compute_reward(
    workload: float,
    lct: float,
    max_arrival: float,
    queue_delay: float,
    exec_time: float,
    finish: float,
    params: RewardParams,
) -> float:
    """Utility minus duration minus lateness, all per unit workload.

    Lateness keeps its sign by default, so finishing ahead of the latest
    completion time yields a bonus; ``clamp_early`` floors it at zero.
    """
    if workload <= 0:
        raise ValueError("reward is undefined for zero-workload (dummy) tasks")
    utility = params.beta * math.log2(workload)
    duration = params.psi * (max_arrival + queue_delay + exec_time) / workload
    lateness = finish - lct
    if params.clamp_early and lateness < 0:
        lateness = 0.0
    penalty = params.eta * lateness / workload
    return utility - duration - penalty


@dataclass(frozen=True)
class MdpTransition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray


@dataclass(frozen=True)
class ActionSpace:
    """Actions 0..M; action 0 (run locally) is always masked for real tasks."""

    n_devices: int

    @property
    def size(self) -> int:
        return self.n_devices + 1

    @property
    def mask(self) -> np.ndarray:
        valid = np.ones(self.size, dtype=bool)
        valid[0] = False
        return valid


class DqnScheduler:
    """Event-driven decision layer bridging the simulator to a Q-learner.

    Implements the scheduler port: ``decide`` observes the state, hands the
    previous step's reward to the learner, and asks it for a device;
    ``notify_outcome`` stashes the freshly computed reward; ``end_episode``
    flushes the final transition against the post-episode observation.
    """

    def __init__(self, learner, n_devices: int, norms: StateNorms | None = None,
                 training: bool = True):
        self.learner = learner
        self.actions = ActionSpace(n_devices)
        self.norms = norms if norms is not None else StateNorms()
        self.training = training
        self._pending: tuple[np.ndarray, int] | None = None
        self._pending_reward: float | None = None

    # -- scheduler port -----------------------------------------------------

    def decide(self, ctx) -> int:
        state = normalize_state(ctx.observation, self.norms)
        self._absorb(state)
        action = self.learner.act(state, self.actions.mask, greedy=not self.training)
        if not self.actions.mask[action]:
            raise RuntimeError(f"learner proposed masked action {action}")
        self._pending = (state, int(action))
        return int(action)

    def notify_outcome(self, outcome) -> None:
        self._pending_reward = outcome.reward

    def on_app_arrival(self, graph) -> None:
        pass

    def ready_sort_key(self, item):
        return None

    def end_episode(self, final_observation: StateVector) -> None:
        self._absorb(normalize_state(final_observation, self.norms))
        self._pending = None
        self._pending_reward = None

    # -- internals ----------------------------------------------------------

    def _absorb(self, next_state: np.ndarray) -> None:
        """Complete the previous step's transition, if any, and learn."""
        if self._pending is None or self._pending_reward is None:
            return
        if not self.training:
            self._pending_reward = None
            return
        state, action = self._pending
        self.learner.observe(
            MdpTransition(state, action, self._pending_reward, next_state)
        )
        self._pending_reward = None
