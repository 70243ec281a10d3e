"""Event-driven scheduling kernel.

Two event kinds drive the run: application arrivals and task completions.
On every event the kernel pops newly ready tasks (all parents completed)
from the head of each application's priority list into a merged ready queue,
then walks that queue asking the pluggable scheduler for a target device per
task. Each commitment updates the chosen device's FCFS queue before the next
decision, schedules the task's completion event, and reports the decision's
reward back to the scheduler one step later.

A device's capability level steps along its Markov chain when the device
completes a task; executions already committed are never re-timed, so the
speed used for a task is the level in force at its assignment instant.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .mdp_agent import RewardParams, StateVector, compute_reward
from .mec_model import (
    Assignment,
    CapabilityChain,
    EdgeDevice,
    NetworkTopology,
    execution_time,
    transfer_time,
    transition_capability,
)
from .task_graph import Edge, TaskGraph, build_priority_list

__all__ = [
    "SimEvent",
    "ReadyItem",
    "DecisionContext",
    "OutcomeRecord",
    "SchedulerPort",
    "ScriptedScheduler",
    "SchedulingError",
    "DeadlockError",
    "SimulationTrace",
    "collect_ready",
    "observe_state",
    "run",
]

ARRIVAL = "arrival"
COMPLETION = "completion"

TRACE_COLUMNS = (
    "time", "event", "app", "task", "device", "start", "finish",
    "rate_sum", "uplink", "cap_sum", "ready_mi", "queued_mi",
    "action", "reward", "level",
)


class SchedulingError(RuntimeError):
    """A scheduler returned an invalid device id."""


class DeadlockError(RuntimeError):
    """The event queue drained while applications were still incomplete."""


@dataclass(frozen=True, order=True)
class SimEvent:
    time: float
    seq: int
    kind: str = field(compare=False)
    app_id: int = field(compare=False)
    task_id: int = field(compare=False)
    ecd_id: int = field(compare=False)


@dataclass(frozen=True)
class ReadyItem:
    app_id: int
    task_id: int
    lct: float
    workload: float


@dataclass(frozen=True)
class DecisionContext:
    """Everything a scheduler may consult for one decision."""

    now: float
    app_id: int
    task_id: int
    workload: float
    lct: float
    observation: StateVector
    valid_actions: tuple[int, ...]
    finish_if: Callable[[int], float]  # candidate device -> finish time


@dataclass(frozen=True)
class OutcomeRecord:
    """Decision-time quantities of one committed assignment."""

    app_id: int
    task_id: int
    ecd_id: int
    workload: float
    lct: float
    max_arrival: float
    queue_delay: float
    exec_time: float
    start: float
    finish: float
    reward: float


class SchedulerPort:
    """Interface the kernel drives; subclasses override what they need."""

    def decide(self, ctx: DecisionContext) -> int:
        raise NotImplementedError

    def notify_outcome(self, outcome: OutcomeRecord) -> None:
        pass

    def on_app_arrival(self, graph: TaskGraph) -> None:
        pass

    def ready_sort_key(self, item: ReadyItem):
        """Return a sort key to reorder the ready queue, or None for the
        default ascending-LCT order."""
        return None

    def end_episode(self, final_observation: StateVector) -> None:
        pass


class ScriptedScheduler(SchedulerPort):
    """Replays a fixed (app, task) -> device mapping; used for replay and
    brute-force checks."""

    def __init__(self, decisions: dict[tuple[int, int], int]):
        self.decisions = dict(decisions)

    def decide(self, ctx: DecisionContext) -> int:
        return self.decisions[(ctx.app_id, ctx.task_id)]


def collect_ready(
    priority_lists: dict[int, list[int]],
    completed: set[tuple[int, int]],
    graphs: dict[int, TaskGraph],
) -> list[ReadyItem]:
    """Pop every ready head prefix from each list; merge ascending by LCT.

    A task is ready once all of its parents have completed. Lists are
    consumed in place.
    """
    items: list[ReadyItem] = []
    for app_id in sorted(priority_lists):
        pending = priority_lists[app_id]
        graph = graphs[app_id]
        while pending:
            head = pending[0]
            if any((app_id, p) not in completed for p in graph.parents_of(head)):
                break
            pending.pop(0)
            task = graph.task(head)
            items.append(ReadyItem(app_id, head, task.lct, task.workload))
    items.sort(key=lambda it: (it.lct, it.app_id, it.task_id))
    return items


def observe_state(
    now: float,
    topo: NetworkTopology,
    devices: Sequence[EdgeDevice],
    ready_items: Sequence[ReadyItem],
) -> StateVector:
    """Aggregate system summary: rates, capabilities and outstanding work.

    The queued workload counts every task assigned to a device whose
    completion has not fired yet, the executing one at full weight.
    """
    return StateVector(
        sum_inter_rate=topo.sum_rate,
        uplink_rate=topo.uplink_rate,
        sum_capability=float(sum(d.capability for d in devices)),
        ready_workload=float(sum(it.workload for it in ready_items)),
        queued_workload=float(sum(d.queued_workload() for d in devices)),
    )


class SimulationTrace:
    """Chronological record of one run plus per-application results."""

    def __init__(self) -> None:
        self.rows: list[tuple] = []
        self.assignments: dict[tuple[int, int], Assignment] = {}
        self.decisions: dict[tuple[int, int], int] = {}
        self.app_makespans: dict[int, float] = {}
        self.app_deadlines: dict[int, float] = {}
        self.rewards: list[float] = []
        self.final_observation: StateVector | None = None

    @property
    def cumulative_reward(self) -> float:
        return float(sum(self.rewards))

    def violations(self) -> dict[int, bool]:
        return {
            app: self.app_makespans[app] > self.app_deadlines[app]
            for app in self.app_makespans
        }

    def violation_rate(self) -> float:
        flags = self.violations()
        if not flags:
            return 0.0
        return 100.0 * sum(flags.values()) / len(flags)

    def avg_makespan(self) -> float:
        if not self.app_makespans:
            return 0.0
        return float(sum(self.app_makespans.values()) / len(self.app_makespans))

    def to_csv(self, path) -> None:
        def fmt(value) -> str:
            if value is None:
                return ""
            if isinstance(value, float):
                return repr(value)
            return str(value)

        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for row in self.rows:
                fh.write(",".join(fmt(v) for v in row) + "\n")


class _AppRun:
    """Mutable per-application bookkeeping inside one run."""

    def __init__(self, graph: TaskGraph):
        self.pending = list(build_priority_list(graph).ordered_tasks)
        self.sink_scheduled = False


def run(
    apps: Iterable[TaskGraph],
    topo: NetworkTopology,
    devices: Sequence[EdgeDevice],
    scheduler: SchedulerPort,
    chains: Sequence[CapabilityChain],
    reward_params: RewardParams | None = None,
    record_rows: bool = True,
) -> SimulationTrace:
    """Simulate all applications to completion under the given scheduler."""
    params = reward_params if reward_params is not None else RewardParams()
    apps = list(apps)
    if len(chains) != len(devices):
        raise ValueError("need one capability chain per device")
    for graph in apps:
        if not 1 <= graph.home_ecd <= len(devices):
            raise ValueError(
                f"app {graph.app_id}: home device {graph.home_ecd} not in fleet"
            )
        for t in graph.real_tasks():
            if t.lct is None:
                raise ValueError(f"app {graph.app_id}: priorities missing, run compute_lct")

    if len({g.app_id for g in apps}) != len(apps):
        raise ValueError("duplicate app ids")
    runs: dict[int, _AppRun] = {g.app_id: _AppRun(g) for g in apps}
    graphs = {g.app_id: g for g in apps}
    lists = {app_id: app_run.pending for app_id, app_run in runs.items()}
    completed: set[tuple[int, int]] = set()
    trace = SimulationTrace()
    valid_actions = tuple(d.ecd_id for d in devices)

    heap: list[SimEvent] = []
    seq = 0

    def push(time: float, kind: str, app_id: int, task_id: int, ecd_id: int) -> None:
        nonlocal seq
        heapq.heappush(heap, SimEvent(time, seq, kind, app_id, task_id, ecd_id))
        seq += 1

    for graph in apps:
        push(graph.release_time, ARRIVAL, graph.app_id, 0, 0)

    def arrivals_for(graph: TaskGraph, task_id: int, target: int) -> list[float]:
        acc = []
        for p in graph.parents_of(task_id):
            pa = trace.assignments[(graph.app_id, p)]
            edge = Edge(p, task_id, graph.edge_data(p, task_id))
            hop = transfer_time(edge, pa.ecd_id, target, topo, graph.home_ecd)
            acc.append(pa.finish + hop)
        return acc

    def try_schedule_sink(graph: TaskGraph) -> None:
        app_run = runs[graph.app_id]
        if app_run.sink_scheduled:
            return
        sink = graph.sink_id
        if any((graph.app_id, p) not in trace.assignments for p in graph.parents_of(sink)):
            return
        finish = max(arrivals_for(graph, sink, 0))
        trace.assignments[(graph.app_id, sink)] = Assignment(
            graph.app_id, sink, 0, finish, finish
        )
        push(finish, COMPLETION, graph.app_id, sink, 0)
        app_run.sink_scheduled = True

    now = 0.0
    while heap:
        event = heapq.heappop(heap)
        now = event.time
        graph = graphs[event.app_id]

        if event.kind == ARRIVAL:
            source = Assignment(event.app_id, 0, 0, now, now)
            trace.assignments[(event.app_id, 0)] = source
            completed.add((event.app_id, 0))
            scheduler.on_app_arrival(graph)
            if record_rows:
                trace.rows.append((now, ARRIVAL, event.app_id, 0, 0, now, now,
                                   None, None, None, None, None, None, None, None))
            try_schedule_sink(graph)  # degenerate apps with no real tasks
        else:
            completed.add((event.app_id, event.task_id))
            level = None
            if event.ecd_id != 0:
                device = devices[event.ecd_id - 1]
                if not device.queue or device.queue[0][:2] != (event.app_id, event.task_id):
                    raise RuntimeError("completion out of FCFS order")
                device.queue.pop(0)
                level = transition_capability(device, chains[event.ecd_id - 1])
            else:
                a = trace.assignments[(event.app_id, event.task_id)]
                trace.app_makespans[event.app_id] = a.finish - graph.release_time
                trace.app_deadlines[event.app_id] = graph.deadline
            if record_rows:
                a = trace.assignments[(event.app_id, event.task_id)]
                trace.rows.append((now, COMPLETION, event.app_id, event.task_id,
                                   event.ecd_id, a.start, a.finish,
                                   None, None, None, None, None, None, None, level))

        ready = collect_ready(lists, completed, graphs)
        if ready and scheduler.ready_sort_key(ready[0]) is not None:
            ready.sort(key=lambda it: scheduler.ready_sort_key(it))

        for idx, item in enumerate(ready):
            task = graphs[item.app_id].task(item.task_id)
            app_graph = graphs[item.app_id]
            obs = observe_state(now, topo, devices, ready[idx:])

            def finish_if(m: int, _g=app_graph, _t=task) -> float:
                d = devices[m - 1]
                start = max(d.queue_free_at, max(arrivals_for(_g, _t.task_id, m)), now)
                return start + execution_time(_t, d)

            ctx = DecisionContext(
                now=now,
                app_id=item.app_id,
                task_id=item.task_id,
                workload=item.workload,
                lct=item.lct,
                observation=obs,
                valid_actions=valid_actions,
                finish_if=finish_if,
            )
            action = scheduler.decide(ctx)
            if action not in valid_actions:
                raise SchedulingError(
                    f"scheduler chose device {action!r} for task "
                    f"({item.app_id},{item.task_id}); valid: {valid_actions}"
                )
            device = devices[action - 1]
            arrivals = arrivals_for(app_graph, item.task_id, action)
            max_arrival = max(arrivals)
            queue_delay = device.queue_free_at
            exec_time = execution_time(task, device)
            start = max(queue_delay, max_arrival, now)
            finish = start + exec_time
            assignment = Assignment(item.app_id, item.task_id, action, start, finish)
            trace.assignments[(item.app_id, item.task_id)] = assignment
            trace.decisions[(item.app_id, item.task_id)] = action
            device.queue_free_at = finish
            device.queue.append((item.app_id, item.task_id, task.workload))
            push(finish, COMPLETION, item.app_id, item.task_id, action)

            reward = compute_reward(
                task.workload, item.lct, max_arrival, queue_delay,
                exec_time, finish, params,
            )
            trace.rewards.append(reward)
            scheduler.notify_outcome(OutcomeRecord(
                app_id=item.app_id, task_id=item.task_id, ecd_id=action,
                workload=task.workload, lct=item.lct, max_arrival=max_arrival,
                queue_delay=queue_delay, exec_time=exec_time,
                start=start, finish=finish, reward=reward,
            ))
            if record_rows:
                trace.rows.append((now, "decide", item.app_id, item.task_id, action,
                                   start, finish,
                                   obs.sum_inter_rate, obs.uplink_rate,
                                   obs.sum_capability, obs.ready_workload,
                                   obs.queued_workload, action, reward, None))
            try_schedule_sink(app_graph)

    unfinished = [g.app_id for g in apps if g.app_id not in trace.app_makespans]
    if unfinished:
        raise DeadlockError(f"event queue drained with apps unfinished: {unfinished}")

    trace.final_observation = observe_state(now, topo, devices, [])
    scheduler.end_episode(trace.final_observation)
    return trace
