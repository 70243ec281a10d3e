"""DAG applications: validation, dummy-task augmentation, priorities, file I/O.

An application is a DAG of tasks bracketed by two zero-workload dummy tasks:
task 0 models the upload of input data from the mobile user and the highest
task id models the return of results. Real tasks carry a workload in millions
of instructions (MI); edges carry transfer sizes in megabits.

Scheduling priority is the latest completion time (LCT) of each task, a
deadline propagated backwards through the DAG under best-case compute and
transfer assumptions. Ready tasks are dispatched in ascending LCT order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable, Sequence

__all__ = [
    "Task",
    "Edge",
    "TaskGraph",
    "PriorityList",
    "ValidationReport",
    "WorkloadFormatError",
    "validate",
    "augment_with_dummies",
    "compute_lct",
    "build_priority_list",
    "load_workload_file",
    "save_workload_file",
]


@dataclass(frozen=True)
class Task:
    app_id: int
    task_id: int
    workload: float  # MI; exactly 0 for the two dummy tasks
    lct: float | None = None  # seconds; filled by compute_lct


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    data_size: float  # megabits


@dataclass(frozen=True)
class TaskGraph:
    """One application: release time, deadline, home device and its DAG."""

    app_id: int
    release_time: float
    deadline: float
    home_ecd: int
    tasks: tuple[Task, ...]  # ordered by task_id
    edges: tuple[Edge, ...]

    @cached_property
    def sink_id(self) -> int:
        return max(t.task_id for t in self.tasks)

    @cached_property
    def _by_id(self) -> dict[int, Task]:
        return {t.task_id: t for t in self.tasks}

    @cached_property
    def _parents(self) -> dict[int, tuple[int, ...]]:
        acc: dict[int, list[int]] = {t.task_id: [] for t in self.tasks}
        for e in self.edges:
            acc[e.dst].append(e.src)
        return {k: tuple(sorted(v)) for k, v in acc.items()}

    @cached_property
    def _children(self) -> dict[int, tuple[int, ...]]:
        acc: dict[int, list[int]] = {t.task_id: [] for t in self.tasks}
        for e in self.edges:
            acc[e.src].append(e.dst)
        return {k: tuple(sorted(v)) for k, v in acc.items()}

    @cached_property
    def _edge_data(self) -> dict[tuple[int, int], float]:
        return {(e.src, e.dst): e.data_size for e in self.edges}

    def task(self, task_id: int) -> Task:
        return self._by_id[task_id]

    def parents_of(self, task_id: int) -> tuple[int, ...]:
        return self._parents[task_id]

    def children_of(self, task_id: int) -> tuple[int, ...]:
        return self._children[task_id]

    def edge_data(self, src: int, dst: int) -> float:
        return self._edge_data[(src, dst)]

    def is_dummy(self, task_id: int) -> bool:
        return task_id == 0 or task_id == self.sink_id

    def real_tasks(self) -> tuple[Task, ...]:
        return tuple(t for t in self.tasks if not self.is_dummy(t.task_id))

    def topological_order(self) -> list[int]:
        """Kahn order over all tasks; raises ValueError on a cycle."""
        indeg = {t.task_id: len(self._parents[t.task_id]) for t in self.tasks}
        frontier = sorted(i for i, d in indeg.items() if d == 0)
        order: list[int] = []
        while frontier:
            node = frontier.pop(0)
            order.append(node)
            for child in self._children[node]:
                indeg[child] -= 1
                if indeg[child] == 0:
                    # insert keeping the frontier sorted for determinism
                    lo, hi = 0, len(frontier)
                    while lo < hi:
                        mid = (lo + hi) // 2
                        if frontier[mid] < child:
                            lo = mid + 1
                        else:
                            hi = mid
                    frontier.insert(lo, child)
        if len(order) != len(self.tasks):
            raise ValueError("task graph contains a cycle")
        return order


@dataclass(frozen=True)
class PriorityList:
    app_id: int
    ordered_tasks: tuple[int, ...]  # real task ids, ascending LCT


@dataclass(frozen=True)
class ValidationReport:
    app_id: int
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


class WorkloadFormatError(ValueError):
    """Raised on malformed workload files, with line context."""


def validate(graph: TaskGraph) -> ValidationReport:
    """Check every structural invariant of a TaskGraph; never raises."""
    bad: list[str] = []
    ids = [t.task_id for t in graph.tasks]
    if not ids:
        return ValidationReport(graph.app_id, ("empty graph",))
    if ids != list(range(len(ids))):
        bad.append("task ids not contiguous from 0")
        return ValidationReport(graph.app_id, tuple(bad))
    sink = graph.sink_id

    for t in graph.tasks:
        if graph.is_dummy(t.task_id):
            if t.workload != 0:
                bad.append(f"dummy workload nonzero (task {t.task_id})")
        elif t.workload <= 0:
            bad.append(f"real task {t.task_id} has non-positive workload")

    seen_pairs = set()
    for e in graph.edges:
        if e.src == e.dst:
            bad.append(f"self edge on task {e.src}")
        if e.data_size < 0:
            bad.append(f"negative data size on edge {e.src}->{e.dst}")
        if e.src not in graph._by_id or e.dst not in graph._by_id:
            bad.append(f"edge {e.src}->{e.dst} references unknown task")
        if (e.src, e.dst) in seen_pairs:
            bad.append(f"duplicate edge {e.src}->{e.dst}")
        seen_pairs.add((e.src, e.dst))
    if bad:
        return ValidationReport(graph.app_id, tuple(bad))

    try:
        graph.topological_order()
    except ValueError:
        bad.append("cycle")
        return ValidationReport(graph.app_id, tuple(bad))

    if graph.parents_of(0):
        bad.append("source task 0 has parents")
    if graph.children_of(sink):
        bad.append(f"sink task {sink} has children")
    for t in graph.tasks:
        if graph.is_dummy(t.task_id):
            continue
        if not graph.parents_of(t.task_id):
            bad.append(f"real task {t.task_id} has no parents")
        if not graph.children_of(t.task_id):
            bad.append(f"real task {t.task_id} has no children")

    reach_fwd = _reachable(graph, 0, forward=True)
    reach_bwd = _reachable(graph, sink, forward=False)
    for t in graph.tasks:
        i = t.task_id
        if i not in reach_fwd:
            bad.append(f"task {i} unreachable from source")
        if i not in reach_bwd:
            bad.append(f"task {i} cannot reach sink")

    if not graph.release_time < graph.deadline:
        bad.append("release_time must be strictly before deadline")
    if graph.home_ecd < 1:
        bad.append("home_ecd must be a real device id (>= 1)")
    return ValidationReport(graph.app_id, tuple(bad))


def _reachable(graph: TaskGraph, start: int, forward: bool) -> set[int]:
    step = graph.children_of if forward else graph.parents_of
    seen = {start}
    stack = [start]
    while stack:
        node = stack.pop()
        for nxt in step(node):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def augment_with_dummies(
    raw: TaskGraph,
    offload_sizes: Sequence[float],
    result_sizes: Sequence[float],
) -> TaskGraph:
    """Bracket a dummy-free DAG with an upload source and a result sink.

    ``raw`` must hold real tasks with ids 1..K and edges among them. A new
    task 0 gains edges to every entry task (data per ``offload_sizes``,
    aligned with entries in ascending id order) and a new task K+1 gains
    edges from every exit task (``result_sizes`` likewise).
    """
    if not raw.tasks:
        raise ValueError("cannot augment an empty task set")
    ids = sorted(t.task_id for t in raw.tasks)
    if ids != list(range(1, len(ids) + 1)):
        raise ValueError("raw graph must use contiguous task ids starting at 1")
    raw.topological_order()  # raises on cycles

    entries = sorted(i for i in ids if not raw.parents_of(i))
    exits = sorted(i for i in ids if not raw.children_of(i))
    if len(offload_sizes) != len(entries):
        raise ValueError(
            f"offload_sizes has {len(offload_sizes)} entries, graph has {len(entries)}"
        )
    if len(result_sizes) != len(exits):
        raise ValueError(
            f"result_sizes has {len(result_sizes)} entries, graph has {len(exits)}"
        )

    sink = len(ids) + 1
    tasks = (
        Task(raw.app_id, 0, 0.0),
        *raw.tasks,
        Task(raw.app_id, sink, 0.0),
    )
    edges = list(raw.edges)
    edges.extend(Edge(0, i, float(s)) for i, s in zip(entries, offload_sizes))
    edges.extend(Edge(i, sink, float(s)) for i, s in zip(exits, result_sizes))
    return replace(raw, tasks=tasks, edges=tuple(edges))


def compute_lct(
    graph: TaskGraph,
    max_capability: float,
    max_rate: float,
    uplink_rate: float,
) -> TaskGraph:
    """Fill every task's latest completion time by backward propagation.

    Parents of the sink get ``deadline - result_data / uplink_rate``; any
    task with real children gets the minimum over children of
    ``child_lct - child_workload / max_capability - edge_data / max_rate``.
    A task that both feeds the sink and has real children takes the tighter
    of the two bounds.
    """
    if max_capability <= 0 or max_rate <= 0 or uplink_rate <= 0:
        raise ValueError("capability and rates must be positive")
    sink = graph.sink_id
    lct: dict[int, float] = {sink: graph.deadline}
    for i in reversed(graph.topological_order()):
        if i == sink:
            continue
        bounds: list[float] = []
        for j in graph.children_of(i):
            if j == sink:
                bounds.append(graph.deadline - graph.edge_data(i, sink) / uplink_rate)
            else:
                if j not in lct:
                    raise RuntimeError(f"child {j} visited before parent {i}")
                child = graph.task(j)
                bounds.append(
                    lct[j]
                    - child.workload / max_capability
                    - graph.edge_data(i, j) / max_rate
                )
        lct[i] = min(bounds)
    tasks = tuple(replace(t, lct=lct[t.task_id]) for t in graph.tasks)
    return replace(graph, tasks=tasks)


def build_priority_list(graph: TaskGraph) -> PriorityList:
    """Real tasks in ascending LCT order, equal LCTs broken by task id."""
    real = graph.real_tasks()
    if any(t.lct is None for t in real):
        raise ValueError("priorities require lct; run compute_lct first")
    ordered = sorted(real, key=lambda t: (t.lct, t.task_id))
    return PriorityList(graph.app_id, tuple(t.task_id for t in ordered))


# ---------------------------------------------------------------------------
# Workload file format
#
#   app <n> release <r> deadline <d> home <m>
#   task <id> <workload_MI>
#   edge <src> <dst> <megabits>
#
# Whitespace-delimited, '#' starts a comment, task 0 and the highest id are
# the dummies. Floats are written with repr() so files round-trip exactly.
# ---------------------------------------------------------------------------


def load_workload_file(path) -> list[TaskGraph]:
    graphs: list[TaskGraph] = []
    header: tuple[int, float, float, int] | None = None
    tasks: list[Task] = []
    edges: list[Edge] = []

    def flush(lineno: int) -> None:
        nonlocal header, tasks, edges
        if header is None:
            return
        app_id, release, deadline, home = header
        graph = TaskGraph(
            app_id=app_id,
            release_time=release,
            deadline=deadline,
            home_ecd=home,
            tasks=tuple(sorted(tasks, key=lambda t: t.task_id)),
            edges=tuple(edges),
        )
        report = validate(graph)
        if not report.ok:
            raise WorkloadFormatError(
                f"line {lineno}: app {app_id} invalid: {'; '.join(report.violations)}"
            )
        graphs.append(graph)
        header, tasks, edges = None, [], []

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            fields = text.split()
            kind = fields[0]
            try:
                if kind == "app":
                    flush(lineno)
                    if len(fields) != 8 or fields[2] != "release" or fields[4] != "deadline" or fields[6] != "home":
                        raise ValueError("expected: app <n> release <r> deadline <d> home <m>")
                    header = (int(fields[1]), float(fields[3]), float(fields[5]), int(fields[7]))
                elif kind == "task":
                    if header is None:
                        raise ValueError("task line before any app header")
                    if len(fields) != 3:
                        raise ValueError("expected: task <id> <workload_MI>")
                    workload = float(fields[2])
                    if workload < 0:
                        raise ValueError("workload must be >= 0")
                    tasks.append(Task(header[0], int(fields[1]), workload))
                elif kind == "edge":
                    if header is None:
                        raise ValueError("edge line before any app header")
                    if len(fields) != 4:
                        raise ValueError("expected: edge <src> <dst> <megabits>")
                    data = float(fields[3])
                    if data < 0:
                        raise ValueError("data size must be >= 0")
                    edges.append(Edge(int(fields[1]), int(fields[2]), data))
                else:
                    raise ValueError(f"unknown record kind {kind!r}")
            except ValueError as exc:
                raise WorkloadFormatError(f"line {lineno}: {exc}") from None
    flush(lineno="<eof>")  # type: ignore[arg-type]
    return graphs


def save_workload_file(graphs: Iterable[TaskGraph], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in graphs:
            fh.write(
                f"app {g.app_id} release {g.release_time!r} "
                f"deadline {g.deadline!r} home {g.home_ecd}\n"
            )
            for t in g.tasks:
                fh.write(f"task {t.task_id} {t.workload!r}\n")
            for e in g.edges:
                fh.write(f"edge {e.src} {e.dst} {e.data_size!r}\n")
