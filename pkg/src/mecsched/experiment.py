"""Experiment protocol: configuration, seeding, replication and CSV export.

A master seed fans out into named streams (workload draws, per-device
capability chains, exploration, replay sampling, weight init, baseline
coin flips), so comparisons feed every scheduler byte-identical workload
files and identical capability traces while policies keep private
randomness. All outputs are plain CSV plus a manifest of the resolved
configuration; nothing depends on wall-clock time.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngmod
from .baselines import (
    GreedyEftScheduler,
    HeftStyleScheduler,
    RandomScheduler,
    make_dueling_learner,
)
from .dqn_core import DqnLearner, TrainConfig, load_checkpoint, save_checkpoint, train
from .mdp_agent import RewardParams, DqnScheduler, StateNorms
from .mec_model import CapabilityChain, EdgeDevice, NetworkTopology
from .sim_engine import SimulationTrace, run
from .task_graph import TaskGraph, compute_lct, load_workload_file, save_workload_file
from .workload import WorkloadSpec, generate, shape_real_task_count

__all__ = [
    "TopologyConfig",
    "ExperimentConfig",
    "MetricsReport",
    "load_config",
    "build_topology",
    "build_devices",
    "build_chains",
    "prepare_graphs",
    "train_agent",
    "cmd_gen_workload",
    "cmd_train",
    "cmd_evaluate",
    "cmd_compare",
]

DEFAULT_TRANSITION_MATRIX = (
    (0.5, 0.25, 0.125, 0.0625, 0.0625),
    (0.0625, 0.5, 0.25, 0.125, 0.0625),
    (0.0625, 0.0625, 0.5, 0.25, 0.125),
    (0.125, 0.0625, 0.0625, 0.5, 0.25),
    (0.25, 0.125, 0.0625, 0.0625, 0.5),
)

DEFAULT_CAPABILITY_LEVELS = (6000.0, 5500.0, 5000.0, 4500.0, 4000.0)


@dataclass(frozen=True)
class TopologyConfig:
    n_devices: int = 4
    inter_rate_mbps: float = 440.0
    uplink_mbps: float = 1000.0
    capability_levels: tuple[float, ...] = DEFAULT_CAPABILITY_LEVELS
    transition_matrix: tuple[tuple[float, ...], ...] = DEFAULT_TRANSITION_MATRIX

    def __post_init__(self) -> None:
        if len(self.transition_matrix) != len(self.capability_levels):
            raise ValueError("transition matrix size must match the level count")


@dataclass(frozen=True)
class ExperimentConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    agent: TrainConfig = field(default_factory=TrainConfig)
    reward: RewardParams = field(default_factory=RewardParams)
    replications: int = 30
    schedulers: tuple[str, ...] = ("dqn", "random", "greedy_eft", "heft")
    compare_lams: tuple[float, ...] = ()
    master_seed: int = 1
    write_traces: bool = False

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        for name in self.schedulers:
            if name not in SCHEDULER_NAMES:
                raise ValueError(f"unknown scheduler {name!r}")


SCHEDULER_NAMES = ("dqn", "random", "greedy_eft", "heft", "dueling")


@dataclass
class MetricsReport:
    scheduler: str
    lam: float
    avg_makespans: np.ndarray  # one entry per replication
    violation_rates: np.ndarray  # percent, per replication
    cumulative_rewards: np.ndarray

    @property
    def mean_makespan(self) -> float:
        return float(self.avg_makespans.mean())

    @property
    def mean_violation_rate(self) -> float:
        return float(self.violation_rates.mean())


# ---------------------------------------------------------------------------
# Config file (INI, whitespace-separated lists, ';' between matrix rows)
# ---------------------------------------------------------------------------


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split())


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)

    def get(section, key, fallback=None):
        if parser.has_option(section, key):
            return parser.get(section, key)
        return fallback

    topo = TopologyConfig()
    if parser.has_section("topology"):
        matrix = topo.transition_matrix
        raw_matrix = get("topology", "transition_matrix")
        if raw_matrix:
            matrix = tuple(_floats(row) for row in raw_matrix.split(";"))
        topo = TopologyConfig(
            n_devices=int(get("topology", "n_devices", topo.n_devices)),
            inter_rate_mbps=float(get("topology", "inter_rate_mbps", topo.inter_rate_mbps)),
            uplink_mbps=float(get("topology", "uplink_mbps", topo.uplink_mbps)),
            capability_levels=_floats(get("topology", "capability_levels"))
            if get("topology", "capability_levels") else topo.capability_levels,
            transition_matrix=matrix,
        )

    wl = WorkloadSpec(n_devices=topo.n_devices)
    if parser.has_section("workload"):
        wl = WorkloadSpec(
            n_apps=int(get("workload", "n_apps", wl.n_apps)),
            lam=float(get("workload", "lam", wl.lam)),
            arrival_mode=get("workload", "arrival_mode", wl.arrival_mode),
            graph_shape=get("workload", "shape", wl.graph_shape),
            workload_range=_floats(get("workload", "workload_range"))
            if get("workload", "workload_range") else wl.workload_range,
            bc_range=_floats(get("workload", "bc_range"))
            if get("workload", "bc_range") else wl.bc_range,
            mean_rate=float(get("workload", "mean_rate_mbps", wl.mean_rate)),
            deadline_factor=float(get("workload", "deadline_factor", wl.deadline_factor)),
            deadline_capability=float(
                get("workload", "deadline_capability_mips", wl.deadline_capability)
            ),
            n_devices=topo.n_devices,
        )

    agent = TrainConfig()
    if parser.has_section("agent"):
        agent = TrainConfig(
            gamma=float(get("agent", "gamma", agent.gamma)),
            batch=int(get("agent", "batch", agent.batch)),
            learning_rate=float(get("agent", "learning_rate", agent.learning_rate)),
            buffer_capacity=int(get("agent", "pool", agent.buffer_capacity)),
            epsilon_start=float(get("agent", "epsilon_start", agent.epsilon_start)),
            epsilon_end=float(get("agent", "epsilon_end", agent.epsilon_end)),
            epsilon_decay_fraction=float(
                get("agent", "epsilon_decay_fraction", agent.epsilon_decay_fraction)
            ),
            target_sync_steps=int(get("agent", "target_sync_steps", agent.target_sync_steps)),
            episodes=int(get("agent", "episodes", agent.episodes)),
            hidden_sizes=tuple(int(v) for v in get("agent", "hidden_sizes").split())
            if get("agent", "hidden_sizes") else agent.hidden_sizes,
            hidden_activation=get("agent", "hidden_activation", agent.hidden_activation),
        )

    reward = RewardParams()
    if parser.has_section("reward"):
        reward = RewardParams(
            beta=float(get("reward", "beta", reward.beta)),
            psi=float(get("reward", "psi", reward.psi)),
            eta=float(get("reward", "eta", reward.eta)),
            clamp_early=get("reward", "clamp_early", "false").lower() in ("1", "true", "yes"),
        )

    cfg = ExperimentConfig(topology=topo, workload=wl, agent=agent, reward=reward)
    if parser.has_section("experiment"):
        cfg = replace(
            cfg,
            replications=int(get("experiment", "replications", cfg.replications)),
            schedulers=tuple(get("experiment", "schedulers").split())
            if get("experiment", "schedulers") else cfg.schedulers,
            compare_lams=_floats(get("experiment", "lams"))
            if get("experiment", "lams") else cfg.compare_lams,
            master_seed=int(get("experiment", "master_seed", cfg.master_seed)),
            write_traces=get("experiment", "write_traces", "false").lower()
            in ("1", "true", "yes"),
        )
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def build_topology(tc: TopologyConfig) -> NetworkTopology:
    m = tc.n_devices
    rates = np.full((m, m), tc.inter_rate_mbps, dtype=float)
    np.fill_diagonal(rates, 0.0)
    return NetworkTopology(inter_ecd_rate=rates, uplink_rate=tc.uplink_mbps)


def build_devices(tc: TopologyConfig) -> list[EdgeDevice]:
    return [
        EdgeDevice(ecd_id=m, capability_levels=tuple(tc.capability_levels))
        for m in range(1, tc.n_devices + 1)
    ]


def build_chains(tc: TopologyConfig, master_seed: int, purpose: str,
                 index: int) -> list[CapabilityChain]:
    return [
        CapabilityChain(tc.transition_matrix, rngmod.stream(master_seed, purpose, index, m))
        for m in range(1, tc.n_devices + 1)
    ]


def prepare_graphs(graphs, tc: TopologyConfig, topo: NetworkTopology) -> list[TaskGraph]:
    max_cap = max(tc.capability_levels)
    return [
        compute_lct(g, max_capability=max_cap, max_rate=topo.max_rate,
                    uplink_rate=topo.uplink_rate)
        for g in graphs
    ]


def _planned_steps(cfg: ExperimentConfig) -> int:
    n_tasks = shape_real_task_count(cfg.workload.graph_shape)
    return cfg.agent.episodes * cfg.workload.n_apps * n_tasks


def _make_learner(cfg: ExperimentConfig, dueling: bool = False) -> DqnLearner:
    agent_cfg = replace(cfg.agent, planned_steps=_planned_steps(cfg))
    tag = "dueling-" if dueling else ""
    factory = make_dueling_learner if dueling else DqnLearner
    return factory(
        agent_cfg,
        cfg.topology.n_devices + 1,
        rngmod.stream(cfg.master_seed, tag + "weights"),
        rngmod.stream(cfg.master_seed, tag + "explore"),
        rngmod.stream(cfg.master_seed, tag + "replay"),
    )


def train_agent(cfg: ExperimentConfig, dueling: bool = False):
    """Train a value learner over fresh workload draws; returns (learner, curve)."""
    topo = build_topology(cfg.topology)
    learner = _make_learner(cfg, dueling=dueling)
    scheduler = DqnScheduler(learner, cfg.topology.n_devices, training=True)
    tag = "dueling-" if dueling else ""

    def env_runner(episode: int, _learner) -> float:
        graphs = generate(cfg.workload, rngmod.stream(cfg.master_seed, tag + "train-workload", episode))
        graphs = prepare_graphs(graphs, cfg.topology, topo)
        devices = build_devices(cfg.topology)
        chains = build_chains(cfg.topology, cfg.master_seed, tag + "train-capability", episode)
        trace = run(graphs, topo, devices, scheduler, chains, cfg.reward,
                    record_rows=False)
        return trace.cumulative_reward

    curve = train(env_runner, learner, cfg.agent.episodes)
    return learner, curve


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _make_eval_scheduler(name: str, cfg: ExperimentConfig, topo: NetworkTopology,
                         rep: int, learners: dict):
    n = cfg.topology.n_devices
    if name == "random":
        return RandomScheduler(n, rngmod.stream(cfg.master_seed, "baseline-random", rep))
    if name == "greedy_eft":
        return GreedyEftScheduler()
    if name == "heft":
        return HeftStyleScheduler(topo, cfg.topology.capability_levels)
    if name in ("dqn", "dueling"):
        if name not in learners:
            raise ValueError(f"no trained learner available for {name!r}")
        return DqnScheduler(learners[name], n, training=False)
    raise ValueError(f"unknown scheduler {name!r}")


def _run_replication(cfg: ExperimentConfig, topo, graphs, name: str, rep: int,
                     learners: dict) -> SimulationTrace:
    scheduler = _make_eval_scheduler(name, cfg, topo, rep, learners)
    devices = build_devices(cfg.topology)
    chains = build_chains(cfg.topology, cfg.master_seed, "eval-capability", rep)
    return run(graphs, topo, devices, scheduler, chains, cfg.reward,
               record_rows=cfg.write_traces)


def _fmt(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_manifest(cfg: ExperimentConfig, outdir, extra: dict | None = None) -> None:
    lines = []

    def walk(prefix: str, obj) -> None:
        if hasattr(obj, "__dataclass_fields__"):
            for name in obj.__dataclass_fields__:
                walk(f"{prefix}{name}.", getattr(obj, name))
        else:
            lines.append(f"{prefix[:-1]} = {obj!r}")

    walk("", cfg)
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value!r}")
    with open(os.path.join(outdir, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(sorted(lines)) + "\n")


def cmd_gen_workload(cfg: ExperimentConfig, outpath) -> list[TaskGraph]:
    graphs = generate(cfg.workload, rngmod.stream(cfg.master_seed, "workload"))
    save_workload_file(graphs, outpath)
    return graphs


def cmd_train(cfg: ExperimentConfig, outdir) -> dict[str, str]:
    """Train the learned scheduler; write checkpoint and learning curve."""
    os.makedirs(outdir, exist_ok=True)
    learner, curve = train_agent(cfg)
    checkpoint = os.path.join(outdir, "checkpoint.npz")
    save_checkpoint(learner, checkpoint)
    curve_path = os.path.join(outdir, "learning_curve.csv")
    _write_csv(curve_path, ("episode", "cumulative_reward"),
               [(e + 1, float(r)) for e, r in enumerate(curve)])
    _write_manifest(cfg, outdir)
    return {"checkpoint": checkpoint, "curve": curve_path}


def _evaluate_scheduler(cfg: ExperimentConfig, topo, name: str, lam: float,
                        learners: dict, workload_files: list[str]) -> MetricsReport:
    makespans, violations, rewards = [], [], []
    for rep in range(cfg.replications):
        graphs = load_workload_file(workload_files[rep])
        graphs = prepare_graphs(graphs, cfg.topology, topo)
        trace = _run_replication(cfg, topo, graphs, name, rep, learners)
        makespans.append(trace.avg_makespan())
        violations.append(trace.violation_rate())
        rewards.append(trace.cumulative_reward)
        if cfg.write_traces:
            trace.to_csv(os.path.join(
                os.path.dirname(workload_files[rep]),
                f"trace_{name}_lam{lam:g}_rep{rep}.csv",
            ))
    return MetricsReport(name, lam, np.array(makespans), np.array(violations),
                         np.array(rewards))


def _write_workload_files(cfg: ExperimentConfig, lam: float, outdir) -> list[str]:
    wl_dir = os.path.join(outdir, "workloads")
    os.makedirs(wl_dir, exist_ok=True)
    spec = replace(cfg.workload, lam=lam)
    files = []
    for rep in range(cfg.replications):
        graphs = generate(spec, rngmod.stream(cfg.master_seed, "eval-workload", rep))
        path = os.path.join(wl_dir, f"lam{lam:g}_rep{rep}.wl")
        save_workload_file(graphs, path)
        files.append(path)
    return files


def cmd_evaluate(cfg: ExperimentConfig, outdir, checkpoint=None,
                 scheduler: str = "dqn") -> MetricsReport:
    """Greedy evaluation of one scheduler over replicated workloads."""
    os.makedirs(outdir, exist_ok=True)
    topo = build_topology(cfg.topology)
    learners: dict = {}
    if scheduler == "dqn":
        if checkpoint is None:
            raise ValueError("evaluating 'dqn' requires a checkpoint")
        learners["dqn"] = load_checkpoint(checkpoint)
    files = _write_workload_files(cfg, cfg.workload.lam, outdir)
    report = _evaluate_scheduler(cfg, topo, scheduler, cfg.workload.lam, learners, files)
    _write_csv(
        os.path.join(outdir, "evaluation.csv"),
        ("scheduler", "rep", "avg_makespan", "violation_pct", "cumulative_reward"),
        [
            (report.scheduler, rep, float(report.avg_makespans[rep]),
             float(report.violation_rates[rep]), float(report.cumulative_rewards[rep]))
            for rep in range(cfg.replications)
        ],
    )
    _write_manifest(cfg, outdir, {"evaluated_scheduler": scheduler})
    return report


def cmd_compare(cfg: ExperimentConfig, outdir, checkpoint=None) -> list[MetricsReport]:
    """Run every configured scheduler over identical workload replications.

    Each replication's workload is generated once, written to a file, and
    loaded back for every scheduler; capability chains are re-seeded per
    replication so every scheduler sees the same environment randomness.
    """
    os.makedirs(outdir, exist_ok=True)
    topo = build_topology(cfg.topology)
    learners: dict = {}
    if "dqn" in cfg.schedulers:
        if checkpoint is not None:
            learners["dqn"] = load_checkpoint(checkpoint)
        else:
            learners["dqn"], _ = train_agent(cfg)
    if "dueling" in cfg.schedulers:
        learners["dueling"], _ = train_agent(cfg, dueling=True)

    lams = cfg.compare_lams if cfg.compare_lams else (cfg.workload.lam,)
    reports: list[MetricsReport] = []
    for lam in lams:
        files = _write_workload_files(cfg, lam, outdir)
        lam_reports = [
            _evaluate_scheduler(cfg, topo, name, lam, learners, files)
            for name in cfg.schedulers
        ]
        reports.extend(lam_reports)
        _write_csv(
            os.path.join(outdir, f"comparison_lam{lam:g}.csv"),
            ("scheduler", "avg_makespan_mean", "avg_makespan_std",
             "violation_pct_mean", "violation_pct_std"),
            [
                (r.scheduler, float(r.avg_makespans.mean()),
                 float(r.avg_makespans.std()),
                 float(r.violation_rates.mean()), float(r.violation_rates.std()))
                for r in lam_reports
            ],
        )
        _write_csv(
            os.path.join(outdir, f"replications_lam{lam:g}.csv"),
            ("scheduler", "rep", "avg_makespan", "violation_pct", "cumulative_reward"),
            [
                (r.scheduler, rep, float(r.avg_makespans[rep]),
                 float(r.violation_rates[rep]), float(r.cumulative_rewards[rep]))
                for r in lam_reports
                for rep in range(cfg.replications)
            ],
        )
    _write_manifest(cfg, outdir, {"compare_lams": list(lams)})
    return reports
