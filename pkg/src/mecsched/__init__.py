"""Discrete-event simulator for DAG task offloading onto edge devices,
with a from-scratch DQN scheduler and heuristic baselines."""

from .task_graph import (
    Task,
    Edge,
    TaskGraph,
    PriorityList,
    validate,
    augment_with_dummies,
    compute_lct,
    build_priority_list,
    load_workload_file,
    save_workload_file,
)
from .mec_model import (
    EdgeDevice,
    CapabilityChain,
    NetworkTopology,
    Assignment,
    execution_time,
    transfer_time,
    completion_time,
    makespan,
    transition_capability,
)
from .mdp_agent import (
    StateVector,
    StateNorms,
    RewardParams,
    MdpTransition,
    ActionSpace,
    compute_reward,
    normalize_state,
    DqnScheduler,
)
from .sim_engine import (
    SchedulerPort,
    ScriptedScheduler,
    SimulationTrace,
    collect_ready,
    observe_state,
    run,
)
from .dqn_core import (
    ValueNetwork,
    ReplayBuffer,
    AdamState,
    TrainConfig,
    DqnLearner,
    select_action,
    compute_targets,
    train_step,
    sync_target,
    train,
    save_checkpoint,
    load_checkpoint,
)
from .baselines import (
    RandomScheduler,
    GreedyEftScheduler,
    HeftStyleScheduler,
    DuelingNetwork,
    make_dueling_learner,
)
from .workload import WorkloadSpec, generate, assign_deadline
from .experiment import (
    TopologyConfig,
    ExperimentConfig,
    MetricsReport,
    load_config,
    cmd_train,
    cmd_evaluate,
    cmd_compare,
    cmd_gen_workload,
)

__version__ = "0.1.0"
