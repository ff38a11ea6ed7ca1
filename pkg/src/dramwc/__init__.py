"""dramwc: cycle-accurate memory-controller simulation and worst-case
interference bound analysis for bank-partitioned multicore systems."""

from .device import (
    DDR3_1066,
    BankState,
    ChannelState,
    CommandKind,
    DataBurst,
    DramCommand,
    TimingError,
    TimingParams,
    apply_command,
    command_ready,
    decompose_request,
    load_timing,
    make_timing,
)
from .scheduler import (
    Controller,
    MemRequest,
    Mode,
    ScheduleTrace,
    SchedulerConfig,
    SimulationStalled,
    request_delay,
    solo_service,
)
from .workload import (
    GeneratorKind,
    GeneratorSpec,
    MshrConfig,
    MshrFile,
    ScenarioError,
    ScenarioSpec,
    StagedRequest,
    Workload,
    build_adversarial,
    build_simulation,
    run_scenario,
    scenario_from_text,
    scenario_to_text,
)
from .analysis import (
    AnalysisInputs,
    BoundReport,
    DelayBound,
    KimParams,
    bound_check,
    kim_baseline_bound,
    per_request_bound,
    read_queue_delay,
    total_delay,
    write_drain_delay,
)
from .checks import TraceInvariantError, validate_trace

__version__ = "0.1.0"
