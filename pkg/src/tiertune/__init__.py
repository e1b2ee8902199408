"""Tiered-memory modeling and fast-memory sizing toolkit.

Four layers: a deterministic two-tier page-migration simulator
(:mod:`tiertune.tiersim`), a micro-benchmark planner that realizes target
access/migration/intensity profiles (:mod:`tiertune.workgen`), a performance
database keyed by 9-element configuration vectors (:mod:`tiertune.perfdb`),
and a closed-loop controller that shrinks fast memory to the smallest size
within a performance-loss budget (:mod:`tiertune.tuner`). The
:mod:`tiertune.cli` module exposes all of it as ``tiertune`` subcommands.
"""

from .perfdb import ConfigVector, ExecutionRecord, PerfDatabase, build, loss_curve
from .tiersim import (
    IntervalReport,
    TierParams,
    TieredMemState,
    Watermarks,
    exec_time_model,
)
from .tuner import TunerConfig, TunerDecision, TuneTrace, run_loop, tune_step
from .workgen import WorkloadSpec, WorkloadTarget, execute, run_target, synthesize

__version__ = "0.1.0"

__all__ = [
    "ConfigVector",
    "ExecutionRecord",
    "IntervalReport",
    "PerfDatabase",
    "TierParams",
    "TieredMemState",
    "TuneTrace",
    "TunerConfig",
    "TunerDecision",
    "Watermarks",
    "WorkloadSpec",
    "WorkloadTarget",
    "__version__",
    "build",
    "exec_time_model",
    "execute",
    "loss_curve",
    "run_loop",
    "run_target",
    "synthesize",
    "tune_step",
]
