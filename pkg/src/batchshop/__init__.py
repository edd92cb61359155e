"""Bi-objective scheduling for hybrid flow shops with parallel-batching stages."""

from .instance import Instance, InstanceError, generate_instance, read_instance, tiny_a, write_instance
from .schedule import (
    DecodeResult,
    FeasibilityReport,
    InfeasibleScheduleError,
    Objectives,
    Schedule,
    check_feasibility,
    decode,
    dominates,
    enumerate_pareto_oracle,
    evaluate,
    pareto_filter,
    random_schedule,
    read_schedule,
    weakly_dominates,
    write_schedule,
)

from .moead import RunResult, SolverParams, solve

__all__ = [
    "Instance",
    "InstanceError",
    "generate_instance",
    "read_instance",
    "write_instance",
    "tiny_a",
    "Schedule",
    "Objectives",
    "DecodeResult",
    "FeasibilityReport",
    "InfeasibleScheduleError",
    "decode",
    "evaluate",
    "check_feasibility",
    "dominates",
    "weakly_dominates",
    "pareto_filter",
    "random_schedule",
    "enumerate_pareto_oracle",
    "read_schedule",
    "write_schedule",
    "SolverParams",
    "RunResult",
    "solve",
]

__version__ = "0.1.0"
