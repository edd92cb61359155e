"""Solution encoding, decoder, feasibility checker and exhaustive oracle.

A schedule is, per machine, an ordered list of batches; a batch is a list of
job ids. Batch order on a machine is processing order. Decoding assigns
earliest (semi-active) start times: a batch starts at the later of its
machine's ready time and the previous-stage completion of every member, all
members start together, and the batch runs for the longest member processing
time on that machine.

Energy accounting: per machine, load energy is batch duration x member count
x power_load summed over batches; idle energy is (makespan - busy time) x
power_idle, measured against the global makespan.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .instance import Instance

ORACLE_MAX_OPERATIONS = 8


class Objectives(NamedTuple):
    makespan: int
    tec: float


class InfeasibleScheduleError(ValueError):
    """Raised by decode() when the encoding breaks a structural constraint."""


def dominates(a: Objectives, b: Objectives) -> bool:
    """Pareto dominance for minimization: a <= b with at least one strict."""
    return a.makespan <= b.makespan and a.tec <= b.tec and (a.makespan < b.makespan or a.tec < b.tec)


def weakly_dominates(a: Objectives, b: Objectives) -> bool:
    return a.makespan <= b.makespan and a.tec <= b.tec


class Schedule:
    """Mutable batch-sequence encoding: ``batches[stage][machine]`` is an
    ordered list of batches, each a list of job ids."""

    __slots__ = ("batches",)

    def __init__(self, batches: list[list[list[list[int]]]]):
        self.batches = batches

    @classmethod
    def empty(cls, instance: Instance) -> "Schedule":
        return cls([[[] for _ in range(instance.machines_at(j))] for j in range(instance.n_stages)])

    def copy(self) -> "Schedule":
        return Schedule(
            [[[list(b) for b in machine] for machine in stage] for stage in self.batches]
        )

    def find_op(self, job: int, stage: int) -> tuple[int, int] | None:
        """Return (machine, batch index) holding the operation, or None."""
        for m, machine in enumerate(self.batches[stage]):
            for k, batch in enumerate(machine):
                if job in batch:
                    return m, k
        return None

    def remove_op(self, job: int, stage: int) -> tuple[int, int]:
        """Remove the operation; delete its batch if emptied. Returns the old
        (machine, batch index)."""
        loc = self.find_op(job, stage)
        if loc is None:
            raise KeyError(f"operation (job {job}, stage {stage}) not in schedule")
        m, k = loc
        batch = self.batches[stage][m][k]
        batch.remove(job)
        if not batch:
            del self.batches[stage][m][k]
        return m, k

    def signature(self) -> tuple:
        return tuple(
            tuple(tuple(tuple(b) for b in machine) for machine in stage)
            for stage in self.batches
        )

    def __eq__(self, other) -> bool:
        return isinstance(other, Schedule) and self.signature() == other.signature()

    def __repr__(self) -> str:
        return f"Schedule({self.batches!r})"

    # -- file format ---------------------------------------------------------

    def to_dict(self) -> dict:
        machines = []
        for j, stage in enumerate(self.batches):
            for m, machine in enumerate(stage):
                machines.append(
                    {"stage": j, "machine": m, "batches": [list(b) for b in machine]}
                )
        return {"machines": machines}

    @classmethod
    def from_dict(cls, data: dict, instance: Instance) -> "Schedule":
        sched = cls.empty(instance)
        for entry in data["machines"]:
            j, m = int(entry["stage"]), int(entry["machine"])
            if not (0 <= j < instance.n_stages) or not (0 <= m < instance.machines_at(j)):
                raise InfeasibleScheduleError(f"schedule references unknown machine ({j}, {m})")
            sched.batches[j][m] = [[int(i) for i in b] for b in entry["batches"]]
        return sched


def write_schedule(schedule: Schedule, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(schedule.to_dict(), indent=2, sort_keys=True) + "\n")


def read_schedule(path: str | Path, instance: Instance) -> Schedule:
    data = json.loads(Path(path).read_text())
    return Schedule.from_dict(data, instance)


# -- decoding ----------------------------------------------------------------


@dataclass
class DecodeResult:
    objectives: Objectives
    op_start: dict[tuple[int, int], int]
    op_end: dict[tuple[int, int], int]
    op_machine: dict[tuple[int, int], int]
    op_batch: dict[tuple[int, int], int]
    batch_start: dict[tuple[int, int, int], int]   # (stage, machine, batch index)
    batch_duration: dict[tuple[int, int, int], int]
    machine_load: dict[tuple[int, int], float]
    machine_busy: dict[tuple[int, int], int]


def _check_structure(instance: Instance, schedule: Schedule) -> None:
    seen: dict[tuple[int, int], tuple[int, int]] = {}
    for j, stage in enumerate(schedule.batches):
        if len(stage) != instance.machines_at(j):
            raise InfeasibleScheduleError(f"stage {j}: machine list length mismatch")
        for m, machine in enumerate(stage):
            for k, batch in enumerate(machine):
                if not batch:
                    raise InfeasibleScheduleError(f"empty batch at stage {j} machine {m} position {k}")
                if not instance.is_batch_stage(j) and len(batch) != 1:
                    raise InfeasibleScheduleError(
                        f"discrete stage {j} machine {m} batch {k} holds {len(batch)} jobs"
                    )
                size = 0
                for i in batch:
                    if instance.pt(i, j, m) <= 0:
                        raise InfeasibleScheduleError(
                            f"job {i} ineligible on machine {m} at stage {j}"
                        )
                    size += instance.job_sizes[i]
                    if (i, j) in seen:
                        raise InfeasibleScheduleError(f"operation (job {i}, stage {j}) assigned twice")
                    seen[(i, j)] = (m, k)
                if instance.is_batch_stage(j) and size > instance.capacity(j, m):
                    raise InfeasibleScheduleError(
                        f"batch at stage {j} machine {m} position {k} overfills capacity "
                        f"({size} > {instance.capacity(j, m)})"
                    )
    for i in range(instance.n_jobs):
        for j in range(instance.n_stages):
            if (i, j) not in seen:
                raise InfeasibleScheduleError(f"operation (job {i}, stage {j}) missing")


def decode(instance: Instance, schedule: Schedule) -> DecodeResult:
    """Earliest-start timing of a structurally valid schedule."""
    _check_structure(instance, schedule)

    op_start: dict[tuple[int, int], int] = {}
    op_end: dict[tuple[int, int], int] = {}
    op_machine: dict[tuple[int, int], int] = {}
    op_batch: dict[tuple[int, int], int] = {}
    batch_start: dict[tuple[int, int, int], int] = {}
    batch_duration: dict[tuple[int, int, int], int] = {}

    # stage by stage: a batch depends only on earlier batches of its machine
    # and on previous-stage completions of its members
    for j in range(instance.n_stages):
        for m, machine in enumerate(schedule.batches[j]):
            ready = 0
            for k, batch in enumerate(machine):
                release = 0
                if j > 0:
                    release = max(op_end[(i, j - 1)] for i in batch)
                start = max(ready, release)
                duration = max(instance.pt(i, j, m) for i in batch)
                batch_start[(j, m, k)] = start
                batch_duration[(j, m, k)] = duration
                for i in batch:
                    op_start[(i, j)] = start
                    op_end[(i, j)] = start + duration
                    op_machine[(i, j)] = m
                    op_batch[(i, j)] = k
                ready = start + duration

    makespan = max(op_end.values())

    machine_load: dict[tuple[int, int], float] = {}
    machine_busy: dict[tuple[int, int], int] = {}
    tec = 0.0
    for j in range(instance.n_stages):
        for m, machine in enumerate(schedule.batches[j]):
            load = 0.0
            busy = 0
            for k, batch in enumerate(machine):
                dur = batch_duration[(j, m, k)]
                load += dur * len(batch) * instance.power_load
                busy += dur
            machine_load[(j, m)] = load
            machine_busy[(j, m)] = busy
            tec += load + (makespan - busy) * instance.power_idle

    return DecodeResult(
        objectives=Objectives(makespan, tec),
        op_start=op_start,
        op_end=op_end,
        op_machine=op_machine,
        op_batch=op_batch,
        batch_start=batch_start,
        batch_duration=batch_duration,
        machine_load=machine_load,
        machine_busy=machine_busy,
    )


def evaluate(instance: Instance, schedule: Schedule) -> Objectives:
    return decode(instance, schedule).objectives


# -- feasibility report --------------------------------------------------------


@dataclass
class FeasibilityReport:
    ok: bool
    violation: str | None = None
    detail: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def check_feasibility(
    instance: Instance, schedule: Schedule, result: DecodeResult | None = None
) -> FeasibilityReport:
    """Verify the decoded schedule against the model constraints.

    Checks, in order: assignment uniqueness and eligibility, batch capacity,
    single job per discrete batch, non-overlap of adjacent batches,
    stage precedence against previous-stage batch completion, shared batch
    timing, and makespan consistency. Returns the first violation found.
    """
    try:
        _check_structure(instance, schedule)
    except InfeasibleScheduleError as exc:
        msg = str(exc)
        if "capacity" in msg:
            kind = "capacity"
        elif "discrete" in msg:
            kind = "discrete-single-job"
        elif "ineligible" in msg:
            kind = "eligibility"
        else:
            kind = "assignment"
        return FeasibilityReport(False, kind, msg)

    if result is None:
        result = decode(instance, schedule)

    for j in range(instance.n_stages):
        for m, machine in enumerate(schedule.batches[j]):
            for k, batch in enumerate(machine):
                start = result.batch_start[(j, m, k)]
                dur = result.batch_duration[(j, m, k)]
                expected_dur = max(instance.pt(i, j, m) for i in batch)
                if dur != expected_dur:
                    return FeasibilityReport(
                        False, "batch-duration",
                        f"stage {j} machine {m} batch {k}: duration {dur} != max member PT {expected_dur}",
                    )
                for i in batch:
                    if result.op_start[(i, j)] != start or result.op_end[(i, j)] != start + dur:
                        return FeasibilityReport(
                            False, "shared-batch-timing",
                            f"operation (job {i}, stage {j}) does not share its batch window",
                        )
                    if j > 0 and result.op_start[(i, j)] < result.op_end[(i, j - 1)]:
                        return FeasibilityReport(
                            False, "precedence",
                            f"job {i} starts stage {j} at {result.op_start[(i, j)]} before "
                            f"finishing stage {j - 1} at {result.op_end[(i, j - 1)]}",
                        )
                if k > 0:
                    prev_end = result.batch_start[(j, m, k - 1)] + result.batch_duration[(j, m, k - 1)]
                    if start < prev_end:
                        return FeasibilityReport(
                            False, "overlap",
                            f"stage {j} machine {m}: batch {k} starts {start} before batch "
                            f"{k - 1} ends {prev_end}",
                        )

    makespan = max(result.op_end.values())
    if makespan != result.objectives.makespan:
        return FeasibilityReport(
            False, "makespan",
            f"recorded makespan {result.objectives.makespan} != max completion {makespan}",
        )
    return FeasibilityReport(True)


def decode_table(result: DecodeResult) -> list[tuple[int, int, int, int, int, int]]:
    """Flat (job, stage, machine, batch, start, end) rows, sorted."""
    rows = []
    for (i, j), start in sorted(result.op_start.items()):
        rows.append((i, j, result.op_machine[(i, j)], result.op_batch[(i, j)], start, result.op_end[(i, j)]))
    return rows


# -- random encodings and the exhaustive oracle -------------------------------


def random_schedule(instance: Instance, rng: np.random.Generator) -> Schedule:
    """Uniform-ish random feasible encoding: per stage, shuffled jobs pick a
    random eligible machine and either join the last batch (capacity allowing)
    or open a new one, by coin flip."""
    sched = Schedule.empty(instance)
    for j in range(instance.n_stages):
        order = list(range(instance.n_jobs))
        rng.shuffle(order)
        for i in order:
            eligible = instance.eligible_machines(i, j)
            m = int(eligible[rng.integers(len(eligible))])
            machine = sched.batches[j][m]
            join = False
            if machine and instance.is_batch_stage(j):
                last = machine[-1]
                room = instance.capacity(j, m) - sum(instance.job_sizes[x] for x in last)
                join = room >= instance.job_sizes[i] and rng.random() < 0.5
            if join:
                machine[-1].append(i)
            else:
                machine.append([i])
    return sched


def _ordered_batch_partitions(
    jobs: tuple[int, ...], capacity_ok
) -> Iterator[tuple[tuple[int, ...], ...]]:
    """All ordered partitions of a job set into capacity-feasible batches."""
    if not jobs:
        yield ()
        return
    rest = jobs
    n = len(rest)
    # choose the first batch as any nonempty subset, then recurse
    for mask in range(1, 1 << n):
        first = tuple(rest[b] for b in range(n) if mask >> b & 1)
        if not capacity_ok(first):
            continue
        remaining = tuple(rest[b] for b in range(n) if not mask >> b & 1)
        for tail in _ordered_batch_partitions(remaining, capacity_ok):
            yield (first,) + tail


def _stage_arrangements(instance: Instance, stage: int) -> Iterator[list[list[list[int]]]]:
    """Every (assignment, batching, ordering) of one stage's operations."""
    n_machines = instance.machines_at(stage)
    choices = [instance.eligible_machines(i, stage) for i in range(instance.n_jobs)]
    for assignment in itertools.product(*choices):
        per_machine: list[tuple[int, ...]] = [() for _ in range(n_machines)]
        for i, m in enumerate(assignment):
            per_machine[m] = per_machine[m] + (i,)

        def machine_options(m: int, jobs: tuple[int, ...]):
            if not instance.is_batch_stage(stage):
                return [tuple((i,) for i in perm) for perm in itertools.permutations(jobs)]
            cap = instance.capacity(stage, m)

            def fits(batch: tuple[int, ...]) -> bool:
                return sum(instance.job_sizes[i] for i in batch) <= cap

            return list(_ordered_batch_partitions(jobs, fits))

        options = [machine_options(m, per_machine[m]) for m in range(n_machines)]
        for combo in itertools.product(*options):
            yield [[list(b) for b in machine] for machine in combo]


def enumerate_all_schedules(instance: Instance) -> Iterator[Schedule]:
    if instance.n_stages == 1:
        # stream: single-stage spaces can be large and need no cross product
        for stage in _stage_arrangements(instance, 0):
            yield Schedule([[[list(b) for b in machine] for machine in stage]])
        return
    stage_options = [list(_stage_arrangements(instance, j)) for j in range(instance.n_stages)]
    for combo in itertools.product(*stage_options):
        yield Schedule([[[list(b) for b in machine] for machine in stage] for stage in combo])


def pareto_filter(points: list[Objectives]) -> list[Objectives]:
    """Deduplicated nondominated subset, sorted by (makespan, tec)."""
    unique = sorted(set(points))
    front: list[Objectives] = []
    for p in unique:
        if not any(dominates(q, p) for q in unique if q != p):
            front.append(p)
    return front


def enumerate_pareto_oracle(instance: Instance, max_ops: int = ORACLE_MAX_OPERATIONS) -> list[Objectives]:
    """Exact Pareto front by exhausting machine assignments, batch partitions
    and batch orders. Refuses instances above the operation guard."""
    if instance.total_operations > max_ops:
        raise ValueError(
            f"instance has {instance.total_operations} operations, oracle guard is {max_ops}"
        )
    points = [decode(instance, s).objectives for s in enumerate_all_schedules(instance)]
    return pareto_filter(points)
