"""Problem instance model, random generator and JSON file format.

An instance describes a flow shop with S stages processed in order by every
job. Each stage is either discrete (machines handle one job at a time) or a
parallel-batching stage (jobs grouped into batches that start together,
bounded by machine capacity). Processing times are machine-dependent;
``proc_time[i][j][m] == 0`` marks machine ``m`` ineligible for job ``i`` at
stage ``j``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GENERATOR_VERSION = "1"


class InstanceError(ValueError):
    """Raised when an instance file or construction violates an invariant."""


@dataclass(frozen=True)
class Instance:
    n_jobs: int
    n_stages: int
    stage_types: tuple[int, ...]            # per stage: 1 = parallel batch, 0 = discrete
    machine_caps: tuple[tuple[int, ...], ...]  # per stage, capacity per machine
    job_sizes: tuple[int, ...]
    proc_time: tuple[tuple[tuple[int, ...], ...], ...]  # [job][stage][machine], 0 = ineligible
    power_load: float
    power_idle: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.validate()

    # -- structure helpers -------------------------------------------------

    def machines_at(self, stage: int) -> int:
        return len(self.machine_caps[stage])

    @property
    def total_machines(self) -> int:
        return sum(len(caps) for caps in self.machine_caps)

    @property
    def total_operations(self) -> int:
        return self.n_jobs * self.n_stages

    def is_batch_stage(self, stage: int) -> bool:
        return self.stage_types[stage] == 1

    def pt(self, job: int, stage: int, machine: int) -> int:
        return self.proc_time[job][stage][machine]

    def eligible_machines(self, job: int, stage: int) -> list[int]:
        return [m for m, p in enumerate(self.proc_time[job][stage]) if p > 0]

    def capacity(self, stage: int, machine: int) -> int:
        return self.machine_caps[stage][machine]

    # -- validation --------------------------------------------------------

    def validate(self) -> None:
        if self.n_jobs < 1:
            raise InstanceError("n_jobs must be >= 1")
        if self.n_stages < 1:
            raise InstanceError("n_stages must be >= 1")
        if len(self.stage_types) != self.n_stages:
            raise InstanceError("stage_types length != n_stages")
        if any(t not in (0, 1) for t in self.stage_types):
            raise InstanceError("stage_types entries must be 0 or 1")
        if len(self.machine_caps) != self.n_stages:
            raise InstanceError("machines length != n_stages")
        if any(len(caps) < 1 for caps in self.machine_caps):
            raise InstanceError("every stage needs at least one machine")
        if len(self.job_sizes) != self.n_jobs:
            raise InstanceError("job_sizes length != n_jobs")
        if len(self.proc_time) != self.n_jobs:
            raise InstanceError("proc_time first dimension != n_jobs")
        if self.power_load < 0 or self.power_idle < 0:
            raise InstanceError("power constants must be nonnegative")

        for j, caps in enumerate(self.machine_caps):
            for m, cap in enumerate(caps):
                if cap < 1:
                    raise InstanceError(f"machines[{j}][{m}].capacity must be positive")
        for i, v in enumerate(self.job_sizes):
            if v < 1:
                raise InstanceError(f"job_sizes[{i}] must be positive")

        for i in range(self.n_jobs):
            if len(self.proc_time[i]) != self.n_stages:
                raise InstanceError(f"proc_time[{i}] length != n_stages")
            for j in range(self.n_stages):
                row = self.proc_time[i][j]
                if len(row) != self.machines_at(j):
                    raise InstanceError(f"proc_time[{i}][{j}] length != machine count of stage {j}")
                if any(p < 0 for p in row):
                    raise InstanceError(f"proc_time[{i}][{j}] has a negative entry")
                if all(p == 0 for p in row):
                    raise InstanceError(f"proc_time[{i}][{j}]: job {i} has no eligible machine at stage {j}")
                if self.is_batch_stage(j):
                    for m, p in enumerate(row):
                        if p > 0 and self.job_sizes[i] > self.machine_caps[j][m]:
                            raise InstanceError(
                                f"job_sizes[{i}]={self.job_sizes[i]} exceeds capacity "
                                f"{self.machine_caps[j][m]} of eligible machine {m} at batch stage {j}"
                            )

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "n_jobs": self.n_jobs,
            "n_stages": self.n_stages,
            "stage_types": list(self.stage_types),
            "machines": [[{"capacity": c} for c in caps] for caps in self.machine_caps],
            "job_sizes": list(self.job_sizes),
            "proc_time": [[list(row) for row in job] for job in self.proc_time],
            "power_load": self.power_load,
            "power_idle": self.power_idle,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Instance":
        try:
            machines = tuple(
                tuple(int(m["capacity"]) for m in stage) for stage in data["machines"]
            )
            inst = cls(
                n_jobs=int(data["n_jobs"]),
                n_stages=int(data["n_stages"]),
                stage_types=tuple(int(t) for t in data["stage_types"]),
                machine_caps=machines,
                job_sizes=tuple(int(v) for v in data["job_sizes"]),
                proc_time=tuple(
                    tuple(tuple(int(p) for p in row) for row in job)
                    for job in data["proc_time"]
                ),
                power_load=float(data["power_load"]),
                power_idle=float(data["power_idle"]),
                meta=dict(data.get("meta", {})),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise InstanceError(f"malformed instance document: {exc}") from exc
        return inst


def write_instance(instance: Instance, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(instance.to_dict(), indent=2, sort_keys=True) + "\n")


def read_instance(path: str | Path) -> Instance:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InstanceError(f"{path}: instance document root must be an object")
    return Instance.from_dict(data)


def generate_instance(
    n_jobs: int,
    n_stages: int,
    max_machines_per_stage: int,
    batch_probability: float,
    seed: int,
) -> Instance:
    """Draw a random instance.

    Per stage the machine count is uniform in [1, max_machines_per_stage] and
    the stage is batch-type with the given probability. Capacities are uniform
    integers in [10, 15], job sizes in [1, 10], processing times in [1, 30]
    drawn independently per (job, stage, machine); every machine is eligible.
    Deterministic for a fixed seed.
    """
    if n_jobs < 1 or n_stages < 1 or max_machines_per_stage < 1:
        raise InstanceError("n_jobs, n_stages and max_machines_per_stage must be >= 1")
    if not 0.0 <= batch_probability <= 1.0:
        raise InstanceError("batch_probability must lie in [0, 1]")

    rng = np.random.default_rng(seed)
    machine_counts = [int(rng.integers(1, max_machines_per_stage + 1)) for _ in range(n_stages)]
    stage_types = tuple(int(rng.random() < batch_probability) for _ in range(n_stages))
    machine_caps = tuple(
        tuple(int(rng.integers(10, 16)) for _ in range(machine_counts[j]))
        for j in range(n_stages)
    )
    job_sizes = tuple(int(rng.integers(1, 11)) for _ in range(n_jobs))
    proc_time = tuple(
        tuple(
            tuple(int(rng.integers(1, 31)) for _ in range(machine_counts[j]))
            for j in range(n_stages)
        )
        for _ in range(n_jobs)
    )
    return Instance(
        n_jobs=n_jobs,
        n_stages=n_stages,
        stage_types=stage_types,
        machine_caps=machine_caps,
        job_sizes=job_sizes,
        proc_time=proc_time,
        power_load=2.0,
        power_idle=1.0,
        meta={"seed": seed, "generator_version": GENERATOR_VERSION},
    )


def tiny_a() -> Instance:
    """Two jobs, batch stage then discrete stage; the desk-check instance."""
    return Instance(
        n_jobs=2,
        n_stages=2,
        stage_types=(1, 0),
        machine_caps=((10,), (10,)),
        job_sizes=(4, 5),
        proc_time=(((3,), (2,)), ((5,), (4,))),
        power_load=2.0,
        power_idle=1.0,
        meta={"name": "TINY-A"},
    )
