"""Decomposition-based bi-objective solver loop.

Weight vectors on the unit simplex define Chebyshev subproblems. Each
subproblem evolves an offspring from its solution and a random neighbor's,
improves it with the critical-path makespan search (budgeted by the
Q-learning controller) and the energy-saving split pass, then updates the
population conservatively: only the best-matching neighbor subproblem is
replaced, falling back to a global re-match when no neighbor improves.
Weight vectors whose solutions keep landing on the same side of the weight
ray for too long are rotated halfway toward the solution direction.

Variants:

- AMOEAD1: random initial encodings instead of the hybrid heuristics;
- AMOEAD2: no critical-path search (evolution and update only);
- AMOEAD3: classic update (replace any improving neighbor, up to T), no
  global re-match, no weight rotation.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .initialization import init_population
from .instance import Instance
from .neighborhood import (
    QController,
    SearchBudget,
    makespan_search,
    neighborhood_credits,
    tec_split,
)
from .schedule import Objectives, Schedule, decode, dominates, random_schedule

VARIANTS = ("AMOEAD", "AMOEAD1", "AMOEAD2", "AMOEAD3")


@dataclass
class SolverParams:
    popsize: int = 40
    rotation_threshold: int = 2   # L
    neighborhood_size: int = 5    # T
    alpha: float = 0.1            # Q-learning rate
    discount: float = 0.9         # Q-learning discount r
    mutation_rate: float = 0.1
    variant: str = "AMOEAD"
    budget_evals: int | None = 20000
    runtime_ms: int | None = None

    def validate(self) -> None:
        if self.popsize < 2:
            raise ValueError("popsize must be >= 2")
        if not 2 <= self.neighborhood_size <= self.popsize:
            raise ValueError("neighborhood size must lie in [2, popsize]")
        if self.rotation_threshold < 1:
            raise ValueError("rotation threshold must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.budget_evals is None and self.runtime_ms is None:
            raise ValueError("either budget_evals or runtime_ms is required")


@dataclass
class WeightVector:
    lam: tuple[float, float]
    neighbors: list[int]
    side: int = 0
    crossings: int = 0


@dataclass
class Individual:
    schedule: Schedule
    objectives: Objectives


def init_weights(popsize: int, t_neighbors: int) -> list[WeightVector]:
    if popsize < 2:
        raise ValueError("need at least two weight vectors")
    lams = [(i / (popsize - 1), 1.0 - i / (popsize - 1)) for i in range(popsize)]
    weights = [WeightVector(lam, []) for lam in lams]
    for i, w in enumerate(weights):
        order = sorted(
            range(popsize),
            key=lambda j: ((lams[i][0] - lams[j][0]) ** 2 + (lams[i][1] - lams[j][1]) ** 2, j),
        )
        w.neighbors = order[:t_neighbors]
    return weights


def aggregate(obj: Objectives, lam: tuple[float, float], zstar: tuple[float, float]) -> float:
    return max(lam[0] * (obj[0] - zstar[0]), lam[1] * (obj[1] - zstar[1]))


def match_individuals(
    individuals: list[Individual], weights: list[WeightVector], zstar: tuple[float, float]
) -> list[Individual]:
    """Greedy global matching: repeatedly bind the (weight, individual) pair
    with the smallest aggregate, without reuse."""
    n = len(weights)
    pairs = sorted(
        (aggregate(ind.objectives, weights[w].lam, zstar), w, k)
        for w in range(n)
        for k, ind in enumerate(individuals)
    )
    bound: list[Individual | None] = [None] * n
    used_w, used_k = set(), set()
    for _, w, k in pairs:
        if w in used_w or k in used_k:
            continue
        bound[w] = individuals[k]
        used_w.add(w)
        used_k.add(k)
    assert all(b is not None for b in bound)
    return bound  # type: ignore[return-value]


# -- evolution operator ---------------------------------------------------------


def assignment_crossover(
    instance: Instance, parent: Schedule, mate: Schedule, jobs: set[int]
) -> Schedule:
    """Adopt the mate's (machine, batch position) assignments for the given
    jobs, stage by stage.

    Jobs sharing a mate batch move as one group, so a full subset reproduces
    the mate exactly. Groups adopted out of a partially selected mate batch
    join the child batch at the clamped target position when capacity allows,
    otherwise they open a new batch there (the overflow repair).
    """
    child = parent.copy()
    for job in sorted(jobs):
        for stage in range(instance.n_stages):
            child.remove_op(job, stage)
    for stage in range(instance.n_stages):
        for m, mate_machine in enumerate(mate.batches[stage]):
            for k, mate_batch in enumerate(mate_machine):
                group = [i for i in mate_batch if i in jobs]
                if not group:
                    continue
                machine = child.batches[stage][m]
                target = min(k, len(machine))
                whole_batch = len(group) == len(mate_batch)
                if (
                    not whole_batch
                    and target < len(machine)
                    and instance.is_batch_stage(stage)
                    and sum(instance.job_sizes[i] for i in machine[target] + group)
                    <= instance.capacity(stage, m)
                ):
                    machine[target].extend(group)
                else:
                    machine.insert(target, list(group))
    return child


def mutate(instance: Instance, schedule: Schedule, rng: np.random.Generator) -> Schedule:
    """One of: relocate an operation to a random eligible machine's last
    fitting batch, swap two adjacent batches on one machine, or extract an
    operation from a multi-member batch into its own trailing batch.

    The extraction move is the only operator able to break up a batch whose
    members all fit together; without it, merged batches are absorbing and
    split-batch optima stay unreachable.
    """
    child = schedule.copy()
    move = int(rng.integers(3))
    if move == 0:
        job = int(rng.integers(instance.n_jobs))
        stage = int(rng.integers(instance.n_stages))
        child.remove_op(job, stage)
        eligible = instance.eligible_machines(job, stage)
        m = int(eligible[rng.integers(len(eligible))])
        machine = child.batches[stage][m]
        if instance.is_batch_stage(stage):
            size = instance.job_sizes[job]
            for k in range(len(machine) - 1, -1, -1):
                if sum(instance.job_sizes[i] for i in machine[k]) + size <= instance.capacity(stage, m):
                    machine[k].append(job)
                    return child
        machine.append([job])
        return child
    if move == 1:
        swappable = [
            (j, m)
            for j in range(instance.n_stages)
            for m in range(instance.machines_at(j))
            if len(child.batches[j][m]) >= 2
        ]
        if swappable:
            j, m = swappable[int(rng.integers(len(swappable)))]
            p = int(rng.integers(len(child.batches[j][m]) - 1))
            machine = child.batches[j][m]
            machine[p], machine[p + 1] = machine[p + 1], machine[p]
        return child
    splittable = [
        (j, m, k)
        for j in range(instance.n_stages)
        for m in range(instance.machines_at(j))
        for k in range(len(child.batches[j][m]))
        if len(child.batches[j][m][k]) >= 2
    ]
    if splittable:
        j, m, k = splittable[int(rng.integers(len(splittable)))]
        batch = child.batches[j][m][k]
        job = batch[int(rng.integers(len(batch)))]
        batch.remove(job)
        child.batches[j][m].insert(k + 1, [job])
    return child


def evolve(
    instance: Instance,
    parent: Schedule,
    mate: Schedule,
    rng: np.random.Generator,
    mutation_rate: float = 0.1,
    immigrant_rate: float = 0.05,
) -> Schedule:
    """Assignment crossover plus mutation; occasionally a fresh random
    encoding instead (keeps structural diversity once the population has
    converged, which strict-improvement updates cannot restore)."""
    if rng.random() < immigrant_rate:
        return random_schedule(instance, rng)
    jobs = {i for i in range(instance.n_jobs) if rng.random() < 0.5}
    child = assignment_crossover(instance, parent, mate, jobs)
    if rng.random() < mutation_rate:
        child = mutate(instance, child, rng)
    return child


# -- population update and weight rotation ---------------------------------------


def update_population(
    population: list[Individual],
    weights: list[WeightVector],
    offspring: Individual,
    source: int,
    zstar: tuple[float, float],
    classic: bool = False,
) -> list[int]:
    """Replace incumbents per the improved rule; returns replaced indices.

    Improved rule: among the source's neighbors pick the subproblem where the
    offspring aggregates best and replace its incumbent only on strict
    improvement; otherwise re-match against all weight vectors and replace the
    globally best-matching incumbent on strict improvement. Classic rule
    (AMOEAD3): replace every improving neighbor.
    """
    if classic:
        replaced = []
        for w in weights[source].neighbors:
            if aggregate(offspring.objectives, weights[w].lam, zstar) < aggregate(
                population[w].objectives, weights[w].lam, zstar
            ):
                population[w] = offspring
                replaced.append(w)
        return replaced

    best_nei = min(
        weights[source].neighbors,
        key=lambda w: (aggregate(offspring.objectives, weights[w].lam, zstar), w),
    )
    if aggregate(offspring.objectives, weights[best_nei].lam, zstar) < aggregate(
        population[best_nei].objectives, weights[best_nei].lam, zstar
    ):
        population[best_nei] = offspring
        return [best_nei]

    best_all = min(
        range(len(weights)),
        key=lambda w: (aggregate(offspring.objectives, weights[w].lam, zstar), w),
    )
    if aggregate(offspring.objectives, weights[best_all].lam, zstar) < aggregate(
        population[best_all].objectives, weights[best_all].lam, zstar
    ):
        population[best_all] = offspring
        return [best_all]
    return []


def maybe_rotate_weight(
    weight: WeightVector,
    objectives: Objectives,
    zstar: tuple[float, float],
    threshold: int,
) -> bool:
    """Track which side of the weight ray the bound solution lands on; after
    ``threshold`` consecutive same-side updates rotate the weight halfway
    toward the solution direction and reset."""
    d1 = objectives[0] - zstar[0]
    d2 = objectives[1] - zstar[1]
    cross = weight.lam[0] * d2 - weight.lam[1] * d1
    side = (cross > 0) - (cross < 0)
    if side == 0:
        weight.side = 0
        weight.crossings = 0
        return False
    if side == weight.side:
        weight.crossings += 1
    else:
        weight.side = side
        weight.crossings = 1
    if weight.crossings < threshold:
        return False

    ang_w = math.atan2(weight.lam[1], weight.lam[0])
    ang_d = math.atan2(d2, d1)
    ang = ang_w + (ang_d - ang_w) / 2.0
    l1, l2 = max(math.cos(ang), 0.0), max(math.sin(ang), 0.0)
    total = l1 + l2
    if total <= 0.0:
        weight.crossings = 0
        weight.side = 0
        return False
    weight.lam = (l1 / total, l2 / total)
    weight.crossings = 0
    weight.side = 0
    return True


def rebuild_neighbor_list(weights: list[WeightVector], idx: int, t_neighbors: int) -> None:
    lam = weights[idx].lam
    order = sorted(
        range(len(weights)),
        key=lambda j: ((lam[0] - weights[j].lam[0]) ** 2 + (lam[1] - weights[j].lam[1]) ** 2, j),
    )
    weights[idx].neighbors = order[:t_neighbors]


# -- solver ----------------------------------------------------------------------


@dataclass
class RunResult:
    front: list[Objectives]
    archive: list[Individual]
    report: dict


class Archive:
    """Online nondominated store of every (objectives, schedule) offered."""

    def __init__(self):
        self.entries: dict[Objectives, Schedule] = {}

    def offer(self, schedule: Schedule, obj: Objectives) -> bool:
        if obj in self.entries:
            return False
        if any(dominates(p, obj) for p in self.entries):
            return False
        for p in [p for p in self.entries if dominates(obj, p)]:
            del self.entries[p]
        self.entries[obj] = schedule.copy()
        return True

    def individuals(self) -> list[Individual]:
        return [Individual(s, o) for o, s in sorted(self.entries.items())]

    def __len__(self) -> int:
        return len(self.entries)


class _RunBudget(SearchBudget):
    """Global budget: move-evaluation cap and/or wall-clock deadline."""

    def __init__(self, limit: int | None, deadline: float | None):
        super().__init__(limit)
        self.deadline = deadline

    @property
    def exhausted(self) -> bool:
        if self.limit is not None and self.used >= self.limit:
            return True
        return self.deadline is not None and time.monotonic() >= self.deadline


def solve(instance: Instance, params: SolverParams, seed: int, trace=None) -> RunResult:
    params.validate()
    rng = np.random.default_rng(seed)
    t_start = time.monotonic()
    deadline = t_start + params.runtime_ms / 1000.0 if params.runtime_ms is not None else None
    archive = Archive()
    budget = _RunBudget(params.budget_evals, deadline)

    def progress() -> float:
        frac = 0.0
        if params.budget_evals is not None:
            frac = budget.used / params.budget_evals
        if deadline is not None:
            span = deadline - t_start
            frac = max(frac, (time.monotonic() - t_start) / span if span > 0 else 1.0)
        return min(frac, 1.0)

    def evaluate(schedule: Schedule) -> Objectives:
        budget.charge()
        return decode(instance, schedule).objectives

    # population ----------------------------------------------------------
    if params.variant == "AMOEAD1":
        schedules = [random_schedule(instance, rng) for _ in range(params.popsize)]
    else:
        schedules = [s for s, _ in init_population(instance, params.popsize, seed)]
    individuals = [Individual(s, evaluate(s)) for s in schedules]
    for ind in individuals:
        archive.offer(ind.schedule, ind.objectives)

    weights = init_weights(params.popsize, params.neighborhood_size)
    zstar = (
        min(ind.objectives[0] for ind in individuals),
        min(ind.objectives[1] for ind in individuals),
    )
    population = match_individuals(individuals, weights, zstar)

    controller = QController(alpha=params.alpha, discount=params.discount)
    state = 2  # start in the neutral no-improvement state

    replacements = 0
    rotations = 0
    generations = []
    gen = 0

    while not budget.exhausted:
        for i in range(params.popsize):
            if budget.exhausted:
                break
            neighbors = weights[i].neighbors
            mate_idx = neighbors[int(rng.integers(len(neighbors)))]
            child = evolve(
                instance, population[i].schedule, population[mate_idx].schedule,
                rng, params.mutation_rate,
            )
            child_obj = evaluate(child)

            if params.variant != "AMOEAD2":
                action = controller.select_action(state, progress(), rng)
                credits = neighborhood_credits(instance, controller.theta(action))
                improved = makespan_search(
                    instance, child, credits, rng,
                    objectives=child_obj, budget=budget, trace=trace,
                )
                improved_obj = decode(instance, improved).objectives
                state = controller.update(
                    state, action,
                    improved_obj[0] - child_obj[0], improved_obj[1] - child_obj[1],
                )
                final, _events = tec_split(instance, improved, budget=budget, trace=trace)
                final_obj = decode(instance, final).objectives
            else:
                final, final_obj = child, child_obj

            zstar = (min(zstar[0], final_obj[0]), min(zstar[1], final_obj[1]))
            offspring = Individual(final, final_obj)
            replaced = update_population(
                population, weights, offspring, i, zstar,
                classic=params.variant == "AMOEAD3",
            )
            replacements += len(replaced)
            if params.variant != "AMOEAD3":
                for w in replaced:
                    if maybe_rotate_weight(
                        weights[w], population[w].objectives, zstar, params.rotation_threshold
                    ):
                        rebuild_neighbor_list(weights, w, params.neighborhood_size)
                        rotations += 1

        for ind in population:
            archive.offer(ind.schedule, ind.objectives)
        generations.append({"generation": gen, "archive_size": len(archive)})
        gen += 1

    archive_individuals = archive.individuals()
    front = sorted(archive.entries)
    wall = time.monotonic() - t_start
    report = {
        "variant": params.variant,
        "seed": seed,
        "params": {
            "popsize": params.popsize,
            "rotation_threshold": params.rotation_threshold,
            "neighborhood_size": params.neighborhood_size,
            "alpha": params.alpha,
            "discount": params.discount,
            "mutation_rate": params.mutation_rate,
        },
        "budget": {"evals": params.budget_evals, "runtime_ms": params.runtime_ms},
        "evaluations_used": budget.used,
        "generations": generations,
        "front": [[o.makespan, o.tec] for o in front],
        "replacements": replacements,
        "rotations": rotations,
        "q_table": [[float(v) for v in row] for row in controller.q],
        "wall_time_s": None if params.runtime_ms is None else round(wall, 3),
    }
    return RunResult(front=front, archive=archive_individuals, report=report)
