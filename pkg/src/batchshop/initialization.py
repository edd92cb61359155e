"""Hybrid population initialization: 2 sequencing rules x 5 placement rules.

Sequencing either shuffles jobs uniformly or clusters them by their per-stage
mean processing times (k-means, k = min(5, N)), orders clusters by ascending
centroid norm and shuffles within each cluster.

Placement walks the stages in order; from the second stage on, jobs are
re-sorted by ascending release time (previous-stage completion, stable).
All placement rules share one batching rule on the chosen machine: join the
machine's last batch when its residual capacity fits the job, otherwise open
a new batch (discrete stages always open one). Rules differ only in machine
choice:

- MFBF: earliest start for the operation;
- MCBF: earliest completion;
- MTBF: smallest increase of the partial schedule's energy;
- MPBF: smallest processing time;
- MRBF: uniform random eligible machine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instance import Instance
from .schedule import Schedule

SEQUENCE_RULES = ("RANDOM", "KMEANS")
PLACEMENT_RULES = ("MFBF", "MCBF", "MTBF", "MPBF", "MRBF")
STRATEGIES = tuple((s, p) for s in SEQUENCE_RULES for p in PLACEMENT_RULES)


def _kmeans(features: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Plain Lloyd iteration with farthest-point seeding; returns labels.

    Deterministic given the rng; duplicate feature rows may leave fewer
    than k distinct clusters, which is fine for ordering purposes.
    """
    n = len(features)
    centers = [features[int(rng.integers(n))]]
    while len(centers) < k:
        dists = np.min(
            [np.linalg.norm(features - c, axis=1) for c in centers], axis=0
        )
        centers.append(features[int(np.argmax(dists))])
    centers = np.array(centers)
    labels = np.full(n, -1, dtype=int)
    for _ in range(50):
        d = np.linalg.norm(features[:, None, :] - centers[None, :, :], axis=2)
        new_labels = np.argmin(d, axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = features[labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    return labels


def make_sequence(instance: Instance, rule: str, rng: np.random.Generator) -> list[int]:
    if rule == "RANDOM":
        return [int(i) for i in rng.permutation(instance.n_jobs)]
    if rule != "KMEANS":
        raise ValueError(f"unknown sequence rule {rule!r}")

    features = np.array([
        [
            float(np.mean([p for p in instance.proc_time[i][j] if p > 0]))
            for j in range(instance.n_stages)
        ]
        for i in range(instance.n_jobs)
    ])
    k = min(5, instance.n_jobs)
    labels = _kmeans(features, k, rng)
    clusters = []
    for c in range(k):
        members = [i for i in range(instance.n_jobs) if labels[i] == c]
        if members:
            centroid = features[members].mean(axis=0)
            clusters.append((float(np.linalg.norm(centroid)), members))
    clusters.sort(key=lambda cn: cn[0])
    sequence: list[int] = []
    for _, members in clusters:
        members = list(members)
        rng.shuffle(members)
        sequence.extend(int(i) for i in members)
    return sequence


@dataclass
class _BatchState:
    jobs: list[int]
    start: int
    duration: int
    size: int


class _MachineState:
    __slots__ = ("batches",)

    def __init__(self):
        self.batches: list[_BatchState] = []

    @property
    def ready(self) -> int:
        if not self.batches:
            return 0
        last = self.batches[-1]
        return last.start + last.duration


def _placement_preview(instance, state: _MachineState, job, stage, machine, release):
    """(start, completion, joins_last) for placing the job on this machine."""
    pt = instance.pt(job, stage, machine)
    size = instance.job_sizes[job]
    last = state.batches[-1] if state.batches else None
    can_join = (
        last is not None
        and instance.is_batch_stage(stage)
        and instance.capacity(stage, machine) - last.size >= size
    )
    if can_join:
        start = max(last.start, release)
        duration = max(last.duration, pt)
    else:
        start = max(state.ready, release)
        duration = pt
    return start, start + duration, can_join


def place(
    instance: Instance,
    sequence: list[int],
    rule: str,
    rng: np.random.Generator,
) -> Schedule:
    """Build a feasible schedule from a job sequence under one placement rule."""
    if rule not in PLACEMENT_RULES:
        raise ValueError(f"unknown placement rule {rule!r}")

    release = {i: 0 for i in range(instance.n_jobs)}
    completion = {i: 0 for i in range(instance.n_jobs)}
    schedule = Schedule.empty(instance)

    # MTBF bookkeeping over the partial schedule
    total_load = 0.0
    total_busy = 0
    partial_cmax = 0
    machines_total = instance.total_machines

    order = list(sequence)
    for stage in range(instance.n_stages):
        if stage > 0:
            order.sort(key=lambda i: release[i])  # stable: ties keep prior order
        states = [_MachineState() for _ in range(instance.machines_at(stage))]
        for job in order:
            eligible = instance.eligible_machines(job, stage)
            if rule == "MRBF":
                chosen = int(eligible[rng.integers(len(eligible))])
            elif rule == "MPBF":
                chosen = min(eligible, key=lambda m: (instance.pt(job, stage, m), m))
            else:
                scored = []
                for m in eligible:
                    start, end, joins = _placement_preview(
                        instance, states[m], job, stage, m, release[job]
                    )
                    if rule == "MFBF":
                        key = start
                    elif rule == "MCBF":
                        key = end
                    else:  # MTBF: load + idle delta against the frozen partial schedule
                        last = states[m].batches[-1] if joins else None
                        pt = instance.pt(job, stage, m)
                        if joins:
                            new_dur = max(last.duration, pt)
                            d_load = (new_dur * (len(last.jobs) + 1) - last.duration * len(last.jobs)) * instance.power_load
                            d_busy = new_dur - last.duration
                        else:
                            d_load = pt * instance.power_load
                            d_busy = pt
                        new_cmax = max(partial_cmax, end)
                        d_idle = (machines_total * (new_cmax - partial_cmax) - d_busy) * instance.power_idle
                        key = d_load + d_idle
                    scored.append((key, m))
                chosen = min(scored)[1]

            start, end, joins = _placement_preview(
                instance, states[chosen], job, stage, chosen, release[job]
            )
            st = states[chosen]
            pt = instance.pt(job, stage, chosen)
            if joins:
                last = st.batches[-1]
                total_load += (max(last.duration, pt) * (len(last.jobs) + 1)
                               - last.duration * len(last.jobs)) * instance.power_load
                total_busy += max(last.duration, pt) - last.duration
                last.jobs.append(job)
                last.start = start
                last.duration = max(last.duration, pt)
                last.size += instance.job_sizes[job]
            else:
                st.batches.append(_BatchState([job], start, pt, instance.job_sizes[job]))
                total_load += pt * instance.power_load
                total_busy += pt
            partial_cmax = max(partial_cmax, end)

        for m, st in enumerate(states):
            for batch in st.batches:
                schedule.batches[stage][m].append(list(batch.jobs))
                for i in batch.jobs:
                    completion[i] = batch.start + batch.duration
        release = dict(completion)

    return schedule


def init_population(
    instance: Instance, popsize: int, seed: int
) -> list[tuple[Schedule, tuple[str, str]]]:
    """Round-robin over the 10 strategies; equal shares when popsize % 10 == 0."""
    rng = np.random.default_rng(seed)
    out = []
    for n in range(popsize):
        seq_rule, place_rule = STRATEGIES[n % len(STRATEGIES)]
        sequence = make_sequence(instance, seq_rule, rng)
        schedule = place(instance, sequence, place_rule, rng)
        out.append((schedule, (seq_rule, place_rule)))
    return out
