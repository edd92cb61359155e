"""Critical-path local search moves, energy-saving batch splits, and the
Q-learning budget controller.

Moves and their evaluation:

- ``n6_search``: within each critical block, relocate non-head batches to the
  block head and the head into the block; candidates scored by re-decoding,
  accepted only when they Pareto-dominate the incumbent.
- ``batch_insertion``: detach a critical operation, then reinsert it into the
  capacity-feasible batch minimizing the longest path through the modified
  batch, ``max(f_batch, f_op) + max(dur_batch, pt_op) + max(t_batch, t_op)``
  with labels taken on the reduced graph. That projected makespan is exact for
  every path touching the target batch, so its argmin realizes the minimum
  re-decoded makespan over all feasible target batches. When nothing fits the
  operation opens a new singleton batch at the makespan-minimizing position.
- ``batch_recombination``: detach a critical operation, then repeatedly pull
  the best operation from a batch into its predecessor while capacity holds,
  walking the batch pairs front-ward, and finally reinsert the detached
  operation. Pull candidates are scored exactly from one label pass (see
  ``select_pull``).
- ``tec_split``: move the strictly-shorter members of a non-critical batch
  into a trailing batch whenever the delay fits every operation's latest
  start, dropping load energy by (dur - trailing_dur) per moved member and
  idle energy by trailing_dur, with the makespan provably unchanged.

Budgets count candidate move evaluations, not wall time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .disjgraph import build_graph, critical_blocks, critical_operations
from .instance import Instance
from .schedule import Objectives, Schedule, decode, dominates

THETA_LEVELS = (0.2, 0.3, 0.4, 0.5, 0.6)
STATE_REWARDS = (6.0, 6.0, 0.0, 10.0)
N_STATES = 4


class SearchBudget:
    """Move-evaluation credit meter. ``limit=None`` means unbounded."""

    __slots__ = ("limit", "used", "_parents")

    def __init__(self, limit: int | None = None, parents: tuple = ()):
        self.limit = limit
        self.used = 0
        self._parents = parents

    def charge(self, n: int = 1) -> None:
        self.used += n
        for p in self._parents:
            p.charge(n)

    @property
    def exhausted(self) -> bool:
        if self.limit is not None and self.used >= self.limit:
            return True
        return any(p.exhausted for p in self._parents)

    def sub(self, limit: int | None) -> "SearchBudget":
        """Child budget that also drains this one."""
        return SearchBudget(limit, parents=(self,))


@dataclass
class MoveEvaluation:
    kind: str
    stage: int
    machine: int
    position: int
    job: int | None
    score: float
    objectives: Objectives | None = None


def _eval(instance: Instance, schedule: Schedule, budget: SearchBudget | None) -> Objectives:
    if budget is not None:
        budget.charge()
    return decode(instance, schedule).objectives


def _trace_move(trace, kind, target, df1, df2, accepted):
    if trace is not None:
        trace(f"{kind} target={target} df1={df1} df2={df2} accepted={int(accepted)}")


# -- N6: batch moves inside critical blocks ------------------------------------


def n6_search(
    instance: Instance,
    schedule: Schedule,
    budget: SearchBudget | None = None,
    objectives: Objectives | None = None,
    trace=None,
) -> Schedule:
    """One dominance-accepting sweep of block-head moves over all machines."""
    incumbent = schedule.copy()
    inc_obj = objectives if objectives is not None else decode(instance, incumbent).objectives

    for j in range(instance.n_stages):
        for m in range(instance.machines_at(j)):
            improved = True
            while improved:
                improved = False
                if budget is not None and budget.exhausted:
                    return incumbent
                g = build_graph(instance, incumbent)
                blocks = [b for b in critical_blocks(g, incumbent)[(j, m)] if len(b) >= 2]
                for block in blocks:
                    head = block[0]
                    moves = [(pos, head) for pos in block[1:]]
                    moves += [(head, pos) for pos in block[1:]]
                    for src, dst in moves:
                        if budget is not None and budget.exhausted:
                            return incumbent
                        cand = incumbent.copy()
                        batch = cand.batches[j][m].pop(src)
                        cand.batches[j][m].insert(dst, batch)
                        cand_obj = _eval(instance, cand, budget)
                        accept = dominates(cand_obj, inc_obj)
                        _trace_move(trace, "n6", (j, m, src, dst),
                                    cand_obj.makespan - inc_obj.makespan,
                                    cand_obj.tec - inc_obj.tec, accept)
                        if accept:
                            incumbent, inc_obj = cand, cand_obj
                            improved = True
                            break
                    if improved:
                        break
    return incumbent


# -- reinsertion of a detached operation ---------------------------------------


def _score_insertions(
    instance: Instance, reduced: Schedule, op: tuple[int, int], budget: SearchBudget | None
) -> list[MoveEvaluation]:
    """Projected makespan for every capacity-feasible target batch of ``op``.

    One label pass on the reduced graph prices all candidates, so the whole
    scoring round costs a single evaluation credit.
    """
    job, stage = op
    if budget is not None:
        budget.charge()
    g = build_graph(instance, reduced, detached=op)
    f_op, t_op = g.earliest[op], g.tail[op]
    size = instance.job_sizes[job]
    out: list[MoveEvaluation] = []
    if not instance.is_batch_stage(stage):
        return out
    for m in instance.eligible_machines(job, stage):
        pt_op = instance.pt(job, stage, m)
        cap = instance.capacity(stage, m)
        for k, batch in enumerate(reduced.batches[stage][m]):
            if sum(instance.job_sizes[i] for i in batch) + size > cap:
                continue
            fb, tb, dur = g.batch_labels(stage, m, k)
            through = max(fb, f_op) + max(dur, pt_op) + max(tb, t_op)
            out.append(MoveEvaluation("insert-join", stage, m, k, job, float(through)))
    return out


def _best_new_batch_position(
    instance: Instance, reduced: Schedule, op: tuple[int, int], budget: SearchBudget | None
) -> Schedule:
    """Place ``op`` as a new singleton batch at the makespan-minimizing slot."""
    job, stage = op
    best_key = None
    best = None
    for m in instance.eligible_machines(job, stage):
        for pos in range(len(reduced.batches[stage][m]) + 1):
            cand = reduced.copy()
            cand.batches[stage][m].insert(pos, [job])
            obj = _eval(instance, cand, budget)
            key = (obj.makespan, m, pos)
            if best_key is None or key < best_key:
                best_key, best = key, cand
    assert best is not None  # every operation has an eligible machine
    return best


def batch_insertion(
    instance: Instance,
    schedule: Schedule,
    op: tuple[int, int],
    budget: SearchBudget | None = None,
    trace=None,
) -> Schedule:
    """Remove ``op`` and reinsert it at the best-scoring feasible target."""
    work = schedule.copy()
    work.remove_op(*op)
    candidates = _score_insertions(instance, work, op, budget)
    if candidates:
        chosen = min(candidates, key=lambda c: (c.score, c.machine, c.position))
        _trace_move(trace, "batch-insertion",
                    (chosen.stage, chosen.machine, chosen.position, op), chosen.score, 0.0, True)
        work.batches[chosen.stage][chosen.machine][chosen.position].append(op[0])
        return work
    result = _best_new_batch_position(instance, work, op, budget)
    _trace_move(trace, "batch-insertion-new", op, 0.0, 0.0, True)
    return result


def select_pull(
    instance: Instance,
    schedule: Schedule,
    stage: int,
    machine: int,
    t: int,
    detached: tuple[int, int] | None = None,
    budget: SearchBudget | None = None,
) -> tuple[int, Schedule, int] | None:
    """Best single pull from batch ``t`` into batch ``t-1`` on one machine.

    Candidates are scored by the exact longest path through the two modified
    batches, computed from one label pass: the pull only rewires arcs incident
    to that batch pair, every label it reads lies outside the pair, and paths
    avoiding the pair are identical for all candidates, so the through-value
    argmin realizes the minimum re-decoded makespan (ties by job id). Returns
    (job, pulled schedule, through value), or None when nothing fits.
    """
    if not instance.is_batch_stage(stage):
        return None  # discrete batches stay singletons
    cap = instance.capacity(stage, machine)
    machine_batches = schedule.batches[stage][machine]
    preceding = machine_batches[t - 1]
    succ = machine_batches[t]
    room = cap - sum(instance.job_sizes[i] for i in preceding)
    fitting = sorted(i for i in succ if instance.job_sizes[i] <= room)
    if not fitting:
        return None

    if budget is not None:
        budget.charge()  # one label pass prices the whole round
    g = build_graph(instance, schedule, detached=detached)

    def release(x: int) -> int:
        if stage == 0:
            return 0
        pm, pk = g.op_location[(x, stage - 1)]
        fb, _, dur = g.batch_labels(stage - 1, pm, pk)
        return fb + dur

    def tail_next_stage(x: int) -> int:
        # max completion-to-sink over the members of x's next-stage batch
        if stage == instance.n_stages - 1:
            return 0
        nm, nk = g.op_location[(x, stage + 1)]
        members = g.batch_members[(stage + 1, nm, nk)]
        return max(g.pt[(y, stage + 1)] + g.tail[(y, stage + 1)] for y in members)

    pt = lambda x: instance.pt(x, stage, machine)
    f_prev = g.earliest[(preceding[0], stage)]
    dur_prev = max(pt(x) for x in preceding)
    tb_prev = max((tail_next_stage(x) for x in preceding), default=0)
    rel = {x: release(x) for x in succ}
    tb = {x: tail_next_stage(x) for x in succ}
    if t + 1 < len(machine_batches):
        te = max(g.pt[(z, stage)] + g.tail[(z, stage)] for z in machine_batches[t + 1])
    else:
        te = 0

    scored = []
    for w in fitting:
        start1 = max(f_prev, rel[w])
        end1 = start1 + max(dur_prev, pt(w))
        tb1 = max(tb_prev, tb[w])
        rest = [x for x in succ if x != w]
        if rest:
            exit1 = end1 + tb1
            start2 = max(end1, max(rel[x] for x in rest))
            end2 = start2 + max(pt(x) for x in rest)
            exit2 = end2 + max(max(tb[x] for x in rest), te)
            through = max(exit1, exit2)
        else:
            through = end1 + max(tb1, te)  # the emptied batch vanishes
        scored.append((through, w))
    through, job = min(scored)
    cand = schedule.copy()
    cand.batches[stage][machine][t].remove(job)
    cand.batches[stage][machine][t - 1].append(job)
    if not cand.batches[stage][machine][t]:
        del cand.batches[stage][machine][t]
    return job, cand, through


def batch_recombination(
    instance: Instance,
    schedule: Schedule,
    op: tuple[int, int],
    budget: SearchBudget | None = None,
    trace=None,
) -> Schedule:
    """Pull operations between adjacent batches around ``op``, then reinsert it."""
    job, stage = op
    loc = schedule.find_op(job, stage)
    if loc is None:
        raise KeyError(f"operation {op} not in schedule")
    m, k = loc
    if len(schedule.batches[stage][m]) < 2:
        return schedule.copy()
    if not instance.is_batch_stage(stage):
        return schedule.copy()  # singleton batches: nothing to recombine

    work = schedule.copy()
    work.remove_op(job, stage)
    machine = work.batches[stage][m]
    t = min(k, len(machine) - 1)
    while t >= 1:
        if budget is not None and budget.exhausted:
            break
        chosen = select_pull(instance, work, stage, m, t, detached=op, budget=budget)
        if chosen is None:
            t -= 1
            continue
        pulled, work, cm = chosen
        _trace_move(trace, "pull", (stage, m, t, pulled), cm, 0.0, True)
        machine = work.batches[stage][m]
        t = min(t, len(machine) - 1)
        if t < 1:
            break

    candidates = _score_insertions(instance, work, op, budget)
    if candidates:
        chosen = min(candidates, key=lambda c: (c.score, c.machine, c.position))
        work.batches[chosen.stage][chosen.machine][chosen.position].append(job)
        return work
    return _best_new_batch_position(instance, work, op, budget)


# -- energy-saving batch splitting ----------------------------------------------


@dataclass
class SplitEvent:
    stage: int
    machine: int
    position: int
    moved_jobs: tuple[int, ...]
    duration: int          # batch duration before the split
    trailing_duration: int  # duration of the split-off batch
    tec_before: float
    tec_after: float


def tec_split(
    instance: Instance,
    schedule: Schedule,
    budget: SearchBudget | None = None,
    trace=None,
) -> tuple[Schedule, list[SplitEvent]]:
    """Greedy slack-guarded batch splitting; never changes the makespan."""
    work = schedule.copy()
    events: list[SplitEvent] = []
    while True:
        res = decode(instance, work)
        g = build_graph(instance, work)
        crit = critical_operations(g)
        applied = False
        for stage in range(instance.n_stages):
            if not instance.is_batch_stage(stage):
                continue
            for m, machine in enumerate(work.batches[stage]):
                for pos, batch in enumerate(machine):
                    if len(batch) < 2:
                        continue
                    if any((i, stage) in crit for i in batch):
                        continue
                    dur = max(instance.pt(i, stage, m) for i in batch)
                    movers = [i for i in batch if instance.pt(i, stage, m) < dur]
                    if not movers:
                        continue
                    if budget is not None and budget.exhausted:
                        return work, events
                    cand = work.copy()
                    cand.batches[stage][m][pos] = [i for i in batch if i not in movers]
                    cand.batches[stage][m].insert(pos + 1, list(movers))
                    cand_res = _eval_result(instance, cand, budget)
                    if not _fits_slack(g, cand_res):
                        continue
                    trailing = max(instance.pt(i, stage, m) for i in movers)
                    assert cand_res.objectives.makespan == res.objectives.makespan
                    assert cand_res.objectives.tec < res.objectives.tec
                    events.append(SplitEvent(
                        stage, m, pos, tuple(movers), dur, trailing,
                        res.objectives.tec, cand_res.objectives.tec,
                    ))
                    _trace_move(trace, "tec-split", (stage, m, pos), 0,
                                cand_res.objectives.tec - res.objectives.tec, True)
                    work = cand
                    applied = True
                    break
                if applied:
                    break
            if applied:
                break
        if not applied:
            return work, events


def _eval_result(instance, schedule, budget):
    if budget is not None:
        budget.charge()
    return decode(instance, schedule)


def _fits_slack(g, cand_res) -> bool:
    """Every operation's shifted start must stay within its latest start."""
    for (i, j), start in cand_res.op_start.items():
        if start > g.vl((i, j)):
            return False
    return True


# -- adaptive budget controller ---------------------------------------------------


def state_from_deltas(df1: float, df2: float) -> int:
    if df1 < 0 and df2 >= 0:
        return 0
    if df1 >= 0 and df2 < 0:
        return 1
    if df1 >= 0 and df2 >= 0:
        return 2
    return 3


def neighborhood_credits(instance: Instance, theta: float) -> int:
    return max(1, round(theta * instance.n_stages * instance.n_jobs * instance.total_machines))


@dataclass
class QController:
    """Tabular Q-learning over 4 outcome states and 5 budget levels.

    Exploration follows a decay law: epsilon shrinks from 1 to 1/3 over the
    run, and the random branch is taken when the draw exceeds epsilon (so
    exploration grows with elapsed budget).
    """

    alpha: float = 0.1
    discount: float = 0.9
    q: np.ndarray = field(default_factory=lambda: np.zeros((N_STATES, len(THETA_LEVELS))))

    def epsilon(self, progress: float) -> float:
        progress = min(max(progress, 0.0), 1.0)
        return (1.0 / 3.0) ** progress

    def select_action(self, state: int, progress: float, rng: np.random.Generator) -> int:
        if rng.random() > self.epsilon(progress):
            return int(rng.integers(len(THETA_LEVELS)))
        return int(np.argmax(self.q[state]))  # first max: ties break to the lowest theta

    def theta(self, action: int) -> float:
        return THETA_LEVELS[action]

    def update(self, state: int, action: int, df1: float, df2: float) -> int:
        nxt = state_from_deltas(df1, df2)
        reward = STATE_REWARDS[nxt]
        best_next = float(self.q[nxt].max())
        self.q[state, action] += self.alpha * (reward + self.discount * best_next - self.q[state, action])
        return nxt


# -- combined makespan search (the per-offspring exploitation step) ---------------


def makespan_search(
    instance: Instance,
    schedule: Schedule,
    credits: int,
    rng: np.random.Generator,
    objectives: Objectives | None = None,
    budget: SearchBudget | None = None,
    trace=None,
) -> Schedule:
    """Block-move sweep, then alternating reinsertion/recombination on random
    critical operations per stage, all under one move-evaluation budget."""
    local = budget.sub(credits) if budget is not None else SearchBudget(credits)
    incumbent = schedule.copy()
    inc_obj = objectives if objectives is not None else decode(instance, incumbent).objectives

    incumbent = n6_search(instance, incumbent, local, inc_obj, trace)
    inc_obj = decode(instance, incumbent).objectives

    while not local.exhausted:
        advanced = False
        for move in (batch_insertion, batch_recombination):
            g = build_graph(instance, incumbent)
            crit = critical_operations(g)
            for stage in range(instance.n_stages):
                if local.exhausted:
                    break
                stage_ops = sorted(o for o in crit if o[1] == stage)
                if not stage_ops:
                    continue
                op = stage_ops[int(rng.integers(len(stage_ops)))]
                cand = move(instance, incumbent, op, local, trace)
                cand_obj = _eval(instance, cand, local)
                accept = dominates(cand_obj, inc_obj)
                _trace_move(trace, move.__name__, op,
                            cand_obj.makespan - inc_obj.makespan,
                            cand_obj.tec - inc_obj.tec, accept)
                if accept:
                    incumbent, inc_obj = cand, cand_obj
                    g = build_graph(instance, incumbent)
                    crit = critical_operations(g)
                    advanced = True
            if local.exhausted:
                break
        if not advanced:
            break  # a full unimproving round: treat as a local optimum
    return incumbent
