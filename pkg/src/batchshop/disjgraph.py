"""Batch-aware disjunctive graph with earliest/latest start labels.

Nodes are operations (job, stage) plus virtual source ``s`` and sink ``e``;
weights sit on nodes (processing time on the assigned machine). Arc sets:

- A: job precedence, (i, j) -> (i, j+1);
- E: machine order, every operation of a batch to every operation of the
  machine's next batch;
- B: batch release, for each operation the arcs from every operation of the
  previous-stage batches of all its batch mates (a discrete operation counts
  as a singleton batch).

Members of one batch share in- and out-neighborhoods, so they share labels;
the earliest-start labels reproduce the decoder's start times exactly.

``build_graph`` optionally detaches one operation: the operation keeps its
release arcs (from its job's previous-stage batch) and its job-precedence
arcs (to its job's next-stage batch) but sits on no machine, which is the
reduced graph used by the reinsertion move evaluators.
"""

from __future__ import annotations

from collections import deque

from .instance import Instance
from .schedule import Schedule

SOURCE = "s"
SINK = "e"


class GraphCycleError(RuntimeError):
    """A cycle in the disjunctive graph: construction-bug territory."""


class DisjunctiveGraph:
    __slots__ = (
        "nodes", "pt", "succs", "preds", "arc_tags",
        "earliest", "tail", "makespan",
        "op_location", "batch_members", "detached",
    )

    def __init__(self):
        self.nodes: list = []
        self.pt: dict = {}
        self.succs: dict = {}
        self.preds: dict = {}
        self.arc_tags: dict[tuple, set[str]] = {}
        self.earliest: dict = {}
        self.tail: dict = {}
        self.makespan: int = 0
        self.op_location: dict[tuple[int, int], tuple[int, int, int]] = {}
        self.batch_members: dict[tuple[int, int, int], tuple[int, ...]] = {}
        self.detached: tuple[int, int] | None = None

    # labels -----------------------------------------------------------------

    def ve(self, node) -> int:
        """Earliest start."""
        return self.earliest[node]

    def vl(self, node) -> int:
        """Latest start preserving the makespan."""
        return self.makespan - self.tail[node] - self.pt[node]

    def path_value(self, node) -> int:
        return self.earliest[node] + self.pt[node] + self.tail[node]

    def batch_labels(self, stage: int, machine: int, k: int) -> tuple[int, int, int]:
        """(earliest start, tail, duration) of a batch; members share labels."""
        members = self.batch_members[(stage, machine, k)]
        first = (members[0], stage)
        dur = max(self.pt[(i, stage)] for i in members)
        return self.earliest[first], self.tail[first], dur

    def edge_list(self) -> str:
        """Plain-text arc dump: one ``u -> v [tags]`` line per arc."""
        lines = []
        for (u, v), tags in sorted(self.arc_tags.items(), key=lambda kv: (str(kv[0][0]), str(kv[0][1]))):
            lines.append(f"{u} -> {v} [{','.join(sorted(tags))}]")
        return "\n".join(lines)

    def _add_arc(self, u, v, tag: str) -> None:
        key = (u, v)
        if key not in self.arc_tags:
            self.arc_tags[key] = set()
            self.succs[u].append(v)
            self.preds[v].append(u)
        self.arc_tags[key].add(tag)


def build_graph(
    instance: Instance, schedule: Schedule, detached: tuple[int, int] | None = None
) -> DisjunctiveGraph:
    g = DisjunctiveGraph()
    g.detached = detached

    ops = []
    for j, stage in enumerate(schedule.batches):
        for m, machine in enumerate(stage):
            for k, batch in enumerate(machine):
                g.batch_members[(j, m, k)] = tuple(batch)
                for i in batch:
                    g.op_location[(i, j)] = (m, k)
                    ops.append((i, j))
    if detached is not None:
        if detached in g.op_location:
            raise ValueError(f"operation {detached} marked detached but present in schedule")
        ops.append(detached)

    expected = instance.total_operations
    if len(ops) != expected:
        raise ValueError(f"graph covers {len(ops)} operations, instance has {expected}")

    g.nodes = [SOURCE] + sorted(ops) + [SINK]
    for v in g.nodes:
        g.succs[v] = []
        g.preds[v] = []
    g.pt[SOURCE] = 0
    g.pt[SINK] = 0
    for (i, j) in ops:
        if (i, j) == detached:
            g.pt[(i, j)] = 0  # no machine: labels exclude own weight anyway
        else:
            m, _ = g.op_location[(i, j)]
            g.pt[(i, j)] = instance.pt(i, j, m)

    # A: job precedence
    for i in range(instance.n_jobs):
        for j in range(instance.n_stages - 1):
            g._add_arc((i, j), (i, j + 1), "A")

    # E: consecutive batches on one machine, member x member
    for j in range(instance.n_stages):
        for m, machine in enumerate(schedule.batches[j]):
            for k in range(len(machine) - 1):
                for u in machine[k]:
                    for v in machine[k + 1]:
                        g._add_arc((u, j), (v, j), "E")

    # B: previous-stage batches of all batch mates
    for j in range(1, instance.n_stages):
        for m, machine in enumerate(schedule.batches[j]):
            for batch in machine:
                prev_batches = set()
                detached_src = False
                for i in batch:
                    if (i, j - 1) == detached:
                        detached_src = True
                        continue
                    pm, pk = g.op_location[(i, j - 1)]
                    prev_batches.add((j - 1, pm, pk))
                for loc in prev_batches:
                    for u in g.batch_members[loc]:
                        for v in batch:
                            g._add_arc((u, loc[0]), (v, j), "B")
                if detached_src:
                    for v in batch:
                        g._add_arc(detached, (v, j), "B")
    if detached is not None:
        i, j = detached
        if j > 0:
            pm, pk = g.op_location[(i, j - 1)]
            for u in g.batch_members[(j - 1, pm, pk)]:
                g._add_arc((u, j - 1), detached, "B")

    # virtual source/sink close the real sources/sinks
    for v in g.nodes:
        if v in (SOURCE, SINK):
            continue
        if not g.preds[v]:
            g._add_arc(SOURCE, v, "A")
        if not g.succs[v]:
            g._add_arc(v, SINK, "A")

    _compute_labels(g)
    return g


def _compute_labels(g: DisjunctiveGraph) -> None:
    indeg = {v: len(g.preds[v]) for v in g.nodes}
    queue = deque([v for v in g.nodes if indeg[v] == 0])
    topo = []
    while queue:
        v = queue.popleft()
        topo.append(v)
        for w in g.succs[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    if len(topo) != len(g.nodes):
        raise GraphCycleError("disjunctive graph contains a cycle")

    for v in topo:
        g.earliest[v] = max((g.earliest[q] + g.pt[q] for q in g.preds[v]), default=0)
    for v in reversed(topo):
        g.tail[v] = max((g.pt[p] + g.tail[p] for p in g.succs[v]), default=0)
    g.makespan = g.earliest[SINK]


def critical_operations(g: DisjunctiveGraph) -> set[tuple[int, int]]:
    """Operations on a longest source-to-sink path."""
    crit = set()
    for v in g.nodes:
        if v in (SOURCE, SINK) or v == g.detached:
            continue
        if g.path_value(v) == g.makespan:
            crit.add(v)
    return crit


def critical_blocks(
    g: DisjunctiveGraph, schedule: Schedule
) -> dict[tuple[int, int], list[list[int]]]:
    """Maximal runs of consecutive critical batches per machine.

    A batch is critical when it contains a critical operation. Singleton runs
    are included; callers filter by block length.
    """
    crit = critical_operations(g)
    blocks: dict[tuple[int, int], list[list[int]]] = {}
    for j, stage in enumerate(schedule.batches):
        for m, machine in enumerate(stage):
            runs: list[list[int]] = []
            current: list[int] = []
            for k, batch in enumerate(machine):
                if any((i, j) in crit for i in batch):
                    current.append(k)
                elif current:
                    runs.append(current)
                    current = []
            if current:
                runs.append(current)
            blocks[(j, m)] = runs
    return blocks
